#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/gfs-sharpness.md")]
pub mod gfs_sharpness {}

#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod dynamics {}

#[doc = include_str!("../../../book/src/stability-set.md")]
pub mod stability_set {}

#[doc = include_str!("../../../book/src/bifurcation.md")]
pub mod bifurcation {}

#[doc = include_str!("../../../book/src/flow-and-regression.md")]
pub mod flow_and_regression {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
