//! Gradient descent at the edge of stability on scalar linear networks.
//!
//! The central quantity is the *GFS sharpness* `φ(w)`: the sharpness of the
//! minimum that gradient flow reaches when started at `w`. For scalar networks
//! it is computed exactly from conserved balances ([`gf_exact`]); the crate
//! provides GD/GPGD dynamics ([`dynamics`]), the positive invariant set
//! ([`stability_set`]), order-theoretic checks ([`order_theory`]), bifurcation
//! diagrams ([`bifurcation`]), a generic RK4 gradient-flow integrator
//! ([`flow_integrator`]) and the squared regression model ([`diag_regression`]).
//!
//! ```
//! use eos_core::{gf_exact, scalar_net::WeightVector};
//!
//! let w = WeightVector::new(vec![2.0, 0.5]).unwrap();
//! let r = gf_exact::gfs(&w).unwrap();
//! // already a minimum: the GFS is the point itself
//! assert!((r.gfs_sharpness - 4.25).abs() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bifurcation;
pub mod diag_regression;
pub mod dynamics;
pub mod error;
pub mod flow_integrator;
pub mod gf_exact;
pub mod order_theory;
pub mod scalar_net;
pub mod stability_set;

pub use error::{Error, Result};
