//! Periodic points of GPGD and bifurcation diagrams along GD trajectories.
//!
//! With the balances frozen, GPGD reduces to the scalar map `x ↦ q(x)` on the
//! product. Iterating it long enough from a trajectory's product lands on an
//! attracting cycle (or wanders chaotically), which is what GD shadows when
//! the GFS sharpness changes slowly.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::gf_exact::{BalanceSignature, Sign};
use crate::scalar_net::WeightVector;

pub const DEFAULT_MAX_PERIOD: usize = 512;
pub const DEFAULT_BURN_IN: usize = 200_000;
pub const DEFAULT_TAIL: usize = 1_000;
/// Absolute tolerance on products when classifying a period.
pub const PERIOD_TOLERANCE: f64 = 1e-8;
/// Largest per-period change at which burn-in stops early.
pub const SETTLED_TOLERANCE: f64 = 1e-13;
/// Samples whose GFS sharpness lies within this relative distance of a
/// detected period doubling are flagged.
pub const DOUBLING_FLAG_WIDTH: f64 = 0.01;

/// Settings for [`periodic_set`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationConfig {
    pub burn_in: usize,
    pub tail: usize,
    pub max_period: usize,
    pub tolerance: f64,
    pub divergence_bound: f64,
    /// Stop burn-in once the last `2·max_period` iterates repeat with some
    /// period to within [`SETTLED_TOLERANCE`].
    pub early_stop: bool,
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            tail: DEFAULT_TAIL,
            max_period: DEFAULT_MAX_PERIOD,
            tolerance: PERIOD_TOLERANCE,
            divergence_bound: crate::dynamics::DEFAULT_DIVERGENCE_BOUND,
            early_stop: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Period {
    Finite(usize),
    /// No period up to the configured maximum.
    Chaotic,
}

impl Period {
    pub fn finite(self) -> Option<usize> {
        match self {
            Period::Finite(p) => Some(p),
            Period::Chaotic => None,
        }
    }
}

impl std::fmt::Display for Period {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Period::Finite(p) => write!(f, "{p}"),
            Period::Chaotic => f.write_str("chaotic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationSample {
    pub gfs_sharpness: f64,
    /// One full cycle in iteration order, or every tail value when chaotic.
    pub periodic_products: Vec<f64>,
    pub period: Period,
}

impl BifurcationSample {
    /// Distance from `product` to the nearest periodic product.
    pub fn distance(&self, product: f64) -> f64 {
        self.periodic_products
            .iter()
            .map(|p| (p - product).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// The product map `q` of one balance signature, with a warm-started solve for
/// the base square.
#[derive(Debug, Clone)]
pub struct ProductMap {
    groups: Vec<(f64, i32)>,
    zero_multiplicity: f64,
    eta: f64,
    log_base: f64,
}

impl ProductMap {
    pub fn new(sig: &BalanceSignature, eta: f64) -> Result<Self> {
        if sig.product_sign() != Sign::Positive {
            return Err(Error::UnsupportedSign(0.0));
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::Domain { what: "step size", value: eta });
        }
        let mut groups: Vec<(f64, i32)> = Vec::new();
        let mut zero_multiplicity = 0.0;
        for &o in sig.offsets() {
            if o == 0.0 {
                zero_multiplicity += 1.0;
            } else {
                match groups.last_mut() {
                    Some((last, m)) if *last == o => *m += 1,
                    _ => groups.push((o, 1)),
                }
            }
        }
        let log_base = sig.base_square(1.0)?.ln();
        Ok(Self { groups, zero_multiplicity, eta, log_base })
    }

    /// Newton on `v = ln u` from the previous solution. The residual is convex
    /// and increasing, so a start left of the root overshoots once and then
    /// decreases monotonically.
    fn log_base_square(&mut self, x: f64) -> f64 {
        let target = 2.0 * x.ln();
        let mut v = self.log_base;
        for _ in 0..100 {
            let u = v.exp();
            let mut f = self.zero_multiplicity * v - target;
            let mut slope = self.zero_multiplicity;
            for &(o, m) in &self.groups {
                let m = m as f64;
                f += m * (u + o).ln();
                slope += m * u / (u + o);
            }
            let step = f / slope;
            v -= step;
            if step.abs() <= 4.0 * f64::EPSILON * v.abs().max(1.0) {
                break;
            }
        }
        self.log_base = v;
        v
    }

    /// `q(x)`, the product after one GPGD step from product `x > 0`.
    pub fn apply(&mut self, x: f64) -> f64 {
        let u = self.log_base_square(x).exp();
        let c = self.eta * (x - 1.0) * x;
        let mut out = x * (1.0 - c / u).powi(self.zero_multiplicity as i32);
        for &(o, m) in &self.groups {
            out *= (1.0 - c / (u + o)).powi(m);
        }
        out
    }
}

/// Smallest `p ≤ max_period` such that the values repeat with period `p`.
fn detect_period(values: &[f64], max_period: usize, tolerance: f64) -> Option<usize> {
    (1..=max_period.min(values.len().saturating_sub(1))).find(|&p| {
        values
            .iter()
            .zip(&values[p..])
            .all(|(a, b)| (a - b).abs() < tolerance)
    })
}

/// Iterates the product map of `sig` from `x0` and classifies the attractor.
pub fn periodic_set(
    sig: &BalanceSignature,
    eta: f64,
    config: &BifurcationConfig,
    x0: f64,
) -> Result<BifurcationSample> {
    if config.tail == 0 || config.burn_in < config.tail {
        return Err(Error::InvalidArgument("need burn_in >= tail >= 1".into()));
    }
    if !(x0 > 0.0) || !x0.is_finite() {
        return Err(Error::Domain { what: "initial product", value: x0 });
    }
    let gfs_sharpness = sig.gfs_sharpness()?;
    let mut map = ProductMap::new(sig, eta)?;
    let admissible = |step: usize, x: f64| {
        if x > 0.0 && x < config.divergence_bound {
            Ok(x)
        } else {
            Err(Error::Diverged { step, value: x })
        }
    };
    let window = 2 * config.max_period + 1;
    let mut recent = std::collections::VecDeque::with_capacity(window);
    let mut x = x0;
    for step in 1..=config.burn_in {
        x = admissible(step, map.apply(x))?;
        if config.early_stop {
            if recent.len() == window {
                recent.pop_front();
            }
            recent.push_back(x);
            if step % 4096 == 0 && recent.len() == window {
                let values = recent.make_contiguous();
                if detect_period(values, config.max_period, SETTLED_TOLERANCE).is_some() {
                    break;
                }
            }
        }
    }
    let mut tail = Vec::with_capacity(config.tail);
    for step in 0..config.tail {
        x = admissible(config.burn_in + step + 1, map.apply(x))?;
        tail.push(x);
    }
    let (period, periodic_products) = match detect_period(&tail, config.max_period, config.tolerance) {
        Some(p) => (Period::Finite(p), tail[..p].to_vec()),
        None => (Period::Chaotic, tail),
    };
    Ok(BifurcationSample { gfs_sharpness, periodic_products, period })
}

/// [`periodic_set`] for the signature of `w`, started at `π(w)`.
pub fn periodic_set_at(w: &WeightVector, eta: f64, config: &BifurcationConfig) -> Result<BifurcationSample> {
    periodic_set(&BalanceSignature::of(w), eta, config, w.product())
}

/// A trajectory point next to the periodic set of its signature.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedSample {
    pub t: usize,
    pub gfs_sharpness: f64,
    pub product: f64,
    pub sample: std::result::Result<BifurcationSample, Error>,
}

impl TrackedSample {
    pub fn period(&self) -> Option<Period> {
        self.sample.as_ref().ok().map(|s| s.period)
    }

    /// Distance of the trajectory's product to the periodic set; `∞` on error.
    pub fn distance(&self) -> f64 {
        match &self.sample {
            Ok(s) => s.distance(self.product),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Periodic set for one snapshot of a trajectory.
pub fn track_point(t: usize, w: &WeightVector, eta: f64, config: &BifurcationConfig) -> TrackedSample {
    let gfs_sharpness = crate::gf_exact::gfs_sharpness(w).unwrap_or(f64::NAN);
    let sample = periodic_set_at(w, eta, config);
    TrackedSample { t, gfs_sharpness, product: w.product(), sample }
}

/// Periodic sets for every stored snapshot of `traj`.
pub fn diagram_along_trajectory(traj: &Trajectory, config: &BifurcationConfig) -> Vec<TrackedSample> {
    traj.snapshots
        .iter()
        .map(|(t, w)| track_point(*t, w, traj.eta, config))
        .collect()
}

/// GFS sharpness values at which neighbouring samples (ordered by `t`) go from
/// period `p` to `2p`, placed at the midpoint of the two samples.
pub fn period_doublings(samples: &[TrackedSample]) -> Vec<f64> {
    samples
        .windows(2)
        .filter_map(|pair| {
            let a = pair[0].period()?.finite()?;
            let b = pair[1].period()?.finite()?;
            (a == 2 * b || b == 2 * a)
                .then(|| 0.5 * (pair[0].gfs_sharpness + pair[1].gfs_sharpness))
        })
        .collect()
}

/// Whether `phi` lies within [`DOUBLING_FLAG_WIDTH`] of any doubling.
pub fn near_doubling(phi: f64, doublings: &[f64]) -> bool {
    doublings
        .iter()
        .any(|d| (phi - d).abs() <= DOUBLING_FLAG_WIDTH * d.abs())
}

/// Samples of a trajectory with strided coverage, refined to every snapshot
/// wherever neighbouring strided samples disagree on the period.
///
/// Only snapshots with GFS sharpness at least `min_phi` are considered.
/// Returned samples are ordered by `t`.
pub fn track_trajectory(
    traj: &Trajectory,
    config: &BifurcationConfig,
    min_phi: f64,
    stride: usize,
) -> Vec<TrackedSample> {
    let stride = stride.max(1);
    let points: Vec<&(usize, WeightVector)> = traj
        .snapshots
        .iter()
        .filter(|(_, w)| crate::gf_exact::gfs_sharpness(w).is_ok_and(|phi| phi >= min_phi))
        .collect();
    if points.is_empty() {
        return Vec::new();
    }
    let eta = traj.eta;
    let mut picks: Vec<usize> = (0..points.len()).step_by(stride).collect();
    if picks.last() != Some(&(points.len() - 1)) {
        picks.push(points.len() - 1);
    }
    let mut out: Vec<(usize, TrackedSample)> = picks
        .iter()
        .map(|&i| (i, track_point(points[i].0, &points[i].1, eta, config)))
        .collect();
    let mut refined = Vec::new();
    for pair in out.windows(2) {
        let ((i, a), (j, b)) = (&pair[0], &pair[1]);
        if a.period() != b.period() {
            for (k, p) in points.iter().enumerate().take(*j).skip(i + 1) {
                refined.push((k, track_point(p.0, &p.1, eta, config)));
            }
        }
    }
    out.extend(refined);
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, s)| s).collect()
}
