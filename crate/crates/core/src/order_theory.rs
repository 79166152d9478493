//! Balance quasi-order, log-majorization, and sampled log-Schur-convexity checks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::gd_step;
use crate::error::{Error, Result};
use crate::scalar_net::{self, WeightVector};

/// Additive slack on squared-gap comparisons.
pub const GAP_SLACK: f64 = 1e-12;
/// Relative slack on product comparisons.
pub const PRODUCT_SLACK: f64 = 1e-10;
/// Slack on the sampled log-Schur-convexity inequalities.
pub const SCHUR_SLACK: f64 = 1e-10;

fn sorted_squares_desc(w: &[f64]) -> Vec<f64> {
    let mut sq: Vec<f64> = w.iter().map(|v| v * v).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    sq
}

/// `u ≤_b v`: every consecutive gap of sorted squares of `u` is at most the
/// corresponding gap of `v`.
pub fn balance_leq(u: &WeightVector, v: &WeightVector) -> Result<bool> {
    if u.depth() != v.depth() {
        return Err(Error::DepthMismatch(u.depth(), v.depth()));
    }
    let su = sorted_squares_desc(u.as_slice());
    let sv = sorted_squares_desc(v.as_slice());
    Ok(su
        .windows(2)
        .zip(sv.windows(2))
        .all(|(a, b)| a[0] - a[1] <= b[0] - b[1] + GAP_SLACK))
}

fn check_positive(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !(*v > 0.0)) {
        Some(index) => Err(Error::NonPositiveEntry { index, value: x[index] }),
        None => Ok(()),
    }
}

fn sorted_logs_desc(x: &[f64]) -> Vec<f64> {
    let mut l: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    l
}

/// `u ≺_log v`: equal total products and every descending prefix product of `u`
/// at most that of `v`. Comparisons are made on log-products with relative
/// slack [`PRODUCT_SLACK`].
pub fn log_majorizes(u: &[f64], v: &[f64]) -> Result<bool> {
    if u.len() != v.len() {
        return Err(Error::DepthMismatch(u.len(), v.len()));
    }
    check_positive(u)?;
    check_positive(v)?;
    let lu = sorted_logs_desc(u);
    let lv = sorted_logs_desc(v);
    let (mut pu, mut pv) = (0.0, 0.0);
    for (a, b) in lu.iter().zip(&lv) {
        pu += a;
        pv += b;
        if pu > pv + PRODUCT_SLACK {
            return Ok(false);
        }
    }
    Ok((pu - pv).abs() <= PRODUCT_SLACK)
}

/// Two positive vectors with `u ≺_log v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl OrderedPair {
    /// Checks positivity, equal length, and equal products.
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DepthMismatch(u.len(), v.len()));
        }
        check_positive(&u)?;
        check_positive(&v)?;
        let lu: f64 = u.iter().map(|x| x.ln()).sum();
        let lv: f64 = v.iter().map(|x| x.ln()).sum();
        if (lu - lv).abs() > 1e-12 * (1.0 + lu.abs().max(lv.abs())) {
            return Err(Error::InvalidArgument("pair products differ".into()));
        }
        Ok(Self { u, v })
    }
}

/// Moves coordinates `i` and `j` of `logs` toward each other:
/// `(t a_i + (1−t) a_j, t a_j + (1−t) a_i)`. With `t = ½` both become their mean.
pub fn t_transform(logs: &mut [f64], i: usize, j: usize, t: f64) {
    let (a, b) = (logs[i], logs[j]);
    logs[i] = t * a + (1.0 - t) * b;
    logs[j] = t * b + (1.0 - t) * a;
}

/// Draws `v` with log-normal entries scaled to a random common product, then
/// builds `u` from `v` by a random number (0 to `2·depth`) of log-space
/// T-transforms, so `u ≺_log v` holds by construction.
pub fn sample_log_majorizing_pair<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> OrderedPair {
    assert!(depth >= 2, "depth must be at least 2");
    let mut logs: Vec<f64> = (0..depth)
        .map(|_| StandardNormal.sample(&mut *rng))
        .collect();
    // recentre so the total log-product is a small random number around zero
    let mean = logs.iter().sum::<f64>() / depth as f64;
    let z: f64 = StandardNormal.sample(&mut *rng);
    let shift = 0.5 * z / depth as f64;
    for l in &mut logs {
        *l += shift - mean;
    }
    let v: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let transforms = rng.random_range(0..=2 * depth);
    for _ in 0..transforms {
        let i = rng.random_range(0..depth);
        let mut j = rng.random_range(0..depth - 1);
        if j >= i {
            j += 1;
        }
        let t = rng.random_range(0.0..=1.0);
        t_transform(&mut logs, i, j, t);
    }
    let u = logs.iter().map(|l| l.exp()).collect();
    OrderedPair { u, v }
}

/// Outcome of the three sampled log-Schur-convexity checks. `None` marks an
/// inapplicable part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchurReport {
    /// `s_1(u) ≤ s_1(v)`.
    pub s1: bool,
    /// `−[g_η(u)]_[D] ≤ −[g_η(v)]_[D]`, applicable when the product is at least one.
    pub min_coordinate: Option<bool>,
    /// `π(g_η(u)) ≤ π(g_η(v))`, applicable when the product is at most one.
    pub product_step: Option<bool>,
}

impl SchurReport {
    pub fn all_hold(&self) -> bool {
        self.s1 && self.min_coordinate != Some(false) && self.product_step != Some(false)
    }
}

fn leq_with_slack(a: f64, b: f64) -> bool {
    a <= b + SCHUR_SLACK * b.abs().max(1.0)
}

fn min_entry(w: &WeightVector) -> f64 {
    w.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Checks the three log-Schur-convex functions on a log-majorizing pair.
pub fn check_schur_functions(pair: &OrderedPair, eta: f64) -> Result<SchurReport> {
    let u = WeightVector::new(pair.u.clone())?;
    let v = WeightVector::new(pair.v.clone())?;
    let s1 = leq_with_slack(scalar_net::s1(&u), scalar_net::s1(&v));
    let log_product: f64 = pair.v.iter().map(|x| x.ln()).sum();
    let (gu, gv) = (gd_step(&u, eta)?, gd_step(&v, eta)?);
    let min_coordinate =
        (log_product >= 0.0).then(|| leq_with_slack(-min_entry(&gu), -min_entry(&gv)));
    let product_step = (log_product <= 0.0).then(|| leq_with_slack(gu.product(), gv.product()));
    Ok(SchurReport {
        s1,
        min_coordinate,
        product_step,
    })
}
