//! Membership in the positive invariant set `S_η^D`.
//!
//! A positive-product weight `w` is a member when its GFS sharpness is at most
//! `2√2/η` and some bound `B > max(1, π(w))` keeps every point of its
//! gradient-flow curve with product in `(0, B)` inside `(0, B)` after one GD
//! step. Valid bounds form the interval `(B⁻, B⁺]` where
//!
//! * `B⁻` is the largest post-step product from a curve point with product in `[0, 1]`,
//! * `B⁺` is the smallest product `x ≥ 1` whose post-step product is zero.

use crate::dynamics::{gd_step, predicted_product_step};
use crate::error::{Error, Result};
use crate::gf_exact::{BalanceSignature, Sign};
use crate::scalar_net::WeightVector;

/// Grid resolution for [`b_minus`].
pub const GRID_POINTS: usize = 1024;
/// Root and refinement tolerance on products.
pub const ROOT_TOLERANCE: f64 = 1e-10;
/// Multiplicative scan factor for [`b_plus`].
pub const SCAN_FACTOR: f64 = 1.01;
/// Products beyond this are not scanned; [`b_plus`] reports `+∞` instead.
pub const SCAN_CAP: f64 = 1e6;

/// Why a weight is not a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    SharpnessTooLarge,
    ProductNonpositive,
    NoValidB,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::SharpnessTooLarge => "sharpness-too-large",
            Reason::ProductNonpositive => "product-nonpositive",
            Reason::NoValidB => "no-valid-B",
        }
    }
}

/// Membership verdict with its witnesses. Witnesses are `NaN` when the product
/// is not positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub member: bool,
    pub b_minus: f64,
    /// `f64::INFINITY` when no root lies below [`SCAN_CAP`].
    pub b_plus: f64,
    pub gfs_sharpness: f64,
    /// `2√2/η`.
    pub threshold: f64,
    pub reason: Option<Reason>,
}

impl StabilityReport {
    /// A bound realizing the definition: `b_plus` when finite, otherwise twice
    /// the lower end. `None` for non-members.
    pub fn bound(&self, product: f64) -> Option<f64> {
        if !self.member {
            return None;
        }
        if self.b_plus.is_finite() {
            Some(self.b_plus)
        } else {
            Some(2.0 * self.b_minus.max(product))
        }
    }
}

fn q(sig: &BalanceSignature, x: f64, eta: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    predicted_product_step(sig, x, eta)
}

fn require_positive(sig: &BalanceSignature) -> Result<()> {
    match sig.product_sign() {
        Sign::Positive => Ok(()),
        _ => Err(Error::UnsupportedSign(0.0)),
    }
}

/// `max_{x∈[0,1]} q(x)`, at least `q(1) = 1`.
pub fn b_minus(sig: &BalanceSignature, eta: f64) -> Result<f64> {
    require_positive(sig)?;
    let n = GRID_POINTS - 1;
    let mut values = Vec::with_capacity(GRID_POINTS);
    for i in 0..=n {
        values.push(q(sig, i as f64 / n as f64, eta)?);
    }
    let (best, &best_value) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    // golden-section search on the neighbouring cells
    let mut lo = best.saturating_sub(1) as f64 / n as f64;
    let mut hi = (best + 1).min(n) as f64 / n as f64;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (q(sig, a, eta)?, q(sig, b, eta)?);
    let mut top = best_value.max(fa).max(fb);
    while hi - lo > ROOT_TOLERANCE {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = q(sig, a, eta)?;
            top = top.max(fa);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = q(sig, b, eta)?;
            top = top.max(fb);
        }
    }
    Ok(top.max(1.0))
}

/// Post-step factor of the smallest coordinate at product `x`:
/// `1 − η(x−1)x / w_D(x)²`. Every other factor is at least this one.
fn smallest_factor(sig: &BalanceSignature, x: f64, eta: f64) -> Result<f64> {
    let u = sig.base_square(x)?;
    let smallest = u + sig.offsets()[sig.depth() - 1];
    Ok(1.0 - eta * (x - 1.0) * x / smallest)
}

/// Smallest `x ≥ 1` with `q(x) = 0`, or `+∞` if none lies below [`SCAN_CAP`].
///
/// `q` can touch zero without changing sign (paired equal coordinates give
/// double roots), so the scan looks for the sign change of the smallest
/// coordinate's factor, which vanishes at the same first root.
pub fn b_plus(sig: &BalanceSignature, eta: f64) -> Result<f64> {
    require_positive(sig)?;
    let mut lo = 1.0;
    let mut hi = lo;
    loop {
        hi *= SCAN_FACTOR;
        if hi > SCAN_CAP {
            return Ok(f64::INFINITY);
        }
        if smallest_factor(sig, hi, eta)? <= 0.0 {
            break;
        }
        lo = hi;
    }
    while hi - lo > ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if smallest_factor(sig, mid, eta)? <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Certifies membership of `w` in `S_η^D`.
pub fn in_stability_set(w: &WeightVector, eta: f64) -> Result<StabilityReport> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain { what: "step size", value: eta });
    }
    let threshold = 2.0 * 2f64.sqrt() / eta;
    let product = w.product();
    if !(product > 0.0) {
        return Ok(StabilityReport {
            member: false,
            b_minus: f64::NAN,
            b_plus: f64::NAN,
            gfs_sharpness: f64::NAN,
            threshold,
            reason: Some(Reason::ProductNonpositive),
        });
    }
    let sig = BalanceSignature::of(w);
    let gfs_sharpness = sig.gfs_sharpness()?;
    let lower = b_minus(&sig, eta)?;
    let upper = b_plus(&sig, eta)?;
    let reason = if gfs_sharpness > threshold {
        Some(Reason::SharpnessTooLarge)
    } else if !(upper > lower.max(product)) {
        Some(Reason::NoValidB)
    } else {
        None
    };
    Ok(StabilityReport {
        member: reason.is_none(),
        b_minus: lower,
        b_plus: upper,
        gfs_sharpness,
        threshold,
        reason,
    })
}

/// `false` only when `w` is a member at `eta1` but not at `eta2`.
pub fn nesting_check(w: &WeightVector, eta1: f64, eta2: f64) -> Result<bool> {
    if !(eta1 > eta2 && eta2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "nesting needs eta1 > eta2 > 0, got {eta1} and {eta2}"
        )));
    }
    if !in_stability_set(w, eta1)?.member {
        return Ok(true);
    }
    Ok(in_stability_set(w, eta2)?.member)
}

/// Steps every curve point with product in a grid of `samples` values across
/// `(0, bound)` and reports whether all post-step products stay in `(0, bound)`.
pub fn bound_is_invariant(
    sig: &BalanceSignature,
    eta: f64,
    bound: f64,
    samples: usize,
) -> Result<bool> {
    for i in 1..=samples {
        let x = bound * i as f64 / (samples + 1) as f64;
        let w = crate::gf_exact::weight_from_product(sig, x)?;
        let next = gd_step(&w, eta)?.product();
        if !(next > 0.0 && next < bound) {
            return Ok(false);
        }
    }
    Ok(true)
}
