//! Exact gradient-flow solutions of scalar networks.
//!
//! Gradient flow conserves every balance `w_i² − w_j²`. A trajectory is therefore
//! identified by the sorted squared gaps to the smallest squared coordinate plus
//! the coordinate signs, collected in a [`BalanceSignature`]. Along a fixed
//! signature, the weight is a function of its product `x` alone: the squares are
//! `u + offset_i` where the base square `u > 0` solves `∏ (u + offset_i) = x²`.
//! The gradient-flow solution (GFS) is the point of that family with `x = 1`.

use crate::error::{Error, Result};
use crate::scalar_net::{self, SymmetricValues, WeightVector};

/// Sign of a real number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    /// `-1.0` for negative coordinates, `1.0` otherwise.
    pub fn factor(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            _ => 1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Positive => Sign::Negative,
            Sign::Zero => Sign::Zero,
        }
    }
}

/// Canonical gradient-flow invariant of a scalar network.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSignature {
    /// `w_[k]² − w_[D]²`, non-increasing, last entry exactly zero.
    offsets: Vec<f64>,
    /// `order[k]` is the original index of the k-th largest square (ties stable).
    order: Vec<usize>,
    /// Coordinate signs in the original order.
    signs: Vec<Sign>,
    product_sign: Sign,
    // (offset, multiplicity) for each distinct nonzero offset
    groups: Vec<(f64, f64)>,
    zero_multiplicity: f64,
    log_offset_sum: f64,
}

impl BalanceSignature {
    /// Canonical signature of `w`.
    pub fn of(w: &WeightVector) -> Self {
        let ws = w.as_slice();
        let squares = w.squares();
        let mut order: Vec<usize> = (0..ws.len()).collect();
        // stable sort keeps equal squares in their original relative order
        order.sort_by(|&a, &b| squares[b].total_cmp(&squares[a]));
        let smallest = squares[order[ws.len() - 1]];
        let offsets: Vec<f64> = order.iter().map(|&i| squares[i] - smallest).collect();
        let signs: Vec<Sign> = ws.iter().map(|&v| Sign::of(v)).collect();
        Self::assemble(offsets, order, signs, Sign::of(w.product()))
    }

    /// Positive-sign signature from explicit offsets (sorted non-increasing,
    /// nonnegative, last entry zero).
    pub fn from_offsets(offsets: Vec<f64>) -> Result<Self> {
        let depth = offsets.len();
        if !(2..=scalar_net::MAX_DEPTH).contains(&depth) {
            return Err(Error::InvalidDepth(depth));
        }
        if offsets.iter().any(|o| !o.is_finite() || *o < 0.0) {
            return Err(Error::InvalidArgument(
                "offsets must be finite and nonnegative".into(),
            ));
        }
        if offsets.windows(2).any(|p| p[0] < p[1]) || offsets[depth - 1] != 0.0 {
            return Err(Error::InvalidArgument(
                "offsets must be non-increasing and end in zero".into(),
            ));
        }
        Ok(Self::assemble(
            offsets,
            (0..depth).collect(),
            vec![Sign::Positive; depth],
            Sign::Positive,
        ))
    }

    /// Signature with the given offsets, coordinate order and signs.
    ///
    /// `offsets` may be unsorted or shifted; they are re-canonicalized and the
    /// permutation is composed accordingly. Used by the decomposed dynamics.
    pub(crate) fn recanonicalize(gaps: &[f64], order: &[usize], signs: Vec<Sign>) -> Self {
        let depth = gaps.len();
        let mut perm: Vec<usize> = (0..depth).collect();
        perm.sort_by(|&a, &b| gaps[b].total_cmp(&gaps[a]));
        let smallest = gaps[perm[depth - 1]];
        let offsets: Vec<f64> = perm.iter().map(|&k| gaps[k] - smallest).collect();
        let new_order: Vec<usize> = perm.iter().map(|&k| order[k]).collect();
        let negatives = signs.iter().filter(|s| **s == Sign::Negative).count();
        let product_sign = if signs.contains(&Sign::Zero) {
            Sign::Zero
        } else if negatives % 2 == 0 {
            Sign::Positive
        } else {
            Sign::Negative
        };
        Self::assemble(offsets, new_order, signs, product_sign)
    }

    fn assemble(offsets: Vec<f64>, order: Vec<usize>, signs: Vec<Sign>, product_sign: Sign) -> Self {
        let mut groups: Vec<(f64, f64)> = Vec::new();
        let mut zero_multiplicity = 0.0;
        for &o in &offsets {
            if o == 0.0 {
                zero_multiplicity += 1.0;
            } else if let Some(last) = groups.last_mut().filter(|g| g.0 == o) {
                last.1 += 1.0;
            } else {
                groups.push((o, 1.0));
            }
        }
        let log_offset_sum = groups.iter().map(|(o, m)| m * o.ln()).sum();
        Self {
            offsets,
            order,
            signs,
            product_sign,
            groups,
            zero_multiplicity,
            log_offset_sum,
        }
    }

    pub fn depth(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn product_sign(&self) -> Sign {
        self.product_sign
    }

    /// Base square `u > 0` with `∏ (u + offset_k) = x²`.
    ///
    /// Newton's method on `v = ln u`: the residual `Σ ln(e^v + o_k) − 2 ln x`
    /// is convex and increasing in `v` with slope between the number of zero
    /// offsets and `D`, so Newton started right of the root converges
    /// monotonically.
    pub fn base_square(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain { what: "product", value: x });
        }
        let target = 2.0 * x.ln();
        let depth = self.depth() as f64;
        // both starting candidates lie right of the root
        let mut v = (target / depth).min((target - self.log_offset_sum) / self.zero_multiplicity);
        for _ in 0..100 {
            let u = v.exp();
            let mut f = self.zero_multiplicity * v - target;
            let mut slope = self.zero_multiplicity;
            for &(o, m) in &self.groups {
                f += m * (u + o).ln();
                slope += m * u / (u + o);
            }
            let step = f / slope;
            v -= step;
            if step.abs() <= 4.0 * f64::EPSILON * v.abs().max(1.0) {
                return Ok(v.exp());
            }
        }
        // the iteration stalls only at the last ulp; accept if the residual is tiny
        let u = v.exp();
        let residual = self.log_level(u) - target;
        if residual.abs() < 1e-12 {
            Ok(u)
        } else {
            Err(Error::NotConverged { what: "base square", best: u })
        }
    }

    fn log_level(&self, u: f64) -> f64 {
        self.offsets.iter().map(|o| (u + o).ln()).sum()
    }

    /// Squared weights at product `x`, in canonical (descending) order.
    pub fn squares_at(&self, x: f64) -> Result<Vec<f64>> {
        let u = self.base_square(x)?;
        Ok(self.offsets.iter().map(|o| u + o).collect())
    }

    /// GFS sharpness of this trajectory: `Σ 1/w_k²` at the product-one point.
    pub fn gfs_sharpness(&self) -> Result<f64> {
        let u = self.base_square(1.0)?;
        Ok(self.offsets.iter().map(|o| 1.0 / (u + o)).sum())
    }

    /// Balance signature with every offset multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        Self::assemble(
            self.offsets.iter().map(|o| o * scale).collect(),
            self.order.clone(),
            self.signs.clone(),
            self.product_sign,
        )
    }
}

/// Gradient-flow solution and its sharpness.
#[derive(Debug, Clone, PartialEq)]
pub struct GfsResult {
    pub solution: WeightVector,
    pub gfs_sharpness: f64,
}

pub fn signature(w: &WeightVector) -> BalanceSignature {
    BalanceSignature::of(w)
}

/// The weight with balance signature `sig` and product `x`.
pub fn weight_from_product(sig: &BalanceSignature, x: f64) -> Result<WeightVector> {
    if !(x > 0.0) {
        return Err(Error::Domain { what: "product", value: x });
    }
    if sig.product_sign != Sign::Positive {
        return Err(Error::UnsupportedSign(x));
    }
    let u = sig.base_square(x)?;
    let mut entries = vec![0.0; sig.depth()];
    for (k, &i) in sig.order.iter().enumerate() {
        entries[i] = sig.signs[i].factor() * (u + sig.offsets[k]).sqrt();
    }
    WeightVector::new(entries)
}

/// Gradient-flow solution `S_GF(w)` and GFS sharpness `φ(w)`.
///
/// Only positive-product weights are supported.
pub fn gfs(w: &WeightVector) -> Result<GfsResult> {
    let p = w.product();
    if !(p > 0.0) {
        return Err(Error::UnsupportedSign(p));
    }
    let sig = BalanceSignature::of(w);
    let solution = weight_from_product(&sig, 1.0)?;
    let gfs_sharpness = sig.gfs_sharpness()?;
    Ok(GfsResult {
        solution,
        gfs_sharpness,
    })
}

/// GFS sharpness `φ(w)` without materializing the solution.
pub fn gfs_sharpness(w: &WeightVector) -> Result<f64> {
    let p = w.product();
    if !(p > 0.0) {
        return Err(Error::UnsupportedSign(p));
    }
    BalanceSignature::of(w).gfs_sharpness()
}

/// `s̃_m(x) = s_m(w(x))` for every `m`.
pub fn stilde(sig: &BalanceSignature, x: f64) -> Result<SymmetricValues> {
    if !(x > 0.0) {
        return Err(Error::Domain { what: "product", value: x });
    }
    Ok(SymmetricValues::from_squares(&sig.squares_at(x)?))
}
