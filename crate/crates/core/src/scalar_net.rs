//! Loss, derivatives and symmetric functions of a scalar linear network.
//!
//! A depth-`D` scalar network is a weight vector `w ∈ R^D` whose output is the
//! coordinate product `π(w) = ∏ w_i`. It is trained on the quadratic loss
//! `L(w) = ½(π(w) − 1)²`.
//!
//! Every derivative is assembled from leave-one-out and leave-two-out products
//! of the weights, so points with zero coordinates need no special casing.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest supported depth.
pub const MAX_DEPTH: usize = 16;

/// Weights of a scalar network.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    entries: Vec<f64>,
}

impl WeightVector {
    /// Builds a weight vector, checking `2 <= D <= 16` and finiteness.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 || entries.len() > MAX_DEPTH {
            return Err(Error::InvalidDepth(entries.len()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight vector"));
        }
        Ok(Self { entries })
    }

    /// All-`value` vector of the given depth.
    pub fn constant(depth: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; depth])
    }

    pub fn depth(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }

    /// The coordinate product `π(w)`.
    pub fn product(&self) -> f64 {
        self.entries.iter().product()
    }

    pub fn squares(&self) -> Vec<f64> {
        self.entries.iter().map(|v| v * v).collect()
    }
}

impl AsRef<[f64]> for WeightVector {
    fn as_ref(&self) -> &[f64] {
        &self.entries
    }
}

/// Values `s_0, ..., s_D` where `s_m` is the elementary symmetric polynomial of
/// degree `D − m` in the squared weights.
///
/// `s_D = 1`, `s_0 = π(w)²`, and at a point with product one `s_1` is the
/// sharpness.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricValues {
    values: Vec<f64>,
}

impl SymmetricValues {
    /// Evaluates the values from squared weights.
    ///
    /// Uses the running-product recurrence `e_k ← e_k + a·e_{k−1}`. Every term is
    /// nonnegative, so there is no cancellation.
    pub fn from_squares(squares: &[f64]) -> Self {
        let depth = squares.len();
        // elementary[k] = e_k(squares)
        let mut elementary = vec![0.0; depth + 1];
        elementary[0] = 1.0;
        for (seen, &a) in squares.iter().enumerate() {
            for k in (1..=seen + 1).rev() {
                elementary[k] += elementary[k - 1] * a;
            }
        }
        let values = (0..=depth).map(|m| elementary[depth - m]).collect();
        Self { values }
    }

    pub fn depth(&self) -> usize {
        self.values.len() - 1
    }

    /// `s_m`. Panics if `m > D`.
    pub fn get(&self, m: usize) -> f64 {
        self.values[m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// `½(π(w) − 1)²`.
pub fn loss(w: &WeightVector) -> f64 {
    let r = w.product() - 1.0;
    0.5 * r * r
}

/// Products `∏_{j≠i} w_j` for every `i`, via prefix and suffix products.
pub fn leave_one_out_products(w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let mut out = vec![1.0; n];
    let mut prefix = 1.0;
    for i in 0..n {
        out[i] = prefix;
        prefix *= w[i];
    }
    let mut suffix = 1.0;
    for i in (0..n).rev() {
        out[i] *= suffix;
        suffix *= w[i];
    }
    out
}

/// `∏_{k∉{i,j}} w_k` for `i ≠ j`.
pub fn leave_two_out_product(w: &[f64], i: usize, j: usize) -> f64 {
    w.iter()
        .enumerate()
        .filter(|&(k, _)| k != i && k != j)
        .map(|(_, v)| v)
        .product()
}

/// Gradient `(π − 1)·∏_{j≠i} w_j`.
pub fn gradient(w: &WeightVector) -> Vec<f64> {
    let residual = w.product() - 1.0;
    leave_one_out_products(w.as_slice())
        .into_iter()
        .map(|p| residual * p)
        .collect()
}

/// Exact Hessian of the loss.
///
/// Off-diagonal: `∏_{k≠i} w_k ∏_{k≠j} w_k + (π − 1)∏_{k∉{i,j}} w_k`;
/// diagonal: `(∏_{k≠i} w_k)²`.
pub fn hessian(w: &WeightVector) -> DMatrix<f64> {
    let ws = w.as_slice();
    let n = ws.len();
    let residual = w.product() - 1.0;
    let loo = leave_one_out_products(ws);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = loo[i] * loo[i];
        for j in (i + 1)..n {
            let v = loo[i] * loo[j] + residual * leave_two_out_product(ws, i, j);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Largest (signed) eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue of the Hessian.
pub fn sharpness(w: &WeightVector) -> f64 {
    max_eigenvalue(hessian(w))
}

pub fn symmetric_values(w: &WeightVector) -> SymmetricValues {
    SymmetricValues::from_squares(&w.squares())
}

/// `s_1(w) = π²‖w⁻¹‖²`, computed without division.
pub fn s1(w: &WeightVector) -> f64 {
    leave_one_out_products(w.as_slice())
        .iter()
        .map(|p| p * p)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn depth_bounds() {
        assert_eq!(WeightVector::new(vec![1.0]), Err(Error::InvalidDepth(1)));
        assert_eq!(
            WeightVector::new(vec![1.0; 17]),
            Err(Error::InvalidDepth(17))
        );
        assert!(WeightVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(WeightVector::new(vec![1.0; 16]).is_ok());
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&wv(&[1.0, 1.0, 1.0, 1.0])), 0.0);
        assert_eq!(loss(&wv(&[2.0, 0.5])), 0.0);
        assert_eq!(loss(&wv(&[2.0, 2.0])), 4.5);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(gradient(&wv(&[2.0, 0.5])), vec![0.0, 0.0]);
        assert_eq!(gradient(&wv(&[2.0, 2.0])), vec![6.0, 6.0]);
        assert_eq!(gradient(&wv(&[0.0, 3.0])), vec![-3.0, 0.0]);
    }

    #[test]
    fn hessian_at_ones() {
        let h = hessian(&wv(&[1.0, 1.0]));
        assert_eq!(h, DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn hessian_with_zero_coordinates() {
        // π = 0: off-diagonal reduces to the product terms minus the leave-two-out product
        let h = hessian(&wv(&[0.0, 2.0, 3.0]));
        assert_eq!(h[(0, 0)], 36.0);
        assert_eq!(h[(1, 1)], 0.0);
        assert_eq!(h[(0, 1)], -3.0);
        assert_eq!(h[(1, 2)], 0.0);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn sharpness_examples() {
        assert!((sharpness(&wv(&[1.0, 1.0])) - 2.0).abs() < 1e-12);
        assert!((sharpness(&wv(&[1.0; 4])) - 4.0).abs() < 1e-12);
        let w = wv(&[2.0, 0.5]);
        assert!((sharpness(&w) - 4.25).abs() < 1e-12);
    }

    #[test]
    fn signed_sharpness_can_be_negative() {
        // At the origin of a depth-2 net the Hessian is [[0,-1],[-1,0]].
        assert!((sharpness(&wv(&[0.0, 0.0])) - 1.0).abs() < 1e-12);
        // Depth 3 at the origin: Hessian vanishes.
        assert_eq!(sharpness(&wv(&[0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn symmetric_values_examples() {
        assert_eq!(symmetric_values(&wv(&[1.0, 1.0])).as_slice(), &[1.0, 2.0, 1.0]);
        let s = symmetric_values(&wv(&[1.0; 5]));
        assert_eq!(s.as_slice(), &[1.0, 5.0, 10.0, 10.0, 5.0, 1.0]);
        let w = wv(&[0.7, -1.3, 2.1]);
        let s = symmetric_values(&w);
        assert_eq!(s.get(3), 1.0);
        assert!((s.get(0) - w.product().powi(2)).abs() < 1e-12);
        let inv: f64 = w.as_slice().iter().map(|v| 1.0 / (v * v)).sum();
        assert!((s.get(1) - w.product().powi(2) * inv).abs() < 1e-12);
        assert!((s1(&w) - s.get(1)).abs() < 1e-12);
    }
}
