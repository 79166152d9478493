//! RK4 gradient flow over a generic loss, with a Lanczos estimate of the top
//! Hessian eigenvalue.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar_net::{self, WeightVector};

/// A smooth loss `R^n → R`.
pub trait LossOracle: Sync {
    fn dimension(&self) -> usize;
    fn value(&self, w: &[f64]) -> f64;
    fn gradient(&self, w: &[f64]) -> Vec<f64>;
    /// Exact Hessian-vector product, if available.
    fn hvp(&self, _w: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// `(∇L(w+hv) − ∇L(w−hv)) / 2h` with `h = 1e−5·(1+‖w‖)`.
pub fn finite_difference_hvp<O: LossOracle + ?Sized>(oracle: &O, w: &[f64], v: &[f64]) -> Vec<f64> {
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let h = 1e-5 * (1.0 + norm);
    let plus: Vec<f64> = w.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = w.iter().zip(v).map(|(a, b)| a - h * b).collect();
    let (gp, gm) = (oracle.gradient(&plus), oracle.gradient(&minus));
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

fn hvp<O: LossOracle + ?Sized>(oracle: &O, w: &[f64], v: &[f64]) -> Vec<f64> {
    oracle.hvp(w, v).unwrap_or_else(|| finite_difference_hvp(oracle, w, v))
}

/// Krylov dimension per Lanczos cycle.
pub const LANCZOS_DIMENSION: usize = 40;

/// Largest signed eigenvalue of `∇²L(w)`.
///
/// Restarted Lanczos with full reorthogonalization. The Ritz values of the
/// tridiagonal projection approximate both ends of the spectrum, so the signed
/// maximum is read off directly. `max_iters` bounds the total number of
/// Hessian-vector products.
pub fn top_eigenvalue<O: LossOracle + ?Sized>(oracle: &O, w: &[f64], tol: f64, max_iters: usize) -> Result<f64> {
    let n = oracle.dimension();
    if w.len() != n {
        return Err(Error::DepthMismatch(w.len(), n));
    }
    let matvec = |v: &DVector<f64>| DVector::from_vec(hvp(oracle, w, v.as_slice()));
    lanczos_top(n, matvec, None, tol, max_iters).map(|(l, _)| l)
}

/// Largest signed eigenvalue and its Ritz vector for the symmetric operator
/// `matvec` on `R^n`, started from `start` (or a fixed vector).
pub fn lanczos_top<F>(
    n: usize,
    mut matvec: F,
    start: Option<&DVector<f64>>,
    tol: f64,
    max_iters: usize,
) -> Result<(f64, DVector<f64>)>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let mut start = match start {
        Some(s) if s.len() == n && s.norm() > 0.0 => s.clone(),
        // fixed start vector keeps results deterministic
        _ => DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i + 1) as f64).sin()),
    };
    let mut best = f64::NAN;
    let mut used = 0;
    while used < max_iters {
        let m = LANCZOS_DIMENSION.min(n).min(max_iters - used);
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        let mut q = start.normalize();
        let mut top = (f64::NAN, DVector::zeros(1));
        for j in 0..m {
            let hq = matvec(&q);
            used += 1;
            let a = q.dot(&hq);
            let mut r = hq;
            r.axpy(-a, &q, 1.0);
            if j > 0 {
                r.axpy(-beta[j - 1], &basis[j - 1], 1.0);
            }
            basis.push(q.clone());
            // full reorthogonalization, twice for safety
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&r);
                    r.axpy(-c, b, 1.0);
                }
            }
            alpha.push(a);
            let residual_norm = r.norm();
            let exhausted = j + 1 == m || residual_norm <= 1e-14 * a.abs().max(1.0);
            if exhausted || (j + 1) % 4 == 0 {
                top = ritz_top(&alpha, &beta);
                best = top.0;
                let s = &top.1;
                let ritz_residual = residual_norm * s[s.len() - 1].abs();
                // a Krylov space spanning the whole space or an invariant subspace is exact
                let exact = basis.len() == n || residual_norm <= 1e-14 * a.abs().max(1.0);
                if exact || ritz_residual <= tol * top.0.abs().max(1.0) {
                    return Ok((top.0, combine(&basis, s, n)));
                }
            }
            if exhausted {
                break;
            }
            beta.push(residual_norm);
            q = r / residual_norm;
        }
        start = combine(&basis, &top.1, n);
    }
    Err(Error::NotConverged { what: "top eigenvalue", best })
}

/// Largest eigenvalue of the Lanczos tridiagonal and its eigenvector.
fn ritz_top(alpha: &[f64], beta: &[f64]) -> (f64, DVector<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty Krylov space");
    (theta, eig.eigenvectors.column(idx).into_owned())
}

fn combine(basis: &[DVector<f64>], coeffs: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (b, c) in basis.iter().zip(coeffs.iter()) {
        out.axpy(*c, b, 1.0);
    }
    out
}

/// Settings for [`rk4_flow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub loss_threshold: f64,
    pub max_steps: usize,
    /// Steps between step-size refreshes.
    pub refresh_every: usize,
    pub min_step: f64,
    pub max_step: f64,
    /// Step size as a multiple of `1/λ_max`.
    pub step_scale: f64,
    pub eigen_tol: f64,
    pub eigen_iters: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            loss_threshold: 1e-5,
            max_steps: 100_000,
            refresh_every: 100,
            min_step: 1e-6,
            max_step: 1e2,
            step_scale: 1.0,
            eigen_tol: 1e-8,
            eigen_iters: 400,
        }
    }
}

impl FlowConfig {
    /// Tight settings for comparisons against exact solutions: threshold
    /// `1e−10` and steps of `0.02/λ_max`.
    pub fn oracle() -> Self {
        Self {
            loss_threshold: 1e-10,
            max_steps: 1_000_000,
            step_scale: 0.02,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    /// `max_steps` reached above the threshold; the result is partial.
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub terminal: Vec<f64>,
    pub terminal_loss: f64,
    pub steps: usize,
    /// Top eigenvalue at the terminal point.
    pub top_eigenvalue: f64,
    pub status: FlowStatus,
}

/// One classic RK4 step of `dw/dt = −∇L(w)`.
pub fn rk4_step<O: LossOracle + ?Sized>(oracle: &O, w: &[f64], h: f64) -> Vec<f64> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - s * y).collect() };
    let k1 = oracle.gradient(w);
    let k2 = oracle.gradient(&axpy(w, 0.5 * h, &k1));
    let k3 = oracle.gradient(&axpy(w, 0.5 * h, &k2));
    let k4 = oracle.gradient(&axpy(w, h, &k3));
    w.iter()
        .enumerate()
        .map(|(i, x)| x - h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn refreshed_step<O: LossOracle + ?Sized>(oracle: &O, w: &[f64], config: &FlowConfig) -> f64 {
    let lambda = top_eigenvalue(oracle, w, config.eigen_tol, config.eigen_iters)
        .unwrap_or_else(|e| match e {
            Error::NotConverged { best, .. } => best,
            _ => f64::NAN,
        });
    let h = if lambda > 0.0 { config.step_scale / lambda } else { config.max_step };
    h.clamp(config.min_step, config.max_step)
}

/// Integrates gradient flow from `w0` until the loss drops below the
/// threshold.
///
/// The step is `step_scale/λ_max`, refreshed every `refresh_every` steps and
/// clamped to `[min_step, max_step]`. A step that raises the loss is retried
/// at half the size, so accepted steps never increase the loss.
pub fn rk4_flow<O: LossOracle + ?Sized>(oracle: &O, w0: &[f64], config: &FlowConfig) -> Result<FlowResult> {
    if !(config.loss_threshold > 0.0) {
        return Err(Error::Domain { what: "loss threshold", value: config.loss_threshold });
    }
    if w0.len() != oracle.dimension() {
        return Err(Error::DepthMismatch(w0.len(), oracle.dimension()));
    }
    let mut w = w0.to_vec();
    let mut loss = oracle.value(&w);
    if !loss.is_finite() {
        return Err(Error::NonFinite("initial loss"));
    }
    let mut h = refreshed_step(oracle, &w, config);
    let mut steps = 0;
    while loss > config.loss_threshold && steps < config.max_steps {
        if steps > 0 && steps % config.refresh_every.max(1) == 0 {
            h = refreshed_step(oracle, &w, config);
        }
        loop {
            let next = rk4_step(oracle, &w, h);
            let next_loss = oracle.value(&next);
            if next_loss.is_finite() && next_loss <= loss + 1e-12 * loss.max(1e-300) {
                w = next;
                loss = next_loss;
                break;
            }
            if h <= config.min_step {
                return Err(Error::Diverged { step: steps, value: next_loss });
            }
            h = (0.5 * h).max(config.min_step);
        }
        steps += 1;
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("flow state"));
    }
    let top = top_eigenvalue(oracle, &w, config.eigen_tol, config.eigen_iters)?;
    let status = if loss <= config.loss_threshold { FlowStatus::Converged } else { FlowStatus::Timeout };
    Ok(FlowResult { terminal: w, terminal_loss: loss, steps, top_eigenvalue: top, status })
}

/// The scalar-network loss `½(∏w − 1)²` with its exact Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarNetOracle {
    pub depth: usize,
}

impl ScalarNetOracle {
    fn weights(&self, w: &[f64]) -> WeightVector {
        WeightVector::new(w.to_vec()).expect("oracle called with a valid weight vector")
    }
}

impl LossOracle for ScalarNetOracle {
    fn dimension(&self) -> usize {
        self.depth
    }

    fn value(&self, w: &[f64]) -> f64 {
        let r = w.iter().product::<f64>() - 1.0;
        0.5 * r * r
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let residual = w.iter().product::<f64>() - 1.0;
        scalar_net::leave_one_out_products(w).into_iter().map(|p| residual * p).collect()
    }

    fn hvp(&self, w: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let h = scalar_net::hessian(&self.weights(w));
        Some((h * DVector::from_column_slice(v)).as_slice().to_vec())
    }
}
