//! The squared regression model `f_θ(x) = ⟨u₊² − u₋², x⟩` under mean squared
//! error.
//!
//! Parameters are stacked as `θ = (u₊, u₋) ∈ R^{2d}` and the effective linear
//! predictor is `β = u₊² − u₋²`. Gradient flow conserves `u₊,i·u₋,i`, which
//! pins its limit to the solution of a strictly convex program over
//! interpolating `β`. [`gfs_beta`] solves that program through its dual.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::flow_integrator::LossOracle;

/// Relative KKT tolerance met by every [`GfsBeta`].
pub const KKT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    w0: DVector<f64>,
}

impl RegressionProblem {
    /// `x` is `N×d` with `N ≤ d` and full row rank; `w0` has length `2d` and no
    /// zero entry.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, w0: DVector<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(Error::DepthMismatch(y.len(), n));
        }
        if w0.len() != 2 * d {
            return Err(Error::DepthMismatch(w0.len(), 2 * d));
        }
        if n == 0 || n > d {
            return Err(Error::InvalidArgument(format!("need 1 <= N <= d, got N={n}, d={d}")));
        }
        if x.iter().chain(y.iter()).chain(w0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression problem"));
        }
        if let Some(i) = w0.iter().position(|v| *v == 0.0) {
            return Err(Error::InvalidInitialization(format!("w0[{i}] is zero")));
        }
        let sv = x.singular_values();
        let top = sv.max();
        if sv.iter().any(|s| *s <= 1e-10 * top) {
            return Err(Error::InvalidArgument("features are not of full row rank".into()));
        }
        Ok(Self { x, y, w0 })
    }

    /// The same data with a different initialization.
    pub fn with_init(&self, w0: DVector<f64>) -> Result<Self> {
        if w0.len() != 2 * self.dim() {
            return Err(Error::DepthMismatch(w0.len(), 2 * self.dim()));
        }
        if w0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression problem"));
        }
        if let Some(i) = w0.iter().position(|v| *v == 0.0) {
            return Err(Error::InvalidInitialization(format!("w0[{i}] is zero")));
        }
        Ok(Self { x: self.x.clone(), y: self.y.clone(), w0 })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn init(&self) -> &DVector<f64> {
        &self.w0
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// `c_i = |u₊,0,i · u₋,0,i|`, conserved by gradient flow.
    pub fn conserved(&self) -> DVector<f64> {
        let d = self.dim();
        DVector::from_fn(d, |i, _| (self.w0[i] * self.w0[i + d]).abs())
    }

    /// `β = u₊² − u₋²`.
    pub fn beta_of(&self, theta: &[f64]) -> DVector<f64> {
        let d = self.dim();
        DVector::from_fn(d, |i, _| theta[i] * theta[i] - theta[i + d] * theta[i + d])
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let r = &self.x * self.beta_of(theta) - &self.y;
        r.norm_squared() / (2.0 * self.n_samples() as f64)
    }
}

/// MSE loss, gradient and Hessian at `θ`.
///
/// The Hessian is `(1/N)JᵀJ + (2/N)·diag(Xᵀr, −Xᵀr)` with `J = X[diag(2u₊), −diag(2u₋)]`
/// and residual `r = Xβ − y`.
pub fn model_loss_grad_hess(problem: &RegressionProblem, theta: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let d = problem.dim();
    if theta.len() != 2 * d {
        return Err(Error::DepthMismatch(theta.len(), 2 * d));
    }
    let n = problem.n_samples() as f64;
    let x = &problem.x;
    let r = x * problem.beta_of(theta) - &problem.y;
    let loss = r.norm_squared() / (2.0 * n);
    let xr = x.transpose() * &r;
    let grad = DVector::from_fn(2 * d, |k, _| {
        if k < d {
            2.0 * theta[k] * xr[k] / n
        } else {
            -2.0 * theta[k] * xr[k - d] / n
        }
    });
    let jac = DMatrix::from_fn(x.nrows(), 2 * d, |row, k| {
        if k < d {
            2.0 * theta[k] * x[(row, k)]
        } else {
            -2.0 * theta[k] * x[(row, k - d)]
        }
    });
    let mut hess = jac.transpose() * &jac / n;
    for k in 0..d {
        hess[(k, k)] += 2.0 * xr[k] / n;
        hess[(k + d, k + d)] -= 2.0 * xr[k] / n;
    }
    Ok((loss, grad, hess))
}

/// Largest eigenvalue of the loss Hessian at `θ`.
pub fn sharpness(problem: &RegressionProblem, theta: &[f64]) -> Result<f64> {
    Ok(sharpness_from(problem, theta, None)?.0)
}

/// Sharpness and top eigenvector by Lanczos on the factored Hessian
/// `JᵀJ/N + diag`, started from `start`.
fn sharpness_from(
    problem: &RegressionProblem,
    theta: &[f64],
    start: Option<&DVector<f64>>,
) -> Result<(f64, DVector<f64>)> {
    let d = problem.dim();
    if theta.len() != 2 * d {
        return Err(Error::DepthMismatch(theta.len(), 2 * d));
    }
    let n = problem.n_samples() as f64;
    let x = &problem.x;
    let xr = x.transpose() * (x * problem.beta_of(theta) - &problem.y);
    let scale = DVector::from_fn(2 * d, |k, _| if k < d { 2.0 * theta[k] } else { -2.0 * theta[k] });
    let diag = DVector::from_fn(2 * d, |k, _| if k < d { 2.0 * xr[k] / n } else { -2.0 * xr[k - d] / n });
    let matvec = |v: &DVector<f64>| {
        let sv = v.component_mul(&scale);
        let jv = x * (sv.rows(0, d) + sv.rows(d, d));
        let xt = x.transpose() * jv / n;
        let mut out = DVector::from_fn(2 * d, |k, _| scale[k] * xt[k % d]);
        out += diag.component_mul(v);
        out
    };
    crate::flow_integrator::lanczos_top(2 * d, matvec, start, 1e-12, 20 * d)
}

fn max_eigenvalue(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Solution of the gradient-flow program and its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct GfsBeta {
    pub beta: DVector<f64>,
    pub dual: DVector<f64>,
    /// Larger of the relative feasibility and stationarity residuals.
    pub kkt_residual: f64,
    pub iterations: usize,
}

struct DualMap {
    half_sqrt_k: DVector<f64>,
    offset: DVector<f64>,
}

impl DualMap {
    fn new(problem: &RegressionProblem) -> Self {
        let d = problem.dim();
        let w0 = &problem.w0;
        // √k_i / 2 = 2|u₊,0 u₋,0|
        let half_sqrt_k = DVector::from_fn(d, |i, _| 2.0 * (w0[i] * w0[i + d]).abs());
        let offset = DVector::from_fn(d, |i, _| {
            let b0 = w0[i] * w0[i] - w0[i + d] * w0[i + d];
            (b0 / half_sqrt_k[i]).asinh()
        });
        Self { half_sqrt_k, offset }
    }

    fn argument(&self, problem: &RegressionProblem, nu: &DVector<f64>) -> DVector<f64> {
        2.0 * problem.x.transpose() * nu + &self.offset
    }

    fn beta(&self, z: &DVector<f64>) -> DVector<f64> {
        z.zip_map(&self.half_sqrt_k, |z, h| h * z.sinh())
    }

    /// `Σ (√k/4)cosh(z) − νᵀy`, whose gradient in `ν` is `Xβ(ν) − y`.
    fn objective(&self, z: &DVector<f64>, nu: &DVector<f64>, y: &DVector<f64>) -> f64 {
        z.zip_fold(&self.half_sqrt_k, 0.0, |acc, z, h| acc + 0.5 * h * z.cosh()) - nu.dot(y)
    }

    /// `∇Q(β)_i = ½(asinh(2β_i/√k_i) − asinh(2β₀,i/√k_i))`.
    fn q_gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(beta.len(), |i, _| 0.5 * ((beta[i] / self.half_sqrt_k[i]).asinh() - self.offset[i]))
    }
}

fn kkt_residual(problem: &RegressionProblem, map: &DualMap, beta: &DVector<f64>, nu: &DVector<f64>) -> f64 {
    let feas = (&problem.x * beta - &problem.y).norm() / (1.0 + problem.y.norm());
    let grad = map.q_gradient(beta);
    let stat = (&grad - problem.x.transpose() * nu).norm() / (1.0 + grad.norm());
    feas.max(stat)
}

/// Maximum Newton iterations in [`gfs_beta`].
pub const MAX_NEWTON_ITERS: usize = 200;

/// The limit of gradient flow from `w0`, as `β`.
///
/// Damped Newton on the dual with Armijo backtracking. `β(ν)` has the
/// closed form `(√k_i/2)·sinh(2(Xᵀν)_i + asinh(2β₀,i/√k_i))`.
pub fn gfs_beta(problem: &RegressionProblem) -> Result<GfsBeta> {
    gfs_beta_from(problem, None)
}

/// [`gfs_beta`] with Newton started from the dual point `start`.
pub fn gfs_beta_from(problem: &RegressionProblem, start: Option<&DVector<f64>>) -> Result<GfsBeta> {
    let map = DualMap::new(problem);
    let x = &problem.x;
    let y = &problem.y;
    let mut nu = match start {
        Some(s) if s.len() == problem.n_samples() => s.clone(),
        _ => DVector::zeros(problem.n_samples()),
    };
    let mut z = map.argument(problem, &nu);
    let mut obj = map.objective(&z, &nu, y);
    for iter in 0..MAX_NEWTON_ITERS {
        let beta = map.beta(&z);
        let residual = kkt_residual(problem, &map, &beta, &nu);
        if residual < 1e-3 * KKT_TOLERANCE {
            return Ok(GfsBeta { beta, dual: nu, kkt_residual: residual, iterations: iter });
        }
        let grad = x * &beta - y;
        let weights = z.zip_map(&map.half_sqrt_k, |z, h| 2.0 * h * z.cosh());
        let hess = x * DMatrix::from_diagonal(&weights) * x.transpose();
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => hess
                .lu()
                .solve(&grad)
                .ok_or(Error::NotConverged { what: "regression dual Newton", best: residual })?,
        };
        let slope = -grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &nu - &step * t;
            let zt = map.argument(problem, &trial);
            let ot = map.objective(&zt, &trial, y);
            // near the optimum the objective decrease drops below rounding, so
            // a sufficient decrease of the constraint residual also counts
            let armijo = ot.is_finite() && ot <= obj + 1e-4 * t * slope;
            let residual_drop = ot.is_finite()
                && (x * map.beta(&zt) - y).norm() <= (1.0 - 1e-4 * t) * grad.norm();
            if armijo || residual_drop {
                nu = trial;
                z = zt;
                obj = ot;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // at machine precision the line search stalls; accept if KKT already holds
            if residual < KKT_TOLERANCE {
                return Ok(GfsBeta { beta, dual: nu, kkt_residual: residual, iterations: iter });
            }
            return Err(Error::NotConverged { what: "regression dual Newton", best: residual });
        }
    }
    let beta = map.beta(&z);
    let residual = kkt_residual(problem, &map, &beta, &nu);
    if residual < KKT_TOLERANCE {
        Ok(GfsBeta { beta, dual: nu, kkt_residual: residual, iterations: MAX_NEWTON_ITERS })
    } else {
        Err(Error::NotConverged { what: "regression dual Newton", best: residual })
    }
}

/// Nonnegative `θ = (u₊, u₋)` with `u₊² − u₋² = β` and `u₊u₋ = c` for the
/// conserved `c` of `problem`.
pub fn theta_from_beta(problem: &RegressionProblem, beta: &DVector<f64>) -> DVector<f64> {
    let d = problem.dim();
    let c = problem.conserved();
    let mut theta = DVector::zeros(2 * d);
    for i in 0..d {
        let b = beta[i];
        let root = (b * b + 4.0 * c[i] * c[i]).sqrt();
        // the larger square directly, the smaller one without cancellation
        let big = 0.5 * (b.abs() + root);
        let small = 2.0 * c[i] * c[i] / (b.abs() + root);
        let (plus, minus) = if b >= 0.0 { (big, small) } else { (small, big) };
        theta[i] = plus.sqrt();
        theta[i + d] = minus.sqrt();
    }
    theta
}

/// `λ_max((4/N)·X diag(s) Xᵀ)`: the sharpness of an interpolating point whose
/// squares sum to `s_i = u₊,i² + u₋,i²`.
fn interpolating_sharpness(x: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    let m = x * DMatrix::from_diagonal(s) * x.transpose() * (4.0 / n);
    max_eigenvalue(m)
}

/// GFS sharpness of the gradient-flow trajectory through `w`.
pub fn gfs_sharpness_regression(problem: &RegressionProblem, w: &[f64]) -> Result<f64> {
    Ok(gfs_with_beta(problem, w)?.0)
}

/// GFS sharpness and the solver certificate.
pub fn gfs_with_beta(problem: &RegressionProblem, w: &[f64]) -> Result<(f64, GfsBeta)> {
    gfs_with_beta_from(problem, w, None)
}

fn gfs_with_beta_from(problem: &RegressionProblem, w: &[f64], start: Option<&DVector<f64>>) -> Result<(f64, GfsBeta)> {
    let local = problem.with_init(DVector::from_column_slice(w))?;
    let sol = gfs_beta_from(&local, start)?;
    let c = local.conserved();
    let s = sol.beta.zip_map(&c, |b, c| (b * b + 4.0 * c * c).sqrt());
    Ok((interpolating_sharpness(&local.x, &s), sol))
}

/// Minimum-norm solution of `Xβ = y` and the projector onto `{Xβ = y}`.
struct AffineProjector {
    x: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    y: DVector<f64>,
}

impl AffineProjector {
    fn new(problem: &RegressionProblem) -> Result<Self> {
        let gram = &problem.x * problem.x.transpose();
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("singular feature Gram matrix".into()))?;
        Ok(Self { x: problem.x.clone(), gram_inv, y: problem.y.clone() })
    }

    fn project(&self, beta: &DVector<f64>) -> DVector<f64> {
        let r = &self.x * beta - &self.y;
        beta - self.x.transpose() * (&self.gram_inv * r)
    }

    fn project_direction(&self, g: &DVector<f64>) -> DVector<f64> {
        g - self.x.transpose() * (&self.gram_inv * (&self.x * g))
    }
}

fn lifted_sharpness(x: &DMatrix<f64>, beta: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = x.nrows() as f64;
    let m = x * DMatrix::from_diagonal(&beta.abs()) * x.transpose() * (4.0 / n);
    let eig = SymmetricEigen::new(m);
    let (idx, &top) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    (top, eig.eigenvectors.column(idx).into_owned())
}

/// Approximate sharpness of the flattest interpolating minimum.
///
/// Projected subgradient descent on `β ↦ λ_max((4/N)X diag|β| Xᵀ)` over
/// `{Xβ = y}`, which is the sharpness of the flattest `θ` realizing `β`. Runs
/// from the minimum-norm solution, a random feasible start and the
/// gradient-flow solution, returning the best value seen.
pub fn flattest_sharpness<R: Rng + ?Sized>(problem: &RegressionProblem, iters: usize, rng: &mut R) -> Result<f64> {
    let proj = AffineProjector::new(problem)?;
    let x = &problem.x;
    let d = problem.dim();
    let n = problem.n_samples() as f64;
    let min_norm = proj.project(&DVector::zeros(d));
    let scale = min_norm.amax().max(1e-12);
    let noise = DVector::from_fn(d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut *rng);
        z * scale
    });
    let mut starts = vec![min_norm.clone(), proj.project(&(&min_norm + noise))];
    if let Ok(sol) = gfs_beta(problem) {
        starts.push(sol.beta);
    }
    let mut best = f64::INFINITY;
    for start in starts {
        let mut beta = start;
        let (first, _) = lifted_sharpness(x, &beta);
        best = best.min(first);
        let step0 = 0.1 * beta.norm().max(scale);
        for k in 0..iters {
            let (value, v) = lifted_sharpness(x, &beta);
            best = best.min(value);
            let xv = x.transpose() * &v;
            let g = DVector::from_fn(d, |i, _| 4.0 / n * beta[i].signum() * xv[i] * xv[i]);
            let g = proj.project_direction(&g);
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            beta = proj.project(&(&beta - &g * (step0 / (gn * ((k + 1) as f64).sqrt()))));
        }
        best = best.min(lifted_sharpness(x, &beta).0);
    }
    Ok(best)
}

/// Settings for [`synthetic_problem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub samples: usize,
    /// Every feature is drawn from `Normal(mean, variance)`.
    pub feature_mean: f64,
    pub feature_variance: f64,
    /// Labels are drawn from `Normal(0, label_scale²)`.
    pub label_scale: f64,
    /// Initial entries are `init_scale·U(0.5, 1.5)`.
    pub init_scale: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            samples: 50,
            feature_mean: 5.0,
            feature_variance: 5.0,
            label_scale: 10.0,
            init_scale: 0.3,
        }
    }
}

impl SyntheticConfig {
    /// `d = 20`, `N = 10`.
    pub fn desk() -> Self {
        Self { dim: 20, samples: 10, ..Self::default() }
    }
}

/// Random instance with Gaussian features and labels.
pub fn synthetic_problem<R: Rng + ?Sized>(config: &SyntheticConfig, rng: &mut R) -> Result<RegressionProblem> {
    let feature = Normal::new(config.feature_mean, config.feature_variance.sqrt())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let label = Normal::new(0.0, config.label_scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let x = DMatrix::from_fn(config.samples, config.dim, |_, _| feature.sample(&mut *rng));
    let y = DVector::from_fn(config.samples, |_, _| label.sample(&mut *rng));
    let w0 = DVector::from_fn(2 * config.dim, |_, _| config.init_scale * rng.random_range(0.5..1.5));
    RegressionProblem::new(x, y, w0)
}

/// The regression loss as a [`LossOracle`] over `θ`.
impl LossOracle for RegressionProblem {
    fn dimension(&self) -> usize {
        2 * self.dim()
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.loss(w)
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let n = self.n_samples() as f64;
        let xr = self.x.transpose() * (&self.x * self.beta_of(w) - &self.y);
        (0..2 * d)
            .map(|k| if k < d { 2.0 * w[k] * xr[k] / n } else { -2.0 * w[k] * xr[k - d] / n })
            .collect()
    }

    fn hvp(&self, w: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let (_, _, h) = model_loss_grad_hess(self, w).ok()?;
        Some((h * DVector::from_column_slice(v)).as_slice().to_vec())
    }
}

/// One logged step of GD on the regression model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionRecord {
    pub t: usize,
    pub loss: f64,
    pub sharpness: f64,
    pub gfs_sharpness: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRun {
    pub eta: f64,
    pub records: Vec<RegressionRecord>,
    pub terminal: DVector<f64>,
    /// Whether the loss reached the stopping threshold.
    pub converged: bool,
}

/// GD on `θ` from the problem's initialization until the loss falls below
/// `loss_stop` or `max_steps` pass.
pub fn gd_run(problem: &RegressionProblem, eta: f64, loss_stop: f64, max_steps: usize) -> Result<RegressionRun> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain { what: "step size", value: eta });
    }
    let mut theta = problem.w0.clone();
    let mut records = Vec::new();
    let mut converged = false;
    let mut dual: Option<DVector<f64>> = None;
    let mut top: Option<DVector<f64>> = None;
    for t in 0..=max_steps {
        let loss = problem.loss(theta.as_slice());
        if !loss.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: t, value: loss });
        }
        let (sharp, vector) = sharpness_from(problem, theta.as_slice(), top.as_ref())?;
        top = Some(vector);
        // consecutive iterates have nearby duals
        let (gfs, sol) = gfs_with_beta_from(problem, theta.as_slice(), dual.as_ref())?;
        records.push(RegressionRecord {
            t,
            loss,
            sharpness: sharp,
            gfs_sharpness: gfs,
            kkt_residual: sol.kkt_residual,
        });
        dual = Some(sol.dual);
        if loss < loss_stop {
            converged = true;
            break;
        }
        if t == max_steps {
            break;
        }
        theta -= DVector::from_vec(LossOracle::gradient(problem, theta.as_slice())) * eta;
        if theta.iter().any(|v| *v == 0.0) {
            return Err(Error::Diverged { step: t + 1, value: 0.0 });
        }
    }
    Ok(RegressionRun { eta, records, terminal: theta, converged })
}
