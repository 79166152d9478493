//! Gradient descent (GD) and GFS-preserving gradient descent (GPGD).
//!
//! A GD step on a scalar network splits into an update of the product and an
//! update of the pairwise balances. Both are exposed here, together with a
//! trajectory runner and a decomposed state ([`ProductBalanceState`]) that
//! evolves `(signature, π − 1)` directly so losses far below `f64::EPSILON²`
//! stay resolvable.

use crate::error::{Error, Result};
use crate::gf_exact::{self, BalanceSignature, Sign};
use crate::scalar_net::{self, SymmetricValues, WeightVector};

/// Default bound on `|π|` beyond which a run counts as diverged.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e8;
/// Default loss below which a run counts as converged.
pub const DEFAULT_LOSS_THRESHOLD: f64 = 1e-10;

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what: "step size", value: eta })
    }
}

/// One GD step `w − η∇L(w)`.
///
/// Fails only when the step overflows to a non-finite value.
pub fn gd_step(w: &WeightVector, eta: f64) -> Result<WeightVector> {
    check_eta(eta)?;
    let g = scalar_net::gradient(w);
    let next = w
        .as_slice()
        .iter()
        .zip(&g)
        .map(|(wi, gi)| wi - eta * gi)
        .collect();
    WeightVector::new(next)
}

/// Product after one GD step from `w(x)`, via the symmetric-function expansion
/// `x + Σ_m η^m (1−x)^m x^{m−1} s̃_m(x)`.
pub fn predicted_product_step(sig: &BalanceSignature, x: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let s = gf_exact::stilde(sig, x)?;
    let mut acc = x;
    let mut coeff = 1.0; // η^m (1−x)^m x^{m−1}, built up multiplicatively
    let r = 1.0 - x;
    for m in 1..=sig.depth() {
        coeff *= eta * r * if m == 1 { 1.0 } else { x };
        acc += coeff * s.get(m);
    }
    Ok(acc)
}

/// Same map as [`predicted_product_step`] in deviation coordinates: given
/// `e = x − 1` returns `q(x) − 1`.
///
/// Evaluated as `e·(1 − Σ_m η^m (−e x)^{m−1} s̃_m(x))`, which keeps full relative
/// accuracy in `e` as `x → 1`.
pub fn product_deviation_step(sig: &BalanceSignature, deviation: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let x = 1.0 + deviation;
    let s = SymmetricValues::from_squares(&sig.squares_at(x)?);
    Ok(deviation * deviation_factor(&s, deviation, x, eta))
}

fn deviation_factor(s: &SymmetricValues, deviation: f64, x: f64, eta: f64) -> f64 {
    let mut sum = 0.0;
    let mut coeff = eta; // η^m (−e x)^{m−1}
    for m in 1..=s.depth() {
        sum += coeff * s.get(m);
        coeff *= -eta * deviation * x;
    }
    1.0 - sum
}

/// Pairwise balances `w_i² − w_j²` for `i < j`, row-major.
pub fn balances(w: &WeightVector) -> Vec<f64> {
    let sq = w.squares();
    let n = sq.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(sq[i] - sq[j]);
        }
    }
    out
}

/// Balances after one GD step, `b_ij (1 − η²(π−1)² π²/(w_i² w_j²))`, with
/// `π/(w_i w_j)` replaced by the leave-two-out product.
pub fn predicted_balance_step(w: &WeightVector, eta: f64) -> Vec<f64> {
    let ws = w.as_slice();
    let n = ws.len();
    let residual = w.product() - 1.0;
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let l2o = scalar_net::leave_two_out_product(ws, i, j);
            let b = ws[i] * ws[i] - ws[j] * ws[j];
            let c = eta * residual * l2o;
            out.push(b * (1.0 - c * c));
        }
    }
    out
}

/// One GPGD step: the weight on the gradient-flow trajectory of `w` whose
/// product equals the product after one GD step.
pub fn gpgd_step(w: &WeightVector, eta: f64) -> Result<WeightVector> {
    let p = w.product();
    if !(p > 0.0) {
        return Err(Error::UnsupportedSign(p));
    }
    let next_product = gd_step(w, eta)?.product();
    if !(next_product > 0.0) {
        return Err(Error::UnsupportedSign(next_product));
    }
    gf_exact::weight_from_product(&BalanceSignature::of(w), next_product)
}

/// Lower bound on `φ(w^{t+1})` after one GD step from a point of the invariant
/// set: `φ / (1 + 8 (φ/(2/η) · max(1, π))² L)`.
pub fn gfs_sharpness_lower_bound(phi: f64, eta: f64, product: f64, loss: f64) -> f64 {
    let ratio = phi * eta / 2.0 * product.max(1.0);
    phi / (1.0 + 8.0 * ratio * ratio * loss)
}

/// Gradient-flow invariant state `(signature, π − 1)`.
///
/// Both the balances and the product deviation are updated multiplicatively,
/// so relative accuracy is preserved as the loss goes to zero. The squared
/// weights are reconstructed from the signature when needed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBalanceState {
    signature: BalanceSignature,
    deviation: f64,
}

impl ProductBalanceState {
    pub fn new(signature: BalanceSignature, deviation: f64) -> Result<Self> {
        if signature.product_sign() != Sign::Positive {
            return Err(Error::UnsupportedSign(1.0 + deviation));
        }
        if !(1.0 + deviation > 0.0) {
            return Err(Error::UnsupportedSign(1.0 + deviation));
        }
        Ok(Self { signature, deviation })
    }

    pub fn from_weights(w: &WeightVector) -> Result<Self> {
        Self::new(BalanceSignature::of(w), w.product() - 1.0)
    }

    pub fn signature(&self) -> &BalanceSignature {
        &self.signature
    }

    /// `π − 1`.
    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    pub fn product(&self) -> f64 {
        1.0 + self.deviation
    }

    pub fn loss(&self) -> f64 {
        0.5 * self.deviation * self.deviation
    }

    pub fn gfs_sharpness(&self) -> Result<f64> {
        self.signature.gfs_sharpness()
    }

    pub fn weights(&self) -> Result<WeightVector> {
        gf_exact::weight_from_product(&self.signature, self.product())
    }

    /// GPGD: the product moves, the signature stays.
    pub fn gpgd_step(&self, eta: f64) -> Result<Self> {
        let deviation = product_deviation_step(&self.signature, self.deviation, eta)?;
        Self::new(self.signature.clone(), deviation)
    }

    /// GD expressed through the product and balance updates.
    pub fn gd_step(&self, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        let e = self.deviation;
        let x = 1.0 + e;
        let squares = self.signature.squares_at(x)?;
        let s = SymmetricValues::from_squares(&squares);
        let deviation = e * deviation_factor(&s, e, x, eta);
        let depth = squares.len();
        let smallest = squares[depth - 1];
        let c = eta * e * x;
        // gaps to the old smallest coordinate after the step
        let gaps: Vec<f64> = self
            .signature
            .offsets()
            .iter()
            .zip(&squares)
            .map(|(b, sq)| b * (1.0 - c * c / (sq * smallest)))
            .collect();
        let order = self.signature.order().to_vec();
        let mut signs = self.signature.signs().to_vec();
        for (k, sq) in squares.iter().enumerate() {
            let factor = 1.0 - c / sq;
            let idx = order[k];
            if factor == 0.0 {
                signs[idx] = Sign::Zero;
            } else if factor < 0.0 {
                signs[idx] = signs[idx].flip();
            }
        }
        let signature = BalanceSignature::recanonicalize(&gaps, &order, signs);
        Self::new(signature, deviation)
    }
}

/// Which update a run iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMap {
    Gd,
    Gpgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub max_steps: usize,
    pub loss_threshold: f64,
    pub divergence_bound: f64,
    pub log_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_steps: 10_000,
            loss_threshold: DEFAULT_LOSS_THRESHOLD,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Running,
    Converged,
    Diverged(String),
    MaxSteps,
}

/// Scalars logged at every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: usize,
    pub loss: f64,
    pub sharpness: f64,
    /// `NaN` when the product is not positive.
    pub gfs_sharpness: f64,
    pub product: f64,
}

impl Record {
    pub fn of(t: usize, w: &WeightVector) -> Self {
        Self {
            t,
            loss: scalar_net::loss(w),
            sharpness: scalar_net::sharpness(w),
            gfs_sharpness: gf_exact::gfs_sharpness(w).unwrap_or(f64::NAN),
            product: w.product(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub map: UpdateMap,
    pub eta: f64,
    pub records: Vec<Record>,
    /// Full weights every `log_every` steps, plus the first and last iterate.
    pub snapshots: Vec<(usize, WeightVector)>,
    pub status: Status,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("a trajectory holds at least its initial record")
    }

    pub fn weights_at(&self, t: usize) -> Option<&WeightVector> {
        self.snapshots
            .binary_search_by_key(&t, |(s, _)| *s)
            .ok()
            .map(|i| &self.snapshots[i].1)
    }
}

/// Iterates GD or GPGD from `w0` until the loss threshold, divergence, or the
/// step budget.
pub fn run(map: UpdateMap, w0: &WeightVector, eta: f64, config: &RunConfig) -> Result<Trajectory> {
    check_eta(eta)?;
    if config.max_steps == 0 || config.log_every == 0 {
        return Err(Error::InvalidArgument("max_steps and log_every must be >= 1".into()));
    }
    if !(config.loss_threshold >= 0.0) || !(config.divergence_bound > 1.0) {
        return Err(Error::InvalidArgument(
            "loss_threshold must be >= 0 and divergence_bound > 1".into(),
        ));
    }
    let mut traj = Trajectory {
        map,
        eta,
        records: vec![Record::of(0, w0)],
        snapshots: vec![(0, w0.clone())],
        status: Status::Running,
    };
    if traj.records[0].loss < config.loss_threshold {
        traj.status = Status::Converged;
        return Ok(traj);
    }
    let mut w = w0.clone();
    for t in 1..=config.max_steps {
        let next = match map {
            UpdateMap::Gd => gd_step(&w, eta),
            UpdateMap::Gpgd => gpgd_step(&w, eta),
        };
        w = match next {
            Ok(next) => next,
            Err(e) => {
                traj.status = Status::Diverged(e.to_string());
                break;
            }
        };
        let record = Record::of(t, &w);
        traj.records.push(record);
        if t % config.log_every == 0 {
            traj.snapshots.push((t, w.clone()));
        }
        if !(record.product.abs() <= config.divergence_bound) {
            traj.status = Status::Diverged(format!("|product| exceeded {}", config.divergence_bound));
            break;
        }
        if record.loss < config.loss_threshold {
            traj.status = Status::Converged;
            break;
        }
    }
    if traj.status == Status::Running {
        traj.status = Status::MaxSteps;
    }
    let last_t = traj.last().t;
    if traj.snapshots.last().map(|s| s.0) != Some(last_t) {
        traj.snapshots.push((last_t, w));
    }
    Ok(traj)
}
