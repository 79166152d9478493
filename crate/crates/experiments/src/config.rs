//! Run configuration: a TOML file merged with command-line overrides, then
//! resolved into a fully populated [`ExperimentConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Trajectory,
    Region,
    Heatmap,
    Bifurcation,
    Regression,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Trajectory => "trajectory",
            Experiment::Region => "region",
            Experiment::Heatmap => "heatmap",
            Experiment::Bifurcation => "bifurcation",
            Experiment::Regression => "regression",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fixed step size or the regression-only `"auto"` rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eta {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl Eta {
    pub const AUTO: Eta = Eta::Keyword(AutoKeyword::Auto);

    pub fn value(self) -> Option<f64> {
        match self {
            Eta::Value(v) => Some(v),
            Eta::Keyword(_) => None,
        }
    }
}

impl FromStr for Eta {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Eta::AUTO);
        }
        s.parse::<f64>()
            .map(Eta::Value)
            .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Gd,
    Gpgd,
}

/// Closed interval sampled at `count` evenly spaced points: `[lo, hi, count]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis(pub f64, pub f64, pub usize);

impl Axis {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn count(&self) -> usize {
        self.2
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.2;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.1
                } else {
                    self.0 + (self.1 - self.0) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    fn validate(&self, field: &str) -> Result<(), CliError> {
        if !(self.0.is_finite() && self.1.is_finite()) || self.0 >= self.1 {
            return Err(CliError::config(field, "needs finite lo < hi"));
        }
        if self.2 < 2 {
            return Err(CliError::config(field, "count must be at least 2"));
        }
        Ok(())
    }
}

/// Sweep over the symmetric-pair family, parameterized by initial GFS
/// sharpness and product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub phi: Axis,
    pub pi: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Weights(Vec<f64>),
    Point { phi0: f64, pi0: f64 },
    Grid(GridAxes),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BifurcationFile {
    pub burn_in: Option<usize>,
    pub tail: Option<usize>,
    pub max_period: Option<usize>,
    pub points: Option<usize>,
    pub stride: Option<usize>,
    pub min_phi: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionFile {
    pub dim: Option<usize>,
    pub samples: Option<usize>,
    pub feature_mean: Option<f64>,
    pub feature_variance: Option<f64>,
    pub label_scale: Option<f64>,
    pub init_scale: Option<f64>,
    pub loss_stop: Option<f64>,
    pub eta_factor: Option<f64>,
    pub flattest_iters: Option<usize>,
}

/// The on-disk format. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    pub depth: Option<usize>,
    pub eta: Option<Eta>,
    pub map: Option<MapKind>,
    pub init: Option<Vec<f64>>,
    pub phi0: Option<f64>,
    pub pi0: Option<f64>,
    pub grid: Option<GridAxes>,
    pub steps: Option<usize>,
    pub loss_threshold: Option<f64>,
    pub divergence_bound: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub bifurcation: Option<BifurcationFile>,
    pub regression: Option<RegressionFile>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = e
                .span()
                .and_then(|s| text.get(s))
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "config".into());
            CliError::config(&field, msg)
        })
    }
}

/// Command-line overrides; `Some` wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub eta: Option<Eta>,
    pub depth: Option<usize>,
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationSettings {
    pub burn_in: usize,
    pub tail: usize,
    pub max_period: usize,
    /// Evenly spaced periodic-set samples along the eligible trajectory.
    pub points: Option<usize>,
    /// Every `stride`-th eligible point, refined where periods change.
    pub stride: Option<usize>,
    pub min_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionSettings {
    pub dim: usize,
    pub samples: usize,
    pub feature_mean: f64,
    pub feature_variance: f64,
    pub label_scale: f64,
    pub init_scale: f64,
    pub loss_stop: f64,
    pub eta_factor: f64,
    pub flattest_iters: usize,
}

/// Fully resolved and validated configuration.
///
/// `out` and `workers` do not affect results and are excluded from the hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub depth: usize,
    pub eta: Eta,
    pub map: MapKind,
    pub init: Option<Init>,
    pub steps: usize,
    pub loss_threshold: f64,
    pub divergence_bound: f64,
    pub seed: u64,
    pub bifurcation: Option<BifurcationSettings>,
    pub regression: Option<RegressionSettings>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

pub const DEFAULT_GRID_POINTS: usize = 64;
pub const DEFAULT_BIFURCATION_POINTS: usize = 200;

fn finite_positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(field, format!("must be finite and positive, got {v}")))
    }
}

impl ExperimentConfig {
    /// Merges `file` and `overrides` for `experiment` and validates the result.
    pub fn resolve(experiment: Experiment, file: ConfigFile, overrides: Overrides) -> Result<Self, CliError> {
        if let Some(e) = file.experiment {
            if e != experiment {
                return Err(CliError::config(
                    "experiment",
                    format!("config is for `{e}` but `{experiment}` was requested"),
                ));
            }
        }
        let d = Defaults::of(experiment);
        let depth = overrides.depth.or(file.depth).unwrap_or(d.depth);
        let eta = overrides.eta.or(file.eta).unwrap_or(d.eta);
        let steps = overrides.steps.or(file.steps).unwrap_or(d.steps);
        let seed = overrides.seed.or(file.seed).unwrap_or(0);
        let out = overrides.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
        let workers = overrides.workers.or(file.workers).unwrap_or(1);
        let loss_threshold = file.loss_threshold.unwrap_or(d.loss_threshold);
        let divergence_bound = file.divergence_bound.unwrap_or(1e8);

        if !(2..=eos_core::scalar_net::MAX_DEPTH).contains(&depth) {
            return Err(CliError::config("depth", format!("must lie in 2..=16, got {depth}")));
        }
        match eta {
            Eta::Value(v) => {
                finite_positive("eta", v)?;
            }
            Eta::Keyword(_) if experiment != Experiment::Regression => {
                return Err(CliError::config("eta", "\"auto\" is only valid for regression"));
            }
            Eta::Keyword(_) => {}
        }
        if steps == 0 {
            return Err(CliError::config("steps", "must be at least 1"));
        }
        if workers == 0 {
            return Err(CliError::config("workers", "must be at least 1"));
        }
        if !(loss_threshold.is_finite() && loss_threshold >= 0.0) {
            return Err(CliError::config("loss_threshold", "must be finite and nonnegative"));
        }
        if !(divergence_bound.is_finite() && divergence_bound > 1.0) {
            return Err(CliError::config("divergence_bound", "must be finite and greater than 1"));
        }

        let point = match (file.phi0, file.pi0) {
            (None, None) => None,
            (Some(phi0), Some(pi0)) => Some(Init::Point { phi0, pi0 }),
            (Some(_), None) => return Err(CliError::config("pi0", "phi0 needs a matching pi0")),
            (None, Some(_)) => return Err(CliError::config("phi0", "pi0 needs a matching phi0")),
        };
        let given: Vec<Init> = [file.init.map(Init::Weights), point, file.grid.map(Init::Grid)]
            .into_iter()
            .flatten()
            .collect();
        if given.len() > 1 {
            return Err(CliError::config("init", "give exactly one of init, phi0/pi0, or grid"));
        }
        let init = given.into_iter().next().or(d.init);
        let init = match experiment {
            Experiment::Regression => {
                if init.is_some() {
                    return Err(CliError::config("init", "regression draws its own initialization"));
                }
                None
            }
            Experiment::Region | Experiment::Heatmap => match init {
                Some(Init::Grid(g)) => {
                    g.phi.validate("grid.phi")?;
                    g.pi.validate("grid.pi")?;
                    check_family(depth, g.phi.lo(), "grid.phi")?;
                    finite_positive("grid.pi", g.pi.lo())?;
                    Some(Init::Grid(g))
                }
                _ => return Err(CliError::config("grid", format!("{experiment} needs a grid"))),
            },
            Experiment::Trajectory | Experiment::Bifurcation => match init {
                Some(Init::Weights(w)) => {
                    if w.len() != depth {
                        return Err(CliError::config(
                            "init",
                            format!("has {} entries but depth is {depth}", w.len()),
                        ));
                    }
                    if w.iter().any(|v| !v.is_finite()) {
                        return Err(CliError::config("init", "entries must be finite"));
                    }
                    Some(Init::Weights(w))
                }
                Some(Init::Point { phi0, pi0 }) => {
                    check_family(depth, phi0, "phi0")?;
                    finite_positive("pi0", pi0)?;
                    Some(Init::Point { phi0, pi0 })
                }
                _ => return Err(CliError::config("init", format!("{experiment} needs init or phi0/pi0"))),
            },
        };

        if experiment != Experiment::Bifurcation && file.bifurcation.is_some() {
            return Err(CliError::config("bifurcation", "section only applies to bifurcation"));
        }
        if experiment != Experiment::Regression && file.regression.is_some() {
            return Err(CliError::config("regression", "section only applies to regression"));
        }
        let bifurcation = (experiment == Experiment::Bifurcation)
            .then(|| resolve_bifurcation(file.bifurcation.unwrap_or_default(), &eta))
            .transpose()?;
        let regression = (experiment == Experiment::Regression)
            .then(|| resolve_regression(file.regression.unwrap_or_default()))
            .transpose()?;

        Ok(Self {
            experiment,
            depth,
            eta,
            map: file.map.unwrap_or(MapKind::Gd),
            init,
            steps,
            loss_threshold,
            divergence_bound,
            seed,
            bifurcation,
            regression,
            out,
            workers,
        })
    }

    /// Step size; only `None` for regression with `eta = "auto"`.
    pub fn eta_value(&self) -> Option<f64> {
        self.eta.value()
    }

    /// Hex SHA-256 of the canonical TOML rendering of the result-affecting
    /// fields.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First line of every CSV this run writes.
    pub fn metadata_line(&self) -> String {
        format!("# eos {} config_sha256={}", self.experiment, self.hash())
    }
}

fn check_family(depth: usize, phi: f64, field: &str) -> Result<(), CliError> {
    if !depth.is_multiple_of(2) {
        return Err(CliError::config("depth", "the (phi0, pi0) family needs an even depth"));
    }
    if !(phi.is_finite() && phi >= depth as f64) {
        return Err(CliError::config(field, format!("must be at least the depth {depth}, got {phi}")));
    }
    Ok(())
}

fn resolve_bifurcation(f: BifurcationFile, eta: &Eta) -> Result<BifurcationSettings, CliError> {
    use eos_core::bifurcation::{DEFAULT_BURN_IN, DEFAULT_MAX_PERIOD, DEFAULT_TAIL};
    let points = match (f.points, f.stride) {
        (Some(_), Some(_)) => {
            return Err(CliError::config("bifurcation.stride", "give points or stride, not both"))
        }
        (None, None) => Some(DEFAULT_BIFURCATION_POINTS),
        (p, _) => p,
    };
    if points == Some(0) || f.stride == Some(0) {
        return Err(CliError::config("bifurcation.points", "must be at least 1"));
    }
    let s = BifurcationSettings {
        burn_in: f.burn_in.unwrap_or(DEFAULT_BURN_IN),
        tail: f.tail.unwrap_or(DEFAULT_TAIL),
        max_period: f.max_period.unwrap_or(DEFAULT_MAX_PERIOD),
        points,
        stride: f.stride,
        min_phi: f.min_phi.unwrap_or(1.05 * 2.0 / eta.value().unwrap_or(1.0)),
    };
    if s.max_period == 0 {
        return Err(CliError::config("bifurcation.max_period", "must be at least 1"));
    }
    if s.tail <= s.max_period {
        return Err(CliError::config("bifurcation.tail", "must exceed max_period"));
    }
    if s.burn_in < s.tail {
        return Err(CliError::config("bifurcation.burn_in", "must be at least tail"));
    }
    finite_positive("bifurcation.min_phi", s.min_phi)?;
    Ok(s)
}

fn resolve_regression(f: RegressionFile) -> Result<RegressionSettings, CliError> {
    let base = eos_core::diag_regression::SyntheticConfig::desk();
    let s = RegressionSettings {
        dim: f.dim.unwrap_or(base.dim),
        samples: f.samples.unwrap_or(base.samples),
        feature_mean: f.feature_mean.unwrap_or(base.feature_mean),
        feature_variance: f.feature_variance.unwrap_or(base.feature_variance),
        label_scale: f.label_scale.unwrap_or(base.label_scale),
        init_scale: f.init_scale.unwrap_or(base.init_scale),
        loss_stop: f.loss_stop.unwrap_or(0.01),
        eta_factor: f.eta_factor.unwrap_or(0.99),
        flattest_iters: f.flattest_iters.unwrap_or(2000),
    };
    if s.samples == 0 || s.dim < s.samples {
        return Err(CliError::config("regression.samples", "need 1 <= samples <= dim"));
    }
    if !s.feature_mean.is_finite() {
        return Err(CliError::config("regression.feature_mean", "must be finite"));
    }
    finite_positive("regression.feature_variance", s.feature_variance)?;
    finite_positive("regression.label_scale", s.label_scale)?;
    finite_positive("regression.init_scale", s.init_scale)?;
    finite_positive("regression.loss_stop", s.loss_stop)?;
    finite_positive("regression.eta_factor", s.eta_factor)?;
    if s.flattest_iters == 0 {
        return Err(CliError::config("regression.flattest_iters", "must be at least 1"));
    }
    Ok(s)
}

struct Defaults {
    depth: usize,
    eta: Eta,
    steps: usize,
    loss_threshold: f64,
    init: Option<Init>,
}

impl Defaults {
    fn of(experiment: Experiment) -> Self {
        let grid = GridAxes {
            phi: Axis(4.5, 20.0, DEFAULT_GRID_POINTS),
            pi: Axis(0.2, 2.5, DEFAULT_GRID_POINTS),
        };
        match experiment {
            Experiment::Trajectory => Self {
                depth: 4,
                eta: Eta::Value(0.2),
                steps: 10_000,
                loss_threshold: 0.0,
                init: Some(Init::Point { phi0: 12.0, pi0: 1.5 }),
            },
            Experiment::Region | Experiment::Heatmap => Self {
                depth: 4,
                eta: Eta::Value(0.2),
                steps: 10_000,
                loss_threshold: 1e-10,
                init: Some(Init::Grid(grid)),
            },
            Experiment::Bifurcation => Self {
                depth: 4,
                eta: Eta::Value(0.01),
                steps: 60_000,
                loss_threshold: 1e-12,
                init: Some(Init::Weights(vec![12.5, 12.5, 0.05, 0.05])),
            },
            Experiment::Regression => Self {
                depth: 2,
                eta: Eta::AUTO,
                steps: 400_000,
                loss_threshold: 0.0,
                init: None,
            },
        }
    }
}
