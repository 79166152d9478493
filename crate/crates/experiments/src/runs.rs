//! The five experiments: typed results, CSV tables and plots.

use eos_core::bifurcation::{track_point, BifurcationConfig, Period, TrackedSample};
use eos_core::diag_regression::{flattest_sharpness, gd_run, synthetic_problem, RegressionRun, SyntheticConfig};
use eos_core::dynamics::{gd_step, run, RunConfig, Status, Trajectory, UpdateMap};
use eos_core::gf_exact::gfs_sharpness;
use eos_core::scalar_net::{loss, sharpness, WeightVector};
use eos_core::stability_set::in_stability_set;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Eta, ExperimentConfig, GridAxes, Init, MapKind};
use crate::error::CliError;
use crate::init::init_from_phi_pi;
use crate::svg::{ramp, Chart, Grid, Series, Style};
use crate::table::{num, Table};

/// Relative slack when testing GFS sharpness for monotone decrease.
pub const MONOTONE_SLACK: f64 = 1e-10;

fn eta_of(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    cfg.eta_value()
        .ok_or_else(|| CliError::config("eta", "a numeric step size is required"))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn single_init(cfg: &ExperimentConfig) -> Result<WeightVector, CliError> {
    match &cfg.init {
        Some(Init::Weights(w)) => {
            WeightVector::new(w.clone()).map_err(|e| CliError::config("init", e.to_string()))
        }
        Some(Init::Point { phi0, pi0 }) => {
            init_from_phi_pi(cfg.depth, *phi0, *pi0).map_err(|e| CliError::config("phi0", e.to_string()))
        }
        _ => Err(CliError::config("init", "expected explicit weights or phi0/pi0")),
    }
}

fn grid_of(cfg: &ExperimentConfig) -> Result<GridAxes, CliError> {
    match &cfg.init {
        Some(Init::Grid(g)) => Ok(*g),
        _ => Err(CliError::config("grid", "expected a grid")),
    }
}

fn run_config(cfg: &ExperimentConfig) -> RunConfig {
    RunConfig {
        max_steps: cfg.steps,
        loss_threshold: cfg.loss_threshold,
        divergence_bound: cfg.divergence_bound,
        log_every: 1,
    }
}

// ---------------------------------------------------------------- trajectory

pub fn trajectory(cfg: &ExperimentConfig) -> Result<Trajectory, CliError> {
    let eta = eta_of(cfg)?;
    let w0 = single_init(cfg)?;
    let map = match cfg.map {
        MapKind::Gd => UpdateMap::Gd,
        MapKind::Gpgd => UpdateMap::Gpgd,
    };
    Ok(run(map, &w0, eta, &run_config(cfg))?)
}

pub fn trajectory_table(traj: &Trajectory) -> Table {
    let mut t = Table::new(&["t", "loss", "sharpness", "gfs_sharpness", "product"]);
    for r in &traj.records {
        t.push(vec![r.t.to_string(), num(r.loss), num(r.sharpness), num(r.gfs_sharpness), num(r.product)]);
    }
    t
}

fn trajectory_plots(traj: &Trajectory) -> Vec<(String, String)> {
    let pts = |f: fn(&eos_core::dynamics::Record) -> f64| {
        traj.records.iter().map(|r| (r.t as f64, f(r))).collect::<Vec<_>>()
    };
    let sharp = Chart {
        title: format!("Sharpness, eta = {}", traj.eta),
        x_label: "step".into(),
        y_label: "sharpness".into(),
        series: vec![
            Series::new("sharpness", "#1f77b4", Style::Line, pts(|r| r.sharpness)),
            Series::new("GFS sharpness", "#d62728", Style::Line, pts(|r| r.gfs_sharpness)),
        ],
        hlines: vec![(2.0 / traj.eta, "2/eta".into())],
        ..Chart::default()
    };
    let loss = Chart {
        title: "Loss".into(),
        x_label: "step".into(),
        y_label: "loss (log10)".into(),
        log_y: true,
        series: vec![Series::new("loss", "black", Style::Line, pts(|r| r.loss))],
        ..Chart::default()
    };
    vec![("trajectory.svg".into(), sharp.render()), ("trajectory_loss.svg".into(), loss.render())]
}

// -------------------------------------------------------------- grid sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Monotone,
    NonMonotone,
    Diverged,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Monotone => "monotone",
            Verdict::NonMonotone => "non-monotone",
            Verdict::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Converged,
    Diverged,
    MaxSteps,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Converged => "converged",
            CellStatus::Diverged => "diverged",
            CellStatus::MaxSteps => "max-steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub status: CellStatus,
    /// `false` once the GFS sharpness rose or became undefined.
    pub monotone: bool,
    pub last: WeightVector,
}

/// Plain GD from `w0` with optional GFS-sharpness monotonicity tracking.
///
/// A non-positive product counts as divergence when tracking, since the GFS
/// sharpness is then undefined.
pub fn run_cell(w0: &WeightVector, eta: f64, cfg: &ExperimentConfig, track_phi: bool) -> CellRun {
    let mut w = w0.clone();
    let mut phi = if track_phi { gfs_sharpness(&w).ok() } else { None };
    let mut monotone = !track_phi || phi.is_some();
    if track_phi && phi.is_none() {
        return CellRun { status: CellStatus::Diverged, monotone, last: w };
    }
    for _ in 0..cfg.steps {
        if loss(&w) < cfg.loss_threshold {
            return CellRun { status: CellStatus::Converged, monotone, last: w };
        }
        let next = match gd_step(&w, eta) {
            Ok(n) if loss(&n) <= cfg.divergence_bound => n,
            _ => return CellRun { status: CellStatus::Diverged, monotone, last: w },
        };
        w = next;
        if track_phi {
            match gfs_sharpness(&w) {
                Ok(p) => {
                    let prev = phi.expect("tracked");
                    if p > prev + MONOTONE_SLACK * prev.abs() {
                        monotone = false;
                    }
                    phi = Some(p);
                }
                Err(_) => {
                    return CellRun { status: CellStatus::Diverged, monotone: false, last: w };
                }
            }
        }
    }
    let status = if loss(&w) < cfg.loss_threshold { CellStatus::Converged } else { CellStatus::MaxSteps };
    CellRun { status, monotone, last: w }
}

fn grid_cells(g: &GridAxes) -> Vec<(f64, f64)> {
    let pis = g.pi.values();
    g.phi.values().into_iter().flat_map(|phi| pis.iter().map(move |&pi| (phi, pi))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCell {
    pub phi0: f64,
    pub pi0: f64,
    pub verdict: Verdict,
    pub member: bool,
}

/// Monotonicity verdict and certified membership for each grid cell.
pub fn region(cfg: &ExperimentConfig) -> Result<Vec<RegionCell>, CliError> {
    let eta = eta_of(cfg)?;
    let cells = grid_cells(&grid_of(cfg)?);
    let one = |&(phi0, pi0): &(f64, f64)| -> RegionCell {
        let Ok(w0) = init_from_phi_pi(cfg.depth, phi0, pi0) else {
            return RegionCell { phi0, pi0, verdict: Verdict::Diverged, member: false };
        };
        let member = in_stability_set(&w0, eta).is_ok_and(|r| r.member);
        let r = run_cell(&w0, eta, cfg, true);
        let verdict = match (r.status, r.monotone) {
            (CellStatus::Diverged, _) => Verdict::Diverged,
            (_, true) => Verdict::Monotone,
            (_, false) => Verdict::NonMonotone,
        };
        RegionCell { phi0, pi0, verdict, member }
    };
    Ok(pool(cfg.workers)?.install(|| cells.par_iter().map(one).collect()))
}

pub fn region_table(cells: &[RegionCell]) -> Table {
    let mut t = Table::new(&["phi0", "pi0", "verdict", "member"]);
    for c in cells {
        t.push(vec![num(c.phi0), num(c.pi0), c.verdict.as_str().into(), c.member.to_string()]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub phi0: f64,
    pub pi0: f64,
    /// `NaN` for diverged runs.
    pub final_sharpness: f64,
    pub status: CellStatus,
}

/// Sharpness at the end of GD for each grid cell.
pub fn heatmap(cfg: &ExperimentConfig) -> Result<Vec<HeatCell>, CliError> {
    let eta = eta_of(cfg)?;
    let cells = grid_cells(&grid_of(cfg)?);
    let one = |&(phi0, pi0): &(f64, f64)| -> HeatCell {
        let Ok(w0) = init_from_phi_pi(cfg.depth, phi0, pi0) else {
            return HeatCell { phi0, pi0, final_sharpness: f64::NAN, status: CellStatus::Diverged };
        };
        let r = run_cell(&w0, eta, cfg, false);
        let final_sharpness = match r.status {
            CellStatus::Diverged => f64::NAN,
            _ => sharpness(&r.last),
        };
        HeatCell { phi0, pi0, final_sharpness, status: r.status }
    };
    Ok(pool(cfg.workers)?.install(|| cells.par_iter().map(one).collect()))
}

pub fn heatmap_table(cells: &[HeatCell]) -> Table {
    let mut t = Table::new(&["phi0", "pi0", "final_sharpness", "status"]);
    for c in cells {
        t.push(vec![num(c.phi0), num(c.pi0), num(c.final_sharpness), c.status.as_str().into()]);
    }
    t
}

fn grid_plot<T>(
    g: &GridAxes,
    title: String,
    cells: &[T],
    color: impl Fn(&T) -> String,
    legend: Vec<(String, &'static str)>,
) -> String {
    let (nphi, npi) = (g.phi.count(), g.pi.count());
    let rows = (0..npi)
        .map(|j| (0..nphi).map(|i| color(&cells[i * npi + j])).collect())
        .collect();
    Grid {
        title,
        x_label: "initial GFS sharpness".into(),
        y_label: "initial product".into(),
        xs: g.phi.values(),
        ys: g.pi.values(),
        cells: rows,
        legend,
    }
    .render()
}

const MEMBER: &str = "#2ca02c";
const MONOTONE: &str = "#98df8a";
const NON_MONOTONE: &str = "#ff9896";
const DIVERGED: &str = "#555555";

fn region_plot(g: &GridAxes, eta: f64, cells: &[RegionCell]) -> String {
    grid_plot(
        g,
        format!("GFS sharpness monotonicity, eta = {eta}"),
        cells,
        |c| {
            match (c.verdict, c.member) {
                (_, true) => MEMBER,
                (Verdict::Monotone, false) => MONOTONE,
                (Verdict::NonMonotone, false) => NON_MONOTONE,
                (Verdict::Diverged, false) => DIVERGED,
            }
            .to_string()
        },
        vec![
            ("certified member".into(), MEMBER),
            ("monotone".into(), MONOTONE),
            ("non-monotone".into(), NON_MONOTONE),
            ("diverged".into(), DIVERGED),
        ],
    )
}

fn heatmap_plot(g: &GridAxes, eta: f64, cells: &[HeatCell]) -> String {
    let top = 2.0 / eta;
    grid_plot(
        g,
        format!("Final sharpness / (2/eta), eta = {eta}"),
        cells,
        |c| ramp(c.final_sharpness / top),
        vec![("0".into(), "#440154"), (">= 1".into(), "#fde725"), ("diverged".into(), "#bbbbbb")],
    )
}

// -------------------------------------------------------------- bifurcation

#[derive(Debug, Clone)]
pub struct BifurcationRun {
    pub trajectory: Trajectory,
    /// Record indices with GFS sharpness at least `min_phi`.
    pub eligible: Vec<usize>,
    /// `(position in eligible, sample)`, ordered by position.
    pub samples: Vec<(usize, TrackedSample)>,
}

impl BifurcationRun {
    /// Sample evaluated nearest to `eligible[pos]` (earlier one on ties).
    pub fn nearest_sample(&self, pos: usize) -> Option<&TrackedSample> {
        let i = self.samples.partition_point(|(p, _)| *p < pos);
        let after = self.samples.get(i);
        let before = i.checked_sub(1).map(|k| &self.samples[k]);
        match (before, after) {
            (Some(b), Some(a)) => Some(if pos - b.0 <= a.0 - pos { &b.1 } else { &a.1 }),
            (Some(b), None) => Some(&b.1),
            (None, Some(a)) => Some(&a.1),
            (None, None) => None,
        }
    }
}

fn core_bifurcation_config(cfg: &ExperimentConfig) -> BifurcationConfig {
    let b = cfg.bifurcation.as_ref().expect("resolved bifurcation settings");
    BifurcationConfig {
        burn_in: b.burn_in,
        tail: b.tail,
        max_period: b.max_period,
        divergence_bound: cfg.divergence_bound,
        ..BifurcationConfig::default()
    }
}

/// GD trajectory plus periodic sets of the GPGD product map at sampled points.
///
/// With `points`, samples are evenly spaced over the eligible points. With
/// `stride`, every `stride`-th eligible point is sampled and gaps whose ends
/// disagree on the period are filled in completely.
pub fn bifurcation(cfg: &ExperimentConfig) -> Result<BifurcationRun, CliError> {
    let eta = eta_of(cfg)?;
    let settings = cfg.bifurcation.as_ref().ok_or_else(|| CliError::config("bifurcation", "missing"))?;
    let w0 = single_init(cfg)?;
    let traj = run(UpdateMap::Gd, &w0, eta, &run_config(cfg))?;
    let eligible: Vec<usize> = traj
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.gfs_sharpness >= settings.min_phi)
        .map(|(k, _)| k)
        .collect();
    let bc = core_bifurcation_config(cfg);
    let pool = pool(cfg.workers)?;
    let eval = |positions: &[usize]| -> Vec<(usize, TrackedSample)> {
        pool.install(|| {
            positions
                .par_iter()
                .map(|&p| {
                    let (t, w) = &traj.snapshots[eligible[p]];
                    (p, track_point(*t, w, eta, &bc))
                })
                .collect()
        })
    };
    let m = eligible.len();
    let mut samples = Vec::new();
    if m > 0 {
        if let Some(stride) = settings.stride {
            let mut picks: Vec<usize> = (0..m).step_by(stride).collect();
            if picks.last() != Some(&(m - 1)) {
                picks.push(m - 1);
            }
            samples = eval(&picks);
            let gaps: Vec<usize> = samples
                .windows(2)
                .filter(|w| w[0].1.period() != w[1].1.period())
                .flat_map(|w| w[0].0 + 1..w[1].0)
                .collect();
            samples.extend(eval(&gaps));
            samples.sort_by_key(|(p, _)| *p);
        } else {
            let n = settings.points.unwrap_or(1).min(m);
            let mut picks: Vec<usize> = if n == 1 {
                vec![0]
            } else {
                (0..n).map(|i| i * (m - 1) / (n - 1)).collect()
            };
            picks.dedup();
            samples = eval(&picks);
        }
    }
    Ok(BifurcationRun { trajectory: traj, eligible, samples })
}

fn period_label(s: Option<&TrackedSample>) -> String {
    match s.map(|s| &s.sample) {
        Some(Ok(b)) => match b.period {
            Period::Finite(p) => p.to_string(),
            Period::Chaotic => "chaotic".into(),
        },
        _ => "error".into(),
    }
}

pub fn bifurcation_table(b: &BifurcationRun) -> Table {
    let mut t = Table::new(&["phi", "product", "period", "source"]);
    for (pos, &k) in b.eligible.iter().enumerate() {
        let r = &b.trajectory.records[k];
        t.push(vec![num(r.gfs_sharpness), num(r.product), period_label(b.nearest_sample(pos)), "gd".into()]);
    }
    for (_, s) in &b.samples {
        if let Ok(set) = &s.sample {
            let label = period_label(Some(s));
            for &x in &set.periodic_products {
                t.push(vec![num(set.gfs_sharpness), num(x), label.clone(), "gpgd".into()]);
            }
        }
    }
    t
}

fn bifurcation_plot(b: &BifurcationRun) -> String {
    let gpgd = b
        .samples
        .iter()
        .filter_map(|(_, s)| s.sample.as_ref().ok())
        .flat_map(|set| set.periodic_products.iter().map(move |&x| (set.gfs_sharpness, x)))
        .collect();
    let gd = b
        .eligible
        .iter()
        .map(|&k| (b.trajectory.records[k].gfs_sharpness, b.trajectory.records[k].product))
        .collect();
    Chart {
        title: format!("Bifurcation diagram, eta = {}", b.trajectory.eta),
        x_label: "GFS sharpness".into(),
        y_label: "product".into(),
        series: vec![
            Series::new("GPGD periodic set", "#7f7f7f", Style::Dots, gpgd),
            Series::new("GD trajectory", "#d62728", Style::Dots, gd),
        ],
        ..Chart::default()
    }
    .render()
}

// --------------------------------------------------------------- regression

#[derive(Debug, Clone)]
pub struct RegressionResult {
    pub eta: f64,
    /// Flattest-minimum sharpness estimate when `eta = "auto"`.
    pub flattest: Option<f64>,
    pub run: RegressionRun,
}

/// GD on a seeded synthetic instance of the squared regression model.
pub fn regression(cfg: &ExperimentConfig) -> Result<RegressionResult, CliError> {
    let s = cfg.regression.as_ref().ok_or_else(|| CliError::config("regression", "missing"))?;
    let synthetic = SyntheticConfig {
        dim: s.dim,
        samples: s.samples,
        feature_mean: s.feature_mean,
        feature_variance: s.feature_variance,
        label_scale: s.label_scale,
        init_scale: s.init_scale,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let problem = synthetic_problem(&synthetic, &mut rng)?;
    let (eta, flattest) = match cfg.eta {
        Eta::Value(v) => (v, None),
        Eta::Keyword(_) => {
            let f = flattest_sharpness(&problem, s.flattest_iters, &mut rng)?;
            (s.eta_factor * 2.0 / f, Some(f))
        }
    };
    let run = gd_run(&problem, eta, s.loss_stop, cfg.steps)?;
    Ok(RegressionResult { eta, flattest, run })
}

pub fn regression_table(r: &RegressionResult) -> Table {
    let mut t = Table::new(&["t", "loss", "sharpness", "gfs_sharpness", "threshold"]);
    let threshold = num(2.0 / r.eta);
    for rec in &r.run.records {
        t.push(vec![
            rec.t.to_string(),
            num(rec.loss),
            num(rec.sharpness),
            num(rec.gfs_sharpness),
            threshold.clone(),
        ]);
    }
    t
}

fn regression_plot(r: &RegressionResult) -> String {
    let pts = |f: fn(&eos_core::diag_regression::RegressionRecord) -> f64| {
        r.run.records.iter().map(|x| (x.t as f64, f(x))).collect::<Vec<_>>()
    };
    Chart {
        title: format!("Regression, eta = {}", r.eta),
        x_label: "step".into(),
        y_label: "sharpness".into(),
        series: vec![
            Series::new("sharpness", "#1f77b4", Style::Line, pts(|x| x.sharpness)),
            Series::new("GFS sharpness", "#d62728", Style::Line, pts(|x| x.gfs_sharpness)),
        ],
        hlines: vec![(2.0 / r.eta, "2/eta".into())],
        ..Chart::default()
    }
    .render()
}

// ------------------------------------------------------------------ outputs

/// Output files of a run as `(file name, bytes)`, CSV first.
pub fn render(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    use crate::config::Experiment as E;
    let meta = cfg.metadata_line();
    let (table, plots): (Table, Vec<(String, String)>) = match cfg.experiment {
        E::Trajectory => {
            let traj = trajectory(cfg)?;
            if let Status::Diverged(why) = &traj.status {
                // the table up to the failure is still useful; keep it
                eprintln!("warning: run stopped early: {why}");
            }
            (trajectory_table(&traj), trajectory_plots(&traj))
        }
        E::Region => {
            let cells = region(cfg)?;
            let plot = region_plot(&grid_of(cfg)?, eta_of(cfg)?, &cells);
            (region_table(&cells), vec![("region.svg".into(), plot)])
        }
        E::Heatmap => {
            let cells = heatmap(cfg)?;
            let plot = heatmap_plot(&grid_of(cfg)?, eta_of(cfg)?, &cells);
            (heatmap_table(&cells), vec![("heatmap.svg".into(), plot)])
        }
        E::Bifurcation => {
            let b = bifurcation(cfg)?;
            (bifurcation_table(&b), vec![("bifurcation.svg".into(), bifurcation_plot(&b))])
        }
        E::Regression => {
            let r = regression(cfg)?;
            (regression_table(&r), vec![("regression.svg".into(), regression_plot(&r))])
        }
    };
    let mut files = vec![(format!("{}.csv", cfg.experiment), table.to_csv(&meta)?)];
    files.extend(plots.into_iter().map(|(name, svg)| (name, svg.into_bytes())));
    Ok(files)
}

/// Renders the run and writes its files under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let files = render(cfg)?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = cfg.out.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}
