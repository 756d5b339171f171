//! Monte Carlo ensembles against the deterministic trajectory.
//!
//! Every path draws from its own stream `(master_seed, path_index)` and is
//! reduced in path order, so results do not depend on the execution mode.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{Tube, TubeOptions};
use crate::model::SystemModel;
use crate::numerics::inf_norm;
use crate::rng::RngStream;
use crate::solver::{self, SolverConfig, Trajectory};
use crate::stats;

/// Environment variable capping the worker count (0 or unset = automatic).
pub const THREADS_ENV: &str = "SLOWFAST_THREADS";

/// Largest tolerated share of failed paths.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Start of the exit and deviation window; `None` means `5 ε |ln h_min|`.
    #[serde(default)]
    pub burn_in_tau: Option<f64>,
    #[serde(default)]
    pub h_grid: Vec<f64>,
    #[serde(default)]
    pub sigma_list: Vec<f64>,
    #[serde(default)]
    pub epsilon_list: Vec<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_refresh")]
    pub tube_refresh: usize,
    #[serde(default)]
    pub execution: Execution,
    /// Keep every stochastic trajectory in the result.
    #[serde(default)]
    pub keep_paths: bool,
}

fn default_kappa() -> f64 {
    crate::manifold::DEFAULT_KAPPA
}

fn default_refresh() -> usize {
    10
}

impl EnsembleConfig {
    pub fn new(n_paths: usize, master_seed: u64) -> Self {
        Self {
            n_paths,
            master_seed,
            burn_in_tau: None,
            h_grid: Vec::new(),
            sigma_list: Vec::new(),
            epsilon_list: Vec::new(),
            kappa: default_kappa(),
            tube_refresh: default_refresh(),
            execution: Execution::default(),
            keep_paths: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.n_paths < 1 {
            errors.push(format!("n_paths must be >= 1, got {}", self.n_paths));
        }
        if let Some(b) = self.burn_in_tau {
            if !(b >= 0.0 && b.is_finite()) {
                errors.push(format!("burn_in_tau must be >= 0, got {b}"));
            }
        }
        if self.h_grid.iter().any(|h| !(*h >= 0.0)) {
            errors.push("h_grid entries must be >= 0".to_string());
        }
        if !(self.kappa > 0.0) {
            errors.push(format!("kappa must be > 0, got {}", self.kappa));
        }
        if self.tube_refresh == 0 {
            errors.push("tube_refresh must be >= 1".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    /// Burn-in actually applied for a given `ε` and noise level.
    pub fn burn_in(&self, epsilon: f64, sigma: f64) -> f64 {
        if let Some(b) = self.burn_in_tau {
            return b;
        }
        let h_min = self.h_grid.iter().copied().filter(|h| *h > 0.0).fold(f64::INFINITY, f64::min);
        let h_min = if h_min.is_finite() { h_min } else { sigma };
        if h_min > 0.0 {
            5.0 * epsilon * h_min.ln().abs()
        } else {
            0.0
        }
    }

    fn tube_options(&self, cfg: &SolverConfig) -> TubeOptions {
        TubeOptions { kappa: self.kappa, refresh: self.tube_refresh, newton: cfg.newton() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitPoint {
    pub h: f64,
    pub exits: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPath {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub deterministic_seconds: f64,
    /// Sum of per-path simulation times (CPU cost of the ensemble).
    pub paths_seconds: f64,
    pub ensemble_wall_seconds: f64,
    pub completed_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub completed: usize,
    pub failed: Vec<FailedPath>,
    pub burn_in_tau: f64,
    pub exit_fraction: Vec<ExitPoint>,
    /// Per completed path, in path order.
    pub sup_tube_distance: Vec<f64>,
    pub sup_fast_dev: Vec<f64>,
    pub sup_slow_dev: Vec<f64>,
    pub median_fast_dev: Option<f64>,
    pub median_slow_dev: Option<f64>,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub deterministic: Trajectory,
    /// Stochastic trajectories, only when `keep_paths` was set.
    pub paths: Vec<Trajectory>,
    pub stats: EnsembleStats,
}

#[derive(Debug, Clone)]
struct PathResult {
    index: usize,
    seconds: f64,
    outcome: std::result::Result<PathSummary, String>,
}

#[derive(Debug, Clone)]
struct PathSummary {
    sup_rho: Option<f64>,
    sup_fast: f64,
    sup_slow: f64,
    traj: Option<Trajectory>,
}

/// Sup-norm deviations from `det` over samples with `τ ≥ τ_0 + burn_in`.
///
/// Both trajectories must share the recording grid.
pub fn path_deviation(path: &Trajectory, det: &Trajectory, burn_in: f64) -> Result<(f64, f64)> {
    if path.len() != det.len() {
        return Err(Error::Dimension { what: "ensemble time grid", expected: det.len(), got: path.len() });
    }
    let t0 = det.times.first().copied().unwrap_or(0.0);
    let mut fast = 0.0f64;
    let mut slow = 0.0f64;
    for (p, d) in path.states.iter().zip(&det.states) {
        if (p.tau - d.tau).abs() > 1e-9 * d.tau.abs().max(1.0) {
            return Err(Error::param(format!("time grids differ at tau = {}", d.tau)));
        }
        if d.tau < t0 + burn_in {
            continue;
        }
        let dx: Vec<f64> = p.x_bar.iter().zip(&d.x_bar).map(|(a, b)| a - b).collect();
        let dz: Vec<f64> = p.z_c.iter().zip(&d.z_c).map(|(a, b)| a - b).collect();
        fast = fast.max(inf_norm(&dx));
        slow = slow.max(inf_norm(&dz));
    }
    Ok((fast, slow))
}

/// Per-path `(sup fast, sup slow)` deviations, in path order.
pub fn deviation_statistics(paths: &[Trajectory], det: &Trajectory, burn_in: f64) -> Result<Vec<(f64, f64)>> {
    paths.iter().map(|p| path_deviation(p, det, burn_in)).collect()
}

/// Largest tube distance of a path after burn-in, measured against the tube
/// centred on the path's own slow coordinates.
pub fn path_sup_distance(model: &SystemModel, path: &Trajectory, burn_in: f64, opts: TubeOptions) -> Result<f64> {
    let tube = Tube::along(model, path, 1.0, opts)?;
    let t0 = path.times.first().copied().unwrap_or(0.0);
    let rho = tube.distances(path)?;
    Ok(path.times.iter().zip(rho).filter(|(t, _)| **t >= t0 + burn_in).map(|(_, r)| r).fold(0.0, f64::max))
}

/// Fraction of completed paths whose sup distance reaches each depth.
pub fn exit_fractions(sup_rho: &[f64], h_grid: &[f64]) -> Vec<ExitPoint> {
    let n = sup_rho.len();
    h_grid
        .iter()
        .map(|&h| {
            let exits = sup_rho.iter().filter(|r| **r >= h).count();
            let fraction = if n == 0 { 0.0 } else { exits as f64 / n as f64 };
            ExitPoint { h, exits, fraction }
        })
        .collect()
}

/// Exit fractions of a set of trajectories over the depths in `h_grid`.
pub fn exit_statistics(
    model: &SystemModel,
    paths: &[Trajectory],
    h_grid: &[f64],
    burn_in: f64,
    opts: TubeOptions,
) -> Result<Vec<ExitPoint>> {
    let sups = paths.iter().map(|p| path_sup_distance(model, p, burn_in, opts)).collect::<Result<Vec<_>>>()?;
    Ok(exit_fractions(&sups, h_grid))
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    model: &SystemModel,
    init: &crate::model::SlowFastState,
    horizon: f64,
    solver_cfg: &SolverConfig,
    cfg: &EnsembleConfig,
    det: &Trajectory,
    burn_in: f64,
    index: usize,
) -> PathResult {
    let start = Instant::now();
    let mut rng = RngStream::new(cfg.master_seed, index as u64);
    let sim = solver::simulate(model, init, horizon, solver_cfg, Some(&mut rng));
    let seconds = start.elapsed().as_secs_f64();
    let outcome = sim.and_then(|traj| {
        let (sup_fast, sup_slow) = path_deviation(&traj, det, burn_in)?;
        let sup_rho = if cfg.h_grid.is_empty() {
            None
        } else {
            Some(path_sup_distance(model, &traj, burn_in, cfg.tube_options(solver_cfg))?)
        };
        Ok(PathSummary { sup_rho, sup_fast, sup_slow, traj: cfg.keep_paths.then_some(traj) })
    });
    PathResult { index, seconds, outcome: outcome.map_err(|e| e.to_string()) }
}

fn worker_count() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0)
}

#[cfg(feature = "parallel")]
fn map_paths<F>(n: usize, execution: Execution, f: F) -> Vec<PathResult>
where
    F: Fn(usize) -> PathResult + Send + Sync,
{
    use rayon::prelude::*;
    match execution {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => {
            let threads = worker_count();
            let run = || (0..n).into_par_iter().map(&f).collect::<Vec<_>>();
            if threads == 0 {
                run()
            } else {
                match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                    Ok(pool) => pool.install(run),
                    Err(_) => run(),
                }
            }
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_paths<F>(n: usize, _execution: Execution, f: F) -> Vec<PathResult>
where
    F: Fn(usize) -> PathResult,
{
    let _ = worker_count();
    (0..n).map(f).collect()
}

/// One deterministic run plus `cfg.n_paths` stochastic runs from `init`.
pub fn run_ensemble(
    model: &SystemModel,
    init: &crate::model::SlowFastState,
    horizon: f64,
    solver_cfg: &SolverConfig,
    cfg: &EnsembleConfig,
) -> Result<EnsembleRun> {
    cfg.validate()?;
    let start = Instant::now();
    let det = solver::simulate(model, init, horizon, solver_cfg, None)?;
    let det_seconds = start.elapsed().as_secs_f64();
    let burn_in = cfg.burn_in(model.epsilon(), model.sigma);

    let wall = Instant::now();
    let results =
        map_paths(cfg.n_paths, cfg.execution, |i| run_path(model, init, horizon, solver_cfg, cfg, &det, burn_in, i));
    let wall_seconds = wall.elapsed().as_secs_f64();

    let mut failed = Vec::new();
    let mut sup_rho = Vec::new();
    let mut sup_fast = Vec::new();
    let mut sup_slow = Vec::new();
    let mut paths = Vec::new();
    let mut paths_seconds = 0.0;
    for r in results {
        paths_seconds += r.seconds;
        match r.outcome {
            Ok(s) => {
                if let Some(rho) = s.sup_rho {
                    sup_rho.push(rho);
                }
                sup_fast.push(s.sup_fast);
                sup_slow.push(s.sup_slow);
                paths.extend(s.traj);
            }
            Err(error) => failed.push(FailedPath { index: r.index, error }),
        }
    }
    if failed.len() as f64 > MAX_FAILURE_SHARE * cfg.n_paths as f64 {
        return Err(Error::TooManyFailures { failed: failed.len(), total: cfg.n_paths });
    }
    let completed = sup_fast.len();
    let stats = EnsembleStats {
        n_paths: cfg.n_paths,
        completed,
        failed,
        burn_in_tau: burn_in,
        exit_fraction: exit_fractions(&sup_rho, &cfg.h_grid),
        sup_tube_distance: sup_rho,
        median_fast_dev: stats::median(&sup_fast),
        median_slow_dev: stats::median(&sup_slow),
        sup_fast_dev: sup_fast,
        sup_slow_dev: sup_slow,
        timings: Timings {
            deterministic_seconds: det_seconds,
            paths_seconds,
            ensemble_wall_seconds: wall_seconds,
            completed_paths: completed,
        },
    };
    Ok(EnsembleRun { deterministic: det, paths, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: Option<f64>,
    /// 95% confidence half-width of the exponent.
    pub half_width: Option<f64>,
    pub degenerate: bool,
    pub points: Vec<(f64, f64)>,
    #[serde(default)]
    pub reason: Option<String>,
}

/// Log-log least squares of `values` against `params`.
pub fn fit_exponent(params: &[f64], values: &[f64]) -> ExponentFit {
    let points: Vec<(f64, f64)> = params.iter().copied().zip(values.iter().copied()).collect();
    let degenerate = |reason: &str| ExponentFit {
        exponent: None,
        half_width: None,
        degenerate: true,
        points: points.clone(),
        reason: Some(reason.to_string()),
    };
    if points.iter().any(|(p, v)| !(*p > 0.0) || !(*v > 0.0) || !v.is_finite()) {
        return degenerate("non-positive sweep value or median deviation");
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(p, v)| (p.ln(), v.ln())).collect();
    match stats::linear_regression(&logs) {
        Some(r) => ExponentFit {
            exponent: Some(r.slope),
            half_width: Some(stats::t_quantile_975(r.n.saturating_sub(2)) * r.slope_se),
            degenerate: false,
            points,
            reason: None,
        },
        None => degenerate("fewer than two distinct sweep values"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingEntry {
    pub sigma: f64,
    pub epsilon: f64,
    pub median_fast_dev: Option<f64>,
    pub median_slow_dev: Option<f64>,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub sigma_sweep: Vec<ScalingEntry>,
    pub epsilon_sweep: Vec<ScalingEntry>,
    pub p_sigma_fast: ExponentFit,
    pub p_sigma_slow: ExponentFit,
    pub p_eps_slow: ExponentFit,
}

fn check_sweep(name: &str, values: &[f64], errors: &mut Vec<String>) {
    if values.len() < 3 {
        errors.push(format!("{name} needs at least 3 values, got {}", values.len()));
    }
    let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    if pos.len() == values.len() && !values.is_empty() {
        let (lo, hi) = pos.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        if hi / lo < 10.0 * (1.0 - 1e-9) {
            errors.push(format!("{name} must span at least one decade"));
        }
    }
}

/// Deviation medians across a σ sweep (at the model's ε) and an ε sweep
/// (at the model's σ), with log-log exponent fits.
///
/// The step is rescaled with ε so that `dt/ε` stays fixed. The initial
/// state is re-completed for every swept model from `guess`.
pub fn scaling_study(
    model: &SystemModel,
    guess: &solver::InitialGuess,
    horizon: f64,
    solver_cfg: &SolverConfig,
    cfg: &EnsembleConfig,
) -> Result<ScalingReport> {
    let mut errors = Vec::new();
    check_sweep("sigma_list", &cfg.sigma_list, &mut errors);
    check_sweep("epsilon_list", &cfg.epsilon_list, &mut errors);
    if cfg.sigma_list.iter().chain(&cfg.epsilon_list).any(|v| !(*v >= 0.0)) {
        errors.push("sweep values must be >= 0".to_string());
    }
    if cfg.epsilon_list.iter().any(|e| !(*e > 0.0)) {
        errors.push("epsilon_list values must be > 0".to_string());
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    let mut sweep_cfg = cfg.clone();
    sweep_cfg.h_grid.clear();
    sweep_cfg.keep_paths = false;
    let ratio = solver_cfg.dt / model.epsilon();

    let entry = |m: &SystemModel| -> Result<ScalingEntry> {
        let scfg = SolverConfig { dt: ratio * m.epsilon(), ..*solver_cfg };
        let init = solver::find_consistent_init(m, guess, None, scfg.newton())?;
        let run = run_ensemble(m, &init, horizon, &scfg, &sweep_cfg)?;
        Ok(ScalingEntry {
            sigma: m.sigma,
            epsilon: m.epsilon(),
            median_fast_dev: run.stats.median_fast_dev,
            median_slow_dev: run.stats.median_slow_dev,
            completed: run.stats.completed,
            failed: run.stats.failed.len(),
        })
    };
    let sigma_sweep = cfg.sigma_list.iter().map(|&s| entry(&model.with_sigma(s)?)).collect::<Result<Vec<_>>>()?;
    let epsilon_sweep = cfg.epsilon_list.iter().map(|&e| entry(&model.with_epsilon(e)?)).collect::<Result<Vec<_>>>()?;
    let med = |v: &[ScalingEntry], fast: bool| -> Vec<f64> {
        v.iter().map(|e| if fast { e.median_fast_dev } else { e.median_slow_dev }.unwrap_or(f64::NAN)).collect()
    };
    Ok(ScalingReport {
        p_sigma_fast: fit_exponent(&cfg.sigma_list, &med(&sigma_sweep, true)),
        p_sigma_slow: fit_exponent(&cfg.sigma_list, &med(&sigma_sweep, false)),
        p_eps_slow: fit_exponent(&cfg.epsilon_list, &med(&epsilon_sweep, false)),
        sigma_sweep,
        epsilon_sweep,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub n_paths: usize,
    pub deterministic_seconds: f64,
    pub mean_path_seconds: f64,
    pub ensemble_seconds: f64,
    pub ensemble_wall_seconds: f64,
    /// One stochastic path over one deterministic run.
    pub path_over_deterministic: f64,
    /// Summed path cost over one deterministic run.
    pub ensemble_over_deterministic: f64,
}

pub fn speedup_report(timings: &Timings, n_paths: usize) -> SpeedupReport {
    let completed = timings.completed_paths.max(1);
    let mean_path = timings.paths_seconds / completed as f64;
    let det = timings.deterministic_seconds.max(f64::MIN_POSITIVE);
    SpeedupReport {
        n_paths,
        deterministic_seconds: timings.deterministic_seconds,
        mean_path_seconds: mean_path,
        ensemble_seconds: timings.paths_seconds,
        ensemble_wall_seconds: timings.ensemble_wall_seconds,
        path_over_deterministic: mean_path / det,
        ensemble_over_deterministic: timings.paths_seconds / det,
    }
}
