//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::ensemble::{self, EnsembleConfig, Execution};
use crate::error::{Error, Result};
use crate::io::{self, Provenance};
use crate::manifold::{self, Tube, TubeOptions};
use crate::plot;
use crate::rng::RngStream;
use crate::scenario::{self, load_scenario, Scenario};
use crate::solver;
use crate::wind::{self, OuParams, TargetDistribution, WeibullParams, WindSourceSpec};

#[derive(Debug, Parser)]
#[command(name = "slowfast", version, about = "Stochastic slow/fast power-system simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Weibull wind-speed series from an OU latent process.
    WindGen(WindGenArgs),
    /// Integrate a scenario once and write its trajectory.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo ensemble and report tube exits and deviations.
    Ensemble(EnsembleArgs),
    /// Evaluate the slow manifold, its correction and the tube cross-section.
    Manifold(ManifoldArgs),
    /// Fit deviation exponents over noise and time-scale sweeps.
    VerifyScaling(ScalingArgs),
    /// List, print or write the shipped scenarios.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Scenario JSON file, or `fixture:<name>`.
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Debug, Args)]
pub struct WindGenArgs {
    /// Take the wind source from this scenario instead of the flags below.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Index of the scenario wind source.
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Weibull shape.
    #[arg(long, default_value_t = 1.51)]
    pub k: f64,
    /// Weibull scale (m/s).
    #[arg(long, default_value_t = 3.36)]
    pub lambda: f64,
    /// OU decay rate (1/s).
    #[arg(long, default_value_t = 0.2575 / 3600.0)]
    pub alpha: f64,
    /// OU diffusion coefficient.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Sampling step (s).
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    /// Series length (s).
    #[arg(long, default_value_t = 86400.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV with columns t, eta, speed.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Stochastic,
    Deterministic,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[arg(long, value_enum, default_value_t = Mode::Stochastic)]
    pub mode: Mode,
    /// Master seed (defaults to the scenario's).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the scenario noise level.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Override the horizon (τ units).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Override the step (τ units).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-variable plot data (deterministic, stochastic, tube) here.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
    /// Tube depth for the plot data (defaults to the scenario's
    /// `plot_h_over_sigma` times its declared σ, before any --sigma override).
    #[arg(long)]
    pub plot_h: Option<f64>,
    /// Run summary JSON with provenance.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// Number of stochastic paths.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tube depths, comma separated (absolute units; see --h-in-sigma).
    #[arg(long, value_delimiter = ',')]
    pub h_grid: Option<Vec<f64>>,
    /// Read --h-grid as multiples of σ.
    #[arg(long)]
    pub h_in_sigma: bool,
    /// Start of the measurement window (τ units).
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Run paths one after another.
    #[arg(long)]
    pub sequential: bool,
    /// Stats JSON with provenance.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ManifoldArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// Evaluate every n-th sample of the deterministic trajectory.
    #[arg(long, default_value_t = 100)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[command(subcommand)]
    pub action: FixtureAction,
}

#[derive(Debug, Subcommand)]
pub enum FixtureAction {
    /// Print the shipped scenario names.
    List,
    /// Print one scenario as JSON.
    Show { name: String },
    /// Write every scenario into a directory.
    Write { dir: PathBuf },
}

/// Parse `argv`, run, and return the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::WindGen(a) => wind_gen(a),
        Command::Simulate(a) => simulate(a),
        Command::Ensemble(a) => run_ensemble(a),
        Command::Manifold(a) => manifold_report(a),
        Command::VerifyScaling(a) => scaling(a),
        Command::Fixtures(a) => fixtures(a),
    }
}

fn wind_gen(a: WindGenArgs) -> Result<()> {
    let spec = match &a.scenario {
        Some(p) => {
            let sc = load_scenario(p)?;
            sc.wind
                .get(a.source)
                .cloned()
                .ok_or_else(|| Error::param(format!("scenario has no wind source {}", a.source)))?
        }
        None => WindSourceSpec {
            name: "wind".into(),
            ou: OuParams::new(a.alpha, a.beta)?,
            target: TargetDistribution::Weibull(WeibullParams::new(a.k, a.lambda)?),
            seed_offset: 0,
        },
    };
    let mut rng = RngStream::new(a.seed, spec.seed_offset);
    let series = wind::generate_wind_series(&spec, a.horizon, a.dt, &mut rng)?;
    let table = io::Table {
        columns: vec!["t".into(), "eta".into(), "speed".into()],
        rows: series.times().zip(&series.eta_values).zip(&series.values).map(|((t, e), v)| vec![t, *e, *v]).collect(),
    };
    io::write_table(&table, &a.out)?;
    let m = wind::estimate_moments(&series.values)?;
    println!("{}", json!({ "samples": series.len(), "mean": m.mean, "variance": m.variance }));
    Ok(())
}

fn with_overrides(mut sc: Scenario, sigma: Option<f64>, horizon: Option<f64>, dt: Option<f64>) -> Result<Scenario> {
    if let Some(s) = sigma {
        sc.sigma = s;
    }
    if let Some(h) = horizon {
        sc.horizon = h;
    }
    if let Some(d) = dt {
        sc.solver.dt = d;
    }
    sc.validate()?;
    Ok(sc)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let declared = load_scenario(&a.scenario.scenario)?;
    let default_h = declared.analysis.plot_h_over_sigma * declared.sigma;
    let sc = with_overrides(declared, a.sigma, a.horizon, a.dt)?;
    let model = sc.build_model()?;
    let seed = a.seed.unwrap_or(sc.analysis.master_seed);
    let init = sc.initial_state(&model, None)?;
    let stochastic = a.mode == Mode::Stochastic;
    let mut rng = RngStream::new(seed, 0);
    let traj = solver::simulate(&model, &init, sc.horizon, &sc.solver, stochastic.then_some(&mut rng))?;
    io::save_trajectory(&traj, model.names(), model.epsilon(), &a.out)?;
    let mut outputs = vec![a.out.display().to_string()];
    if let Some(dir) = &a.plot_dir {
        let det =
            if stochastic { solver::simulate(&model, &init, sc.horizon, &sc.solver, None)? } else { traj.clone() };
        let opts = TubeOptions { kappa: sc.analysis.kappa, newton: sc.solver.newton(), ..TubeOptions::default() };
        let h = a.plot_h.unwrap_or(default_h);
        let tube = Tube::along(&model, &det, h, opts)?;
        for p in plot::emit_plot_data(&det, &traj, &tube, h, model.names(), dir)? {
            outputs.push(p.display().to_string());
        }
    }
    if let Some(path) = &a.summary {
        let mut prov =
            Provenance::new("simulate", &sc, stochastic.then_some(seed), json!({ "mode": format!("{:?}", a.mode) }))?;
        prov.outputs = outputs;
        let summary = json!({
            "samples": traj.len(),
            "events": traj.event_log,
            "final_tau": traj.last().map(|s| s.tau),
        });
        io::save_stats(prov, &summary, path)?;
    }
    Ok(())
}

fn ensemble_config(sc: &Scenario, paths: Option<usize>, seed: Option<u64>) -> EnsembleConfig {
    let mut cfg = sc.ensemble_config();
    if let Some(n) = paths {
        cfg.n_paths = n;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg
}

#[derive(Serialize)]
struct EnsembleOutput<'a> {
    stats: &'a ensemble::EnsembleStats,
    speedup: ensemble::SpeedupReport,
}

fn run_ensemble(a: EnsembleArgs) -> Result<()> {
    let sc = load_scenario(&a.scenario.scenario)?;
    let model = sc.build_model()?;
    let mut cfg = ensemble_config(&sc, a.paths, a.seed);
    if let Some(h) = a.h_grid {
        cfg.h_grid = if a.h_in_sigma { h.iter().map(|k| k * model.sigma).collect() } else { h };
    }
    if a.burn_in.is_some() {
        cfg.burn_in_tau = a.burn_in;
    }
    if a.sequential {
        cfg.execution = Execution::Sequential;
    }
    cfg.validate()?;
    let init = sc.initial_state(&model, None)?;
    let run = ensemble::run_ensemble(&model, &init, sc.horizon, &sc.solver, &cfg)?;
    let prov = Provenance::new("ensemble", &sc, Some(cfg.master_seed), serde_json::to_value(&cfg)?)?;
    let out = EnsembleOutput { stats: &run.stats, speedup: ensemble::speedup_report(&run.stats.timings, cfg.n_paths) };
    io::save_stats(prov, &out, &a.out)
}

fn manifold_report(a: ManifoldArgs) -> Result<()> {
    if a.stride == 0 {
        return Err(Error::Validation(vec!["stride must be >= 1".into()]));
    }
    let sc = load_scenario(&a.scenario.scenario)?;
    let model = sc.build_model()?;
    let init = sc.initial_state(&model, None)?;
    let opts = sc.solver.newton();
    let det = solver::simulate(&model, &init, sc.horizon, &sc.solver, None)?;
    let mut samples = Vec::new();
    let mut guess = init.x_bar.clone();
    for s in det.states.iter().step_by(a.stride) {
        let p = manifold::solve_slow_manifold(&model, &s.z_c, s, &guess, opts)?;
        guess = p.x_star.clone();
        let center = manifold::invariant_manifold_correction(&model, &p)?;
        let l = manifold::solve_cross_section(&model, &p, &center, sc.analysis.kappa, opts)?;
        samples.push(json!({
            "tau": s.tau,
            "z_c": s.z_c,
            "z_d": s.z_d,
            "x_star": p.x_star,
            "l1_star": center,
            "stability": p.stability,
            "eigen_margin": p.eigen_margin,
            "cross_section_diag": (0..l.nrows()).map(|i| l[(i, i)]).collect::<Vec<_>>(),
            "distance": manifold::tube_distance(&s.x_bar, &center, &l)?,
        }));
    }
    let stable = samples.iter().all(|s| s["stability"] == json!(manifold::Stability::Stable));
    let prov = Provenance::new("manifold", &sc, None, json!({ "stride": a.stride }))?;
    io::save_stats(prov, &json!({ "all_stable": stable, "samples": samples }), &a.out)
}

fn scaling(a: ScalingArgs) -> Result<()> {
    let sc = load_scenario(&a.scenario.scenario)?;
    let model = sc.build_model()?;
    let mut cfg = ensemble_config(&sc, a.paths, a.seed);
    if let Some(s) = a.sigmas {
        cfg.sigma_list = s;
    }
    if let Some(e) = a.epsilons {
        cfg.epsilon_list = e;
    }
    cfg.validate()?;
    let horizon = a.horizon.unwrap_or(sc.horizon);
    let report = ensemble::scaling_study(&model, &sc.initial_guess(), horizon, &sc.solver, &cfg)?;
    let prov = Provenance::new("verify-scaling", &sc, Some(cfg.master_seed), serde_json::to_value(&cfg)?)?;
    io::save_stats(prov, &report, &a.out)
}

fn fixtures(a: FixturesArgs) -> Result<()> {
    match a.action {
        FixtureAction::List => {
            for (name, summary, _) in scenario::FIXTURES {
                println!("{name}\t{summary}");
            }
        }
        FixtureAction::Show { name } => {
            let sc = scenario::load_fixture(&name)?;
            print!("{}", sc.to_json()?);
        }
        FixtureAction::Write { dir } => {
            std::fs::create_dir_all(&dir)?;
            for (name, _, _) in scenario::FIXTURES {
                scenario::save_scenario(&scenario::load_fixture(name)?, dir.join(format!("{name}.json")))?;
            }
        }
    }
    Ok(())
}
