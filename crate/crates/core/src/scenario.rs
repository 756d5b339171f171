//! Scenario files: one JSON document per study.
//!
//! Units: times and delays are in τ units unless noted, voltages and powers
//! in p.u. on `base_mva`, wind speeds in m/s, rated powers in MW, and OU decay
//! rates per unit of the time axis the source is generated on.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::model::{
    BusModel, BusSpec, Disturbance, InjectionSpec, LinearSlowFast, LoadSpec, LtcSpec, SlowFastState, Subsystem,
    SystemModel, VariableNames,
};
use crate::rng::RngStream;
use crate::solver::{self, InitialGuess, SolverConfig};
use crate::wind::WindSourceSpec;

const FIXTURE_PREFIX: &str = "fixture:";

/// Shipped scenarios as `(name, summary, json)`.
pub const FIXTURES: [(&str, &str, &str); 3] = [
    (
        "linear-slowfast",
        "linear slow/fast system with one wind input and closed-form manifolds",
        include_str!("../fixtures/linear-slowfast.json"),
    ),
    ("ou-only", "a single wind latent state with no device dynamics", include_str!("../fixtures/ou-only.json")),
    (
        "bus-model",
        "recovery load, tap changer and wind farm on one bus, with a line switch",
        include_str!("../fixtures/bus-model.json"),
    ),
];

pub fn fixture_json(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|f| f.0 == name).map(|f| f.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Linear {
        a_zz: Vec<Vec<f64>>,
        a_zx: Vec<Vec<f64>>,
        a_xz: Vec<Vec<f64>>,
        a_xx: Vec<Vec<f64>>,
        a_xw: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        names: Option<VariableNames>,
    },
    Bus {
        base_mva: f64,
        source_voltage: f64,
        buses: Vec<BusSpec>,
        loads: Vec<LoadSpec>,
        #[serde(default)]
        ltcs: Vec<LtcSpec>,
        #[serde(default)]
        injections: Vec<InjectionSpec>,
    },
}

impl SystemSpec {
    pub fn build(&self) -> Result<Arc<dyn Subsystem>> {
        Ok(match self {
            SystemSpec::Linear { a_zz, a_zx, a_xz, a_xx, a_xw, names } => {
                let sys = LinearSlowFast::from_rows(a_zz, a_zx, a_xz, a_xx, a_xw)?;
                Arc::new(match names {
                    Some(n) => sys.with_names(n.clone()),
                    None => sys,
                })
            }
            SystemSpec::Bus { base_mva, source_voltage, buses, loads, ltcs, injections } => Arc::new(BusModel::new(
                *base_mva,
                *source_voltage,
                buses.clone(),
                loads.clone(),
                ltcs.clone(),
                injections.clone(),
            )?),
        })
    }

    /// Initial tap positions declared on the devices.
    fn declared_z_d(&self) -> Vec<f64> {
        match self {
            SystemSpec::Linear { .. } => Vec::new(),
            SystemSpec::Bus { ltcs, .. } => ltcs.iter().map(|l| l.device.m).collect(),
        }
    }
}

/// Defaults for the analysis subcommands; every field can be overridden on
/// the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisDefaults {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Tube depth for plot data, as a multiple of σ.
    #[serde(default = "default_plot_h")]
    pub plot_h_over_sigma: f64,
    /// Exit-statistics depths as multiples of σ.
    #[serde(default)]
    pub h_grid_over_sigma: Vec<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in_tau: Option<f64>,
    #[serde(default)]
    pub sigma_list: Vec<f64>,
    #[serde(default)]
    pub epsilon_list: Vec<f64>,
}

fn default_kappa() -> f64 {
    crate::manifold::DEFAULT_KAPPA
}
fn default_plot_h() -> f64 {
    10.0
}
fn default_paths() -> usize {
    100
}

impl Default for AnalysisDefaults {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            plot_h_over_sigma: default_plot_h(),
            h_grid_over_sigma: Vec::new(),
            n_paths: default_paths(),
            master_seed: 0,
            burn_in_tau: None,
            sigma_list: Vec::new(),
            epsilon_list: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub epsilon: f64,
    pub sigma: f64,
    pub system: SystemSpec,
    #[serde(default)]
    pub wind: Vec<WindSourceSpec>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    /// Partial initial state; wind latents and algebraics are completed.
    pub initial: InitialGuess,
    /// Simulation horizon (τ units).
    pub horizon: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisDefaults,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.name.trim().is_empty() {
            errs.push("name must not be empty".to_string());
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            errs.push(format!("horizon must be >= 0, got {}", self.horizon));
        }
        if self.epsilon > 0.0 {
            if let Err(e) = self.solver.validate(self.epsilon) {
                errs.push(format!("solver: {e}"));
            }
        }
        let a = &self.analysis;
        if !(a.kappa > 0.0) {
            errs.push(format!("analysis.kappa must be > 0, got {}", a.kappa));
        }
        if !(a.plot_h_over_sigma > 0.0) {
            errs.push(format!("analysis.plot_h_over_sigma must be > 0, got {}", a.plot_h_over_sigma));
        }
        if a.h_grid_over_sigma.iter().any(|h| !(*h >= 0.0)) {
            errs.push("analysis.h_grid_over_sigma entries must be >= 0".to_string());
        }
        match self.build_model() {
            Ok(model) => {
                let z_d = self.initial_z_d();
                let d = model.dims;
                if self.initial.z_c.len() != d.n_zc {
                    errs.push(format!("initial.z_c must have {} entries, got {}", d.n_zc, self.initial.z_c.len()));
                }
                if self.initial.x.len() != d.n_x {
                    errs.push(format!("initial.x must have {} entries, got {}", d.n_x, self.initial.x.len()));
                }
                if z_d.len() != d.n_zd {
                    errs.push(format!("initial.z_d must have {} entries, got {}", d.n_zd, z_d.len()));
                }
                if let Some(y) = &self.initial.y {
                    if y.len() != d.n_y && y.len() != d.n_ybar() {
                        errs.push(format!("initial.y must have {} or {} entries, got {}", d.n_y, d.n_ybar(), y.len()));
                    }
                }
            }
            Err(Error::Validation(list)) => errs.extend(list),
            Err(e) => errs.push(e.to_string()),
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        let sub = self.system.build()?;
        SystemModel::new(sub, self.epsilon, self.sigma, self.wind.clone(), self.disturbances.clone())
    }

    fn initial_z_d(&self) -> Vec<f64> {
        if self.initial.z_d.is_empty() {
            self.system.declared_z_d()
        } else {
            self.initial.z_d.clone()
        }
    }

    /// Initial guess with tap positions filled from the device declarations.
    pub fn initial_guess(&self) -> InitialGuess {
        InitialGuess { z_d: self.initial_z_d(), ..self.initial.clone() }
    }

    /// Consistent initial state; wind latents drawn when a stream is given.
    pub fn initial_state(&self, model: &SystemModel, rng: Option<&mut RngStream>) -> Result<SlowFastState> {
        solver::find_consistent_init(model, &self.initial_guess(), rng, self.solver.newton())
    }

    /// Git-style content hash of the canonical serialization.
    pub fn content_hash(&self) -> Result<String> {
        Ok(crate::io::git_blob_hash(serde_json::to_string(self)?.as_bytes()))
    }

    /// Ensemble settings taken from the analysis defaults.
    pub fn ensemble_config(&self) -> EnsembleConfig {
        let a = &self.analysis;
        let mut cfg = EnsembleConfig::new(a.n_paths, a.master_seed);
        cfg.kappa = a.kappa;
        cfg.burn_in_tau = a.burn_in_tau;
        cfg.h_grid = self.h_grid();
        cfg.sigma_list = a.sigma_list.clone();
        cfg.epsilon_list = a.epsilon_list.clone();
        cfg
    }

    pub fn h_grid(&self) -> Vec<f64> {
        self.analysis.h_grid_over_sigma.iter().map(|k| k * self.sigma).collect()
    }
}

/// Load a scenario from a file path or `fixture:<name>`.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let p = path.as_ref();
    if let Some(name) = p.to_str().and_then(|s| s.strip_prefix(FIXTURE_PREFIX)) {
        return load_fixture(name);
    }
    let text = std::fs::read_to_string(p)?;
    Scenario::from_json(&text)
}

pub fn load_fixture(name: &str) -> Result<Scenario> {
    let text = fixture_json(name).ok_or_else(|| {
        let known: Vec<&str> = FIXTURES.iter().map(|f| f.0).collect();
        Error::param(format!("unknown fixture '{name}' (known: {})", known.join(", ")))
    })?;
    Scenario::from_json(text)
}

pub fn save_scenario(sc: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, sc.to_json()?)?;
    Ok(())
}
