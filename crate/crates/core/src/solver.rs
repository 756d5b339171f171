//! Fixed-step integration of the deterministic and stochastic models.
//!
//! Both modes share one stepping routine so that a stochastic run with σ = 0
//! reproduces the deterministic run bit for bit. The stochastic step still
//! draws its `n_w` normals in that case; only the addition is skipped.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiscreteEvent, SlowFastState, SystemModel};
use crate::numerics::{self, NewtonOptions};
use crate::rng::RngStream;
use crate::wind;

/// Largest `dt/ε` accepted by the explicit scheme.
pub const EXPLICIT_STABILITY_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ExplicitEulerMaruyama,
    /// Linearly implicit in the fast rows, explicit in the slow rows.
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Step in τ units.
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub scheme: Scheme,
    /// Relative determinant threshold for the per-step singularity check.
    pub singular_tol: f64,
    /// Record every n-th grid point (the last point is always kept).
    pub record_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            newton_tol: 1e-8,
            newton_max_iter: 25,
            scheme: Scheme::SemiImplicit,
            singular_tol: 1e-8,
            record_every: 1,
        }
    }
}

impl SolverConfig {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions { tol: self.newton_tol, max_iter: self.newton_max_iter }
    }

    pub fn validate(&self, epsilon: f64) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.newton_tol > 0.0) {
            errs.push(format!("newton_tol must be > 0, got {}", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            errs.push("newton_max_iter must be >= 1".to_string());
        }
        if self.record_every == 0 {
            errs.push("record_every must be >= 1".to_string());
        }
        if self.scheme == Scheme::ExplicitEulerMaruyama && self.dt / epsilon > EXPLICIT_STABILITY_LIMIT {
            errs.push(format!(
                "explicit scheme needs dt/epsilon <= {EXPLICIT_STABILITY_LIMIT}, got {}",
                self.dt / epsilon
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunMode {
    Deterministic,
    Stochastic { seed: u64, stream: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SlowFastState>,
    pub event_log: Vec<DiscreteEvent>,
    pub mode: RunMode,
}

impl Trajectory {
    pub fn new(mode: RunMode) -> Self {
        Self { times: Vec::new(), states: Vec::new(), event_log: Vec::new(), mode }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&SlowFastState> {
        self.states.last()
    }

    fn push(&mut self, s: &SlowFastState) {
        self.times.push(s.tau);
        self.states.push(s.clone());
    }
}

/// Starting values for [`find_consistent_init`]; wind latent states are
/// chosen by the mode, not supplied.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialGuess {
    pub z_c: Vec<f64>,
    /// Device fast states only.
    pub x: Vec<f64>,
    pub z_d: Vec<f64>,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    #[serde(default)]
    pub tau: f64,
}

/// One deterministic step.
pub fn step_deterministic(model: &SystemModel, state: &SlowFastState, cfg: &SolverConfig) -> Result<SlowFastState> {
    step(model, state, cfg, None)
}

/// One Euler-Maruyama step; consumes exactly `n_w` normal draws.
pub fn step_stochastic(
    model: &SystemModel,
    state: &SlowFastState,
    cfg: &SolverConfig,
    rng: &mut RngStream,
) -> Result<SlowFastState> {
    let mut xi = vec![0.0; model.dims.n_w];
    rng.fill_standard_normal(&mut xi);
    step(model, state, cfg, Some(&xi))
}

fn step(model: &SystemModel, state: &SlowFastState, cfg: &SolverConfig, xi: Option<&[f64]>) -> Result<SlowFastState> {
    let d = model.dims;
    let eps = d.epsilon;
    let dt = cfg.dt;
    let h = model.eval_slow_rhs(state)?;
    let f = model.eval_fast_rhs(state)?;

    let mut rhs: Vec<f64> = f.iter().map(|v| v * (dt / eps)).collect();
    if let Some(xi) = xi {
        if model.sigma != 0.0 {
            let scale = model.sigma / eps.sqrt() * dt.sqrt();
            for (i, z) in xi.iter().enumerate() {
                rhs[d.n_x + i] += scale * z;
            }
        }
    }
    let delta = match cfg.scheme {
        Scheme::ExplicitEulerMaruyama => rhs,
        Scheme::SemiImplicit if d.n_xbar() > 0 => {
            let jac = model.fast_jacobian(state)?;
            let n = d.n_xbar();
            let m = DMatrix::identity(n, n) - jac * (dt / eps);
            let lu = m.lu();
            let sol = lu.solve(&DVector::from_vec(rhs)).ok_or_else(|| Error::Singular {
                det: lu.determinant(),
                context: "semi-implicit step matrix".into(),
            })?;
            sol.iter().copied().collect()
        }
        Scheme::SemiImplicit => rhs,
    };

    let mut next = state.clone();
    for (z, dz) in next.z_c.iter_mut().zip(&h) {
        *z += dt * dz;
    }
    for (x, dx) in next.x_bar.iter_mut().zip(&delta) {
        *x += dx;
    }
    next.tau = state.tau + dt;
    if let Some(bad) = next.z_c.iter().chain(&next.x_bar).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("state component {bad}")));
    }
    next.y_bar = model.solve_algebraic(&next, &state.y_bar, cfg.newton())?;
    check_regular(model, &next, cfg)?;
    Ok(next)
}

fn check_regular(model: &SystemModel, s: &SlowFastState, cfg: &SolverConfig) -> Result<()> {
    if model.dims.n_y == 0 {
        return Ok(());
    }
    let (singular, det) = model.is_singular(s, cfg.singular_tol)?;
    if singular {
        return Err(Error::Singular { det, context: format!("algebraic Jacobian at tau = {}", s.tau) });
    }
    Ok(())
}

fn step_count(horizon: f64, dt: f64) -> usize {
    let raw = horizon / dt;
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        raw.ceil() as usize
    }
}

/// Integrate from `init` over `horizon` τ units.
///
/// A stochastic run is selected by passing a random stream. Discrete events
/// (disturbances first, then devices) are processed at the first grid point
/// at or after their due time, before that point is recorded.
pub fn simulate(
    model: &SystemModel,
    init: &SlowFastState,
    horizon: f64,
    cfg: &SolverConfig,
    mut rng: Option<&mut RngStream>,
) -> Result<Trajectory> {
    cfg.validate(model.epsilon())?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::param(format!("horizon must be >= 0, got {horizon}")));
    }
    model.check_state(init)?;
    let mode = match &rng {
        Some(r) => RunMode::Stochastic { seed: r.master_seed(), stream: r.stream_index() },
        None => RunMode::Deterministic,
    };
    let mut traj = Trajectory::new(mode);
    let mut state = init.clone();
    if state.timers.len() != model.discrete_device_count() {
        state.timers = model.subsystem(0).initial_timers(model.timer_origin(init.tau));
    }
    state.y_bar = model.solve_algebraic(&state, &init.y_bar, cfg.newton())?;

    let n_steps = step_count(horizon, cfg.dt);
    let t0 = init.tau;
    for n in 0..=n_steps {
        let result = (|| -> Result<SlowFastState> {
            let mut s = if n == 0 {
                state.clone()
            } else {
                let mut s = match rng.as_deref_mut() {
                    Some(r) => step_stochastic(model, &state, cfg, r)?,
                    None => step_deterministic(model, &state, cfg)?,
                };
                s.tau = t0 + n as f64 * cfg.dt;
                s
            };
            let (next, events) = model.apply_discrete(&s);
            let changed = next.stage != s.stage || next.z_d != s.z_d;
            s = next;
            if changed {
                s.y_bar = model.solve_algebraic(&s, &s.y_bar, cfg.newton())?;
                check_regular(model, &s, cfg)?;
            }
            traj.event_log.extend(events);
            Ok(s)
        })();
        match result {
            Ok(s) => state = s,
            Err(e) => {
                let tau = t0 + n as f64 * cfg.dt;
                return Err(Error::Aborted { tau, source: Box::new(e), partial: Box::new(traj) });
            }
        }
        if n % cfg.record_every == 0 || n == n_steps {
            traj.push(&state);
        }
    }
    Ok(traj)
}

/// Complete a partial initial state on the constraint manifold.
///
/// Wind latent states are drawn from their stationary law when a stream is
/// given and set to zero (median wind) otherwise.
pub fn find_consistent_init(
    model: &SystemModel,
    guess: &InitialGuess,
    rng: Option<&mut RngStream>,
    opts: NewtonOptions,
) -> Result<SlowFastState> {
    let d = model.dims;
    let mut x_bar = guess.x.clone();
    if x_bar.len() != d.n_x {
        return Err(Error::Dimension { what: "initial x", expected: d.n_x, got: x_bar.len() });
    }
    match rng {
        Some(r) => {
            for i in 0..d.n_w {
                x_bar.push(wind::ou_stationary_init(&model.wind_ou(i), r)?);
            }
        }
        None => x_bar.extend(std::iter::repeat_n(0.0, d.n_w)),
    }
    let mut s = model.make_state(guess.z_c.clone(), x_bar, guess.z_d.clone(), guess.tau)?;
    let y_guess = guess.y.clone().unwrap_or_else(|| s.y_bar.clone());
    s.y_bar = model.solve_algebraic(&s, &y_guess, opts)?;
    Ok(s)
}

/// Long-term equilibrium at fixed discrete state with median wind: solves
/// `h = 0`, `f = 0`, `g = 0` jointly for `(z_c, x, y)`.
pub fn steady_state(model: &SystemModel, guess: &SlowFastState, opts: NewtonOptions) -> Result<SlowFastState> {
    let d = model.dims;
    let mut base = guess.clone();
    for i in 0..d.n_w {
        base.x_bar[d.n_x + i] = 0.0;
        base.y_bar[d.n_y + i] = model.wind_speed(i, 0.0)?;
    }
    let sub = model.subsystem(base.stage);
    let unpack = |u: &[f64], s: &mut SlowFastState| {
        s.z_c.copy_from_slice(&u[..d.n_zc]);
        s.x_bar[..d.n_x].copy_from_slice(&u[d.n_zc..d.n_zc + d.n_x]);
        s.y_bar[..d.n_y].copy_from_slice(&u[d.n_zc + d.n_x..]);
    };
    let residual = |u: &[f64], out: &mut [f64]| -> Result<()> {
        let mut s = base.clone();
        unpack(u, &mut s);
        let v = s.view();
        let (h, rest) = out.split_at_mut(d.n_zc);
        let (f, g) = rest.split_at_mut(d.n_x);
        sub.slow_rhs(&v, h);
        sub.fast_rhs(&v, f);
        sub.algebraic(&v, g);
        Ok(())
    };
    let mut u0 = base.z_c.clone();
    u0.extend_from_slice(&base.x_bar[..d.n_x]);
    u0.extend_from_slice(&base.y_bar[..d.n_y]);
    let sol = numerics::newton_solve(residual, None, &u0, opts)?;
    unpack(&sol.x, &mut base);
    Ok(base)
}
