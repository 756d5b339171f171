//! Semi-explicit slow/fast DAE model.
//!
//! A [`SystemModel`] wraps a user [`Subsystem`] (device rows) and appends the
//! wind rows itself: `n_w` fast rows `-α_i η_i` and `n_w` algebraic rows
//! `y_w - g_w(η)`. Noise only ever enters those last fast rows, and it is
//! added by the solver, never here.

pub mod devices;
pub mod systems;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, fd_step, inf_norm, NewtonOptions};
use crate::wind::{self, OuParams, WindSourceSpec};

pub use devices::{
    ltc_step, wind_power_injection, Absorptions, LtcDevice, RecoveryLoad, VoltageCharacteristic, WindInjection,
};
pub use systems::{BusModel, BusSpec, InjectionSpec, LinearSlowFast, LoadSpec, LtcSpec};

/// Determinant tolerance used to label a failed algebraic solve as a fold.
const FOLD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_zc: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub n_zd: usize,
    pub n_w: usize,
    pub epsilon: f64,
}

impl ModelDims {
    pub fn n_xbar(&self) -> usize {
        self.n_x + self.n_w
    }

    pub fn n_ybar(&self) -> usize {
        self.n_y + self.n_w
    }
}

/// Dimensions of the device rows supplied by a [`Subsystem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsystemDims {
    pub n_zc: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub n_zd: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowFastState {
    pub z_c: Vec<f64>,
    /// Device fast states followed by the wind latent states.
    pub x_bar: Vec<f64>,
    /// Network algebraics followed by the wind speeds.
    pub y_bar: Vec<f64>,
    pub z_d: Vec<f64>,
    pub tau: f64,
    /// Number of scheduled disturbances already applied.
    pub stage: usize,
    /// Next firing time of each discrete device, in declaration order.
    pub timers: Vec<f64>,
}

impl SlowFastState {
    pub fn view(&self) -> StateView<'_> {
        StateView { z_c: &self.z_c, x_bar: &self.x_bar, y_bar: &self.y_bar, z_d: &self.z_d }
    }
}

/// Borrowed continuous/discrete variables handed to device functions.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    pub z_c: &'a [f64],
    pub x_bar: &'a [f64],
    pub y_bar: &'a [f64],
    pub z_d: &'a [f64],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableNames {
    pub z_c: Vec<String>,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub z_d: Vec<String>,
}

impl VariableNames {
    pub fn generic(d: SubsystemDims) -> Self {
        let gen = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect();
        Self { z_c: gen("z", d.n_zc), x: gen("x", d.n_x), y: gen("y", d.n_y), z_d: gen("zd", d.n_zd) }
    }
}

/// Names of every column of a full state, wind rows included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateNames {
    pub z_c: Vec<String>,
    pub x_bar: Vec<String>,
    pub y_bar: Vec<String>,
    pub z_d: Vec<String>,
}

/// Partial derivatives of the device rows with respect to `(z_c, x̄, ȳ)`.
///
/// Row blocks: `h` (n_zc rows), `f` (n_x rows), `g` (n_y rows). Analytic
/// implementations may leave the wind columns at zero when unused.
#[derive(Debug, Clone, PartialEq)]
pub struct RawJacobians {
    pub h_z: DMatrix<f64>,
    pub h_x: DMatrix<f64>,
    pub h_y: DMatrix<f64>,
    pub f_z: DMatrix<f64>,
    pub f_x: DMatrix<f64>,
    pub f_y: DMatrix<f64>,
    pub g_z: DMatrix<f64>,
    pub g_x: DMatrix<f64>,
    pub g_y: DMatrix<f64>,
}

/// Jacobians of the reduced system `z_c' = H_c(z_c, x̄)`, `ε x̄' = F(z_c, x̄)`
/// obtained by eliminating ȳ through the algebraic constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedJacobians {
    pub f_x: DMatrix<f64>,
    pub f_z: DMatrix<f64>,
    pub h_x: DMatrix<f64>,
    pub h_z: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEvent {
    pub tau: f64,
    pub device: String,
    pub old: f64,
    pub new: f64,
}

/// A parameter switch applied at a scheduled time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Application time (τ units).
    pub time: f64,
    #[serde(default)]
    pub name: String,
    /// Device or bus name the parameter belongs to.
    pub target: String,
    pub param: String,
    pub value: f64,
}

/// Device rows of a slow/fast DAE. This is the hook for user-defined systems.
pub trait Subsystem: Send + Sync + fmt::Debug {
    fn dims(&self) -> SubsystemDims;

    fn names(&self) -> VariableNames {
        VariableNames::generic(self.dims())
    }

    fn slow_rhs(&self, s: &StateView<'_>, out: &mut [f64]);

    fn fast_rhs(&self, s: &StateView<'_>, out: &mut [f64]);

    fn algebraic(&self, s: &StateView<'_>, out: &mut [f64]);

    /// Analytic device Jacobians. `None` selects central differences.
    fn jacobians(&self, _s: &StateView<'_>) -> Option<RawJacobians> {
        None
    }

    /// Starting point for the algebraic Newton solve.
    fn algebraic_guess(&self) -> Vec<f64> {
        vec![0.0; self.dims().n_y]
    }

    /// Wind-source indices this subsystem reads from `y_w`.
    fn wind_references(&self) -> Vec<usize> {
        Vec::new()
    }

    fn discrete_device_count(&self) -> usize {
        0
    }

    fn discrete_device_name(&self, i: usize) -> String {
        format!("device{i}")
    }

    /// First firing time of each discrete device given the reference time.
    fn initial_timers(&self, start: f64) -> Vec<f64> {
        vec![start; self.discrete_device_count()]
    }

    /// Fire every due device in declaration order.
    fn discrete_update(
        &self,
        _s: &StateView<'_>,
        _now: f64,
        _z_d: &mut [f64],
        _timers: &mut [f64],
        _log: &mut Vec<DiscreteEvent>,
    ) {
    }

    fn patched(&self, patch: &Disturbance) -> Result<Arc<dyn Subsystem>> {
        Err(Error::param(format!("this system has no parameter '{}' on '{}'", patch.param, patch.target)))
    }
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub dims: ModelDims,
    pub sigma: f64,
    pub wind: Vec<WindSourceSpec>,
    pub disturbances: Vec<Disturbance>,
    stages: Vec<Arc<dyn Subsystem>>,
    names: StateNames,
}

impl SystemModel {
    pub fn new(
        subsystem: Arc<dyn Subsystem>,
        epsilon: f64,
        sigma: f64,
        wind: Vec<WindSourceSpec>,
        mut disturbances: Vec<Disturbance>,
    ) -> Result<Self> {
        let mut errs = Vec::new();
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            errs.push(format!("epsilon must be > 0, got {epsilon}"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            errs.push(format!("sigma must be >= 0, got {sigma}"));
        }
        for (i, w) in wind.iter().enumerate() {
            if let Err(e) = w.validate() {
                errs.push(format!("wind source {i}: {e}"));
            }
        }
        for r in subsystem.wind_references() {
            if r >= wind.len() {
                errs.push(format!("wind source index {r} out of range ({} sources)", wind.len()));
            }
        }
        for d in &disturbances {
            if !(d.time >= 0.0 && d.time.is_finite()) {
                errs.push(format!("disturbance '{}' time must be >= 0", d.name));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        disturbances.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut stages = vec![subsystem.clone()];
        for d in &disturbances {
            let next = stages.last().expect("nonempty").patched(d)?;
            if next.dims() != subsystem.dims() {
                return Err(Error::param("a disturbance may not change dimensions"));
            }
            stages.push(next);
        }
        let sd = subsystem.dims();
        let dims = ModelDims { n_zc: sd.n_zc, n_x: sd.n_x, n_y: sd.n_y, n_zd: sd.n_zd, n_w: wind.len(), epsilon };
        let vn = subsystem.names();
        let wind_name = |i: usize, w: &WindSourceSpec| {
            if w.name.is_empty() {
                format!("wind{i}")
            } else {
                w.name.clone()
            }
        };
        let mut x_bar = vn.x;
        let mut y_bar = vn.y;
        for (i, w) in wind.iter().enumerate() {
            x_bar.push(format!("{}.eta", wind_name(i, w)));
            y_bar.push(format!("{}.speed", wind_name(i, w)));
        }
        let names = StateNames { z_c: vn.z_c, x_bar, y_bar, z_d: vn.z_d };
        Ok(Self { dims, sigma, wind, disturbances, stages, names })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::param(format!("epsilon must be > 0, got {epsilon}")));
        }
        let mut m = self.clone();
        m.dims.epsilon = epsilon;
        Ok(m)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::param(format!("sigma must be >= 0, got {sigma}")));
        }
        let mut m = self.clone();
        m.sigma = sigma;
        Ok(m)
    }

    pub fn epsilon(&self) -> f64 {
        self.dims.epsilon
    }

    pub fn names(&self) -> &StateNames {
        &self.names
    }

    pub fn subsystem(&self, stage: usize) -> &dyn Subsystem {
        self.stages[stage.min(self.stages.len() - 1)].as_ref()
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn discrete_device_count(&self) -> usize {
        self.stages[0].discrete_device_count()
    }

    /// OU parameters of wind source `i` in the coupled model (β ≡ σ).
    pub fn wind_ou(&self, i: usize) -> OuParams {
        OuParams { alpha: self.wind[i].ou.alpha, beta: self.sigma }
    }

    /// `g_w(η)` for source `i`.
    pub fn wind_speed(&self, i: usize, eta: f64) -> Result<f64> {
        wind::memoryless_transform(eta, &self.wind_ou(i), &self.wind[i].target)
    }

    /// Time the discrete device timers count from.
    pub fn timer_origin(&self, tau0: f64) -> f64 {
        self.disturbances.first().map_or(tau0, |d| d.time)
    }

    /// Assemble a state; wind speeds are filled in closed form and device
    /// algebraics start from the subsystem guess.
    pub fn make_state(&self, z_c: Vec<f64>, x_bar: Vec<f64>, z_d: Vec<f64>, tau: f64) -> Result<SlowFastState> {
        let d = &self.dims;
        check_len("z_c", d.n_zc, z_c.len())?;
        check_len("x_bar", d.n_xbar(), x_bar.len())?;
        check_len("z_d", d.n_zd, z_d.len())?;
        let mut y_bar = self.stages[0].algebraic_guess();
        check_len("algebraic guess", d.n_y, y_bar.len())?;
        for i in 0..d.n_w {
            y_bar.push(self.wind_speed(i, x_bar[d.n_x + i])?);
        }
        let stage = self.disturbances.iter().take_while(|e| e.time < tau).count();
        let timers = self.stages[0].initial_timers(self.timer_origin(tau));
        Ok(SlowFastState { z_c, x_bar, y_bar, z_d, tau, stage, timers })
    }

    pub fn check_state(&self, s: &SlowFastState) -> Result<()> {
        let d = &self.dims;
        check_len("z_c", d.n_zc, s.z_c.len())?;
        check_len("x_bar", d.n_xbar(), s.x_bar.len())?;
        check_len("y_bar", d.n_ybar(), s.y_bar.len())?;
        check_len("z_d", d.n_zd, s.z_d.len())?;
        Ok(())
    }

    pub fn eval_slow_rhs(&self, s: &SlowFastState) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let mut out = vec![0.0; self.dims.n_zc];
        self.subsystem(s.stage).slow_rhs(&s.view(), &mut out);
        Ok(out)
    }

    pub fn eval_fast_rhs(&self, s: &SlowFastState) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let d = &self.dims;
        let mut out = vec![0.0; d.n_xbar()];
        self.subsystem(s.stage).fast_rhs(&s.view(), &mut out[..d.n_x]);
        for i in 0..d.n_w {
            out[d.n_x + i] = -self.wind[i].ou.alpha * s.x_bar[d.n_x + i];
        }
        Ok(out)
    }

    pub fn eval_algebraic(&self, s: &SlowFastState) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let d = &self.dims;
        let mut out = vec![0.0; d.n_ybar()];
        self.subsystem(s.stage).algebraic(&s.view(), &mut out[..d.n_y]);
        for i in 0..d.n_w {
            out[d.n_y + i] = s.y_bar[d.n_y + i] - self.wind_speed(i, s.x_bar[d.n_x + i])?;
        }
        Ok(out)
    }

    /// Solve the algebraic constraints for ȳ at fixed `(z_c, x̄, z_d)`.
    ///
    /// Wind speeds are set in closed form, then Newton runs on the device rows
    /// starting from `guess` (device part only, or the full ȳ).
    pub fn solve_algebraic(&self, s: &SlowFastState, guess: &[f64], opts: NewtonOptions) -> Result<Vec<f64>> {
        let d = self.dims;
        check_len("z_c", d.n_zc, s.z_c.len())?;
        check_len("x_bar", d.n_xbar(), s.x_bar.len())?;
        if guess.len() != d.n_y && guess.len() != d.n_ybar() {
            return Err(Error::Dimension { what: "algebraic guess", expected: d.n_ybar(), got: guess.len() });
        }
        let mut y_bar = vec![0.0; d.n_ybar()];
        y_bar[..d.n_y].copy_from_slice(&guess[..d.n_y]);
        for i in 0..d.n_w {
            y_bar[d.n_y + i] = self.wind_speed(i, s.x_bar[d.n_x + i])?;
        }
        if d.n_y == 0 {
            return Ok(y_bar);
        }
        let sub = self.subsystem(s.stage);
        let wind_y = y_bar[d.n_y..].to_vec();
        let mut scratch = y_bar.clone();
        let residual = |y: &[f64], out: &mut [f64]| -> Result<()> {
            let mut full = y.to_vec();
            full.extend_from_slice(&wind_y);
            let v = StateView { z_c: &s.z_c, x_bar: &s.x_bar, y_bar: &full, z_d: &s.z_d };
            sub.algebraic(&v, out);
            Ok(())
        };
        let analytic = |y: &[f64]| -> Result<DMatrix<f64>> {
            let mut full = y.to_vec();
            full.extend_from_slice(&wind_y);
            let v = StateView { z_c: &s.z_c, x_bar: &s.x_bar, y_bar: &full, z_d: &s.z_d };
            let j = sub.jacobians(&v).expect("checked above");
            Ok(j.g_y.columns(0, d.n_y).into_owned())
        };
        let has_analytic = sub.jacobians(&s.view_with_y(&scratch)).is_some();
        let jac: Option<numerics::JacobianFn<'_>> = if has_analytic { Some(&analytic) } else { None };
        match numerics::newton_solve(&residual, jac, &y_bar[..d.n_y], opts) {
            Ok(out) => {
                scratch[..d.n_y].copy_from_slice(&out.x);
                if scratch.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("algebraic solution".into()));
                }
                Ok(scratch)
            }
            Err(e @ Error::Singular { .. }) => Err(e),
            Err(Error::NoConvergence { iterations, residual: best }) => {
                let (_, (fold, det)) = numerics::least_squares_stationary(&residual, &y_bar[..d.n_y], 200, FOLD_TOL)?;
                if fold {
                    Err(Error::Singular { det, context: "algebraic constraints have no nearby solution (fold)".into() })
                } else {
                    Err(Error::NoConvergence { iterations, residual: best })
                }
            }
            Err(e) => Err(e),
        }
    }

    /// ∂(algebraic residual)/∂ȳ by central differences, wind block analytic.
    pub fn algebraic_jacobian(&self, s: &SlowFastState) -> Result<DMatrix<f64>> {
        self.check_state(s)?;
        let d = self.dims;
        let mut jac = DMatrix::zeros(d.n_ybar(), d.n_ybar());
        if d.n_y > 0 {
            let sub = self.subsystem(s.stage);
            let block = match sub.jacobians(&s.view()) {
                Some(j) => j.g_y,
                None => numerics::fd_jacobian(
                    |y: &[f64], out: &mut [f64]| {
                        sub.algebraic(&s.view_with_y(y), out);
                        Ok(())
                    },
                    &s.y_bar,
                    d.n_y,
                )?,
            };
            jac.view_mut((0, 0), (d.n_y, d.n_ybar())).copy_from(&block);
        }
        for i in 0..d.n_w {
            jac[(d.n_y + i, d.n_y + i)] = 1.0;
        }
        Ok(jac)
    }

    pub fn is_singular(&self, s: &SlowFastState, tol: f64) -> Result<(bool, f64)> {
        let jac = self.algebraic_jacobian(s)?;
        Ok(numerics::is_near_singular(&jac, tol))
    }

    /// Apply every disturbance and discrete device due at `s.tau`.
    ///
    /// Only `z_d`, the stage counter and the timers change.
    pub fn apply_discrete(&self, s: &SlowFastState) -> (SlowFastState, Vec<DiscreteEvent>) {
        let mut out = s.clone();
        let mut log = Vec::new();
        while out.stage < self.disturbances.len() && self.disturbances[out.stage].time <= s.tau {
            let d = &self.disturbances[out.stage];
            log.push(DiscreteEvent {
                tau: s.tau,
                device: format!("disturbance:{}", if d.name.is_empty() { &d.target } else { &d.name }),
                old: out.stage as f64,
                new: (out.stage + 1) as f64,
            });
            out.stage += 1;
        }
        let sub = self.subsystem(out.stage);
        let mut z_d = out.z_d.clone();
        let mut timers = out.timers.clone();
        sub.discrete_update(&s.view(), s.tau, &mut z_d, &mut timers, &mut log);
        out.z_d = z_d;
        out.timers = timers;
        (out, log)
    }

    /// Device and wind Jacobians with respect to `(z_c, x̄, ȳ)` at a state.
    pub fn raw_jacobians(&self, s: &SlowFastState) -> Result<RawJacobians> {
        self.check_state(s)?;
        let d = self.dims;
        let (nz, nx, ny) = (d.n_zc, d.n_xbar(), d.n_ybar());
        let sub = self.subsystem(s.stage);
        let mut j = match sub.jacobians(&s.view()) {
            Some(j) => j,
            None => self.fd_device_jacobians(sub, s),
        };
        // wind rows
        let mut f_x = DMatrix::zeros(nx, nx);
        f_x.view_mut((0, 0), (d.n_x, nx)).copy_from(&j.f_x);
        let mut f_y = DMatrix::zeros(nx, ny);
        f_y.view_mut((0, 0), (d.n_x, ny)).copy_from(&j.f_y);
        let mut f_z = DMatrix::zeros(nx, nz);
        f_z.view_mut((0, 0), (d.n_x, nz)).copy_from(&j.f_z);
        let mut g_x = DMatrix::zeros(ny, nx);
        g_x.view_mut((0, 0), (d.n_y, nx)).copy_from(&j.g_x);
        let mut g_y = DMatrix::zeros(ny, ny);
        g_y.view_mut((0, 0), (d.n_y, ny)).copy_from(&j.g_y);
        let mut g_z = DMatrix::zeros(ny, nz);
        g_z.view_mut((0, 0), (d.n_y, nz)).copy_from(&j.g_z);
        for i in 0..d.n_w {
            f_x[(d.n_x + i, d.n_x + i)] = -self.wind[i].ou.alpha;
            g_y[(d.n_y + i, d.n_y + i)] = 1.0;
            g_x[(d.n_y + i, d.n_x + i)] =
                -wind::memoryless_derivative(s.x_bar[d.n_x + i], &self.wind_ou(i), &self.wind[i].target)?;
        }
        j.f_x = f_x;
        j.f_y = f_y;
        j.f_z = f_z;
        j.g_x = g_x;
        j.g_y = g_y;
        j.g_z = g_z;
        Ok(j)
    }

    fn fd_device_jacobians(&self, sub: &dyn Subsystem, s: &SlowFastState) -> RawJacobians {
        let d = self.dims;
        let (nz, nx, ny) = (d.n_zc, d.n_xbar(), d.n_ybar());
        let n_out = d.n_zc + d.n_x + d.n_y;
        let mut work = s.clone();
        let mut plus = vec![0.0; n_out];
        let mut minus = vec![0.0; n_out];
        let eval = |st: &SlowFastState, out: &mut [f64]| {
            let v = st.view();
            let (h, rest) = out.split_at_mut(d.n_zc);
            let (f, g) = rest.split_at_mut(d.n_x);
            sub.slow_rhs(&v, h);
            sub.fast_rhs(&v, f);
            sub.algebraic(&v, g);
        };
        let mut full = DMatrix::zeros(n_out, nz + nx + ny);
        for col in 0..nz + nx + ny {
            let x0 = *slot(&mut work, col, nz, nx);
            let h = fd_step(x0);
            *slot(&mut work, col, nz, nx) = x0 + h;
            eval(&work, &mut plus);
            *slot(&mut work, col, nz, nx) = x0 - h;
            eval(&work, &mut minus);
            *slot(&mut work, col, nz, nx) = x0;
            for r in 0..n_out {
                full[(r, col)] = (plus[r] - minus[r]) / (2.0 * h);
            }
        }
        let blk = |r0: usize, nr: usize, c0: usize, nc: usize| full.view((r0, c0), (nr, nc)).into_owned();
        let (rh, rf, rg) = (0, d.n_zc, d.n_zc + d.n_x);
        let (cz, cx, cy) = (0, nz, nz + nx);
        RawJacobians {
            h_z: blk(rh, d.n_zc, cz, nz),
            h_x: blk(rh, d.n_zc, cx, nx),
            h_y: blk(rh, d.n_zc, cy, ny),
            f_z: blk(rf, d.n_x, cz, nz),
            f_x: blk(rf, d.n_x, cx, nx),
            f_y: blk(rf, d.n_x, cy, ny),
            g_z: blk(rg, d.n_y, cz, nz),
            g_x: blk(rg, d.n_y, cx, nx),
            g_y: blk(rg, d.n_y, cy, ny),
        }
    }

    /// Jacobians of the reduced ODE at a consistent state.
    pub fn reduced_jacobians(&self, s: &SlowFastState) -> Result<ReducedJacobians> {
        let j = self.raw_jacobians(s)?;
        reduce(&j)
    }

    /// `∂F/∂x̄` of the reduced fast dynamics.
    pub fn fast_jacobian(&self, s: &SlowFastState) -> Result<DMatrix<f64>> {
        Ok(self.reduced_jacobians(s)?.f_x)
    }

    /// Algebraic residual ∞-norm, used by consistency assertions.
    pub fn algebraic_residual_norm(&self, s: &SlowFastState) -> Result<f64> {
        Ok(inf_norm(&self.eval_algebraic(s)?))
    }
}

impl SlowFastState {
    fn view_with_y<'a>(&'a self, y: &'a [f64]) -> StateView<'a> {
        StateView { z_c: &self.z_c, x_bar: &self.x_bar, y_bar: y, z_d: &self.z_d }
    }
}

/// Eliminate ȳ: `F_x = f_x - f_y g_y⁻¹ g_x` and likewise for the other blocks.
pub fn reduce(j: &RawJacobians) -> Result<ReducedJacobians> {
    let ny = j.g_y.nrows();
    if ny == 0 {
        return Ok(ReducedJacobians { f_x: j.f_x.clone(), f_z: j.f_z.clone(), h_x: j.h_x.clone(), h_z: j.h_z.clone() });
    }
    let lu = j.g_y.clone().lu();
    let rhs = {
        let mut m = DMatrix::zeros(ny, j.g_x.ncols() + j.g_z.ncols());
        m.view_mut((0, 0), (ny, j.g_x.ncols())).copy_from(&j.g_x);
        m.view_mut((0, j.g_x.ncols()), (ny, j.g_z.ncols())).copy_from(&j.g_z);
        m
    };
    let sol = lu.solve(&rhs).ok_or_else(|| Error::Singular {
        det: lu.determinant(),
        context: "algebraic Jacobian during reduction".into(),
    })?;
    let nx = j.g_x.ncols();
    let dy_dx = sol.columns(0, nx);
    let dy_dz = sol.columns(nx, j.g_z.ncols());
    Ok(ReducedJacobians {
        f_x: &j.f_x - &j.f_y * dy_dx,
        f_z: &j.f_z - &j.f_y * dy_dz,
        h_x: &j.h_x - &j.h_y * dy_dx,
        h_z: &j.h_z - &j.h_y * dy_dz,
    })
}

/// Column `col` of the stacked `(z_c, x̄, ȳ)` input vector.
fn slot(s: &mut SlowFastState, col: usize, nz: usize, nx: usize) -> &mut f64 {
    if col < nz {
        &mut s.z_c[col]
    } else if col < nz + nx {
        &mut s.x_bar[col - nz]
    } else {
        &mut s.y_bar[col - nz - nx]
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::Dimension { what, expected, got })
    } else {
        Ok(())
    }
}
