//! Built-in subsystems: a linear slow/fast test model and a small bus model.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::devices::{
    ltc_step, wind_power_injection, Absorptions, LtcDevice, RecoveryLoad, VoltageCharacteristic, WindInjection,
};
use super::{DiscreteEvent, Disturbance, RawJacobians, StateView, Subsystem, SubsystemDims, VariableNames};
use crate::error::{Error, Result};

/// `z' = A_zz z + A_zx x`, `ε x' = A_xz z + A_xx x + A_xw η`.
///
/// There are no device algebraics; the wind latent states enter the fast rows
/// directly, which keeps the whole system linear and Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSlowFast {
    a_zz: DMatrix<f64>,
    a_zx: DMatrix<f64>,
    a_xz: DMatrix<f64>,
    a_xx: DMatrix<f64>,
    a_xw: DMatrix<f64>,
    names: Option<VariableNames>,
}

impl LinearSlowFast {
    pub fn new(
        a_zz: DMatrix<f64>,
        a_zx: DMatrix<f64>,
        a_xz: DMatrix<f64>,
        a_xx: DMatrix<f64>,
        a_xw: DMatrix<f64>,
    ) -> Result<Self> {
        let (nz, nx) = (a_zz.nrows(), a_xx.nrows());
        let shapes =
            [("a_zz", &a_zz, nz, nz), ("a_zx", &a_zx, nz, nx), ("a_xz", &a_xz, nx, nz), ("a_xx", &a_xx, nx, nx)];
        let mut errs = Vec::new();
        for (name, m, r, c) in shapes {
            if m.shape() != (r, c) {
                errs.push(format!("{name} must be {r}x{c}, got {}x{}", m.nrows(), m.ncols()));
            }
        }
        if a_xw.nrows() != nx {
            errs.push(format!("a_xw must have {nx} rows, got {}", a_xw.nrows()));
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        Ok(Self { a_zz, a_zx, a_xz, a_xx, a_xw, names: None })
    }

    /// Build from row-major nested vectors, as stored in scenario files.
    pub fn from_rows(
        a_zz: &[Vec<f64>],
        a_zx: &[Vec<f64>],
        a_xz: &[Vec<f64>],
        a_xx: &[Vec<f64>],
        a_xw: &[Vec<f64>],
    ) -> Result<Self> {
        let nz = a_zz.len();
        let nx = a_xx.len();
        Self::new(
            rows_to_matrix("a_zz", a_zz, nz)?,
            rows_to_matrix("a_zx", a_zx, nz)?,
            rows_to_matrix("a_xz", a_xz, nx)?,
            rows_to_matrix("a_xx", a_xx, nx)?,
            rows_to_matrix("a_xw", a_xw, nx)?,
        )
    }

    pub fn with_names(mut self, names: VariableNames) -> Self {
        self.names = Some(names);
        self
    }

    pub fn n_w(&self) -> usize {
        self.a_xw.ncols()
    }
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>], nrows: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::param(format!("{name} must have {nrows} rows, got {}", rows.len())));
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::param(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl Subsystem for LinearSlowFast {
    fn dims(&self) -> SubsystemDims {
        SubsystemDims { n_zc: self.a_zz.nrows(), n_x: self.a_xx.nrows(), n_y: 0, n_zd: 0 }
    }

    fn names(&self) -> VariableNames {
        self.names.clone().unwrap_or_else(|| VariableNames::generic(self.dims()))
    }

    fn slow_rhs(&self, s: &StateView<'_>, out: &mut [f64]) {
        let nx = self.a_xx.nrows();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..s.z_c.len() {
                acc += self.a_zz[(i, j)] * s.z_c[j];
            }
            for j in 0..nx {
                acc += self.a_zx[(i, j)] * s.x_bar[j];
            }
            *o = acc;
        }
    }

    fn fast_rhs(&self, s: &StateView<'_>, out: &mut [f64]) {
        let nx = self.a_xx.nrows();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..s.z_c.len() {
                acc += self.a_xz[(i, j)] * s.z_c[j];
            }
            for j in 0..nx {
                acc += self.a_xx[(i, j)] * s.x_bar[j];
            }
            for j in 0..self.a_xw.ncols() {
                acc += self.a_xw[(i, j)] * s.x_bar[nx + j];
            }
            *o = acc;
        }
    }

    fn algebraic(&self, _s: &StateView<'_>, _out: &mut [f64]) {}

    fn jacobians(&self, s: &StateView<'_>) -> Option<RawJacobians> {
        let (nz, nx, nw) = (self.a_zz.nrows(), self.a_xx.nrows(), self.a_xw.ncols());
        let nxb = s.x_bar.len();
        let nyb = s.y_bar.len();
        let mut h_x = DMatrix::zeros(nz, nxb);
        h_x.view_mut((0, 0), (nz, nx)).copy_from(&self.a_zx);
        let mut f_x = DMatrix::zeros(nx, nxb);
        f_x.view_mut((0, 0), (nx, nx)).copy_from(&self.a_xx);
        f_x.view_mut((0, nx), (nx, nw)).copy_from(&self.a_xw);
        Some(RawJacobians {
            h_z: self.a_zz.clone(),
            h_x,
            h_y: DMatrix::zeros(nz, nyb),
            f_z: self.a_xz.clone(),
            f_x,
            f_y: DMatrix::zeros(nx, nyb),
            g_z: DMatrix::zeros(0, nz),
            g_x: DMatrix::zeros(0, nxb),
            g_y: DMatrix::zeros(0, nyb),
        })
    }

    fn wind_references(&self) -> Vec<usize> {
        (0..self.a_xw.ncols()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub name: String,
    /// Reactance of the line feeding the bus (p.u.).
    pub x_line: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub name: String,
    pub bus: String,
    /// Recovery time constants (τ units).
    pub t_p: f64,
    pub t_q: f64,
    #[serde(flatten)]
    pub characteristic: VoltageCharacteristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtcSpec {
    pub name: String,
    pub bus: String,
    #[serde(flatten)]
    pub device: LtcDevice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub name: String,
    pub bus: String,
    /// Index of the wind source driving this injection.
    pub wind: usize,
    #[serde(flatten)]
    pub curve: WindInjection,
}

/// Radial network: every bus is fed from an infinite source through its own
/// line and tap changers.
///
/// Fast rows are `ε v' = Q_supply(v) - Q_load` with
/// `Q_supply = (sqrt((E v / Πm)² - (P X)²) - v²) / X`. Loads recover
/// exponentially, wind farms inject active power through a power curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BusModel {
    pub base_mva: f64,
    pub source_voltage: f64,
    pub buses: Vec<BusSpec>,
    pub loads: Vec<LoadSpec>,
    pub ltcs: Vec<LtcSpec>,
    pub injections: Vec<InjectionSpec>,
    load_bus: Vec<usize>,
    ltc_bus: Vec<usize>,
    inj_bus: Vec<usize>,
}

impl BusModel {
    pub fn new(
        base_mva: f64,
        source_voltage: f64,
        buses: Vec<BusSpec>,
        loads: Vec<LoadSpec>,
        ltcs: Vec<LtcSpec>,
        injections: Vec<InjectionSpec>,
    ) -> Result<Self> {
        let mut errs = Vec::new();
        if !(base_mva > 0.0) {
            errs.push(format!("base_mva must be > 0, got {base_mva}"));
        }
        if !(source_voltage > 0.0) {
            errs.push(format!("source_voltage must be > 0, got {source_voltage}"));
        }
        for b in &buses {
            if !(b.x_line > 0.0) {
                errs.push(format!("bus '{}': x_line must be > 0, got {}", b.name, b.x_line));
            }
        }
        let find = |kind: &str, dev: &str, bus: &str, errs: &mut Vec<String>| {
            let i = buses.iter().position(|b| b.name == bus);
            if i.is_none() {
                errs.push(format!("{kind} '{dev}': unknown bus '{bus}'"));
            }
            i.unwrap_or(0)
        };
        let load_bus = loads.iter().map(|l| find("load", &l.name, &l.bus, &mut errs)).collect();
        let ltc_bus = ltcs.iter().map(|l| find("ltc", &l.name, &l.bus, &mut errs)).collect();
        let inj_bus = injections.iter().map(|w| find("injection", &w.name, &w.bus, &mut errs)).collect();
        for l in &loads {
            if let Err(e) = (RecoveryLoad { t_p: l.t_p, t_q: l.t_q }).validate() {
                errs.push(format!("load '{}': {}", l.name, strip(&e)));
            }
        }
        for l in &ltcs {
            match l.device.validate() {
                Err(Error::Validation(v)) => errs.extend(v.into_iter().map(|m| format!("ltc '{}': {m}", l.name))),
                Err(e) => errs.push(format!("ltc '{}': {}", l.name, strip(&e))),
                Ok(()) => {}
            }
        }
        for w in &injections {
            if let Err(e) = w.curve.validate() {
                errs.push(format!("injection '{}': {}", w.name, strip(&e)));
            }
        }
        let mut names: Vec<&str> = buses.iter().map(|b| b.name.as_str()).collect();
        names.extend(loads.iter().map(|l| l.name.as_str()));
        names.extend(ltcs.iter().map(|l| l.name.as_str()));
        names.extend(injections.iter().map(|l| l.name.as_str()));
        let mut sorted = names.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                errs.push(format!("duplicate device name '{}'", w[0]));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        Ok(Self { base_mva, source_voltage, buses, loads, ltcs, injections, load_bus, ltc_bus, inj_bus })
    }

    fn load_model(&self, i: usize) -> RecoveryLoad {
        RecoveryLoad { t_p: self.loads[i].t_p, t_q: self.loads[i].t_q }
    }

    fn absorptions(&self, i: usize, v: f64) -> Absorptions {
        let c = &self.loads[i].characteristic;
        let (p_s, q_s) = c.static_power(v);
        let (p_t, q_t) = c.transient_power(v);
        Absorptions { p_s, q_s, p_t, q_t }
    }

    fn y_index_injection(&self, k: usize) -> usize {
        2 * self.loads.len() + k
    }

    /// Reactive power delivered by the line into bus `b`.
    pub fn supplied_reactive(&self, b: usize, v: f64, p: f64, z_d: &[f64]) -> f64 {
        let mut e = self.source_voltage;
        for (k, &bus) in self.ltc_bus.iter().enumerate() {
            if bus == b {
                e /= z_d[k];
            }
        }
        let x = self.buses[b].x_line;
        (((e * v).powi(2) - (p * x).powi(2)).sqrt() - v * v) / x
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Parameter(m) => m.clone(),
        other => other.to_string(),
    }
}

impl Subsystem for BusModel {
    fn dims(&self) -> SubsystemDims {
        SubsystemDims {
            n_zc: 2 * self.loads.len(),
            n_x: self.buses.len(),
            n_y: 2 * self.loads.len() + self.injections.len(),
            n_zd: self.ltcs.len(),
        }
    }

    fn names(&self) -> VariableNames {
        let mut z_c = Vec::new();
        let mut y = Vec::new();
        for l in &self.loads {
            z_c.push(format!("{}.x_p", l.name));
            z_c.push(format!("{}.x_q", l.name));
            y.push(format!("{}.p", l.name));
            y.push(format!("{}.q", l.name));
        }
        y.extend(self.injections.iter().map(|w| format!("{}.p_w", w.name)));
        VariableNames {
            z_c,
            x: self.buses.iter().map(|b| format!("{}.v", b.name)).collect(),
            y,
            z_d: self.ltcs.iter().map(|l| format!("{}.m", l.name)).collect(),
        }
    }

    fn slow_rhs(&self, s: &StateView<'_>, out: &mut [f64]) {
        for i in 0..self.loads.len() {
            let v = s.x_bar[self.load_bus[i]];
            let (dp, dq) = self.load_model(i).state_derivative(s.z_c[2 * i], s.z_c[2 * i + 1], &self.absorptions(i, v));
            out[2 * i] = dp;
            out[2 * i + 1] = dq;
        }
    }

    fn fast_rhs(&self, s: &StateView<'_>, out: &mut [f64]) {
        let nb = self.buses.len();
        let mut p = vec![0.0; nb];
        let mut q = vec![0.0; nb];
        for (i, &b) in self.load_bus.iter().enumerate() {
            p[b] += s.y_bar[2 * i];
            q[b] += s.y_bar[2 * i + 1];
        }
        for (k, &b) in self.inj_bus.iter().enumerate() {
            p[b] -= s.y_bar[self.y_index_injection(k)];
        }
        for b in 0..nb {
            out[b] = self.supplied_reactive(b, s.x_bar[b], p[b], s.z_d) - q[b];
        }
    }

    fn algebraic(&self, s: &StateView<'_>, out: &mut [f64]) {
        for i in 0..self.loads.len() {
            let v = s.x_bar[self.load_bus[i]];
            let (p, q) = self.load_model(i).absorbed_power(s.z_c[2 * i], s.z_c[2 * i + 1], &self.absorptions(i, v));
            out[2 * i] = s.y_bar[2 * i] - p;
            out[2 * i + 1] = s.y_bar[2 * i + 1] - q;
        }
        let n_y = self.dims().n_y;
        for (k, w) in self.injections.iter().enumerate() {
            let speed = s.y_bar[n_y + w.wind];
            let j = self.y_index_injection(k);
            out[j] = s.y_bar[j] - wind_power_injection(speed, &w.curve) / self.base_mva;
        }
    }

    fn algebraic_guess(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.dims().n_y);
        for l in &self.loads {
            y.push(l.characteristic.p0);
            y.push(l.characteristic.q0);
        }
        y.extend(std::iter::repeat_n(0.0, self.injections.len()));
        y
    }

    fn wind_references(&self) -> Vec<usize> {
        self.injections.iter().map(|w| w.wind).collect()
    }

    fn discrete_device_count(&self) -> usize {
        self.ltcs.len()
    }

    fn discrete_device_name(&self, i: usize) -> String {
        self.ltcs[i].name.clone()
    }

    fn initial_timers(&self, start: f64) -> Vec<f64> {
        self.ltcs.iter().map(|l| start + l.device.delay).collect()
    }

    fn discrete_update(
        &self,
        s: &StateView<'_>,
        now: f64,
        z_d: &mut [f64],
        timers: &mut [f64],
        log: &mut Vec<DiscreteEvent>,
    ) {
        for (k, spec) in self.ltcs.iter().enumerate() {
            let dev = LtcDevice { m: z_d[k], next_event_time: timers[k], ..spec.device };
            let out = ltc_step(&dev, s.x_bar[self.ltc_bus[k]], now);
            if out.m != dev.m {
                log.push(DiscreteEvent { tau: now, device: spec.name.clone(), old: dev.m, new: out.m });
            }
            z_d[k] = out.m;
            timers[k] = out.next_event_time;
        }
    }

    fn patched(&self, patch: &Disturbance) -> Result<Arc<dyn Subsystem>> {
        let mut next = self.clone();
        let unknown = || Error::param(format!("no parameter '{}' on '{}'", patch.param, patch.target));
        if let Some(b) = next.buses.iter_mut().find(|b| b.name == patch.target) {
            match patch.param.as_str() {
                "x_line" => b.x_line = patch.value,
                _ => return Err(unknown()),
            }
        } else if let Some(l) = next.loads.iter_mut().find(|l| l.name == patch.target) {
            match patch.param.as_str() {
                "p0" => l.characteristic.p0 = patch.value,
                "q0" => l.characteristic.q0 = patch.value,
                _ => return Err(unknown()),
            }
        } else if let Some(l) = next.ltcs.iter_mut().find(|l| l.name == patch.target) {
            match patch.param.as_str() {
                "v0" => l.device.v0 = patch.value,
                _ => return Err(unknown()),
            }
        } else {
            return Err(Error::param(format!("disturbance target '{}' not found", patch.target)));
        }
        let next =
            BusModel::new(next.base_mva, next.source_voltage, next.buses, next.loads, next.ltcs, next.injections)?;
        Ok(Arc::new(next))
    }
}
