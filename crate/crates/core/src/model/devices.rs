//! Device models: exponential-recovery load, load tap changer, wind power curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static/transient voltage characteristic `p0·v^a`, `q0·v^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageCharacteristic {
    pub p0: f64,
    pub q0: f64,
    pub alpha_s: f64,
    pub alpha_t: f64,
    pub beta_s: f64,
    pub beta_t: f64,
}

impl VoltageCharacteristic {
    pub fn static_power(&self, v: f64) -> (f64, f64) {
        (self.p0 * v.powf(self.alpha_s), self.q0 * v.powf(self.beta_s))
    }

    pub fn transient_power(&self, v: f64) -> (f64, f64) {
        (self.p0 * v.powf(self.alpha_t), self.q0 * v.powf(self.beta_t))
    }
}

/// Generic exponential-recovery load.
///
/// Internal states `x_p, x_q` obey `x' = -x/T + s - t`, and the absorbed
/// power is `p = x_p/T_p + p_t`, `q = x_q/T_q + q_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryLoad {
    pub t_p: f64,
    pub t_q: f64,
}

/// Static and transient absorptions at the current voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorptions {
    pub p_s: f64,
    pub q_s: f64,
    pub p_t: f64,
    pub q_t: f64,
}

impl RecoveryLoad {
    pub fn new(t_p: f64, t_q: f64) -> Result<Self> {
        let l = Self { t_p, t_q };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_p > 0.0) {
            return Err(Error::param(format!("T_p must be > 0, got {}", self.t_p)));
        }
        if !(self.t_q > 0.0) {
            return Err(Error::param(format!("T_q must be > 0, got {}", self.t_q)));
        }
        Ok(())
    }

    pub fn state_derivative(&self, x_p: f64, x_q: f64, a: &Absorptions) -> (f64, f64) {
        (-x_p / self.t_p + a.p_s - a.p_t, -x_q / self.t_q + a.q_s - a.q_t)
    }

    pub fn absorbed_power(&self, x_p: f64, x_q: f64, a: &Absorptions) -> (f64, f64) {
        (x_p / self.t_p + a.p_t, x_q / self.t_q + a.q_t)
    }

    /// Unique equilibrium of the internal states for fixed absorptions.
    pub fn equilibrium(&self, a: &Absorptions) -> (f64, f64) {
        (self.t_p * (a.p_s - a.p_t), self.t_q * (a.q_s - a.q_t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtcDevice {
    /// Current tap ratio (p.u.).
    pub m: f64,
    pub delta_m: f64,
    pub m_min: f64,
    pub m_max: f64,
    /// Reference voltage (p.u.).
    pub v0: f64,
    /// Half dead-band (p.u.).
    pub d: f64,
    /// Inter-tap delay (τ units).
    pub delay: f64,
    #[serde(default)]
    pub next_event_time: f64,
}

impl LtcDevice {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.delta_m > 0.0) {
            errs.push(format!("delta_m must be > 0, got {}", self.delta_m));
        }
        if !(self.d >= 0.0) {
            errs.push(format!("dead-band d must be >= 0, got {}", self.d));
        }
        if !(self.m_min <= self.m && self.m <= self.m_max) {
            errs.push(format!("tap m = {} outside [{}, {}]", self.m, self.m_min, self.m_max));
        }
        if !(self.delay > 0.0) {
            errs.push(format!("delay must be > 0, got {}", self.delay));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Tap-changing logic at time `now` for controlled voltage `v`.
///
/// Before the device is due nothing changes. When due, the tap moves one step
/// up (voltage above the band) or down (below the band) unless at its limit,
/// and the timer advances by one delay. A step that would land within
/// `1e-9·Δm` of a limit snaps to the limit, so the limit is reached exactly.
pub fn ltc_step(ltc: &LtcDevice, v: f64, now: f64) -> LtcDevice {
    if now < ltc.next_event_time {
        return *ltc;
    }
    let mut out = *ltc;
    let snap = 1e-9 * ltc.delta_m;
    if v > ltc.v0 + ltc.d && ltc.m < ltc.m_max {
        let m = ltc.m + ltc.delta_m;
        out.m = if m >= ltc.m_max - snap { ltc.m_max } else { m };
    } else if v < ltc.v0 - ltc.d && ltc.m > ltc.m_min {
        let m = ltc.m - ltc.delta_m;
        out.m = if m <= ltc.m_min + snap { ltc.m_min } else { m };
    }
    out.next_event_time = ltc.next_event_time + ltc.delay;
    if out.next_event_time <= now {
        out.next_event_time = now + ltc.delay;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindInjection {
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
    /// Rated power (MW).
    pub rated_power: f64,
}

impl WindInjection {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.cut_in && self.cut_in < self.rated_speed && self.rated_speed < self.cut_out) {
            return Err(Error::param(format!(
                "wind injection needs 0 <= cut_in < rated_speed < cut_out, got {} / {} / {}",
                self.cut_in, self.rated_speed, self.cut_out
            )));
        }
        if !(self.rated_power >= 0.0) {
            return Err(Error::param(format!("rated_power must be >= 0, got {}", self.rated_power)));
        }
        Ok(())
    }
}

/// Power curve: cubic between cut-in and rated speed, flat to cut-out (MW).
pub fn wind_power_injection(speed: f64, inj: &WindInjection) -> f64 {
    if speed < inj.cut_in || speed > inj.cut_out {
        0.0
    } else if speed >= inj.rated_speed {
        inj.rated_power
    } else {
        let ci3 = inj.cut_in.powi(3);
        inj.rated_power * (speed.powi(3) - ci3) / (inj.rated_speed.powi(3) - ci3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ltc() -> LtcDevice {
        LtcDevice { m: 1.0, delta_m: 0.01, m_min: 0.9, m_max: 1.1, v0: 1.0, d: 0.02, delay: 1.0, next_event_time: 0.0 }
    }

    #[test]
    fn recovery_load_rates() {
        let load = RecoveryLoad::new(60.0, 60.0).unwrap();
        let a = Absorptions { p_s: 1.0, q_s: 0.0, p_t: 0.5, q_t: 0.0 };
        assert_eq!(load.state_derivative(0.0, 0.0, &a).0, 0.5);
        let (xp, xq) = load.equilibrium(&a);
        assert_eq!(load.state_derivative(xp, xq, &a), (0.0, 0.0));
        assert!(RecoveryLoad::new(-1.0, 1.0).unwrap_err().to_string().contains("T_p must be > 0"));
    }

    #[test]
    fn recovery_equilibrium_restores_static_power() {
        let load = RecoveryLoad::new(37.0, 11.0).unwrap();
        let a = Absorptions { p_s: 0.83, q_s: 0.21, p_t: 0.61, q_t: 0.35 };
        let (xp, xq) = load.equilibrium(&a);
        let (p, q) = load.absorbed_power(xp, xq, &a);
        assert!((p - a.p_s).abs() <= 1e-10);
        assert!((q - a.q_s).abs() <= 1e-10);
    }

    #[test]
    fn ltc_raises_above_band() {
        assert_eq!(ltc_step(&ltc(), 1.06, 0.0).m, 1.01);
    }

    #[test]
    fn ltc_holds_in_band() {
        let out = ltc_step(&ltc(), 1.01, 0.0);
        assert_eq!(out.m, 1.0);
        assert_eq!(out.next_event_time, 1.0);
    }

    #[test]
    fn ltc_respects_upper_limit() {
        let at_max = LtcDevice { m: 1.1, ..ltc() };
        assert_eq!(ltc_step(&at_max, 1.06, 0.0).m, 1.1);
        let at_min = LtcDevice { m: 0.9, ..ltc() };
        assert_eq!(ltc_step(&at_min, 0.9, 0.0).m, 0.9);
        assert_eq!(ltc_step(&ltc(), 0.97, 0.0).m, 0.99);
    }

    #[test]
    fn ltc_waits_for_timer() {
        let pending = LtcDevice { next_event_time: 5.0, ..ltc() };
        assert_eq!(ltc_step(&pending, 1.2, 4.999), pending);
    }

    #[test]
    fn ltc_saturates_exactly() {
        let mut dev = ltc();
        let expected = ((dev.m_max - dev.m) / dev.delta_m - 1e-9).ceil() as usize;
        let mut events = 0;
        let mut now = 0.0;
        while dev.m < dev.m_max {
            dev = ltc_step(&dev, 1.5, now);
            now += dev.delay;
            events += 1;
            assert!(dev.m <= dev.m_max);
        }
        assert_eq!(dev.m, dev.m_max);
        assert_eq!(events, expected);
        for _ in 0..5 {
            dev = ltc_step(&dev, 1.5, now);
            now += dev.delay;
        }
        assert_eq!(dev.m, dev.m_max);
    }

    #[test]
    fn power_curve() {
        let inj = WindInjection { cut_in: 3.0, rated_speed: 12.0, cut_out: 25.0, rated_power: 2.0 };
        assert_eq!(wind_power_injection(0.0, &inj), 0.0);
        assert_eq!(wind_power_injection(12.0, &inj), 2.0);
        assert_eq!(wind_power_injection(30.0, &inj), 0.0);
        let p = wind_power_injection(7.5, &inj);
        assert!((p - 2.0 * (7.5f64.powi(3) - 27.0) / (12.0f64.powi(3) - 27.0)).abs() < 1e-15);
        // midpoint oracle: integrate the derivative 3v²·P/(v_r³ - v_ci³) from cut-in
        let n = 20_000;
        let h = (7.5 - 3.0) / n as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let v = 3.0 + (i as f64 + 0.5) * h;
                3.0 * v * v * 2.0 / (12.0f64.powi(3) - 27.0) * h
            })
            .sum();
        assert!((p - integral).abs() < 1e-8);
        assert!((p - 0.464286).abs() < 1e-6);
    }
}
