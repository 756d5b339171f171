//! Autocorrelated wind-speed synthesis.
//!
//! A stationary Ornstein–Uhlenbeck process `dη = -α η dt + β dW` supplies the
//! correlation structure, and a memoryless map `F_w⁻¹(Φ(η / sd))` gives the
//! marginal distribution of the speed. The normalization by the stationary
//! standard deviation `β/√(2α)` makes the speed statistics independent of β.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Upper/lower clamp applied to Gaussian probabilities before inversion.
pub const PROBABILITY_CLAMP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Mean-reversion rate (1/s).
    pub alpha: f64,
    /// Diffusion amplitude.
    pub beta: f64,
}

impl OuParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("OU alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param(format!("OU beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn stationary_variance(&self) -> f64 {
        self.beta * self.beta / (2.0 * self.alpha)
    }

    pub fn stationary_sd(&self) -> f64 {
        self.beta / (2.0 * self.alpha).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub k: f64,
    pub lambda: f64,
}

impl WeibullParams {
    pub fn new(k: f64, lambda: f64) -> Result<Self> {
        let w = Self { k, lambda };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::param(format!("Weibull k must be > 0, got {}", self.k)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("Weibull lambda must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            -(-(u / self.lambda).powf(self.k)).exp_m1()
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        let r = u / self.lambda;
        (self.k / self.lambda) * r.powf(self.k - 1.0) * (-r.powf(self.k)).exp()
    }

    /// Inverse CDF written in terms of the survival probability `1 - p`.
    pub fn quantile_from_survival(&self, survival: f64) -> f64 {
        self.lambda * (-survival.ln()).powf(1.0 / self.k)
    }

    pub fn mean(&self) -> f64 {
        self.lambda * libm::tgamma(1.0 + 1.0 / self.k)
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.lambda * self.lambda * libm::tgamma(1.0 + 2.0 / self.k) - mu * mu
    }

    pub fn median(&self) -> f64 {
        self.lambda * std::f64::consts::LN_2.powf(1.0 / self.k)
    }
}

/// Marginal distribution of the generated speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetDistribution {
    Weibull(WeibullParams),
    /// Rayleigh with scale `s`, i.e. Weibull with `k = 2`, `λ = s·√2`.
    Rayleigh {
        scale: f64,
    },
}

impl TargetDistribution {
    pub fn as_weibull(&self) -> Result<WeibullParams> {
        match *self {
            TargetDistribution::Weibull(w) => {
                w.validate()?;
                Ok(w)
            }
            TargetDistribution::Rayleigh { scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::param(format!("Rayleigh scale must be > 0, got {scale}")));
                }
                WeibullParams::new(2.0, scale * std::f64::consts::SQRT_2)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.as_weibull().map(|_| ())
    }
}

impl From<WeibullParams> for TargetDistribution {
    fn from(w: WeibullParams) -> Self {
        TargetDistribution::Weibull(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSourceSpec {
    #[serde(default)]
    pub name: String,
    pub ou: OuParams,
    pub target: TargetDistribution,
    #[serde(default)]
    pub seed_offset: u64,
}

impl WindSourceSpec {
    pub fn validate(&self) -> Result<()> {
        self.ou.validate()?;
        self.target.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindSeries {
    pub dt: f64,
    pub values: Vec<f64>,
    pub eta_values: Vec<f64>,
}

impl WindSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.dt)
    }
}

/// Draw the latent state from the stationary law `N(0, β²/2α)`.
pub fn ou_stationary_init(p: &OuParams, rng: &mut RngStream) -> Result<f64> {
    p.validate()?;
    let z = rng.standard_normal();
    if p.beta == 0.0 {
        return Ok(0.0);
    }
    Ok(p.stationary_sd() * z)
}

/// Exact one-step transition of the OU process over `dt`.
pub fn ou_step_exact(eta: f64, dt: f64, p: &OuParams, rng: &mut RngStream) -> Result<f64> {
    p.validate()?;
    if !(dt > 0.0) {
        return Err(Error::param(format!("dt must be > 0, got {dt}")));
    }
    let z = rng.standard_normal();
    let decay = (-p.alpha * dt).exp();
    if p.beta == 0.0 {
        return Ok(eta * decay);
    }
    // 1 - e^{-2αdt} via expm1 keeps precision for small steps
    let var = p.stationary_variance() * -(-2.0 * p.alpha * dt).exp_m1();
    Ok(eta * decay + var.sqrt() * z)
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn standard_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

pub fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gaussian CDF `Φ((u - mean)/√var)`.
pub fn gaussian_cdf(u: f64, mean: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::param(format!("variance must be > 0, got {var}")));
    }
    Ok(standard_normal_cdf((u - mean) / var.sqrt()))
}

pub fn weibull_inverse_cdf(p: f64, w: &WeibullParams) -> Result<f64> {
    w.validate()?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must lie in [0, 1), got {p}")));
    }
    // 1 - p is exact for p < 1 only up to rounding; ln_1p keeps small p accurate
    Ok(w.lambda * (-(-p).ln_1p()).powf(1.0 / w.k))
}

fn normalized_latent(eta: f64, p: &OuParams) -> Result<f64> {
    p.validate()?;
    if p.beta == 0.0 {
        if eta == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Domain(format!("degenerate normalization: beta = 0 with latent state {eta}")));
    }
    Ok((eta / p.beta) * (2.0 * p.alpha).sqrt())
}

fn clamp_probability(q: f64) -> f64 {
    q.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
}

/// Map a latent OU value to a speed with the target marginal.
pub fn memoryless_transform(eta: f64, p: &OuParams, target: &TargetDistribution) -> Result<f64> {
    let w = target.as_weibull()?;
    let u = normalized_latent(eta, p)?;
    // Φ(u) enters only through its complement, computed without cancellation
    let survival = clamp_probability(standard_normal_sf(u));
    Ok(w.quantile_from_survival(survival))
}

/// Derivative of [`memoryless_transform`] with respect to `eta`.
///
/// Zero where the probability clamp is active and when `beta = 0` (the map is
/// then constant on its domain `{0}`).
pub fn memoryless_derivative(eta: f64, p: &OuParams, target: &TargetDistribution) -> Result<f64> {
    let w = target.as_weibull()?;
    if p.beta == 0.0 {
        normalized_latent(eta, p)?;
        return Ok(0.0);
    }
    let u = normalized_latent(eta, p)?;
    let raw = standard_normal_sf(u);
    if raw <= PROBABILITY_CLAMP || raw >= 1.0 - PROBABILITY_CLAMP {
        return Ok(0.0);
    }
    let speed = w.quantile_from_survival(raw);
    let density = w.pdf(speed);
    if density <= 0.0 {
        return Ok(0.0);
    }
    Ok(standard_normal_pdf(u) / density * (2.0 * p.alpha).sqrt() / p.beta)
}

pub fn generate_wind_series(spec: &WindSourceSpec, horizon: f64, dt: f64, rng: &mut RngStream) -> Result<WindSeries> {
    spec.validate()?;
    if !(dt > 0.0) || !(horizon >= dt) {
        return Err(Error::param(format!("need horizon >= dt > 0, got horizon = {horizon}, dt = {dt}")));
    }
    let steps = (horizon / dt * (1.0 + 1e-12)).floor() as usize;
    let mut eta_values = Vec::with_capacity(steps + 1);
    let mut eta = ou_stationary_init(&spec.ou, rng)?;
    eta_values.push(eta);
    for _ in 0..steps {
        eta = ou_step_exact(eta, dt, &spec.ou, rng)?;
        eta_values.push(eta);
    }
    let values =
        eta_values.iter().map(|&e| memoryless_transform(e, &spec.ou, &spec.target)).collect::<Result<Vec<_>>>()?;
    Ok(WindSeries { dt, values, eta_values })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    /// Unbiased (n - 1) sample variance.
    pub variance: f64,
}

pub fn estimate_moments(values: &[f64]) -> Result<Moments> {
    if values.len() < 2 {
        return Err(Error::Estimation(format!("need at least 2 samples, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(Moments { mean, variance: ss / (n - 1.0) })
}

/// Sample correlogram `r_0..=r_max_lag` (mean-removed, biased normalization).
///
/// A series with zero variance has a correlogram of all ones.
pub fn estimate_autocorrelation(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 || values.len() < 10 * max_lag {
        return Err(Error::Estimation(format!(
            "series length {} is shorter than 10 x max_lag ({max_lag})",
            values.len()
        )));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Ok(vec![1.0; max_lag + 1]);
    }
    Ok((0..=max_lag)
        .map(|lag| {
            let ck: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
            ck / c0
        })
        .collect())
}

/// Average the correlograms of independent realizations.
pub fn estimate_autocorrelation_ensemble(series: &[&[f64]], max_lag: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Estimation("no series supplied".into()));
    }
    let mut acc = vec![0.0; max_lag + 1];
    for s in series {
        let r = estimate_autocorrelation(s, max_lag)?;
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let m = series.len() as f64;
    Ok(acc.into_iter().map(|a| a / m).collect())
}

/// Least-squares fit of `ln r_k = c - α·k·dt` over the leading positive entries.
pub fn fit_decay_rate(correlogram: &[f64], dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::param(format!("dt must be > 0, got {dt}")));
    }
    let points: Vec<(f64, f64)> =
        correlogram.iter().enumerate().take_while(|(_, &r)| r > 0.0).map(|(k, &r)| (k as f64 * dt, r.ln())).collect();
    if points.len() < 2 {
        return Err(Error::Estimation("fewer than two positive correlogram entries".into()));
    }
    let (slope, _) =
        crate::stats::linear_fit(&points).ok_or_else(|| Error::Estimation("degenerate correlogram fit".into()))?;
    Ok(-slope)
}
