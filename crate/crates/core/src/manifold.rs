//! Slow manifolds, their first-order invariant correction, and the
//! concentration tube built around them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov;
use crate::model::{SlowFastState, SystemModel};
use crate::numerics::{self, inf_norm, NewtonOptions};
use crate::solver::Trajectory;

/// Eigenvalue real parts within this distance of zero count as marginal.
pub const MARGIN_TOL: f64 = 1e-6;

/// Default exploration weight on the device rows of the cross-section.
pub const DEFAULT_KAPPA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowManifoldPoint {
    pub z_c: Vec<f64>,
    pub z_d: Vec<f64>,
    pub stage: usize,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub stability: Stability,
    /// Largest real part among the fast Jacobian eigenvalues.
    pub eigen_margin: f64,
    /// Eigenvalues as `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
}

impl SlowManifoldPoint {
    /// The consistent state sitting on the manifold.
    pub fn state(&self, tau: f64) -> SlowFastState {
        SlowFastState {
            z_c: self.z_c.clone(),
            x_bar: self.x_star.clone(),
            y_bar: self.y_star.clone(),
            z_d: self.z_d.clone(),
            tau,
            stage: self.stage,
            timers: Vec::new(),
        }
    }
}

fn state_at(template: &SlowFastState, x_bar: &[f64]) -> SlowFastState {
    let mut s = template.clone();
    s.x_bar.copy_from_slice(x_bar);
    s
}

fn with_algebraics(model: &SystemModel, s: &mut SlowFastState, opts: NewtonOptions) -> Result<()> {
    s.y_bar = model.solve_algebraic(s, &s.y_bar, opts)?;
    Ok(())
}

fn classify(a: &DMatrix<f64>) -> (Stability, f64, Vec<(f64, f64)>) {
    if a.nrows() == 0 {
        return (Stability::Stable, f64::NEG_INFINITY, Vec::new());
    }
    let eig: Vec<(f64, f64)> = a.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
    let margin = eig.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let stability = if margin < -MARGIN_TOL {
        Stability::Stable
    } else if margin > MARGIN_TOL {
        Stability::Unstable
    } else {
        Stability::Marginal
    };
    (stability, margin, eig)
}

/// Solve `F(z_c, x̄, z_d) = 0` for `x̄` and classify the root.
///
/// `context` supplies the discrete state, the stage, and the starting guess
/// for the algebraic variables; its own `z_c` is replaced by `z_c`.
pub fn solve_slow_manifold(
    model: &SystemModel,
    z_c: &[f64],
    context: &SlowFastState,
    guess: &[f64],
    opts: NewtonOptions,
) -> Result<SlowManifoldPoint> {
    let mut template = context.clone();
    template.z_c = z_c.to_vec();
    model.check_state(&template)?;
    let n = model.dims.n_xbar();
    if guess.len() != n {
        return Err(Error::Dimension { what: "manifold guess", expected: n, got: guess.len() });
    }
    let residual = |x: &[f64], out: &mut [f64]| -> Result<()> {
        let mut s = state_at(&template, x);
        with_algebraics(model, &mut s, opts)?;
        out.copy_from_slice(&model.eval_fast_rhs(&s)?);
        Ok(())
    };
    let jacobian = |x: &[f64]| -> Result<DMatrix<f64>> {
        let mut s = state_at(&template, x);
        with_algebraics(model, &mut s, opts)?;
        model.fast_jacobian(&s)
    };
    let sol = numerics::newton_solve(residual, Some(&jacobian), guess, opts)?;
    let mut s = state_at(&template, &sol.x);
    with_algebraics(model, &mut s, opts)?;
    let a = model.fast_jacobian(&s)?;
    let (stability, eigen_margin, eigenvalues) = classify(&a);
    Ok(SlowManifoldPoint {
        z_c: s.z_c,
        z_d: s.z_d,
        stage: s.stage,
        x_star: s.x_bar,
        y_star: s.y_bar,
        stability,
        eigen_margin,
        eigenvalues,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointReport {
    pub z_c: Vec<f64>,
    pub point: Option<SlowManifoldPoint>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformStability {
    AllStable,
    NotStable,
    /// At least one grid point could not be solved.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub points: Vec<GridPointReport>,
    pub worst_margin: f64,
    pub overall: UniformStability,
}

/// Sweep a grid of slow states, continuing the root from point to point.
pub fn verify_uniform_stability(
    model: &SystemModel,
    z_c_grid: &[Vec<f64>],
    context: &SlowFastState,
    guess: &[f64],
    opts: NewtonOptions,
) -> Result<StabilityReport> {
    if z_c_grid.is_empty() {
        return Err(Error::param("stability grid is empty"));
    }
    let mut points = Vec::with_capacity(z_c_grid.len());
    let mut next_guess = guess.to_vec();
    let mut worst = f64::NEG_INFINITY;
    let mut unknown = false;
    let mut all_stable = true;
    for z in z_c_grid {
        match solve_slow_manifold(model, z, context, &next_guess, opts) {
            Ok(p) => {
                worst = worst.max(p.eigen_margin);
                all_stable &= p.stability == Stability::Stable;
                next_guess = p.x_star.clone();
                points.push(GridPointReport { z_c: z.clone(), point: Some(p), error: None });
            }
            Err(e) => {
                unknown = true;
                points.push(GridPointReport { z_c: z.clone(), point: None, error: Some(e.to_string()) });
            }
        }
    }
    let overall = if unknown {
        UniformStability::Unknown
    } else if all_stable {
        UniformStability::AllStable
    } else {
        UniformStability::NotStable
    };
    Ok(StabilityReport { points, worst_margin: worst, overall })
}

/// Pieces of the first-order invariant manifold at a root.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    /// `∂l₁/∂z_c` from implicit differentiation of `F = 0`.
    pub dl1_dz: DMatrix<f64>,
    /// `u = A⁻¹ (∂l₁/∂z_c) H_c`.
    pub u: Vec<f64>,
    /// `l₁* = l₁ + ε u`.
    pub l1_star: Vec<f64>,
}

pub fn correction_terms(model: &SystemModel, point: &SlowManifoldPoint) -> Result<Correction> {
    let s = point.state(0.0);
    let red = model.reduced_jacobians(&s)?;
    let lu = red.f_x.clone().lu();
    let singular = || Error::Singular { det: lu.determinant(), context: "fast Jacobian on the slow manifold".into() };
    let dl1_dz = -lu.solve(&red.f_z).ok_or_else(singular)?;
    let h = DVector::from_vec(model.eval_slow_rhs(&s)?);
    let u = lu.solve(&(&dl1_dz * h)).ok_or_else(singular)?;
    let eps = model.epsilon();
    let l1_star = point.x_star.iter().zip(u.iter()).map(|(x, du)| x + eps * du).collect();
    Ok(Correction { dl1_dz, u: u.iter().copied().collect(), l1_star })
}

/// First-order invariant manifold `l₁* = l₁ + ε u`.
pub fn invariant_manifold_correction(model: &SystemModel, point: &SlowManifoldPoint) -> Result<Vec<f64>> {
    Ok(correction_terms(model, point)?.l1_star)
}

/// `D = blockdiag(κ I_{n_x}, I_{n_w})`.
pub fn cross_section_forcing(n_x: usize, n_w: usize, kappa: f64) -> DMatrix<f64> {
    let mut d = DMatrix::identity(n_x + n_w, n_x + n_w);
    for i in 0..n_x {
        d[(i, i)] = kappa;
    }
    d
}

/// Quasi-static cross-section: Lyapunov solve with `A = ∂F/∂x̄` at `l₁*`.
pub fn solve_cross_section(
    model: &SystemModel,
    point: &SlowManifoldPoint,
    center: &[f64],
    kappa: f64,
    opts: NewtonOptions,
) -> Result<DMatrix<f64>> {
    if !(kappa > 0.0) {
        return Err(Error::param(format!("kappa must be > 0, got {kappa}")));
    }
    let mut s = point.state(0.0);
    s.x_bar.copy_from_slice(center);
    with_algebraics(model, &mut s, opts)?;
    let a = model.fast_jacobian(&s)?;
    let d = cross_section_forcing(model.dims.n_x, model.dims.n_w, kappa);
    lyapunov::solve_lyapunov_pd(&a, &d)
}

/// `ρ = sqrt((x̄ - c)ᵀ L⁻¹ (x̄ - c))`.
pub fn tube_distance(x_bar: &[f64], center: &[f64], l: &DMatrix<f64>) -> Result<f64> {
    let chol = l.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("tube cross-section".into()))?;
    Ok(distance_with(&chol, x_bar, center))
}

fn distance_with(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, x_bar: &[f64], center: &[f64]) -> f64 {
    if x_bar.is_empty() {
        return 0.0;
    }
    let dev = DVector::from_iterator(x_bar.len(), x_bar.iter().zip(center).map(|(x, c)| x - c));
    // ρ² = |L_c⁻¹ dev|² with L = L_c L_cᵀ
    let w = chol.l().solve_lower_triangular(&dev).expect("Cholesky factor is nonsingular");
    w.norm()
}

#[derive(Debug, Clone)]
pub struct TubeSample {
    pub tau: f64,
    pub z_c: Vec<f64>,
    pub center: Vec<f64>,
    pub cross_section: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl TubeSample {
    pub fn distance(&self, x_bar: &[f64]) -> f64 {
        distance_with(&self.chol, x_bar, &self.center)
    }
}

/// Tube samples along a trajectory, one per recorded state.
#[derive(Debug, Clone)]
pub struct Tube {
    pub samples: Vec<TubeSample>,
    pub h: f64,
    pub kappa: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeOptions {
    pub kappa: f64,
    /// Recompute the cross-section every this many samples.
    pub refresh: usize,
    pub newton: NewtonOptions,
}

impl Default for TubeOptions {
    fn default() -> Self {
        Self { kappa: DEFAULT_KAPPA, refresh: 10, newton: NewtonOptions::default() }
    }
}

impl Tube {
    /// Build the tube centred on `l₁*(z_c(τ))` along the slow path of `traj`.
    ///
    /// The centre is re-solved at every sample, continuing from the previous
    /// root. The cross-section is refreshed every `opts.refresh` samples and
    /// whenever the discrete state changes.
    pub fn along(model: &SystemModel, traj: &Trajectory, h: f64, opts: TubeOptions) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::param(format!("tube depth h must be > 0, got {h}")));
        }
        if opts.refresh == 0 {
            return Err(Error::param("tube refresh interval must be >= 1"));
        }
        let mut samples: Vec<TubeSample> = Vec::with_capacity(traj.len());
        let mut guess: Option<Vec<f64>> = None;
        let mut since_refresh = 0usize;
        let mut last_key: Option<(usize, Vec<f64>)> = None;
        for s in &traj.states {
            let g = guess.clone().unwrap_or_else(|| s.x_bar.clone());
            let point = solve_slow_manifold(model, &s.z_c, s, &g, opts.newton)?;
            guess = Some(point.x_star.clone());
            let center = invariant_manifold_correction(model, &point)?;
            let key = (s.stage, s.z_d.clone());
            let stale = last_key.as_ref() != Some(&key) || since_refresh >= opts.refresh;
            let (cross_section, chol) = match samples.last() {
                Some(prev) if !stale => (prev.cross_section.clone(), prev.chol.clone()),
                _ => {
                    since_refresh = 0;
                    let l = solve_cross_section(model, &point, &center, opts.kappa, opts.newton)?;
                    let chol =
                        l.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("tube cross-section".into()))?;
                    (l, chol)
                }
            };
            since_refresh += 1;
            last_key = Some(key);
            samples.push(TubeSample { tau: s.tau, z_c: s.z_c.clone(), center, cross_section, chol });
        }
        Ok(Self { samples, h, kappa: opts.kappa, epsilon: model.epsilon() })
    }

    /// Sample whose time is closest to `tau`.
    pub fn sample_at(&self, tau: f64) -> Option<&TubeSample> {
        let idx = self.samples.partition_point(|s| s.tau < tau);
        let candidates = [idx.checked_sub(1), Some(idx)];
        candidates
            .iter()
            .flatten()
            .filter_map(|&i| self.samples.get(i))
            .min_by(|a, b| (a.tau - tau).abs().total_cmp(&(b.tau - tau).abs()))
    }

    pub fn in_tube(&self, state: &SlowFastState) -> Option<bool> {
        self.sample_at(state.tau).map(|s| s.distance(&state.x_bar) < self.h)
    }

    /// Per-sample distances of a trajectory recorded on the same grid.
    pub fn distances(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        if traj.len() != self.samples.len() {
            return Err(Error::Dimension {
                what: "tube samples vs trajectory",
                expected: self.samples.len(),
                got: traj.len(),
            });
        }
        Ok(self.samples.iter().zip(&traj.states).map(|(t, s)| t.distance(&s.x_bar)).collect())
    }
}

/// Residual of the invariance equation `ε (∂l₁*/∂z_c) H_c(z_c, l₁*) - F(z_c, l₁*)`
/// at a slow state, with `∂l₁*/∂z_c` by central differences.
pub fn invariance_residual(
    model: &SystemModel,
    z_c: &[f64],
    context: &SlowFastState,
    opts: NewtonOptions,
) -> Result<f64> {
    let star = |z: &[f64]| -> Result<Vec<f64>> {
        let p = solve_slow_manifold(model, z, context, &context.x_bar, opts)?;
        invariant_manifold_correction(model, &p)
    };
    let center = star(z_c)?;
    let n = center.len();
    let jac = numerics::fd_jacobian(
        |z: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&star(z)?);
            Ok(())
        },
        z_c,
        n,
    )?;
    let mut s = context.clone();
    s.z_c = z_c.to_vec();
    s.x_bar = center;
    with_algebraics(model, &mut s, opts)?;
    let h = DVector::from_vec(model.eval_slow_rhs(&s)?);
    let f = model.eval_fast_rhs(&s)?;
    let lhs = jac * h * model.epsilon();
    let r: Vec<f64> = lhs.iter().zip(&f).map(|(a, b)| a - b).collect();
    Ok(inf_norm(&r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBoundParams {
    pub c: f64,
    pub n_zc: usize,
    pub n_x: usize,
    pub epsilon: f64,
    pub sigma: f64,
}

fn log_bound_unclamped(h: f64, p: &TheoremBoundParams, tau: f64) -> f64 {
    let coef = p.c.powi(p.n_zc as i32) + h.powi(-(p.n_x as i32));
    coef.ln() + (tau / (p.epsilon * p.epsilon)).ln_1p() - h * h / (2.0 * p.sigma * p.sigma)
}

/// `min(1, [C^{n_zc} + h^{-n_x}] (1 + τ/ε²) exp(-h²/(2σ²)))`.
pub fn theorem_bound(h: f64, p: &TheoremBoundParams, tau: f64) -> f64 {
    log_bound_unclamped(h, p, tau).exp().min(1.0)
}

/// Least-squares fit of `C` to observed exit fractions on the log scale.
///
/// Only fractions strictly inside (0, 1) are used. Returns `None` when the
/// constant cannot be identified (no slow states or no usable points).
pub fn fit_bound_constant(
    observations: &[(f64, f64)],
    n_zc: usize,
    n_x: usize,
    epsilon: f64,
    sigma: f64,
    tau: f64,
) -> Option<f64> {
    let pts: Vec<(f64, f64)> = observations.iter().copied().filter(|&(_, f)| f > 0.0 && f < 1.0).collect();
    if n_zc == 0 || pts.is_empty() || !(sigma > 0.0) {
        return None;
    }
    let sse = |log_c: f64| -> f64 {
        let p = TheoremBoundParams { c: log_c.exp(), n_zc, n_x, epsilon, sigma };
        pts.iter().map(|&(h, f)| (f.ln() - log_bound_unclamped(h, &p, tau)).powi(2)).sum()
    };
    // coarse scan, then golden-section refinement around the best cell
    let (lo, hi, cells) = (-60.0f64, 60.0f64, 480);
    let step = (hi - lo) / cells as f64;
    let best = (0..=cells).map(|i| lo + i as f64 * step).min_by(|a, b| sse(*a).total_cmp(&sse(*b)))?;
    let (mut a, mut b) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c1 = b - g * (b - a);
        let c2 = a + g * (b - a);
        if sse(c1) < sse(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    Some((0.5 * (a + b)).exp())
}
