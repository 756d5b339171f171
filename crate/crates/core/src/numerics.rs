//! Newton iteration and finite-difference Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Analytic Jacobian callback for [`newton_solve`].
pub type JacobianFn<'a> = &'a dyn Fn(&[f64]) -> Result<DMatrix<f64>>;

/// Relative step used by every central-difference Jacobian in the crate.
pub const FD_REL_STEP: f64 = 1e-6;

pub fn fd_step(x: f64) -> f64 {
    FD_REL_STEP * x.abs().max(1.0)
}

/// Central-difference Jacobian of `f: R^n -> R^m`.
pub fn fd_jacobian<F>(mut f: F, x: &[f64], m: usize) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..n {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        f(&xp, &mut fp)?;
        xp[j] = x[j] - h;
        f(&xp, &mut fm)?;
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
}

pub fn matrix_inf_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows()).map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Determinant-based singularity test: `|det| <= tol * max(1, ||J||_inf)^n`.
///
/// The `max(1, .)` floor keeps the test meaningful for 1×1 and badly scaled
/// small systems, where the pure relative form can never fire.
pub fn is_near_singular(jac: &DMatrix<f64>, tol: f64) -> (bool, f64) {
    let n = jac.nrows();
    if n == 0 {
        return (false, 1.0);
    }
    let det = jac.clone().lu().determinant();
    let scale = matrix_inf_norm(jac).max(1.0).powi(n as i32);
    (!(det.abs() > tol * scale), det)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 25 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Newton's method with backtracking on the residual ∞-norm.
///
/// `jacobian` may be supplied; otherwise a central-difference Jacobian is used.
/// On a singular step matrix the error carries the determinant at the best
/// iterate, which callers use to tell a fold from plain non-convergence.
pub fn newton_solve<F>(
    mut residual: F,
    jacobian: Option<JacobianFn<'_>>,
    x0: &[f64],
    opts: NewtonOptions,
) -> Result<NewtonOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    if n == 0 {
        return Ok(NewtonOutcome { x, iterations: 0, residual: 0.0 });
    }
    residual(&x, &mut r)?;
    let mut rnorm = inf_norm(&r);
    let mut best = (x.clone(), rnorm);
    let mut trial = vec![0.0; n];
    let mut rt = vec![0.0; n];
    for iter in 0..opts.max_iter {
        if rnorm <= opts.tol {
            return Ok(NewtonOutcome { x, iterations: iter, residual: rnorm });
        }
        let jac = match jacobian {
            Some(j) => j(&x)?,
            None => fd_jacobian(&mut residual, &x, n)?,
        };
        let lu = jac.clone().lu();
        let step = match lu.solve(&DVector::from_column_slice(&r)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                return Err(Error::Singular {
                    det: lu.determinant(),
                    context: format!("Newton step matrix at iteration {iter}"),
                })
            }
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            for i in 0..n {
                trial[i] = x[i] - lambda * step[i];
            }
            if residual(&trial, &mut rt).is_ok() {
                let tn = inf_norm(&rt);
                if tn.is_finite() && tn < rnorm {
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // take the full step anyway; a line search cannot help a wrong basin
            for i in 0..n {
                trial[i] = x[i] - step[i];
            }
            residual(&trial, &mut rt)?;
        }
        x.copy_from_slice(&trial);
        r.copy_from_slice(&rt);
        rnorm = inf_norm(&r);
        if rnorm.is_finite() && rnorm < best.1 {
            best = (x.clone(), rnorm);
        }
    }
    if rnorm <= opts.tol {
        return Ok(NewtonOutcome { x, iterations: opts.max_iter, residual: rnorm });
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: best.1 })
}

/// Levenberg-Marquardt descent on `|r|²/2` from `x0`.
///
/// Returns the final iterate together with the singularity test of the
/// residual Jacobian there. When no root exists near `x0` the descent ends at
/// a stationary point with nonzero residual, where `Jᵀr = 0` forces `J` to be
/// singular. That is how a fold is told apart from a plain Newton failure.
pub fn least_squares_stationary<F>(
    residual: &F,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<(Vec<f64>, (bool, f64))>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    residual(&x, &mut r)?;
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut mu = 1e-3;
    let mut trial = vec![0.0; n];
    let mut rt = vec![0.0; n];
    for _ in 0..max_iter {
        let jac = fd_jacobian(|y: &[f64], out: &mut [f64]| residual(y, out), &x, n)?;
        let jt = jac.transpose();
        let grad = &jt * DVector::from_column_slice(&r);
        let jtj = &jt * &jac;
        let mut improved = false;
        for _ in 0..30 {
            let damped = &jtj + DMatrix::identity(n, n) * mu;
            let Some(step) = damped.lu().solve(&grad) else {
                mu *= 10.0;
                continue;
            };
            for i in 0..n {
                trial[i] = x[i] - step[i];
            }
            if residual(&trial, &mut rt).is_ok() {
                let c: f64 = rt.iter().map(|v| v * v).sum();
                if c.is_finite() && c < cost {
                    x.copy_from_slice(&trial);
                    r.copy_from_slice(&rt);
                    cost = c;
                    mu = (mu / 3.0).max(1e-300);
                    improved = true;
                    break;
                }
            }
            mu *= 2.0;
        }
        if !improved {
            break;
        }
    }
    let jac = fd_jacobian(|y: &[f64], out: &mut [f64]| residual(y, out), &x, n)?;
    Ok((x, is_near_singular(&jac, tol)))
}
