//! Continuous algebraic Lyapunov equation `A L + L Aᵀ + D = 0`.
//!
//! Bartels-Stewart: reduce `A` to real Schur form, solve the quasi-triangular
//! equation block by block, and transform back.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::matrix_inf_norm;

/// Largest real part of the eigenvalues of a real quasi-triangular matrix.
fn quasi_triangular_max_real(t: &DMatrix<f64>, blocks: &[(usize, usize)]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &(k, size) in blocks {
        let re = if size == 1 {
            t[(k, k)]
        } else {
            let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
            let half_tr = 0.5 * (a + d);
            let disc = half_tr * half_tr - (a * d - b * c);
            if disc < 0.0 {
                half_tr
            } else {
                half_tr + disc.sqrt()
            }
        };
        worst = worst.max(re);
    }
    worst
}

fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let scale = matrix_inf_norm(t).max(f64::MIN_POSITIVE);
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < n {
        if k + 1 < n && t[(k + 1, k)].abs() > 1e-14 * scale {
            blocks.push((k, 2));
            k += 2;
        } else {
            blocks.push((k, 1));
            k += 1;
        }
    }
    blocks
}

/// Solve `A L + L Aᵀ + D = 0` for symmetric `D`. `A` must be Hurwitz.
///
/// The returned `L` is symmetrized and checked to be positive definite when
/// `D` is; a semidefinite `D` may legitimately give a singular `L`, so callers
/// that need definiteness should use [`solve_lyapunov_pd`].
pub fn solve_lyapunov(a: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension { what: "Lyapunov A (square)", expected: n, got: a.ncols() });
    }
    if d.shape() != (n, n) {
        return Err(Error::Dimension { what: "Lyapunov D", expected: n, got: d.nrows() });
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if a.iter().chain(d.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Lyapunov coefficients".into()));
    }
    let (u, t) = a.clone().schur().unpack();
    let blocks = diagonal_blocks(&t);
    let max_real = quasi_triangular_max_real(&t, &blocks);
    if !(max_real < 0.0) {
        return Err(Error::NotHurwitz { max_real });
    }
    // T Y + Y Tᵀ = C with C = -Uᵀ D U
    let c = -(u.transpose() * d * &u);
    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(i, p) in blocks.iter().rev() {
        for &(j, q) in blocks.iter().rev() {
            let mut rhs = c.view((i, j), (p, q)).into_owned();
            if i + p < n {
                rhs -= t.view((i, i + p), (p, n - i - p)) * y.view((i + p, j), (n - i - p, q));
            }
            if j + q < n {
                rhs -= y.view((i, j + q), (p, n - j - q)) * t.view((j, j + q), (q, n - j - q)).transpose();
            }
            let tii = t.view((i, i), (p, p)).into_owned();
            let tjj = t.view((j, j), (q, q)).into_owned();
            // (I_q ⊗ T_ii + T_jj ⊗ I_p) vec(Y_ij) = vec(rhs)
            let sys = DMatrix::<f64>::identity(q, q).kronecker(&tii) + tjj.kronecker(&DMatrix::<f64>::identity(p, p));
            let v = DVector::from_column_slice(rhs.as_slice());
            let sol = sys
                .lu()
                .solve(&v)
                .ok_or_else(|| Error::Singular { det: 0.0, context: "Lyapunov block system".into() })?;
            y.view_mut((i, j), (p, q)).copy_from_slice(sol.as_slice());
        }
    }
    let l = &u * y * u.transpose();
    Ok((&l + l.transpose()) * 0.5)
}

/// [`solve_lyapunov`] followed by a Cholesky definiteness check.
pub fn solve_lyapunov_pd(a: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = solve_lyapunov(a, d)?;
    if l.nrows() > 0 && l.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("Lyapunov solution".into()));
    }
    Ok(l)
}

/// `‖A L + L Aᵀ + D‖_∞`.
pub fn lyapunov_residual(a: &DMatrix<f64>, l: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    matrix_inf_norm(&(a * l + l * a.transpose() + d))
}

/// One implicit-Euler step of `ε L' = A L + L Aᵀ + D`.
///
/// Rearranged, the step is itself a Lyapunov equation with the shifted matrix
/// `A - ε/(2 dt) I` and forcing `D + (ε/dt) L_n`.
pub fn lyapunov_ode_step(
    a: &DMatrix<f64>,
    d: &DMatrix<f64>,
    l: &DMatrix<f64>,
    epsilon: f64,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let r = epsilon / dt;
    let shifted = a - DMatrix::<f64>::identity(n, n) * (0.5 * r);
    let forcing = d + l * r;
    solve_lyapunov(&shifted, &forcing)
}
