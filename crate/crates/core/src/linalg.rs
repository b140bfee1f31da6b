//! Small dense linear-algebra kernels shared by the algebra, recombination,
//! and oracle layers: matrix exponential and principal logarithm, operator
//! norms, and SVD-based nullspaces.
//!
//! Everything here targets matrices of dimension ≤ ~12, so simple dense
//! algorithms win over sophistication.

use nalgebra::{ComplexField, DMatrix, DVector};
use thiserror::Error;

pub type Complex64 = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Squaring kicks in above this norm; below it the Taylor series alone
/// converges fast enough.
const EXPM_SQUARING_THRESHOLD: f64 = 0.5;
/// Relative truncation tolerance for the exponential Taylor series.
const EXPM_SERIES_TOL: f64 = 1e-16;
const EXPM_MAX_TERMS: usize = 40;

#[derive(Debug, Error)]
pub enum LogmError {
    #[error("matrix has eigenvalue {re}{im:+}i on the closed negative real axis; principal logarithm undefined")]
    NegativeRealEigenvalue { re: f64, im: f64 },
    #[error("matrix is singular; logarithm undefined")]
    Singular,
    #[error("inverse square-root iteration failed to converge")]
    SqrtDiverged,
}

/// Maximum absolute row sum.
pub fn inf_norm<T>(a: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    a.row_iter()
        .map(|row| row.iter().map(|x| x.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn one_norm<T>(a: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    a.column_iter()
        .map(|col| col.iter().map(|x| x.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling-and-squaring with a truncated Taylor series.
///
/// The argument is halved until its norm drops below 0.5, the series is summed
/// to relative tolerance 1e-16, and the result is squared back up. Adequate
/// and fast for the ≤ 6-dimensional matrices used throughout.
pub fn expm<T>(a: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    let norm = inf_norm(a);
    let squarings = if norm > EXPM_SQUARING_THRESHOLD {
        (norm / EXPM_SQUARING_THRESHOLD).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.map(|x| x.unscale((2.0f64).powi(squarings as i32)));

    let mut result = DMatrix::<T>::identity(n, n);
    let mut term = DMatrix::<T>::identity(n, n);
    for k in 1..=EXPM_MAX_TERMS {
        term = (&term * &scaled).map(|x| x.unscale(k as f64));
        result += &term;
        if inf_norm(&term) <= EXPM_SERIES_TOL * inf_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Eigenvalues of a real matrix with a bounded QR iteration; `None` when the
/// Schur decomposition does not settle within `max_niter` sweeps (the
/// unbounded nalgebra entry point can cycle forever on defective matrices, so
/// everything here goes through this guard).
pub fn try_eigenvalues_real(m: &DMatrix<f64>, max_niter: usize) -> Option<Vec<Complex64>> {
    nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, max_niter).map(|schur| {
        schur
            .complex_eigenvalues()
            .iter()
            .map(|z| Complex64::new(z.re, z.im))
            .collect()
    })
}

/// Eigenvalues of a complex matrix, computed through the real 2d x 2d
/// embedding [[Re, -Im], [Im, Re]] whose spectrum is eig(U) together with its
/// conjugates. The returned 2d values are conjugation-symmetric. `None` when
/// the bounded QR iteration does not converge.
pub fn try_eigenvalues_complex(u: &CMatrix, max_niter: usize) -> Option<Vec<Complex64>> {
    let d = u.nrows();
    let mut embed = DMatrix::<f64>::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let z = u[(i, j)];
            embed[(i, j)] = z.re;
            embed[(i, j + d)] = -z.im;
            embed[(i + d, j)] = z.im;
            embed[(i + d, j + d)] = z.re;
        }
    }
    try_eigenvalues_real(&embed, max_niter)
}

/// Principal square root by the Denman-Beavers iteration.
fn sqrtm_denman_beavers(a: &CMatrix) -> Result<CMatrix, LogmError> {
    let mut y = a.clone();
    let mut z = CMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..60 {
        let y_inv = y.clone().try_inverse().ok_or(LogmError::Singular)?;
        let z_inv = z.clone().try_inverse().ok_or(LogmError::Singular)?;
        let y_next = (&y + &z_inv).map(|x| x.unscale(2.0));
        let z_next = (&z + &y_inv).map(|x| x.unscale(2.0));
        let delta = inf_norm(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * inf_norm(&y).max(1e-300) {
            return Ok(y);
        }
    }
    Err(LogmError::SqrtDiverged)
}

/// Principal matrix logarithm by inverse scaling-and-squaring.
///
/// Denman-Beavers square roots are taken until the iterate is within 0.25 of
/// the identity, then log(I + X) = 2 atanh(X (2I + X)^-1) is summed.
pub fn logm_principal(u: &CMatrix) -> Result<CMatrix, LogmError> {
    let d = u.nrows();
    assert_eq!(d, u.ncols(), "logm requires a square matrix");

    // Branch precheck; when the bounded QR iteration does not converge the
    // square-root iteration below still catches pathological inputs.
    if let Some(eigenvalues) = try_eigenvalues_complex(u, 50_000) {
        for lambda in eigenvalues {
            let modulus = lambda.norm();
            if modulus < 1e-14 {
                return Err(LogmError::Singular);
            }
            if lambda.re < 0.0 && lambda.im.abs() <= 1e-12 * modulus {
                return Err(LogmError::NegativeRealEigenvalue {
                    re: lambda.re,
                    im: lambda.im,
                });
            }
        }
    }

    let identity = CMatrix::identity(d, d);
    let mut y = u.clone();
    let mut halvings = 0u32;
    while inf_norm(&(&y - &identity)) > 0.25 {
        if halvings >= 40 {
            return Err(LogmError::SqrtDiverged);
        }
        y = sqrtm_denman_beavers(&y)?;
        halvings += 1;
    }

    // log(I + X) = 2 atanh(W) with W = X (2I + X)^-1; ||W|| <= ~0.13 here so
    // the odd series converges in a handful of terms.
    let x = &y - &identity;
    let denom = (identity.map(|v| v.scale(2.0)) + &x)
        .try_inverse()
        .ok_or(LogmError::Singular)?;
    let w = &x * &denom;
    let w2 = &w * &w;
    let mut sum = w.clone();
    let mut term = w;
    for j in (3..=61).step_by(2) {
        term = &term * &w2;
        let contribution = term.map(|v| v.unscale(j as f64));
        sum += &contribution;
        if inf_norm(&contribution) <= 1e-18 * inf_norm(&sum).max(1e-300) {
            break;
        }
    }
    Ok(sum.map(|v| v.scale((2.0f64).powi(halvings as i32 + 1))))
}

/// Operator (spectral) norm via the Hermitian eigenproblem of A^H A.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let h = m.adjoint() * m;
    let eig = h.symmetric_eigen();
    eig.eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v))
        .max(0.0)
        .sqrt()
}

/// Orthonormal basis of the (numerical) nullspace of a real matrix: right
/// singular vectors whose singular value falls below `tol * max(1, sigma_max)`.
pub fn nullspace(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("SVD with V requested");
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
    let threshold = tol * sigma_max.max(1.0);
    let mut basis = Vec::new();
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= threshold {
            basis.push(v_t.row(i).transpose());
        }
    }
    // Singular values only cover min(nrows, ncols); remaining rows of V^T span
    // directions annihilated for rank reasons.
    for i in svd.singular_values.len()..v_t.nrows() {
        basis.push(v_t.row(i).transpose());
    }
    basis
}

/// 1-norm condition number through the explicit inverse; infinite when
/// singular. Only used for diagnostics on matrices of dimension <= 6.
pub fn condition_1norm(m: &DMatrix<f64>) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) => one_norm(m) * one_norm(&inv),
        None => f64::INFINITY,
    }
}

/// Real matrices promoted to complex entries.
pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}
