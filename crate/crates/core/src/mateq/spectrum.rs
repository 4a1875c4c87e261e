use nalgebra::{Complex, DMatrix};

use super::MatEqError;
use crate::Scalar;

/// Margin below zero an eigenvalue's real part must clear to count as stable.
pub const HURWITZ_TOL: f64 = 1e-9;

const SCHUR_MAX_ITER: usize = 10_000;

fn eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>, MatEqError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(MatEqError::Dimension {
            what: "square matrix",
            expected: (m.nrows().max(1), m.nrows().max(1)),
            got: m.shape(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(MatEqError::EigenFailure);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), T::default_epsilon(), SCHUR_MAX_ITER)
        .ok_or(MatEqError::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa<T: Scalar>(m: &DMatrix<T>) -> Result<T, MatEqError> {
    let eig = eigenvalues(m)?;
    eig.iter().map(|z| z.re).reduce(|a, b| a.max(b)).ok_or(MatEqError::EigenFailure)
}

/// True iff every eigenvalue has real part below `−HURWITZ_TOL`.
pub fn is_hurwitz<T: Scalar>(m: &DMatrix<T>) -> Result<bool, MatEqError> {
    Ok(spectral_abscissa(m)? < -T::lit(HURWITZ_TOL))
}

/// Popov–Belevitch–Hautus test restricted to the closed right half-plane:
/// every eigenvalue `λ` of `A` with `Re λ ≥ −HURWITZ_TOL` must satisfy
/// `rank [A − λI; C] = n`. Returns the first mode that fails, if any.
pub fn undetectable_mode<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<Option<Complex<T>>, MatEqError> {
    let n = a.nrows();
    if c.ncols() != n {
        return Err(MatEqError::Dimension {
            what: "C",
            expected: (c.nrows(), n),
            got: c.shape(),
        });
    }
    let scale = a.norm().max(c.norm()).max(T::one());
    for lambda in eigenvalues(a)? {
        if lambda.re < -T::lit(HURWITZ_TOL) {
            continue;
        }
        let p = c.nrows();
        let mut stacked = DMatrix::<Complex<T>>::zeros(n + p, n);
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { lambda } else { Complex::new(T::zero(), T::zero()) };
                stacked[(i, j)] = Complex::new(a[(i, j)], T::zero()) - d;
            }
        }
        for i in 0..p {
            for j in 0..n {
                stacked[(n + i, j)] = Complex::new(c[(i, j)], T::zero());
            }
        }
        let smallest = stacked.singular_values().min();
        if smallest <= T::solver_tol(1e-10) * scale {
            return Ok(Some(lambda));
        }
    }
    Ok(None)
}
