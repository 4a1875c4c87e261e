use nalgebra::{DMatrix, DVector};

use super::{check_shape, check_spd, check_symmetric, symmetrize, MatEqError};
use crate::Scalar;

/// Solves `Fᵀ P + P F = −Q` for symmetric positive-definite `P`.
///
/// The equation is vectorized column-major into the Kronecker-sum system
/// `(I ⊗ Fᵀ + Fᵀ ⊗ I) vec(P) = −vec(Q)` and solved by LU with one round of
/// iterative refinement. Positive definiteness of the returned `P` with
/// `Q ≻ 0` certifies that `F` is Hurwitz; a non-Hurwitz `F` is rejected
/// either as a singular system or as an indefinite solution.
pub fn solve_lyapunov<T: Scalar>(f: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>, MatEqError> {
    check_spd("Q", q)?;
    let p = solve_lyapunov_unchecked(f, q)?;
    if p.clone().cholesky().is_none() {
        return Err(MatEqError::NotPositiveDefinite { what: "Lyapunov solution P" });
    }
    Ok(p)
}

/// Kronecker solve without the definiteness checks; `Q` need only be
/// symmetric. Returns the symmetrized solution.
pub(crate) fn solve_lyapunov_unchecked<T: Scalar>(
    f: &DMatrix<T>,
    q: &DMatrix<T>,
) -> Result<DMatrix<T>, MatEqError> {
    let n = f.nrows();
    check_shape("F", f, (n, n))?;
    check_shape("Q", q, (n, n))?;
    if n == 0 {
        return Err(MatEqError::Dimension {
            what: "F",
            expected: (1, 1),
            got: (0, 0),
        });
    }
    check_symmetric("Q", q)?;

    let eye = DMatrix::<T>::identity(n, n);
    let ft = f.transpose();
    let k = eye.kronecker(&ft) + ft.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let lu = k.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(MatEqError::SingularLyapunov { residual: f64::INFINITY })?;
    let r = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let p = symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice()));

    let residual = lyapunov_residual(f, &p, q);
    if !(residual <= T::solver_tol(1e-9)) {
        return Err(MatEqError::SingularLyapunov {
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(p)
}

/// `‖Fᵀ P + P F + Q‖_F / ‖Q‖_F` (absolute when `Q = 0`).
pub fn lyapunov_residual<T: Scalar>(f: &DMatrix<T>, p: &DMatrix<T>, q: &DMatrix<T>) -> T {
    let r = f.transpose() * p + p * f + q;
    let scale = q.norm();
    if scale > T::zero() {
        r.norm() / scale
    } else {
        r.norm()
    }
}
