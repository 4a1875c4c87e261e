use nalgebra::{DMatrix, DVector};
use num_traits::Zero;

use super::MatEqError;
use crate::Scalar;

/// Relative tolerance of [`observability_rank`].
pub const RANK_TOL: f64 = 1e-8;

/// Stacked observability matrix `[C; CA; …; CA^{n−1}]`.
///
/// Generic over any ring-like scalar so that exact arithmetic types work.
pub fn observability_matrix<T>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>, MatEqError>
where
    T: nalgebra::Scalar + Zero + std::ops::Add<Output = T> + std::ops::Mul<Output = T>,
{
    let n = check_pair(a.shape(), c.shape())?;
    let p = c.nrows();
    let mut out = DMatrix::from_element(n * p, n, T::zero());
    let mut block = c.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&block);
        if k + 1 < n {
            block = mul(&block, a);
        }
    }
    Ok(out)
}

fn mul<T>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T>
where
    T: nalgebra::Scalar + Zero + std::ops::Add<Output = T> + std::ops::Mul<Output = T>,
{
    DMatrix::from_fn(x.nrows(), y.ncols(), |i, j| {
        (0..x.ncols()).fold(T::zero(), |acc, k| acc + x[(i, k)].clone() * y[(k, j)].clone())
    })
}

fn check_pair(a: (usize, usize), c: (usize, usize)) -> Result<usize, MatEqError> {
    let n = a.0;
    if n == 0 || a.1 != n {
        return Err(MatEqError::Dimension {
            what: "A",
            expected: (n.max(1), n.max(1)),
            got: a,
        });
    }
    if c.1 != n || c.0 == 0 {
        return Err(MatEqError::Dimension {
            what: "C",
            expected: (c.0.max(1), n),
            got: c,
        });
    }
    Ok(n)
}

/// Rank of the observability matrix, i.e. the dimension of the observable
/// subspace.
///
/// The raw stacked matrix mixes rows of wildly different magnitude (powers
/// of `A`), so its singular values are not a usable rank signal. Instead
/// the row space is grown as a Krylov sequence: every new row `r A` is
/// orthogonalized (twice, modified Gram–Schmidt) against the current
/// orthonormal basis and kept only if its remaining norm exceeds
/// [`RANK_TOL`] times its norm before projection.
pub fn observability_rank<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<usize, MatEqError> {
    let n = check_pair(a.shape(), c.shape())?;
    let tol = T::solver_tol(RANK_TOL);
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(n);
    let mut frontier: Vec<DVector<T>> = Vec::new();

    let admit = |v: DVector<T>, basis: &mut Vec<DVector<T>>| -> Option<DVector<T>> {
        let before = v.norm();
        if before == T::zero() || !before.is_finite() {
            return None;
        }
        let mut v = v;
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = b.dot(&v);
                v.axpy(-proj, b, T::one());
            }
        }
        let after = v.norm();
        if after > tol * before {
            let unit = v / after;
            basis.push(unit.clone());
            Some(unit)
        } else {
            None
        }
    };

    for row in c.row_iter() {
        if let Some(u) = admit(row.transpose(), &mut basis) {
            frontier.push(u);
        }
    }
    let at = a.transpose();
    while !frontier.is_empty() && basis.len() < n {
        let mut next = Vec::new();
        for r in &frontier {
            // (rᵀ A)ᵀ = Aᵀ r
            if let Some(u) = admit(&at * r, &mut basis) {
                next.push(u);
            }
        }
        frontier = next;
    }
    Ok(basis.len())
}
