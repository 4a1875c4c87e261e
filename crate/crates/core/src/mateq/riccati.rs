use nalgebra::DMatrix;

use super::lyapunov::solve_lyapunov_unchecked;
use super::spectrum::{is_hurwitz, spectral_abscissa, undetectable_mode};
use super::{check_psd, check_shape, check_spd, symmetrize, MatEqError};
use crate::Scalar;

/// Newton iteration cap of [`solve_filter_riccati`].
pub const MAX_KLEINMAN_ITERATIONS: usize = 200;

/// Iterations without improvement after which Newton has hit rounding.
const STAGNATION_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiOptions {
    /// Accept a singular positive-semidefinite `W`.
    pub allow_psd_w: bool,
    pub max_iterations: usize,
    /// Acceptance bound on the residual relative to `max(1, ‖W‖_F)`.
    pub tolerance: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            allow_psd_w: false,
            max_iterations: MAX_KLEINMAN_ITERATIONS,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution<T: Scalar> {
    pub s: DMatrix<T>,
    pub gain: DMatrix<T>,
    /// Residual relative to `max(1, ‖W‖_F)`.
    pub residual: T,
    pub iterations: usize,
}

/// `S Cᵀ V⁻¹`.
pub fn observer_gain<T: Scalar>(s: &DMatrix<T>, c: &DMatrix<T>, v: &DMatrix<T>) -> Result<DMatrix<T>, MatEqError> {
    let n = s.nrows();
    check_shape("S", s, (n, n))?;
    check_shape("C", c, (c.nrows(), n))?;
    check_shape("V", v, (c.nrows(), c.nrows()))?;
    check_spd("V", v)?;
    let v_inv = v.clone().try_inverse().ok_or(MatEqError::NotPositiveDefinite { what: "V" })?;
    Ok(s * c.transpose() * v_inv)
}

/// `‖A S + S Aᵀ − S Cᵀ V⁻¹ C S + W‖_F / max(1, ‖W‖_F)`.
pub fn riccati_residual<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    v: &DMatrix<T>,
    w: &DMatrix<T>,
    s: &DMatrix<T>,
) -> Result<T, MatEqError> {
    let gain = observer_gain(s, c, v)?;
    let r = a * s + s * a.transpose() - &gain * c * s + w;
    Ok(r.norm() / w.norm().max(T::one()))
}

/// Solves the filter Riccati equation `A S + S Aᵀ − S Cᵀ V⁻¹ C S + W = 0`
/// for its stabilizing solution by Kleinman–Newton iteration on the gain.
///
/// Each step solves `F S + S Fᵀ = −(W + L V Lᵀ)` with `F = A − L C` and
/// updates `L = S Cᵀ V⁻¹`. The start gain is zero when `A` is already
/// Hurwitz; otherwise it is the Bass gain `L₀ = Z⁻¹ Cᵀ` with
/// `(A + βI)ᵀ Z + Z (A + βI) = 2 Cᵀ C` and `β > ‖A‖_F`, which exists only
/// for observable pairs. Iteration stops at a residual of a few ulps or when
/// the residual stops improving.
///
/// Requires `(A, C)` detectable, `V ≻ 0` and `W ≻ 0` (or `W ⪰ 0` with
/// [`RiccatiOptions::allow_psd_w`]).
pub fn solve_filter_riccati<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    v: &DMatrix<T>,
    w: &DMatrix<T>,
    options: &RiccatiOptions,
) -> Result<RiccatiSolution<T>, MatEqError> {
    let n = a.nrows();
    if n == 0 {
        return Err(MatEqError::Dimension {
            what: "A",
            expected: (1, 1),
            got: (0, 0),
        });
    }
    check_shape("A", a, (n, n))?;
    let p = c.nrows();
    check_shape("C", c, (p, n))?;
    check_shape("V", v, (p, p))?;
    check_shape("W", w, (n, n))?;
    check_spd("V", v)?;
    if options.allow_psd_w {
        check_psd("W", w)?;
    } else {
        check_spd("W", w)?;
    }
    if let Some(mode) = undetectable_mode(a, c)? {
        return Err(MatEqError::NotDetectable {
            re: mode.re.to_f64_lossy(),
            im: mode.im.to_f64_lossy(),
        });
    }

    let v_inv = v.clone().try_inverse().ok_or(MatEqError::NotPositiveDefinite { what: "V" })?;
    let mut gain = initial_gain(a, c)?;
    let target = T::solver_tol(1e-14);
    let mut best: Option<(T, DMatrix<T>)> = None;
    let mut stalls = 0;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let f = a - &gain * c;
        let q = w + &gain * v * gain.transpose();
        let s = solve_lyapunov_unchecked(&f.transpose(), &symmetrize(&q))?;
        gain = &s * c.transpose() * &v_inv;
        let residual = riccati_residual(a, c, v, w, &s)?;
        if !residual.is_finite() {
            break;
        }
        match &best {
            Some((r, _)) if residual >= *r => stalls += 1,
            _ => {
                stalls = 0;
                best = Some((residual, s));
            }
        }
        if residual <= target || stalls >= STAGNATION_LIMIT {
            break;
        }
    }

    let Some((residual, s)) = best else {
        return Err(MatEqError::NonConvergence {
            iterations,
            residual: f64::INFINITY,
        });
    };
    if !(residual <= T::solver_tol(options.tolerance)) {
        return Err(MatEqError::NonConvergence {
            iterations,
            residual: residual.to_f64_lossy(),
        });
    }
    if s.clone().cholesky().is_none() {
        return Err(MatEqError::NotPositiveDefinite { what: "Riccati solution S" });
    }
    let gain = observer_gain(&s, c, v)?;
    let a_cl = a - &gain * c;
    if !is_hurwitz(&a_cl)? {
        return Err(MatEqError::NotHurwitz {
            abscissa: spectral_abscissa(&a_cl)?.to_f64_lossy(),
        });
    }
    Ok(RiccatiSolution {
        s,
        gain,
        residual,
        iterations,
    })
}

fn initial_gain<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>, MatEqError> {
    let (n, p) = (a.nrows(), c.nrows());
    if is_hurwitz(a)? {
        return Ok(DMatrix::zeros(n, p));
    }
    let beta = a.norm() + T::one();
    let shifted = -(a + DMatrix::identity(n, n) * beta);
    let rhs = c.transpose() * c * T::lit(2.0);
    let z = solve_lyapunov_unchecked(&shifted, &rhs).map_err(|_| MatEqError::NoStabilizingGain)?;
    let chol = z.cholesky().ok_or(MatEqError::NoStabilizingGain)?;
    let gain = chol.solve(&c.transpose());
    if !is_hurwitz(&(a - &gain * c))? {
        return Err(MatEqError::NoStabilizingGain);
    }
    Ok(gain)
}
