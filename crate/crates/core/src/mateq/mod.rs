//! Observer-design matrix equations: observability and detectability tests,
//! the filter algebraic Riccati equation, the observer gain, the Lyapunov
//! equation of the error dynamics and a Hurwitz certificate.

mod lyapunov;
mod observability;
mod riccati;
mod spectrum;

pub use lyapunov::{lyapunov_residual, solve_lyapunov};
pub use observability::{observability_matrix, observability_rank, RANK_TOL};
pub use riccati::{
    observer_gain, riccati_residual, solve_filter_riccati, RiccatiOptions, RiccatiSolution,
    MAX_KLEINMAN_ITERATIONS,
};
pub use spectrum::{undetectable_mode, is_hurwitz, spectral_abscissa, HURWITZ_TOL};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatEqError {
    #[error("dimension mismatch for {what}: expected {expected:?}, got {got:?}")]
    Dimension {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{what} must be symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { what: &'static str, asymmetry: f64 },
    #[error("{what} must be positive definite")]
    NotPositiveDefinite { what: &'static str },
    #[error("{what} must be positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite {
        what: &'static str,
        min_eigenvalue: f64,
    },
    #[error("the Lyapunov operator is singular or ill-conditioned (relative residual {residual:e})")]
    SingularLyapunov { residual: f64 },
    #[error("the pair (A, C) is not detectable: mode {re:e}{im:+e}i is unobservable")]
    NotDetectable { re: f64, im: f64 },
    #[error("no stabilizing initial gain: (A, C) has unstable modes and is not observable")]
    NoStabilizingGain,
    #[error("Riccati iteration did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("closed-loop matrix is not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },
    #[error("eigenvalue computation failed to converge")]
    EigenFailure,
    #[error("invalid tuning parameter `{name}` = {value}: {reason}")]
    InvalidTuning {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{equation} failed: {source}")]
    Design {
        equation: &'static str,
        #[source]
        source: Box<MatEqError>,
    },
}

impl MatEqError {
    fn in_stage(self, equation: &'static str) -> Self {
        MatEqError::Design {
            equation,
            source: Box::new(self),
        }
    }
}

/// Solved observer design for one DG.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign<T: Scalar> {
    /// Filter Riccati solution (n×n, SPD).
    pub s: DMatrix<T>,
    /// Observer gain `S Cᵀ V⁻¹` (n×p).
    pub l: DMatrix<T>,
    /// Lyapunov matrix of the error dynamics (n×n, SPD).
    pub p: DMatrix<T>,
    pub q_tilde: DMatrix<T>,
    pub v: DMatrix<T>,
    pub w: DMatrix<T>,
    /// Error-dynamics matrix `A − L C`.
    pub a_cl: DMatrix<T>,
    pub sigma: T,
    pub epsilon: T,
    /// Frobenius residual of the Riccati equation relative to `max(1, ‖W‖)`.
    pub riccati_residual: T,
    /// Frobenius residual of the Lyapunov equation relative to `‖Q̃‖`.
    pub lyapunov_residual: T,
}

/// Composes the Riccati solve, the gain and the Lyapunov solve, checking
/// the tuning scalars first.
#[allow(clippy::too_many_arguments)]
pub fn design_observer<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    v: &DMatrix<T>,
    w: &DMatrix<T>,
    q_tilde: &DMatrix<T>,
    sigma: T,
    epsilon: T,
    options: &RiccatiOptions,
) -> Result<ObserverDesign<T>, MatEqError> {
    if !(sigma > T::zero() && sigma < T::one()) {
        return Err(MatEqError::InvalidTuning {
            name: "sigma",
            value: sigma.to_f64_lossy(),
            reason: "must lie in (0, 1)",
        });
    }
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(MatEqError::InvalidTuning {
            name: "epsilon",
            value: epsilon.to_f64_lossy(),
            reason: "must be finite and strictly positive",
        });
    }
    let n = a.nrows();
    check_shape("Q_tilde", q_tilde, (n, n))?;
    check_spd("Q_tilde", q_tilde)?;

    let ric = solve_filter_riccati(a, c, v, w, options).map_err(|e| e.in_stage("filter Riccati equation"))?;
    let l = ric.gain;
    let a_cl = a - &l * c;
    if !is_hurwitz(&a_cl).map_err(|e| e.in_stage("closed-loop certificate"))? {
        return Err(MatEqError::NotHurwitz {
            abscissa: spectral_abscissa(&a_cl).map(|x| x.to_f64_lossy()).unwrap_or(f64::NAN),
        }
        .in_stage("closed-loop certificate"));
    }
    let p = solve_lyapunov(&a_cl, q_tilde).map_err(|e| e.in_stage("Lyapunov equation"))?;
    let lyapunov_residual = lyapunov_residual(&a_cl, &p, q_tilde);
    Ok(ObserverDesign {
        s: ric.s,
        l,
        p,
        q_tilde: q_tilde.clone(),
        v: v.clone(),
        w: w.clone(),
        a_cl,
        sigma,
        epsilon,
        riccati_residual: ric.residual,
        lyapunov_residual,
    })
}

pub(crate) fn check_shape<T: Scalar>(
    what: &'static str,
    m: &DMatrix<T>,
    expected: (usize, usize),
) -> Result<(), MatEqError> {
    if m.shape() != expected {
        return Err(MatEqError::Dimension {
            what,
            expected,
            got: m.shape(),
        });
    }
    Ok(())
}

pub(crate) fn check_symmetric<T: Scalar>(what: &'static str, m: &DMatrix<T>) -> Result<(), MatEqError> {
    let asym = (m - m.transpose()).norm();
    if asym > T::solver_tol(1e-12) * m.norm() || !asym.is_finite() {
        return Err(MatEqError::NotSymmetric {
            what,
            asymmetry: asym.to_f64_lossy(),
        });
    }
    Ok(())
}

pub(crate) fn check_spd<T: Scalar>(what: &'static str, m: &DMatrix<T>) -> Result<(), MatEqError> {
    check_symmetric(what, m)?;
    if m.clone().cholesky().is_none() {
        return Err(MatEqError::NotPositiveDefinite { what });
    }
    Ok(())
}

pub(crate) fn check_psd<T: Scalar>(what: &'static str, m: &DMatrix<T>) -> Result<(), MatEqError> {
    check_symmetric(what, m)?;
    let sym = symmetrize(m);
    let min = sym.symmetric_eigenvalues().min();
    if min < -T::solver_tol(1e-12) * m.norm() {
        return Err(MatEqError::NotPositiveSemidefinite {
            what,
            min_eigenvalue: min.to_f64_lossy(),
        });
    }
    Ok(())
}

pub(crate) fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}
