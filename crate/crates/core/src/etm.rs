//! Event-trigger mechanism: the quadratic form η, the trigger rule with its
//! ε-ball, and the per-DG event log.
//!
//! With estimation error `e = x − x̂` and sampling error `ẽ = x − x(t_k)`,
//!
//! ```text
//! η = [e; ẽ]ᵀ Ψ [e; ẽ],   Ψ = [(σ−1)Q̃  PLC; (PLC)ᵀ  0]
//!   = (σ−1) eᵀQ̃e + 2 eᵀPL (Cẽ)
//! ```
//!
//! and a DG transmits at the first simulation step where `η ≥ 0` while `e`
//! lies outside the ball `‖e‖₂ ≤ ε`.

use nalgebra::{DMatrix, RowSVector, SMatrix, SVector};
use serde::Serialize;
use thiserror::Error;

use crate::mateq::ObserverDesign;
use crate::model::DGState;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EtmError {
    #[error("sigma = {0} must lie in (0, 1)")]
    SigmaOutOfRange(f64),
    #[error("{what} has shape {got:?}, expected {expected:?}")]
    Dimension {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("event time {t} does not strictly follow the previous event at {last}")]
    NonMonotone { t: f64, last: f64 },
}

/// Ψ for an `N`-state DG with a single measured output, stored by blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiMatrix<T: Scalar, const N: usize> {
    /// `(σ − 1) Q̃`.
    pub top_left: SMatrix<T, N, N>,
    /// `P L`; the off-diagonal block is `(P L) C`.
    pub pl: SVector<T, N>,
    pub c: RowSVector<T, N>,
}

impl<T: Scalar, const N: usize> PsiMatrix<T, N> {
    /// Off-diagonal block `P L C`.
    pub fn cross(&self) -> SMatrix<T, N, N> {
        self.pl * self.c
    }

    /// Dense symmetric 2N×2N matrix.
    pub fn to_matrix(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(2 * N, 2 * N);
        let cross = self.cross();
        m.view_mut((0, 0), (N, N)).copy_from(&self.top_left);
        m.view_mut((0, N), (N, N)).copy_from(&cross);
        m.view_mut((N, 0), (N, N)).copy_from(&cross.transpose());
        m
    }

    /// Builds Ψ from a solved design; `c` must be the design's output row.
    pub fn from_design(design: &ObserverDesign<T>, c: &RowSVector<T, N>) -> Result<Self, EtmError> {
        let q = fixed::<T, N, N>("Q_tilde", &design.q_tilde)?;
        let p = fixed::<T, N, N>("P", &design.p)?;
        let l = fixed::<T, N, 1>("L", &design.l)?;
        assemble_psi(&q, design.sigma, &p, &l, c)
    }
}

fn fixed<T: Scalar, const R: usize, const C: usize>(
    what: &'static str,
    m: &DMatrix<T>,
) -> Result<SMatrix<T, R, C>, EtmError> {
    if m.shape() != (R, C) {
        return Err(EtmError::Dimension {
            what,
            expected: (R, C),
            got: m.shape(),
        });
    }
    Ok(SMatrix::from_iterator(m.iter().copied()))
}

/// Assembles Ψ; `Q̃` is symmetrized so the top-left block is exactly
/// symmetric.
pub fn assemble_psi<T: Scalar, const N: usize>(
    q_tilde: &SMatrix<T, N, N>,
    sigma: T,
    p: &SMatrix<T, N, N>,
    l: &SVector<T, N>,
    c: &RowSVector<T, N>,
) -> Result<PsiMatrix<T, N>, EtmError> {
    if !(sigma > T::zero() && sigma < T::one()) {
        return Err(EtmError::SigmaOutOfRange(sigma.to_f64_lossy()));
    }
    let half = T::lit(0.5);
    let q_sym = (q_tilde + q_tilde.transpose()) * half;
    Ok(PsiMatrix {
        top_left: q_sym * (sigma - T::one()),
        pl: p * l,
        c: *c,
    })
}

/// `(σ−1) eᵀQ̃e + 2 eᵀPL (Cẽ)`.
#[inline]
pub fn eta<T: Scalar, const N: usize>(e: &SVector<T, N>, e_tilde: &SVector<T, N>, psi: &PsiMatrix<T, N>) -> T {
    let quad = e.dot(&(psi.top_left * e));
    let measured = (psi.c * e_tilde)[0];
    quad + T::lit(2.0) * e.dot(&psi.pl) * measured
}

/// `η ≥ 0` and `‖e‖₂ > ε`.
#[inline]
pub fn should_trigger<T: Scalar, const N: usize>(
    e: &SVector<T, N>,
    e_tilde: &SVector<T, N>,
    psi: &PsiMatrix<T, N>,
    epsilon: T,
) -> bool {
    e.norm() > epsilon && eta(e, e_tilde, psi) >= T::zero()
}

/// Event instants of one DG and the state sampled at the latest one.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerLog<T: Scalar> {
    pub dg: usize,
    times: Vec<T>,
    snapshot: DGState<T>,
}

impl<T: Scalar> TriggerLog<T> {
    pub fn new(dg: usize) -> Self {
        Self {
            dg,
            times: Vec::new(),
            snapshot: DGState::zeros(),
        }
    }

    /// Records an event at `t` with sampled state `x`.
    pub fn record(&mut self, t: T, x: &DGState<T>) -> Result<(), EtmError> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(EtmError::NonMonotone {
                    t: t.to_f64_lossy(),
                    last: last.to_f64_lossy(),
                });
            }
        }
        self.times.push(t);
        self.snapshot = *x;
        Ok(())
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn count(&self) -> usize {
        self.times.len()
    }

    /// `x(t_k)` of the latest event (zero before the first).
    pub fn snapshot(&self) -> &DGState<T> {
        &self.snapshot
    }

    /// `ẽ = x − x(t_k)`.
    pub fn sampling_error(&self, x: &DGState<T>) -> SVector<T, 6> {
        x - self.snapshot
    }

    pub fn stats(&self) -> Result<InterEventStats<T>, EtmError> {
        inter_event_stats(&self.times)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterEventStats<T> {
    pub count: usize,
    /// `None` when there are fewer than two events (no gaps).
    pub min_gap: Option<T>,
    /// Zero when there are fewer than two events.
    pub mean_gap: T,
}

/// Event count and gap statistics of a strictly increasing time list.
pub fn inter_event_stats<T: Scalar>(times: &[T]) -> Result<InterEventStats<T>, EtmError> {
    let mut min_gap: Option<T> = None;
    for w in times.windows(2) {
        let gap = w[1] - w[0];
        if !(gap > T::zero()) {
            return Err(EtmError::NonMonotone {
                t: w[1].to_f64_lossy(),
                last: w[0].to_f64_lossy(),
            });
        }
        min_gap = Some(min_gap.map_or(gap, |m| m.min(gap)));
    }
    let mean_gap = if times.len() >= 2 {
        (times[times.len() - 1] - times[0]) / T::from_usize(times.len() - 1).expect("count fits")
    } else {
        T::zero()
    };
    Ok(InterEventStats {
        count: times.len(),
        min_gap,
        mean_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type V6 = SVector<f64, 6>;

    fn psi_for(sigma: f64) -> PsiMatrix<f64, 6> {
        let mut p = SMatrix::<f64, 6, 6>::identity();
        p[(0, 1)] = 0.3;
        p[(1, 0)] = 0.3;
        let l = V6::from_column_slice(&[1.0, -2.0, 3.0, 0.5, 0.1, -0.7]);
        let mut c = RowSVector::<f64, 6>::zeros();
        c[2] = 1.0;
        assemble_psi(&SMatrix::identity(), sigma, &p, &l, &c).unwrap()
    }

    fn scalar_psi() -> PsiMatrix<f64, 1> {
        let one = SMatrix::<f64, 1, 1>::identity();
        assemble_psi(&one, 0.5, &one, &SVector::from_element(1.0), &RowSVector::from_element(1.0)).unwrap()
    }

    #[test]
    fn psi_blocks() {
        let psi = psi_for(0.5);
        assert_eq!(psi.top_left, SMatrix::<f64, 6, 6>::identity() * -0.5);
        let near_one = psi_for(1.0 - 1e-12);
        assert!(near_one.top_left.norm() <= 1e-12 * 6f64.sqrt());
        let m = psi.to_matrix();
        assert_eq!(m, m.transpose());
        assert_eq!(m.view((6, 6), (6, 6)).norm(), 0.0);
        assert!(matches!(
            assemble_psi(&SMatrix::<f64, 1, 1>::identity(), 1.0, &SMatrix::identity(), &SVector::zeros(), &RowSVector::zeros()),
            Err(EtmError::SigmaOutOfRange(_))
        ));
    }

    #[test]
    fn eta_examples() {
        let psi = psi_for(0.5);
        let et = V6::from_column_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(eta(&V6::zeros(), &et, &psi), 0.0);
        let e = V6::from_column_slice(&[0.3, -1.0, 0.2, 0.0, 0.0, 2.0]);
        let v = eta(&e, &V6::zeros(), &psi);
        assert!(v < 0.0);
        assert!((v - (-0.5 * e.norm_squared())).abs() < 1e-15);
        let s = scalar_psi();
        let one = SVector::<f64, 1>::from_element(1.0);
        assert_eq!(eta(&one, &one, &s), 1.5);
    }

    #[test]
    fn trigger_examples() {
        let s = scalar_psi();
        let one = SVector::<f64, 1>::from_element(1.0);
        assert!(should_trigger(&one, &one, &s, 0.1));
        // Inside the ball: never.
        assert!(!should_trigger(&one, &one, &s, 1.0));
        // η < 0 outside the ball.
        assert!(!should_trigger(&one, &SVector::zeros(), &s, 0.1));
    }

    #[test]
    fn stats_examples() {
        let s = inter_event_stats(&[0.1, 0.2, 0.4]).unwrap();
        assert_eq!(s.count, 3);
        assert!((s.min_gap.unwrap() - 0.1f64).abs() < 1e-15);
        assert!((s.mean_gap - 0.15f64).abs() < 1e-15);
        let s = inter_event_stats::<f64>(&[]).unwrap();
        assert_eq!((s.count, s.min_gap, s.mean_gap), (0, None, 0.0));
        let s = inter_event_stats(&[0.7]).unwrap();
        assert_eq!((s.count, s.min_gap, s.mean_gap), (1, None, 0.0));
        assert!(inter_event_stats(&[0.2, 0.2]).is_err());
    }

    #[test]
    fn log_enforces_strict_order() {
        let mut log = TriggerLog::new(0);
        let x = DGState::from_column_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        log.record(0.0, &x).unwrap();
        assert_eq!(log.sampling_error(&x), V6::zeros());
        assert!(log.record(0.0, &x).is_err());
        log.record(1e-5, &(x * 2.0)).unwrap();
        assert_eq!(log.count(), 2);
        assert_eq!(log.snapshot(), &(x * 2.0));
        assert_eq!(log.stats().unwrap().min_gap, Some(1e-5));
    }

    fn vec6() -> impl Strategy<Value = V6> {
        proptest::collection::vec(-10.0..10.0f64, 6).prop_map(|v| V6::from_column_slice(&v))
    }

    proptest! {
        #[test]
        fn eta_equals_stacked_quadratic_form(e in vec6(), et in vec6(), sigma in 0.01..0.99f64) {
            let psi = psi_for(sigma);
            let z = nalgebra::DVector::from_iterator(12, e.iter().chain(et.iter()).copied());
            let stacked = (z.transpose() * psi.to_matrix() * &z)[0];
            let direct = eta(&e, &et, &psi);
            prop_assert!((stacked - direct).abs() <= 1e-9 * (1.0 + stacked.abs()));
        }

        #[test]
        fn eta_sees_only_the_measured_component(e in vec6(), et in vec6(), noise in vec6()) {
            let psi = psi_for(0.5);
            let mut et2 = et + noise;
            et2[2] = et[2];
            prop_assert_eq!(eta(&e, &et, &psi), eta(&e, &et2, &psi));
        }

        #[test]
        fn larger_ball_triggers_on_a_subset(
            samples in proptest::collection::vec((vec6(), vec6()), 1..200),
            eps1 in 0.0..5.0f64, extra in 0.0..5.0f64,
        ) {
            let psi = psi_for(0.5);
            let eps2 = eps1 + extra;
            for (e, et) in &samples {
                if should_trigger(e, et, &psi, eps2) {
                    prop_assert!(should_trigger(e, et, &psi, eps1));
                }
            }
        }
    }
}
