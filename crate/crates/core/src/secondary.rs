//! All-to-all averaging secondary voltage controller.
//!
//! Every DG sees the estimates of all DGs. The voltage branch drives the
//! average estimated `v_cd` to `v*`; the reactive branch drives each DG's
//! estimated reactive power to the network average. Both PI branches sum
//! into the single correction `δv` added to the droop reference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{state_reactive_power, DGState, V_CD};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SecondaryError {
    #[error("secondary control needs at least one DG estimate")]
    NoEstimates,
    #[error("got {got} estimates for a controller sized for {expected} DGs")]
    CountMismatch { expected: usize, got: usize },
    #[error("step h = {0} must be finite and positive")]
    InvalidStep(f64),
    #[error("gain `{name}` = {value} must be finite and non-negative")]
    InvalidGain { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondaryGains<T> {
    pub k_pv: T,
    pub k_iv: T,
    pub k_pq: T,
    pub k_iq: T,
}

impl<T: Scalar> SecondaryGains<T> {
    /// Voltage PI `1, 5`; reactive PI `0.003, 0.4`.
    pub fn reference() -> Self {
        Self {
            k_pv: T::one(),
            k_iv: T::lit(5.0),
            k_pq: T::lit(0.003),
            k_iq: T::lit(0.4),
        }
    }

    pub fn validate(&self) -> Result<(), SecondaryError> {
        for (name, v) in [("k_pv", self.k_pv), ("k_iv", self.k_iv), ("k_pq", self.k_pq), ("k_iq", self.k_iq)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(SecondaryError::InvalidGain {
                    name,
                    value: v.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

/// Estimated quantities one DG contributes to the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub v_cd: T,
    pub q: T,
}

impl<T: Scalar> Estimate<T> {
    pub fn from_state(x_hat: &DGState<T>) -> Self {
        Self {
            v_cd: x_hat[V_CD],
            q: q_hat(x_hat),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryState<T: Scalar> {
    /// Accumulated voltage error per DG (V·s).
    pub int_v: Vec<T>,
    /// Accumulated reactive-sharing error per DG (VAr·s).
    pub int_q: Vec<T>,
    pub enabled: bool,
    pub enable_time: T,
    /// Integrators are clamped to `±clamp_factor · v* / k_i`.
    pub clamp_factor: T,
}

impl<T: Scalar> SecondaryState<T> {
    pub fn new(dg_count: usize, enabled: bool, enable_time: T) -> Self {
        Self {
            int_v: vec![T::zero(); dg_count],
            int_q: vec![T::zero(); dg_count],
            enabled,
            enable_time,
            clamp_factor: T::lit(10.0),
        }
    }

    pub fn active_at(&self, t: T) -> bool {
        self.enabled && t >= self.enable_time
    }
}

/// Reactive power evaluated on an estimate.
#[inline]
pub fn q_hat<T: Scalar>(x_hat: &DGState<T>) -> T {
    state_reactive_power(x_hat)
}

/// Advances the integrators by forward Euler and returns `δv` per DG.
///
/// Before activation (or when disabled) the output is all zeros and the
/// integrators are untouched.
pub fn secondary_step<T: Scalar>(
    estimates: &[Estimate<T>],
    v_star: T,
    gains: &SecondaryGains<T>,
    state: &mut SecondaryState<T>,
    t: T,
    h: T,
) -> Result<Vec<T>, SecondaryError> {
    let n = estimates.len();
    if n == 0 {
        return Err(SecondaryError::NoEstimates);
    }
    if n != state.int_v.len() {
        return Err(SecondaryError::CountMismatch {
            expected: state.int_v.len(),
            got: n,
        });
    }
    if !(h > T::zero()) || !h.is_finite() {
        return Err(SecondaryError::InvalidStep(h.to_f64_lossy()));
    }
    if !state.active_at(t) {
        return Ok(vec![T::zero(); n]);
    }
    let mean_v = shifted_mean(estimates.iter().map(|e| e.v_cd));
    let mean_q = shifted_mean(estimates.iter().map(|e| e.q));
    let e_v = v_star - mean_v;
    let bound_v = limit(state.clamp_factor, v_star, gains.k_iv);
    let bound_q = limit(state.clamp_factor, v_star, gains.k_iq);
    let mut dv = Vec::with_capacity(n);
    for (i, est) in estimates.iter().enumerate() {
        let e_q = mean_q - est.q;
        state.int_v[i] = clamp(state.int_v[i] + h * e_v, bound_v);
        state.int_q[i] = clamp(state.int_q[i] + h * e_q, bound_q);
        dv.push(gains.k_pv * e_v + gains.k_iv * state.int_v[i] + gains.k_pq * e_q + gains.k_iq * state.int_q[i]);
    }
    Ok(dv)
}

/// Mean computed as `x₀ + Σ(xᵢ − x₀)/n`, exact when all values are equal.
fn shifted_mean<T: Scalar>(mut values: impl ExactSizeIterator<Item = T>) -> T {
    let n = T::from_usize(values.len()).expect("count fits");
    let first = values.next().unwrap_or_else(T::zero);
    first + values.fold(T::zero(), |a, v| a + (v - first)) / n
}

fn limit<T: Scalar>(factor: T, v_star: T, k_i: T) -> Option<T> {
    (k_i > T::zero()).then(|| factor * v_star.abs() / k_i)
}

fn clamp<T: Scalar>(v: T, bound: Option<T>) -> T {
    match bound {
        Some(b) => v.max(-b).min(b),
        None => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reactive_power;
    use proptest::prelude::*;

    fn est(v: &[f64], q: &[f64]) -> Vec<Estimate<f64>> {
        v.iter().zip(q).map(|(&v_cd, &q)| Estimate { v_cd, q }).collect()
    }

    fn active(n: usize) -> SecondaryState<f64> {
        SecondaryState::new(n, true, 0.0)
    }

    #[test]
    fn balanced_nominal_is_a_fixed_point() {
        let mut st = active(3);
        let dv = secondary_step(&est(&[311.0; 3], &[50.0; 3]), 311.0, &SecondaryGains::reference(), &mut st, 0.0, 1e-5).unwrap();
        assert_eq!(dv, vec![0.0; 3]);
        assert_eq!(st, active(3));
    }

    #[test]
    fn voltage_branch_example() {
        let mut st = active(3);
        let dv = secondary_step(&est(&[310.0; 3], &[0.0; 3]), 311.0, &SecondaryGains::reference(), &mut st, 0.0, 1e-5).unwrap();
        for d in dv {
            assert!((d - 1.00005).abs() < 1e-12);
        }
    }

    #[test]
    fn reactive_branch_example() {
        let mut st = active(3);
        let g = SecondaryGains {
            k_iq: 0.0,
            ..SecondaryGains::reference()
        };
        let dv = secondary_step(&est(&[311.0; 3], &[100.0, 0.0, -100.0]), 311.0, &g, &mut st, 0.0, 1e-5).unwrap();
        assert!((dv[0] + 0.3).abs() < 1e-12 && dv[1] == 0.0 && (dv[2] - 0.3).abs() < 1e-12);
        // With the integral gain the sign pattern is unchanged.
        let mut st = active(3);
        let dv = secondary_step(&est(&[311.0; 3], &[100.0, 0.0, -100.0]), 311.0, &SecondaryGains::reference(), &mut st, 0.0, 1e-5)
            .unwrap();
        assert!(dv[0] < 0.0 && dv[1] == 0.0 && dv[2] > 0.0);
    }

    #[test]
    fn disabled_until_enable_time() {
        let mut st = SecondaryState::new(2, true, 1.0);
        let dv = secondary_step(&est(&[300.0; 2], &[0.0, 10.0]), 311.0, &SecondaryGains::reference(), &mut st, 0.5, 1e-5).unwrap();
        assert_eq!(dv, vec![0.0; 2]);
        assert_eq!(st.int_v, vec![0.0; 2]);
        let mut off = SecondaryState::new(2, false, 0.0);
        let dv = secondary_step(&est(&[300.0; 2], &[0.0, 10.0]), 311.0, &SecondaryGains::reference(), &mut off, 5.0, 1e-5).unwrap();
        assert_eq!(dv, vec![0.0; 2]);
    }

    #[test]
    fn integrators_are_clamped() {
        let mut st = active(1);
        st.clamp_factor = 1e-6;
        let g = SecondaryGains::reference();
        for _ in 0..100 {
            secondary_step(&est(&[0.0], &[0.0]), 311.0, &g, &mut st, 0.0, 1.0).unwrap();
        }
        assert!((st.int_v[0] - 1e-6 * 311.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn input_errors() {
        let g = SecondaryGains::reference();
        assert!(matches!(secondary_step(&[], 311.0, &g, &mut active(0), 0.0, 1e-5), Err(SecondaryError::NoEstimates)));
        assert!(matches!(
            secondary_step(&est(&[1.0], &[1.0]), 311.0, &g, &mut active(2), 0.0, 1e-5),
            Err(SecondaryError::CountMismatch { .. })
        ));
        assert!(matches!(
            secondary_step(&est(&[1.0], &[1.0]), 311.0, &g, &mut active(1), 0.0, 0.0),
            Err(SecondaryError::InvalidStep(_))
        ));
        let bad = SecondaryGains { k_pq: -1.0, ..g };
        assert!(bad.validate().is_err());
        assert!(g.validate().is_ok());
    }

    #[test]
    fn q_hat_examples() {
        assert_eq!(q_hat(&DGState::<f64>::zeros()), 0.0);
        let x = DGState::from_column_slice(&[0.0, 0.0, 311.0, 0.0, 0.0, -10.0]);
        assert_eq!(q_hat(&x), 3110.0);
    }

    proptest! {
        #[test]
        fn q_hat_agrees_with_model(v in proptest::collection::vec(-500.0..500.0f64, 6)) {
            let x = DGState::from_column_slice(&v);
            prop_assert_eq!(q_hat(&x), reactive_power(v[2], v[3], v[4], v[5]));
        }

        #[test]
        fn proportional_reactive_parts_sum_to_zero(q in proptest::collection::vec(-1e4..1e4f64, 1..8)) {
            let n = q.len();
            let g = SecondaryGains { k_pv: 0.0, k_iv: 0.0, k_iq: 0.0, k_pq: 0.003 };
            let dv = secondary_step(&est(&vec![311.0; n], &q), 311.0, &g, &mut active(n), 0.0, 1e-5).unwrap();
            let sum: f64 = dv.iter().sum();
            let scale: f64 = dv.iter().map(|d| d.abs()).sum::<f64>().max(1e-300);
            prop_assert!(sum.abs() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn nominal_equal_sharing_is_invariant(q in -1e4..1e4f64, n in 1usize..6, steps in 1usize..50) {
            let mut st = active(n);
            for _ in 0..steps {
                let dv = secondary_step(&est(&vec![311.0; n], &vec![q; n]), 311.0, &SecondaryGains::reference(), &mut st, 0.0, 1e-5).unwrap();
                prop_assert!(dv.iter().all(|d| *d == 0.0));
            }
            prop_assert_eq!(st, active(n));
        }
    }
}
