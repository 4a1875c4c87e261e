//! Average dq-frame model of one inverter-interfaced DG with an LC filter
//! and an output (coupling) inductor, plus the droop and power formulas.
//!
//! State ordering is `[i_fd, i_fq, v_cd, v_cq, i_cd, i_cq]`. Matrix entries
//! are quoted 1-based in the docs (`A(1,2)`) and stored 0-based
//! (`a[(0, 1)]`).

use nalgebra::{DMatrix, RowSVector, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub const I_FD: usize = 0;
pub const I_FQ: usize = 1;
pub const V_CD: usize = 2;
pub const V_CQ: usize = 3;
pub const I_CD: usize = 4;
pub const I_CQ: usize = 5;

/// Short names of the six DG states, in state order.
pub const STATE_NAMES: [&str; 6] = ["ifd", "ifq", "vcd", "vcq", "icd", "icq"];

/// `[i_fd, i_fq, v_cd, v_cq, i_cd, i_cq]` in amperes and volts.
pub type DGState<T> = SVector<T, 6>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid DG parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Physical constants of one DG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct DGParams<T: Scalar> {
    /// Filter resistance (Ω).
    pub r_f: T,
    /// Filter inductance (H).
    pub l_f: T,
    /// Filter capacitance (F).
    pub c_f: T,
    /// Output resistance (Ω).
    pub r_c: T,
    /// Output inductance (H).
    pub l_c: T,
    /// Nominal angular frequency (rad/s).
    pub omega_nom: T,
    /// Voltage/reactive-power droop coefficient (V/VAr).
    pub n_d: T,
    /// Frequency/active-power droop coefficient (rad/s/W). Stored only; the
    /// frequency is held at `omega_nom`.
    pub m_d: T,
    /// Reference voltage magnitude (V, dq peak).
    pub v_star: T,
}

impl<T: Scalar> Default for DGParams<T> {
    fn default() -> Self {
        Self::reference()
    }
}

impl<T: Scalar> DGParams<T> {
    /// Filter and droop values of the three-DG, 311 V / 50 Hz test system.
    pub fn reference() -> Self {
        Self {
            r_f: T::lit(0.1),
            l_f: T::lit(1.8e-3),
            c_f: T::lit(3e-6),
            r_c: T::lit(0.1),
            l_c: T::lit(1.8e-3),
            omega_nom: T::two_pi() * T::lit(50.0),
            n_d: T::lit(1.3e-3),
            m_d: T::lit(9.4e-5),
            v_star: T::lit(311.0),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("r_f", self.r_f),
            ("l_f", self.l_f),
            ("c_f", self.c_f),
            ("r_c", self.r_c),
            ("l_c", self.l_c),
            ("omega_nom", self.omega_nom),
            ("v_star", self.v_star),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    value: v.to_f64_lossy(),
                    reason: "must be finite and strictly positive",
                });
            }
        }
        for (name, v) in [("n_d", self.n_d), ("m_d", self.m_d)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    value: v.to_f64_lossy(),
                    reason: "must be finite and non-negative",
                });
            }
        }
        Ok(())
    }
}

/// `ẋ = A x + B u + d v_t`, `y = C x` for one DG, with `u = (v_sd, v_sq)`
/// the inverter voltage and `v_t = (v_td, v_tq)` the terminal (bus) voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T: Scalar> {
    pub a: SMatrix<T, 6, 6>,
    pub b: SMatrix<T, 6, 2>,
    pub d: SMatrix<T, 6, 2>,
    pub c: RowSVector<T, 6>,
}

impl<T: Scalar> StateSpace<T> {
    #[inline]
    pub fn derivative(&self, x: &DGState<T>, u: &Vector2<T>, v_t: &Vector2<T>) -> DGState<T> {
        self.a * x + self.b * u + self.d * v_t
    }

    #[inline]
    pub fn output(&self, x: &DGState<T>) -> T {
        (self.c * x)[0]
    }

    pub fn a_dyn(&self) -> DMatrix<T> {
        DMatrix::from_iterator(6, 6, self.a.iter().copied())
    }

    pub fn c_dyn(&self) -> DMatrix<T> {
        DMatrix::from_iterator(1, 6, self.c.iter().copied())
    }
}

/// Builds the 6-state realization at angular frequency `omega`.
pub fn build_state_space<T: Scalar>(
    params: &DGParams<T>,
    omega: T,
) -> Result<StateSpace<T>, ModelError> {
    params.validate()?;
    if !(omega > T::zero()) || !omega.is_finite() {
        return Err(ModelError::InvalidParameter {
            name: "omega",
            value: omega.to_f64_lossy(),
            reason: "must be finite and strictly positive",
        });
    }
    let DGParams {
        r_f, l_f, c_f, r_c, l_c, ..
    } = *params;
    let z = T::zero();
    let one = T::one();
    #[rustfmt::skip]
    let a = SMatrix::<T, 6, 6>::from_row_slice(&[
        -r_f / l_f, omega,      -one / l_f, z,          z,          z,
        -omega,     -r_f / l_f, z,          -one / l_f, z,          z,
        one / c_f,  z,          z,          omega,      -one / c_f, z,
        z,          one / c_f,  -omega,     z,          z,          -one / c_f,
        z,          z,          one / l_c,  z,          -r_c / l_c, omega,
        z,          z,          z,          one / l_c,  -omega,     -r_c / l_c,
    ]);
    let mut b = SMatrix::<T, 6, 2>::zeros();
    b[(I_FD, 0)] = one / l_f;
    b[(I_FQ, 1)] = one / l_f;
    let mut d = SMatrix::<T, 6, 2>::zeros();
    d[(I_CD, 0)] = -one / l_c;
    d[(I_CQ, 1)] = -one / l_c;
    let mut c = RowSVector::<T, 6>::zeros();
    c[V_CD] = one;
    Ok(StateSpace { a, b, d, c })
}

/// Instantaneous reactive power `v_cq·i_cd − v_cd·i_cq` (VAr).
#[inline]
pub fn reactive_power<T: Scalar>(v_cd: T, v_cq: T, i_cd: T, i_cq: T) -> T {
    v_cq * i_cd - v_cd * i_cq
}

/// Instantaneous active power `v_cd·i_cd + v_cq·i_cq` (W).
#[inline]
pub fn active_power<T: Scalar>(v_cd: T, v_cq: T, i_cd: T, i_cq: T) -> T {
    v_cd * i_cd + v_cq * i_cq
}

/// Droop voltage reference `v* − n_d·Q + δv`.
#[inline]
pub fn droop_voltage_ref<T: Scalar>(v_star: T, n_d: T, q: T, delta_v: T) -> T {
    v_star - n_d * q + delta_v
}

/// Reactive power of a DG state vector.
#[inline]
pub fn state_reactive_power<T: Scalar>(x: &DGState<T>) -> T {
    reactive_power(x[V_CD], x[V_CQ], x[I_CD], x[I_CQ])
}

#[inline]
pub fn state_active_power<T: Scalar>(x: &DGState<T>) -> T {
    active_power(x[V_CD], x[V_CQ], x[I_CD], x[I_CQ])
}
