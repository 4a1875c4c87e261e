use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::model::{DGState, I_CD, I_CQ, I_FD, I_FQ, V_CD, V_CQ};
use crate::Scalar;

/// Gains of the per-DG voltage loop.
///
/// The loop is a dq PI on the capacitor voltage with capacitor-current
/// active damping:
///
/// ```text
/// u_d = k_p (v_ref − v_cd) + k_i z_d − R_d (i_fd − i_cd)
/// u_q = k_p (0 − v_cq)     + k_i z_q − R_d (i_fq − i_cq)
/// ```
///
/// with `ż = (v_ref − v_cd, −v_cq)`. The droop uses the measured reactive
/// power after a first-order low-pass with corner `q_filter_cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct InnerLoopGains<T: Scalar> {
    pub k_p: T,
    pub k_i: T,
    /// Virtual resistance on the capacitor current (Ω).
    pub damping_resistance: T,
    /// Reactive-power measurement filter corner (rad/s).
    pub q_filter_cutoff: T,
}

impl<T: Scalar> Default for InnerLoopGains<T> {
    fn default() -> Self {
        Self {
            k_p: T::lit(0.5),
            k_i: T::lit(200.0),
            damping_resistance: T::lit(10.0),
            q_filter_cutoff: T::lit(10.0) * T::pi(),
        }
    }
}

/// Tracking error `(v_ref − v_cd, −v_cq)`, which is also the integrator rate.
#[inline]
pub fn inner_loop_error<T: Scalar>(x: &DGState<T>, v_ref: T) -> Vector2<T> {
    Vector2::new(v_ref - x[V_CD], -x[V_CQ])
}

/// Inverter voltage `u = (v_sd, v_sq)` for integrator state `integ`.
#[inline]
pub fn inner_loop_output<T: Scalar>(
    x: &DGState<T>,
    v_ref: T,
    gains: &InnerLoopGains<T>,
    integ: &Vector2<T>,
) -> Vector2<T> {
    let err = inner_loop_error(x, v_ref);
    let cap_current = Vector2::new(x[I_FD] - x[I_CD], x[I_FQ] - x[I_CQ]);
    err * gains.k_p + integ * gains.k_i - cap_current * gains.damping_resistance
}

/// Output plus a forward-Euler integrator update over `h`.
///
/// The simulator integrates `z` as part of the plant state instead (so the
/// whole closed loop is advanced by one fourth-order method); this form is
/// for discrete-time use.
pub fn inner_loop_control<T: Scalar>(
    x: &DGState<T>,
    v_ref: T,
    gains: &InnerLoopGains<T>,
    integ: &Vector2<T>,
    h: T,
) -> (Vector2<T>, Vector2<T>) {
    let u = inner_loop_output(x, v_ref, gains, integ);
    (u, integ + inner_loop_error(x, v_ref) * h)
}
