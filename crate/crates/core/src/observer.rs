//! Event-held Luenberger observer of one DG.
//!
//! The sender and every receiver run identical replicas; replicas change
//! only through [`ObserverReplica::apply_event`] and through integration
//! with an identical step sequence, so they stay bit-identical without any
//! synchronization traffic.

use nalgebra::{SVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DGState, StateSpace, V_CD};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("out-of-order packet from DG {sender}: t_k = {t_k} precedes last event at {last}")]
    OutOfOrder { sender: usize, t_k: f64, last: f64 },
    #[error("packet from DG {sender} at t_k = {t_k} carries a non-finite value")]
    NonFinite { sender: usize, t_k: f64 },
}

/// What the observer uses for the plant input `u` and terminal voltage `v_t`
/// between events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputFeed {
    /// Sampled at `t_k` with the measurement and held until the next event.
    Held,
    /// The DG's actual `u(t)` and `v_t(t)` along the step; only the
    /// measurement is event-held.
    #[default]
    Live,
}

/// Payload that crosses the simulated network at an event instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventPacket<T: Scalar> {
    /// Zero-based DG index.
    pub sender: usize,
    pub t_k: T,
    /// Measured `v_cd(t_k)`.
    pub y: T,
    /// Inverter voltage `(v_sd, v_sq)(t_k)`.
    pub u: Vector2<T>,
    /// Terminal voltage `(v_td, v_tq)(t_k)`.
    pub v_t: Vector2<T>,
}

impl<T: Scalar> EventPacket<T> {
    fn is_finite(&self) -> bool {
        self.t_k.is_finite()
            && self.y.is_finite()
            && self.u.iter().all(|v| v.is_finite())
            && self.v_t.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverReplica<T: Scalar> {
    pub x_hat: DGState<T>,
    pub y_held: T,
    pub u_held: Vector2<T>,
    pub vt_held: Vector2<T>,
    /// `None` until the first packet arrives.
    pub last_event_time: Option<T>,
}

impl<T: Scalar> ObserverReplica<T> {
    pub fn new(x_hat: DGState<T>) -> Self {
        Self {
            x_hat,
            y_held: T::zero(),
            u_held: Vector2::zeros(),
            vt_held: Vector2::zeros(),
            last_event_time: None,
        }
    }

    /// Replaces the held values. `x_hat` is untouched: the estimate is
    /// continuous and only its inputs jump. Packets at the same instant as
    /// the last one are accepted.
    pub fn apply_event(&mut self, packet: &EventPacket<T>) -> Result<(), ObserverError> {
        if !packet.is_finite() {
            return Err(ObserverError::NonFinite {
                sender: packet.sender,
                t_k: packet.t_k.to_f64_lossy(),
            });
        }
        if let Some(last) = self.last_event_time {
            if packet.t_k < last {
                return Err(ObserverError::OutOfOrder {
                    sender: packet.sender,
                    t_k: packet.t_k.to_f64_lossy(),
                    last: last.to_f64_lossy(),
                });
            }
        }
        self.y_held = packet.y;
        self.u_held = packet.u;
        self.vt_held = packet.v_t;
        self.last_event_time = Some(packet.t_k);
        Ok(())
    }
}

/// `A x̂ + B u_held + d vt_held + L (y_held − C x̂)`.
pub fn observer_derivative<T: Scalar>(
    replica: &ObserverReplica<T>,
    ss: &StateSpace<T>,
    gain: &SVector<T, 6>,
) -> DGState<T> {
    observer_rate(ss, gain, &replica.x_hat, replica.y_held, &replica.u_held, &replica.vt_held)
}

/// Observer rate at estimate `x_hat` with explicit inputs; the innovation
/// always uses the held measurement.
#[inline]
pub fn observer_rate<T: Scalar>(
    ss: &StateSpace<T>,
    gain: &SVector<T, 6>,
    x_hat: &DGState<T>,
    y_held: T,
    u: &Vector2<T>,
    v_t: &Vector2<T>,
) -> DGState<T> {
    ss.derivative(x_hat, u, v_t) + gain * (y_held - x_hat[V_CD])
}

/// `x − x̂`.
#[inline]
pub fn estimation_error<T: Scalar>(x: &DGState<T>, x_hat: &DGState<T>) -> SVector<T, 6> {
    x - x_hat
}
