//! Observer-based, event-triggered communication for the secondary voltage
//! control of inverter-based AC microgrids.
//!
//! Every distributed generator (DG) runs a full-state Luenberger observer of
//! itself; identical replicas run at every other DG. A DG transmits its
//! measured filter-capacitor voltage only when a quadratic trigger condition
//! fires, and the all-to-all secondary controller works from the replicated
//! estimates alone.
//!
//! The numerical core is generic over the scalar type (see [`Scalar`]); the
//! simulation harness is concrete in `f64`, and the aliases below name the
//! `f64` instantiations used by it.

// `!(x > 0)` is the NaN-rejecting guard used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod etm;
pub mod harness;
pub mod mateq;
pub mod model;
pub mod observer;
pub mod plant;
pub mod scalar;
pub mod secondary;

pub use error::Error;
pub use scalar::Scalar;

/// Number of states in the dq-frame model of one DG.
pub const DG_STATES: usize = 6;

pub type DGParams64 = model::DGParams<f64>;
pub type StateSpace64 = model::StateSpace<f64>;
pub type DGState64 = model::DGState<f64>;
pub type ObserverDesign64 = mateq::ObserverDesign<f64>;
pub type ObserverReplica64 = observer::ObserverReplica<f64>;
pub type EventPacket64 = observer::EventPacket<f64>;
pub type PsiMatrix64 = etm::PsiMatrix<f64, DG_STATES>;
pub type TriggerLog64 = etm::TriggerLog<f64>;
pub type SecondaryGains64 = secondary::SecondaryGains<f64>;
pub type SecondaryState64 = secondary::SecondaryState<f64>;
pub type Topology64 = plant::Topology<f64>;
pub type PlantState64 = plant::PlantState<f64>;
