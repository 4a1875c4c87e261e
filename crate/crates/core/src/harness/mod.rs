//! Scenario configuration, the co-simulation engine, metrics and file
//! outputs.
//!
//! The harness is concrete in `f64`. One run advances the plant, the `N × N`
//! observer replicas (bank `b` is held by DG `b` and contains a replica of
//! every DG), the trigger mechanisms and the secondary controllers on one
//! fixed-step schedule.

mod config;
mod engine;
mod metrics;
mod output;

use std::path::PathBuf;

use thiserror::Error;

use crate::mateq::MatEqError;
use crate::observer::ObserverError;
use crate::plant::PlantError;
use crate::secondary::SecondaryError;
use crate::etm::EtmError;

pub use config::{
    load_scenario, load_scenario_over, InitialEstimate, LineConfig, LoadConfig, MetricsConfig, NetworkConfig,
    ObserverConfig, ScenarioConfig, SecondaryConfig, SwitchingConfig,
};
pub use engine::{run_scenario, run_scenario_with, RunOptions, RunOutput, Simulation};
pub use metrics::{Metrics, Restoration, SharingSummary};
pub use output::{write_outputs, EventRecord, Trace};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: `{field}` {reason}")]
    Invalid { field: String, reason: String },
    #[error("observer design for DG {dg} failed: {source}")]
    Design {
        dg: usize,
        #[source]
        source: MatEqError,
    },
    #[error("integration diverged at t = {t} s in component {component}")]
    Divergence { t: f64, component: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Etm(#[from] EtmError),
    #[error(transparent)]
    Secondary(#[from] SecondaryError),
}

impl HarnessError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for this error class: 2 configuration, 3 observer
    /// design, 4 divergence, 5 I/O, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse(_) | HarnessError::Invalid { .. } | HarnessError::Plant(PlantError::Topology(_)) => 2,
            HarnessError::Plant(PlantError::Model(_)) => 2,
            HarnessError::Design { .. } => 3,
            HarnessError::Divergence { .. } | HarnessError::Plant(PlantError::Divergence { .. }) => 4,
            HarnessError::Io { .. } => 5,
            _ => 1,
        }
    }
}

/// Communication-reduction ratio against a periodic baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reduction {
    /// `events / (rate · duration)`, clamped to 1.
    pub ratio: f64,
    /// Set when the event count exceeded the baseline and was clamped.
    pub anomalous: bool,
}

/// `event_count / (baseline_rate · duration)`, clamped to 1 with a flag.
pub fn communication_reduction(event_count: usize, baseline_rate: f64, duration: f64) -> Result<Reduction, HarnessError> {
    if !(baseline_rate > 0.0) || !baseline_rate.is_finite() {
        return Err(HarnessError::invalid("baseline_rate", "must be finite and positive"));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(HarnessError::invalid("duration", "must be finite and positive"));
    }
    let packets = baseline_rate * duration;
    if packets < 1.0 {
        return Err(HarnessError::invalid(
            "baseline_rate",
            format!("times duration must be at least one packet, got {packets}"),
        ));
    }
    let raw = event_count as f64 / packets;
    Ok(Reduction {
        ratio: raw.min(1.0),
        anomalous: raw > 1.0,
    })
}

/// Packets a periodic scheme sends at instants `k / rate` in `[0, duration)`.
pub fn baseline_packet_count(baseline_rate: f64, duration: f64) -> u64 {
    let exact = baseline_rate * duration;
    // Instants that land on `duration` up to rounding are excluded.
    let rounded = exact.round();
    if (exact - rounded).abs() <= 1e-9 * exact.max(1.0) {
        rounded as u64
    } else {
        exact.ceil() as u64
    }
}
