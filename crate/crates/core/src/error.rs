use thiserror::Error;

use crate::{etm::EtmError, harness::HarnessError, mateq::MatEqError, model::ModelError};
use crate::{observer::ObserverError, plant::PlantError, secondary::SecondaryError};

/// Any error raised by the crate, tagged with the subsystem it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MatEq(#[from] MatEqError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Etm(#[from] EtmError),
    #[error(transparent)]
    Secondary(#[from] SecondaryError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
