use thiserror::Error;

use crate::paillier::PaillierError;
use crate::protocol::EntityId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error("invalid profile {id}: {reason}")]
    InvalidProfile { id: EntityId, reason: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("expected a {expected} profile, got {found}")]
    RoleMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("demand dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("demand sum {0} outside {{0, 1, 2}}")]
    InvalidDemandSum(i64),
    #[error("round {round} is {phase}; cannot {action}")]
    WrongPhase {
        round: u32,
        phase: &'static str,
        action: &'static str,
    },
    #[error("no ciphertext stored for {0}")]
    UnknownEntity(String),
    #[error("round secret transport failed: {0}")]
    KeyTransport(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
