//! Synthetic insole pair: parametric walking and standing generators with ground truth.

pub mod balance;
pub mod walk;

pub use balance::{generate_balance, BalanceGenParams, BalanceTruth, GeneratedBalance};
pub use walk::{
    generate_tug, generate_walk, GaitGenParams, GeneratedWalk, GroundTruth, TruthCycle, TruthEvent, TurnSpec,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}
