//! Desk-scale adversarial training with hand-written gradients.
//!
//! The discriminator is a projection discriminator whose label matrix `V` is
//! clipped to a box after every update. Two objectives are supported: the
//! corrupted-label loss, where generated labels pass through the same channel
//! as the real ones, and the few-label loss, which mixes unconditional terms
//! on all data with `lambda`-weighted conditional terms on labeled data.

mod gradcheck;
mod loss;
mod model;
pub mod nn;
mod train;

pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{
    evaluate, exact_lambda_terms, exact_rcgan_terms, lambda_terms, rcgan_lambda_loss, rcgan_terms, FakeTerm,
    GenObjective, LossEval, LossTerms, Phi, RealTerm,
};
pub use model::{disc_forward, ConditionalGenerator, DiscTrace, Generator, ProjectionDiscriminator};
pub use nn::{Activation, Mlp};
pub use train::{
    read_history, train, write_history, Checkpoint, EpochRecord, ParamBlock, StepLosses, TrainConfig, TrainMode,
    TrainOutcome, Trainer,
};

use crate::channel::ChannelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset does not match training mode: {0}")]
    Dataset(String),
    #[error("empty unlabeled set")]
    EmptyUnlabeled,
    #[error("non-finite loss at probe point {index}")]
    NonFiniteProbe { index: usize },
    #[error("training diverged at epoch {epoch}, step {step}: {what} is not finite")]
    Diverged { epoch: usize, step: usize, what: &'static str, checkpoint: Box<Checkpoint> },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
