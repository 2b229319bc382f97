//! Backpropagation through time with an arctan surrogate gradient.

mod bptt;
mod data;
mod loss;

use thiserror::Error;

pub use bptt::{
    bptt_train, calibrate, evaluate_head, evaluation_seed, fit_gain, frozen_draws, pathway_loss, pathway_loss_and_grad,
    simulate_head, trainable_roles, EpochLoss, HeadLoss, Optimizer, TrainConfig, TrainReport,
};
pub use data::{load_flight_log, read_flight_log, save_flight_log, write_flight_log, TrainingSequence};
pub use loss::{exterior_penalty, mse, pathway_specs, pearson_loss, surrogate_spike_grad, total_loss, ParamSpec, PEARSON_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("target has {target} samples but output has {output}")]
    LengthMismatch { target: usize, output: usize },
    #[error("series of length {0} is too short (need at least 2)")]
    TooShort(usize),
    #[error("no spec for parameter {0}")]
    MissingSpec(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("timestamps not increasing on line {line}: {previous} then {current}")]
    NonMonotoneTime { line: u64, previous: f64, current: f64 },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("non-finite loss in epoch {epoch}, sequence {sequence} ({head} head)")]
    NonFinite {
        epoch: usize,
        sequence: usize,
        head: crate::network::PathwayKind,
        history: Vec<EpochLoss>,
    },
}
