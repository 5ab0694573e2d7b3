use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid world parameters: {0}")]
    InvalidWorld(String),

    #[error("connectivity repair exceeded budget of {budget} carves")]
    RepairBudget { budget: usize },

    #[error("no traversable source cell for distance field")]
    NoSource,

    #[error("target {target:?} unreachable from {start:?}")]
    Unreachable {
        start: (usize, usize),
        target: (usize, usize),
    },

    #[error("could not sample an episode: {0}")]
    EpisodeSampling(String),

    #[error("angle {0} is not a right-angle multiple")]
    NotRightAngle(i32),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("non-finite loss during update {update}: {detail}")]
    NonFinite { update: usize, detail: String },

    #[error(
        "teacher training ended below threshold: SR {sr:.3}, SPL {spl:.3} after {steps} steps (need SR {target_sr:.3}, SPL {target_spl:.3})"
    )]
    TeacherBudget {
        sr: f64,
        spl: f64,
        steps: usize,
        target_sr: f64,
        target_spl: f64,
    },

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
