use thiserror::Error;

use crate::model::{Modality, TrackId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incompatible embeddings: dimension {left} vs {right}")]
    IncompatibleEmbeddings { left: usize, right: usize },

    #[error("embedding has zero norm and cannot be normalized")]
    ZeroNorm,

    #[error("embedding contains a non-finite value")]
    NonFinite,

    #[error("{id} has no {modality} embedding")]
    MissingModality { id: u64, modality: Modality },

    #[error("NN distances out of order: d1 = {d1} > d2 = {d2}")]
    NnOutOfOrder { d1: f64, d2: f64 },

    #[error("voice threshold unavailable")]
    VoiceThresholdUnavailable,

    #[error("insufficient negatives to learn a voice threshold")]
    InsufficientNegatives,

    #[error("cannot split clusters: requested {requested}, only {available} present")]
    CannotSplit { requested: usize, available: usize },

    #[error("track {0} has no ground-truth label")]
    Unlabeled(TrackId),

    #[error("unknown character {0:?}")]
    UnknownCharacter(String),

    #[error("invalid config: {key}: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid generator params: {0}")]
    InvalidParams(String),

    #[error("{msg}, line {line}")]
    Parse { line: usize, msg: String },

    #[error("invalid dataset: {}", format_violations(.0))]
    InvalidDataset(Vec<Violation>),

    #[error("schema version mismatch: found {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("malformed document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
