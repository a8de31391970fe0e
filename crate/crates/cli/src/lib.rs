//! Pipeline orchestration behind the `rdclass` command.

use std::io;
use std::path::PathBuf;

use rdclass::evaluate::EvalError;
use rdclass::ingest::IngestError;
use rdclass::models::ModelError;
use rdclass::sample::SampleError;
use rdclass::scheme_map::MappingError;
use rdclass::vectorize::VectorizeError;
use thiserror::Error;

pub mod artifacts;
pub mod config;
pub mod serve;
pub mod stages;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("config error: {0}")]
    Config(String),
    #[error("workspace is locked by another stage ({0})")]
    Locked(PathBuf),
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("artifact {0} does not match its manifest hash")]
    HashMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Locked(_) => 4,
            CliError::Corrupt(_) | CliError::HashMismatch(_) => 5,
            _ => 1,
        }
    }
}
