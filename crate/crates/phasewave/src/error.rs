use std::path::PathBuf;

use phasewave_core::config::ConfigError;
use phasewave_core::phases::{AnalysisError, TreeError};
use phasewave_core::synth::SynthError;

use crate::report::CompareError;
use crate::schema::SchemaError;
use crate::trace_format::ParseError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Schema { path: PathBuf, source: SchemaError },
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Synth(#[from] SynthError),
    #[error("invalid phase tree: {0}")]
    Tree(TreeError),
    #[error("{0}")]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Compare(#[from] CompareError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(AnalysisError::Config(_)) => EXIT_USAGE,
            CliError::Analysis(_) => EXIT_ANALYSIS,
            CliError::Compare(CompareError::NotGolden) => EXIT_USAGE,
            CliError::Compare(CompareError::Analysis(AnalysisError::Config(_))) => EXIT_USAGE,
            CliError::Compare(_) => EXIT_ANALYSIS,
            _ => EXIT_USAGE,
        }
    }
}
