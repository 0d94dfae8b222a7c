//! Command-line pipeline around the core library: seed classification,
//! fingerprint clustering, model training, candidate generation, scoring,
//! and a reproducible end-to-end benchmark.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::fmt;

/// Failures surfaced to the shell, partitioned by exit code: 2 for
/// configuration and input-data problems, 3 for I/O, 4 for model files
/// that fail integrity or version checks.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Model(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration: {msg}"),
            CliError::Io(msg) => write!(f, "i/o: {msg}"),
            CliError::Model(msg) => write!(f, "model file: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<v6forge_core::addr6::LoadError> for CliError {
    fn from(e: v6forge_core::addr6::LoadError) -> Self {
        match e {
            v6forge_core::addr6::LoadError::Io(io) => CliError::Io(io.to_string()),
            malformed => CliError::Config(malformed.to_string()),
        }
    }
}

impl From<v6forge_core::seedclass::SeedClassError> for CliError {
    fn from(e: v6forge_core::seedclass::SeedClassError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<v6forge_core::vae6::VaeError> for CliError {
    fn from(e: v6forge_core::vae6::VaeError) -> Self {
        use v6forge_core::vae6::VaeError;
        match e {
            VaeError::CorruptModel(_) | VaeError::VersionMismatch { .. } => {
                CliError::Model(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<v6forge_core::evalkit::EvalError> for CliError {
    fn from(e: v6forge_core::evalkit::EvalError) -> Self {
        match e {
            v6forge_core::evalkit::EvalError::Load(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}
