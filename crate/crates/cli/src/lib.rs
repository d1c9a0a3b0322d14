//! Experiment driver for conformal prediction with partially labeled data.
//!
//! Subcommands map to [`commands`]: `generate` writes datasets, `run`
//! trains, calibrates and reports over several seeds, `audit` tabulates the
//! dominance checks against the oracle score set, and `lemma-test` runs the
//! randomized rank-lemma trials.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use commands::{cmd_audit, cmd_generate, cmd_lemma, cmd_run};
pub use config::{ExperimentConfig, Overrides};
pub use error::CliError;
