//! Experiment harness for composite factor models: CSV ingestion, quarterly
//! averaging, factor-model cross-validation, the synthetic structure-recovery
//! experiment and the `cofactor` command line.

pub mod cli;
pub mod config;
pub mod cv;
pub mod error;
pub mod experiment;
pub mod fixture;
pub mod panel;
pub mod report;
pub mod table;

pub use error::{HarnessError, Result};
