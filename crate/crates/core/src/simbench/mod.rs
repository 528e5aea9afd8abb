//! Simulation harness: scenario generators, the size/power experiment runner
//! and CSV ingestion of user data.

mod experiment;
mod generate;
mod ingest;

pub use experiment::{run_experiment, ExperimentRow, ExperimentTable};
pub use generate::{generate, Case, GeneratedSample, ScenarioSpec, Setting};
pub use ingest::{ingest_csv, ingest_reader, IngestOptions, IngestedSample};
