//! Orchestration: declarative config, the tuned-proportion sweep and the CLI.

pub mod cli;
pub mod config;
pub mod provenance;
pub mod sweep;

pub use cli::run;
pub use config::{parse_config, validate_config, PipelineConfig};
pub use provenance::{config_hash, provenance};
pub use sweep::{embed_sentences, run_sweep, SweepReport, SweepRow};
