//! Command-line surface of peaklab: configuration, orchestration and
//! result persistence.

pub mod config;
pub mod run;
pub mod snapshot;
pub mod store;

pub use config::{parse_config, ConfigError, ExperimentKind, RunConfig};
pub use run::{execute, Invocation, RunError};
pub use store::{ResultStore, RunStatus};
