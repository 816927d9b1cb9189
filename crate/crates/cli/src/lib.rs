//! Pipeline behind the `aqa` command.
//!
//! Each subcommand is a method on [`Run`], which owns the effective
//! configuration and the run directory. Stages talk to each other only
//! through files in that directory:
//!
//! ```text
//! <run-dir>/
//!   config.echo.json
//!   data/                 gen-synthetic output (manifest, features, faults)
//!   checkpoints/dml.aqac  checkpoints/score.aqac
//!   dml_history.csv  score_history.csv
//!   predictions.csv  report.json  report.csv  dml_eval.json
//!   feedback/<video-id>.csv|.svg  feedback/index.json
//! ```

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, ExitKind};
pub use pipeline::Run;
