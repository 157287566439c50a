//! Experiment harness behind the `streamkpca` binary.

pub mod check;
pub mod config;
pub mod report;
pub mod run;
pub mod sweep;
pub mod trajectory_io;

pub use check::cmd_check;
pub use config::{EtaPolicy, FeatureMapConfig, GeneratorConfig, InitKind, RunConfig};
pub use report::RunReport;
pub use run::cmd_run;
pub use sweep::{cmd_sweep, SweepTable};
pub use trajectory_io::{parse_trajectory_csv, parse_trajectory_meta};
