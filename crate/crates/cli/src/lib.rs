//! Library side of the `mfk` command: configuration, problem setup and the four commands.

pub mod commands;
pub mod config;
mod setup;
mod simulator;

pub use commands::{cmd_fit, cmd_predict, cmd_report, cmd_sequential, CliError, Probes, Reporter};
pub use config::RunConfig;
pub use simulator::CommandSimulator;
