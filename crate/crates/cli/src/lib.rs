//! Scenario parsing and execution behind the `cbw` command.

pub mod error;
pub mod run;
pub mod scenario;

pub use error::CliError;
pub use run::{run, RunOutcome};
pub use scenario::{parse_scenario, resolve, serialize, Kind, Scenario};
