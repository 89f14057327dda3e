//! Library side of the `frwcap` command: report types and the validation,
//! benchmark and comparison drivers behind each subcommand.

pub mod bench;
pub mod compare;
pub mod report;
pub mod suites;

pub use report::{CommandEcho, Report, SCHEMA_VERSION};
