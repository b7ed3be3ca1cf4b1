//! Command-line runner: scripted-policy episodes, held-out evaluation, asset
//! generation and benchmarks.

pub mod bench;
pub mod episodes;
pub mod error;
pub mod generate;
pub mod policy;
pub mod run;

pub use error::{CliError, CliResult, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
pub use policy::{PolicyKind, ScoopParams, ScriptedPolicy};
