//! File formats, reports and the command-line front end for `phasewave-core`.

pub mod cli;
pub mod error;
pub mod report;
pub mod schema;
pub mod trace_format;

pub use cli::{run, CommandOutcome};
pub use trace_format::{parse_trace, write_trace, ParseError};
