//! Library side of the experiment runner: config parsing, sweep
//! enumeration, execution, and CSV serialization. The `byzsim` binary is a
//! thin wrapper over this crate.

pub mod execute;
pub mod output;
pub mod plan;
