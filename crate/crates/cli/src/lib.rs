//! Dataset I/O and subcommands behind the `ijvtrack` binary.

pub mod commands;
pub mod config;
pub mod dataset;

pub use commands::{
    cmd_compare, cmd_eval, cmd_synth, cmd_track, CompareReport, EvalReport, TrackOptions,
};
