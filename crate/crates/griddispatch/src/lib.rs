//! File formats, configuration, command implementations and the bundled
//! benchmark for `griddispatch-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod feeder_io;
pub mod output;
pub mod scenario_io;
pub mod svg;
