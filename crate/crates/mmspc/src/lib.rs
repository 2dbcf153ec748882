//! Scenario files, experiment drivers and CSV output on top of `mmspc-core`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod error;
pub mod experiment;
pub mod output;
pub mod spectrum;

pub use error::{Error, Result};
pub use mmspc_core as core;
