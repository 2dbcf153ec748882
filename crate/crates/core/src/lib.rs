//! Module-current scheduling for modular multilevel series-parallel battery
//! converter strings.
//!
//! The crate is `no_std` (it needs `alloc`) and covers the pure algorithmic
//! part of the simulator: the string-state algebra, current distribution in
//! parallel groups, the high-bandwidth scheduler and the slow list-based
//! reference scheduler, the level modulator, the ripple/ageing metrics and
//! the fixed-step simulation loop. File formats, spectra and the CLI live in
//! the `mmspc` crate.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(test), no_std)]
#![deny(missing_docs)]

extern crate alloc;

pub mod analysis;
pub mod control;
pub mod electrical;
mod error;
mod linalg;
pub mod modulation;
pub mod reference;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
pub use linalg::solve_dense;

/// Largest supported string length. Bounds the per-state lookup tables
/// (4^N entries) and the dense group solves.
pub const MAX_MODULES: usize = 8;
