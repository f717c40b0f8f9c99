//! Detection of unintended electromagnetic emanation from harmonic and
//! intermodulation-product patterns in RF power spectra.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bench;
pub mod classify;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod harmonics;
pub mod iq;
pub mod peaks;
pub mod profiles;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
