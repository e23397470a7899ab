//! Unit-sequence toolkit for duration-controlled, textless speech-to-speech
//! translation.
//!
//! The crate is organised around discrete speech-unit sequences:
//!
//! - [`units`]: sequences, run-length form, deduplication, unit speed and
//!   speed adaptation.
//! - [`diffusion`]: absorbing-mask discrete diffusion (mask schedules, forward
//!   masking, masked cross-entropy, the length-conditioned sampler).
//! - [`toy`]: a synthetic bilingual unit task with an exact posterior oracle
//!   and a count-based denoiser trained with the masked objective.
//! - [`flow`]: the conditional flow-matching vector-field core with an affine
//!   per-time-bin field and an Euler sampler.
//! - [`metrics`]: duration/speed compliance, speed correlation and histograms.
//! - [`io`]: JSONL record formats.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod flow;
pub mod io;
pub mod metrics;
pub mod par;
pub mod rng;
pub mod toy;
pub mod units;

pub use error::{Error, Result};
pub use units::{RunLengthForm, SpeedEstimate, UnitSequence};
