//! Sequence likelihood calibration from preference feedback, end to end:
//! a small autoregressive model trained from scratch on a synthetic
//! extraction task, pointwise and pairwise judges learned from preference
//! pairs, candidate sampling with tournament ranking, hinge calibration on
//! the induced pairs, and a win-rate evaluation harness driven by a
//! programmatic preference oracle.

pub mod error;
pub mod model;
pub mod vocab;

pub use error::{Error, Result};
