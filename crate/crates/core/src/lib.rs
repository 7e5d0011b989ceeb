//! Intent-driven threat assessment for optical intersatellite links.
//!
//! The pipeline runs from CO-OFDM signal synthesis under three threat models
//! ([`threat`]), through morphological spectrogram features ([`features`]),
//! to a multitask network ([`nn`]) whose outputs are graded on an eight-level
//! threat scale ([`assessment`]). [`baseline`] holds the sequential
//! capability-then-intent cascade used for comparison, and [`experiments`]
//! ties everything to files and metrics.

pub mod assessment;
pub mod baseline;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod features;
pub mod nn;
pub mod seed;
pub mod signal;
pub mod threat;

pub use error::{CpaError, Result};
