//! Dog bark emotion classification on raw audio.
//!
//! The pipeline: decode WAV recordings ([`audio`]), cut them into fixed-length
//! fragments and split them into train/val/test sets ([`data`]), optionally
//! extract MFCC features ([`mfcc`]), train a small 1-D convolutional network
//! ([`model`], [`nn`], [`train`]) and report per-class precision/recall/f1
//! ([`metrics`]). Everything is deterministic given the configured seeds, and
//! every numerical kernel is verified in the test suite against an independent
//! oracle (naive DFT, finite differences, brute-force counting).

pub mod audio;
pub mod data;
pub mod metrics;
pub mod mfcc;
pub mod model;
pub mod nn;
pub mod rng;
pub mod train;
