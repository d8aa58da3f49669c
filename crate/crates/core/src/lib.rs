//! Desk-scale simulator for a closed-loop EEG spindle stimulation stack.
//!
//! The crate is organized around the stages of the loop:
//!
//! - [`signal`]: streaming, sample-by-sample preprocessing (FIR filtering,
//!   notch, online standardization, envelope extraction) with matched
//!   group delays across branches.
//! - [`synth`]: synthetic EEG recordings with expert-style score tracks and
//!   post-processed binary spindle labels, plus dataset splitting and
//!   oversampling utilities.
//! - [`nn`]: a minimal neural engine (1D conv, GRU, dense, AdamW, truncated
//!   BPTT, integrated gradients) sized for hardware-constrained detectors.
//! - [`detector`]: real-time inference over a preprocessed stream with
//!   time-dilation virtual parallelization and a one-stimulus-per-spindle
//!   policy.
//! - [`eval`]: sample-wise and event-level scoring with delay accounting,
//!   threshold sweeps, and the shuffled train/validate/test protocol.
//! - [`pmbo`]: parallel model-based optimization of the bi-objective
//!   (detection quality vs. parameter count) architecture search.
//!
//! The `parallel` feature (on by default) enables rayon-backed data
//! parallelism in batch gradient evaluation, dataset generation, and
//! threshold sweeps; without it every code path runs sequentially and
//! produces identical results.

pub mod cli;
pub mod config;
pub mod detector;
pub mod error;
pub mod eval;
pub mod nn;
pub mod parallel;
pub mod pmbo;
pub mod report;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
