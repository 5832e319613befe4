//! Core library for adversarial post-processing of synthetic speech.
//!
//! The crate provides the full pipeline: audio I/O and DSP front end,
//! a small reverse-mode autodiff engine, LFCC feature extraction, the
//! countermeasure detector, the residual generator and its adversarial
//! training loop, data augmentation, and evaluation/reporting.

pub mod adv_train;
pub mod audio;
pub mod augment;
pub mod autodiff;
pub mod config;
pub mod detector;
pub mod error;
pub mod eval;
pub mod lfcc;
pub mod manifest;
pub mod nn;
pub mod rgn;
pub mod seeds;

pub use error::{Error, Result};
