//! Syllable-stress detection benchmark under noise and speech enhancement.
//!
//! Pipeline: synthetic or imported corpus -> white-noise degradation at fixed
//! SNRs -> optional enhancement -> per-syllable features -> joint VAE + DNN
//! classifier -> one-stress-per-word post-processing -> 5-fold reporting.
//! A small HTTP service runs the clean-vs-enhanced listening study.

pub mod audio;
pub mod corpus;
pub mod rng;
pub mod degrade;
pub mod enhance;
pub mod featfile;
pub mod prosody;
pub mod sslfeat;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod study;
