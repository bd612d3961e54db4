//! Noise-fingerprint biometric toolkit.
//!
//! Three capture channels — fingertip images, face images, and eye-tracker
//! traces — are reduced to per-frame noise series, summarized into
//! distributional templates, and verified by matching fresh probes against
//! those templates. Authentication requires all three channels to agree.
//! A deterministic simulation harness measures false-accept/false-reject
//! behavior and replay-attack exposure on synthetic populations.

pub mod error;
pub mod extraction;
pub mod imaging;
pub mod matching;
pub mod plot;
pub mod report;
pub mod simharness;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
