//! Desk-scale license-plate pipeline tooling.
//!
//! The crate provides the pieces of an ALPR training pipeline that are
//! worth having on a workstation: the Indian plate grammar and multi-line
//! layout sampler, a deterministic synthetic renderer, the augmentation
//! suite, annotation manifests with leakage-safe splitting, recognition
//! and detection metrics, permuted autoregressive decoding over a
//! pluggable recognizer, and learning-rate schedule utilities.

pub mod augment;
pub mod config;
pub mod dataset;
pub mod img;
pub mod metrics;
pub mod parseq;
pub mod plate;
pub mod render;
pub mod rng;
pub mod sched;

pub use img::LabeledImage;
pub use rng::SeededRng;
