//! Multimodal sleep staging with per-channel transformer encoders and
//! gated multimodal fusion.
//!
//! The crate covers the whole pipeline: signal preprocessing
//! ([`preprocess`]), a small reverse-mode autodiff substrate ([`numerics`]),
//! the model ([`model`]), training and evaluation ([`trainer`]), a planted
//! signal generator ([`synth`]) and the on-disk formats ([`formats`]).

pub mod data;
pub mod error;
pub mod formats;
pub mod numerics;
pub mod preprocess;
pub mod model;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use data::{ChannelSpec, Dataset, EpochRecord, Stage};
pub use error::{Error, Result};
