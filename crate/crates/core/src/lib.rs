//! Sketches for turnstile streams with bounded deletions.

pub mod csss;
pub mod error;
pub mod hashing;
pub mod heavy_hitters;
pub mod inner_product;
pub mod l0;
pub mod l1_estimator;
pub mod l1_sampler;
pub mod stream;
pub mod support;

pub use error::{Result, SketchError};
