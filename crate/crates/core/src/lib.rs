//! Plot triage with GAN discriminators used as one-class plot recognizers.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: tensors, the sequential layer zoo, reverse-mode gradients, ADAM.
//! * [`gan`]: discriminator/generator builders, adversarial training with
//!   feature matching, recognizers and checkpoints.
//! * [`raster`]: 48×48 ternary plot images and the plot-to-image transforms.
//! * [`yielddata`]: production test data model, ingestion, box-plot
//!   statistics and synthetic data generators.
//! * [`cascade`]: ordered recognizer cascades, scanning, evaluation and the
//!   labeling session.

pub mod cascade;
pub mod error;
pub mod gan;
pub mod rng;
pub mod raster;
pub mod tensor;
pub mod yielddata;

pub use error::{Error, Result};
