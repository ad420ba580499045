//! Adversarial training of plot recognizers.
//!
//! A discriminator is trained against a generator on a small set of example
//! plots. Once it accepts every training and validation example, it is kept
//! as a [`RecognizerModel`] that scores new plots of the same kind.

mod checkpoint;
mod config;
mod recognizer;
mod train;

pub use checkpoint::{
    from_bytes, load_checkpoint, load_generator, load_recognizer, save_checkpoint, to_bytes, Checkpoint, MAGIC,
    VERSION,
};
pub use config::{build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig};
pub use recognizer::{sample_generator, Recognition, RecognizerKind, RecognizerModel, RecognizerProvenance};
pub use train::{
    config_hash, train, CheckRecord, Gan, InspectionDecision, InspectionHook, IterationLosses, LatentVector,
    ProxyOnly, StopReason, TrainOutcome, TrainingConfig, TrainingReport,
};

#[cfg(test)]
mod tests;
