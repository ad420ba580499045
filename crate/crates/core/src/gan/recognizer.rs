use serde::{Deserialize, Serialize};

use super::train::LatentVector;
use crate::error::{Error, Result};
use crate::raster::PlotImage;
use crate::tensor::{Mode, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecognizerKind {
    NonInteresting,
    Interesting,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognizerProvenance {
    pub config_hash: String,
    pub iterations: usize,
    pub seed: u64,
    pub validation_complete: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    pub score: f32,
    pub accepted: bool,
}

/// A trained discriminator in inference mode with its acceptance
/// threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct RecognizerModel {
    network: Network,
    tau: f32,
    class_name: String,
    kind: RecognizerKind,
    provenance: RecognizerProvenance,
}

impl RecognizerModel {
    pub fn new(
        network: Network,
        tau: f32,
        class_name: &str,
        kind: RecognizerKind,
        provenance: RecognizerProvenance,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::OutOfRange {
                value: tau as f64,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let shape = network.input_shape();
        if shape.len() != 3 || shape[0] != 1 || shape[1] != shape[2] || network.output_shape() != [1] {
            return Err(Error::Config(format!(
                "a recognizer needs a [1, s, s] → [1] network, got {:?} → {:?}",
                shape,
                network.output_shape()
            )));
        }
        Ok(Self {
            network: network.with_mode(Mode::Inference),
            tau,
            class_name: class_name.to_string(),
            kind,
            provenance,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn tau(&self) -> f32 {
        self.tau
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn kind(&self) -> RecognizerKind {
        self.kind
    }

    pub fn provenance(&self) -> &RecognizerProvenance {
        &self.provenance
    }

    pub fn side(&self) -> usize {
        self.network.input_shape()[1]
    }

    /// Same weights with a different threshold.
    pub fn with_tau(&self, tau: f32) -> Result<Self> {
        Self::new(self.network.clone(), tau, &self.class_name, self.kind, self.provenance.clone())
    }

    pub fn recognize(&self, image: &PlotImage) -> Result<Recognition> {
        let score = self.scores(&[image])?[0];
        Ok(Recognition {
            score,
            accepted: score > self.tau,
        })
    }

    /// Scores in input order; each image is scored independently.
    pub fn scores(&self, images: &[&PlotImage]) -> Result<Vec<f32>> {
        let side = self.side();
        if let Some(bad) = images.iter().find(|im| im.side() != side) {
            return Err(Error::Geometry {
                expected: side,
                got: bad.side(),
            });
        }
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            out.extend_from_slice(self.network.predict(&PlotImage::batch(chunk)?)?.data());
        }
        Ok(out)
    }
}

/// Ternary images from `n` seeded latent vectors, the generator run with
/// its batchnorm running statistics.
pub fn sample_generator(generator: &Network, n: usize, seed: u64) -> Result<Vec<PlotImage>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let shape = generator.output_shape();
    if shape.len() != 3 || shape[0] != 1 || shape[1] != shape[2] {
        return Err(Error::Config(format!("generator output {shape:?} is not a single-channel square")));
    }
    let side = shape[1];
    let net = generator.clone().with_mode(Mode::Inference);
    let dim = net.input_shape()[0];
    let latent = LatentVector::batch(&(0..n as u64).map(|i| LatentVector::sample(dim, seed, i)).collect::<Vec<_>>())?;
    let out = net.predict(&latent)?;
    out.data()
        .chunks(side * side)
        .enumerate()
        .map(|(i, values)| {
            let mut im = PlotImage::quantize(side, values)?;
            im.provenance_mut().transform = "generator".into();
            im.provenance_mut().seed = Some(seed.wrapping_add(i as u64));
            Ok(im)
        })
        .collect()
}
