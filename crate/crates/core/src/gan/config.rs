use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Init, LayerSpec, Network, Padding};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub side: usize,
    pub channels: [usize; 3],
    pub fc: [usize; 2],
    /// Keep-probability of the dropout after FC2.
    pub keep: f32,
    pub leaky_slope: f32,
    pub batchnorm: bool,
    /// Standard deviation of the normal weight initialization.
    pub init_std: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            side: 48,
            channels: [64, 128, 256],
            fc: [256, 512],
            keep: 0.5,
            leaky_slope: 0.2,
            batchnorm: true,
            init_std: 0.02,
        }
    }
}

impl DiscriminatorConfig {
    /// Desk-scale discriminator. Batchnorm is off: with running statistics
    /// taken over mixed real/generated batches the small network's
    /// inference-mode scores collapse during training.
    pub fn reduced() -> Self {
        Self {
            channels: [16, 32, 64],
            fc: [64, 128],
            batchnorm: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.side % 4 != 0 {
            return Err(Error::Config(format!(
                "discriminator side {} is not divisible by 4",
                self.side
            )));
        }
        if self.channels.contains(&0) || self.fc.contains(&0) {
            return Err(Error::Config("discriminator widths must be positive".into()));
        }
        if !(self.keep > 0.0 && self.keep <= 1.0) {
            return Err(Error::Config(format!("keep probability {} outside (0, 1]", self.keep)));
        }
        Ok(())
    }

    /// Index of the layer whose output is the feature-matching activation
    /// (FC2 after its nonlinearity, before dropout).
    pub fn feature_layer(&self) -> usize {
        self.layers().iter().position(|l| matches!(l, LayerSpec::Dropout { .. })).unwrap() - 1
    }

    fn layers(&self) -> Vec<LayerSpec> {
        let [c1, c2, c3] = self.channels;
        let [f1, f2] = self.fc;
        let pad = Padding::same_trailing(2, 2);
        let act = LayerSpec::LeakyRelu { slope: self.leaky_slope };
        let q = self.side / 4;
        let mut layers = vec![LayerSpec::conv2d(1, c1, 2, 1, pad), act.clone()];
        let hidden = |layers: &mut Vec<LayerSpec>, weighted: LayerSpec, width: usize| {
            layers.push(weighted);
            if self.batchnorm {
                layers.push(LayerSpec::batchnorm(width));
            }
            layers.push(act.clone());
        };
        hidden(&mut layers, LayerSpec::conv2d(c1, c2, 2, 1, pad), c2);
        layers.push(LayerSpec::MaxPool2d { kernel: 2, stride: 2 });
        hidden(&mut layers, LayerSpec::conv2d(c2, c3, 2, 1, pad), c3);
        layers.push(LayerSpec::MaxPool2d { kernel: 2, stride: 2 });
        layers.push(LayerSpec::Flatten);
        hidden(&mut layers, LayerSpec::dense(q * q * c3, f1), f1);
        hidden(&mut layers, LayerSpec::dense(f1, f2), f2);
        layers.push(LayerSpec::Dropout { keep: self.keep });
        layers.push(LayerSpec::dense(f2, 1));
        layers.push(LayerSpec::Sigmoid);
        layers
    }
}

/// Conv1 → Conv2 → MaxPool1 → Conv3 → MaxPool2 → flatten → FC1 → FC2
/// (dropout) → FC3 → sigmoid. Batchnorm, when enabled, sits between each
/// hidden weighted layer except Conv1 and its Leaky ReLU.
pub fn build_discriminator(cfg: &DiscriminatorConfig, seed: u64) -> Result<Network> {
    cfg.validate()?;
    Network::new(
        &[1, cfg.side, cfg.side],
        cfg.layers(),
        Init::Normal { std: cfg.init_std },
        rng::derive(seed, "discriminator"),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub latent: usize,
    /// FC1 width; FC2 width is `channels[0] · start²`.
    pub fc1: usize,
    /// Input channels of the four transposed convolutions.
    pub channels: [usize; 4],
    pub start: usize,
    pub side: usize,
    pub leaky_slope: f32,
    pub batchnorm: bool,
    pub init_std: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            latent: 100,
            fc1: 1024,
            channels: [512, 256, 128, 64],
            start: 3,
            side: 48,
            leaky_slope: 0.2,
            batchnorm: true,
            init_std: 0.02,
        }
    }
}

impl GeneratorConfig {
    /// 21,844,353 parameters.
    pub fn full_scale() -> Self {
        Self {
            fc1: 2048,
            channels: [1024, 512, 256, 128],
            ..Self::default()
        }
    }

    pub fn reduced() -> Self {
        Self {
            fc1: 128,
            channels: [128, 64, 32, 16],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start * 16 != self.side {
            return Err(Error::Config(format!(
                "generator start size {} does not double four times to {}",
                self.start, self.side
            )));
        }
        if self.latent == 0 || self.fc1 == 0 || self.channels.contains(&0) {
            return Err(Error::Config("generator widths must be positive".into()));
        }
        Ok(())
    }

    fn layers(&self) -> Vec<LayerSpec> {
        let act = LayerSpec::LeakyRelu { slope: self.leaky_slope };
        let s = self.start;
        let [t0, t1, t2, t3] = self.channels;
        let mut layers = Vec::new();
        let hidden = |layers: &mut Vec<LayerSpec>, weighted: LayerSpec, width: usize| {
            layers.push(weighted);
            if self.batchnorm {
                layers.push(LayerSpec::batchnorm(width));
            }
            layers.push(act.clone());
        };
        hidden(&mut layers, LayerSpec::dense(self.latent, self.fc1), self.fc1);
        hidden(&mut layers, LayerSpec::dense(self.fc1, t0 * s * s), t0 * s * s);
        layers.push(LayerSpec::Reshape { shape: vec![t0, s, s] });
        for (i, o) in [(t0, t1), (t1, t2), (t2, t3)] {
            hidden(&mut layers, LayerSpec::transposed_conv2d(i, o, 2, 2, Padding::NONE), o);
        }
        layers.push(LayerSpec::transposed_conv2d(t3, 1, 2, 2, Padding::NONE));
        layers.push(LayerSpec::Tanh);
        layers
    }
}

/// FC1 → FC2 → reshape → T.Conv1..T.Conv4 → tanh, 2×2 kernels at stride 2.
pub fn build_generator(cfg: &GeneratorConfig, seed: u64) -> Result<Network> {
    cfg.validate()?;
    Network::new(
        &[cfg.latent],
        cfg.layers(),
        Init::Normal { std: cfg.init_std },
        rng::derive(seed, "generator"),
    )
}
