use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig};
use super::recognizer::{RecognizerKind, RecognizerModel, RecognizerProvenance};
use crate::error::{Error, Result};
use crate::raster::PlotImage;
use crate::rng;
use crate::tensor::{AdamConfig, AdamState, Mode, Network, Tensor};

/// Standard-normal latent input of the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector {
    pub values: Vec<f32>,
}

impl LatentVector {
    pub fn sample(dim: usize, seed: u64, index: u64) -> Self {
        let mut r = rng::stream(rng::derive(seed, "latent"), index);
        Self {
            values: (0..dim).map(|_| StandardNormal.sample(&mut r)).collect(),
        }
    }

    pub fn batch(vectors: &[LatentVector]) -> Result<Tensor> {
        let dim = vectors.first().map_or(0, |v| v.values.len());
        if vectors.iter().any(|v| v.values.len() != dim) {
            return Err(Error::Shape("latent vectors of unequal length".into()));
        }
        Tensor::new(vec![vectors.len(), dim], vectors.iter().flat_map(|v| v.values.iter().copied()).collect())
    }
}

fn latent_batch(dim: usize, n: usize, seed: u64, first: u64) -> Tensor {
    LatentVector::batch(&(0..n as u64).map(|i| LatentVector::sample(dim, seed, first + i)).collect::<Vec<_>>())
        .expect("equal lengths")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub max_iterations: usize,
    /// Iterations between validation checks.
    pub check_period: usize,
    /// Acceptance threshold, strictly inside (0, 1).
    pub tau: f32,
    /// Layer whose output is matched; `None` selects FC2 after activation.
    pub feature_layer: Option<usize>,
    /// Proxy stop: feature-matching loss below this fraction of the squared
    /// norm of the mean real features.
    pub proxy_tolerance: f64,
    /// Largest real batch per iteration; larger sets are shuffled into
    /// minibatches.
    pub batch_limit: usize,
    pub d_adam: AdamConfig,
    pub g_adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            check_period: 10,
            tau: 0.5,
            feature_layer: None,
            proxy_tolerance: 0.25,
            batch_limit: 64,
            d_adam: AdamConfig::default(),
            g_adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// Settings for the reduced networks: the small generator needs a
    /// tenfold learning rate to keep up with the discriminator.
    pub fn reduced() -> Self {
        let mut cfg = Self::default();
        cfg.g_adam.lr = 2e-3;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau {} must lie strictly inside (0, 1)", self.tau)));
        }
        if self.check_period == 0 || self.batch_limit == 0 {
            return Err(Error::Config("check period and batch limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLosses {
    /// Mean binary cross-entropy of stage 1.
    pub discriminator: f64,
    /// Squared distance between mean real and mean generated features.
    pub feature_matching: f64,
    /// Squared norm of the mean real feature vector.
    pub feature_scale: f64,
}

impl IterationLosses {
    /// Feature-matching loss relative to the real features' own scale.
    pub fn relative_feature_matching(&self) -> f64 {
        if self.feature_scale > 0.0 {
            self.feature_matching / self.feature_scale
        } else {
            f64::INFINITY
        }
    }
}

/// The adversarial pair with optimizer state.
#[derive(Clone, Debug)]
pub struct Gan {
    pub discriminator: Network,
    pub generator: Network,
    pub d_adam: AdamState,
    pub g_adam: AdamState,
    pub feature_layer: usize,
}

impl Gan {
    pub fn new(d_cfg: &DiscriminatorConfig, g_cfg: &GeneratorConfig, t_cfg: &TrainingConfig) -> Result<Self> {
        t_cfg.validate()?;
        if d_cfg.side != g_cfg.side {
            return Err(Error::Config(format!(
                "generator side {} does not match discriminator side {}",
                g_cfg.side, d_cfg.side
            )));
        }
        let discriminator = build_discriminator(d_cfg, t_cfg.seed)?;
        let generator = build_generator(g_cfg, t_cfg.seed)?;
        let feature_layer = t_cfg.feature_layer.unwrap_or_else(|| d_cfg.feature_layer());
        if feature_layer >= discriminator.layers().len() {
            return Err(Error::Config(format!("feature layer {feature_layer} out of range")));
        }
        Ok(Self {
            d_adam: AdamState::for_network(&discriminator, t_cfg.d_adam),
            g_adam: AdamState::for_network(&generator, t_cfg.g_adam),
            discriminator,
            generator,
            feature_layer,
        })
    }

    /// Pairs arbitrary networks: `discriminator` maps generator outputs to
    /// one probability, `feature_layer` indexes one of its layers.
    pub fn from_networks(
        discriminator: Network,
        generator: Network,
        feature_layer: usize,
        d_adam: AdamConfig,
        g_adam: AdamConfig,
    ) -> Result<Self> {
        if generator.output_shape() != discriminator.input_shape() || discriminator.output_shape() != [1] {
            return Err(Error::Config(format!(
                "generator output {:?} does not feed discriminator input {:?} → [1]",
                generator.output_shape(),
                discriminator.input_shape()
            )));
        }
        if feature_layer + 1 >= discriminator.layers().len() {
            return Err(Error::Config(format!("feature layer {feature_layer} out of range")));
        }
        Ok(Self {
            d_adam: AdamState::for_network(&discriminator, d_adam),
            g_adam: AdamState::for_network(&generator, g_adam),
            discriminator,
            generator,
            feature_layer,
        })
    }

    /// Feature-matching loss and its gradient with respect to the
    /// generated images, with the discriminator fixed.
    fn feature_matching(&self, real: &Tensor, fake: &Tensor, seed: u64) -> Result<(f64, f64, Tensor)> {
        let (m, l) = (real.shape()[0], fake.shape()[0]);
        let combined = Tensor::concat_batch(&[real, fake])?;
        let upto = self.feature_layer + 1;
        let (feat, tape) = self.discriminator.forward_prefix(&combined, upto, seed)?;
        let width = feat.len() / (m + l);
        let mean = |rows: std::ops::Range<usize>| {
            let mut acc = vec![0f64; width];
            for r in rows.clone() {
                for (a, v) in acc.iter_mut().zip(&feat.data()[r * width..(r + 1) * width]) {
                    *a += *v as f64;
                }
            }
            acc.iter_mut().for_each(|a| *a /= rows.len() as f64);
            acc
        };
        let (mr, mf) = (mean(0..m), mean(m..m + l));
        let diff: Vec<f64> = mf.iter().zip(&mr).map(|(f, r)| f - r).collect();
        let loss: f64 = diff.iter().map(|d| d * d).sum();
        let scale: f64 = mr.iter().map(|r| r * r).sum();
        let grad = Tensor::from_fn(feat.shape(), |i| {
            let (row, col) = (i / width, i % width);
            if row < m {
                (-2.0 * diff[col] / m as f64) as f32
            } else {
                (2.0 * diff[col] / l as f64) as f32
            }
        });
        let grads = self.discriminator.backward_from(&tape, upto, &grad)?;
        Ok((loss, scale, grads.input.slice_batch(m, m + l)?))
    }

    /// One two-stage iteration: [`Gan::discriminator_step`] then
    /// [`Gan::generator_step`].
    pub fn train_iteration(&mut self, real: &Tensor, seed: u64) -> Result<IterationLosses> {
        let discriminator = self.discriminator_step(real, seed)?;
        let (feature_matching, feature_scale) = self.generator_step(real, seed)?;
        Ok(IterationLosses {
            discriminator,
            feature_matching,
            feature_scale,
        })
    }

    fn check_batch(&self, real: &Tensor) -> Result<usize> {
        let m = real.shape()[0];
        if m == 0 {
            return Err(Error::Empty("real batch".into()));
        }
        if self.discriminator.mode() != Mode::Training || self.generator.mode() != Mode::Training {
            return Err(Error::Config("training needs both networks in training mode".into()));
        }
        Ok(m)
    }

    /// Stage 1: one ADAM step on the discriminator minimizing binary
    /// cross-entropy with real labeled 1 and `m` generated images labeled 0.
    /// The generator is only read.
    pub fn discriminator_step(&mut self, real: &Tensor, seed: u64) -> Result<f64> {
        let m = self.check_batch(real)?;
        let z = latent_batch(self.generator.input_shape()[0], m, seed, 0);
        let (fake, _) = self.generator.forward(&z, rng::derive(seed, "g1"))?;
        let combined = Tensor::concat_batch(&[real, &fake])?;
        let (p, tape) = self.discriminator.forward(&combined, rng::derive(seed, "d1"))?;
        let n = 2 * m;
        let mut bce = 0f64;
        let grad = Tensor::from_fn(&[n, 1], |i| {
            let y = if i < m { 1.0 } else { 0.0 };
            let pi = (p.data()[i] as f64).clamp(1e-7, 1.0 - 1e-7);
            bce -= y * pi.ln() + (1.0 - y) * (1.0 - pi).ln();
            // through the sigmoid: d(BCE)/d(logit) = p - y
            ((p.data()[i] as f64 - y) / n as f64) as f32
        });
        bce /= n as f64;
        if !bce.is_finite() {
            return Err(Error::non_finite("discriminator loss"));
        }
        let last = self.discriminator.layers().len() - 1;
        let grads = self.discriminator.backward_from(&tape, last, &grad)?;
        self.discriminator.adam_step(&grads, &mut self.d_adam)?;
        self.discriminator.commit_running_stats(&tape);
        Ok(bce)
    }

    /// Stage 2: with the discriminator fixed, one ADAM step on the generator
    /// minimizing the feature-matching loss. Returns the loss and the
    /// squared norm of the mean real features.
    pub fn generator_step(&mut self, real: &Tensor, seed: u64) -> Result<(f64, f64)> {
        let m = self.check_batch(real)?;
        let z = latent_batch(self.generator.input_shape()[0], m, seed, m as u64);
        let (fake, tape) = self.generator.forward(&z, rng::derive(seed, "g2"))?;
        let (fm, scale, image_grad) = self.feature_matching(real, &fake, rng::derive(seed, "d2"))?;
        if !fm.is_finite() {
            return Err(Error::non_finite("feature-matching loss"));
        }
        let grads = self.generator.backward(&tape, &image_grad)?;
        self.generator.adam_step(&grads, &mut self.g_adam)?;
        self.generator.commit_running_stats(&tape);
        Ok((fm, scale))
    }

    /// Feature-matching loss of `fake` against `real` without updating
    /// anything.
    pub fn feature_matching_loss(&self, real: &Tensor, fake: &Tensor) -> Result<f64> {
        Ok(self.feature_matching(real, fake, 0)?.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ValidationPass,
    Budget,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub iteration: usize,
    pub discriminator_loss: f64,
    pub feature_matching_loss: f64,
    pub relative_feature_matching: f64,
    pub train_fraction: f64,
    pub validation_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: usize,
    pub losses: Vec<IterationLosses>,
    pub checks: Vec<CheckRecord>,
    pub stop_reason: StopReason,
    /// False when the budget ran out before every train and validation
    /// sample was recognized.
    pub validation_complete: bool,
    pub duration_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InspectionDecision {
    Continue,
    Stop,
    /// Let the automated proxy decide.
    Defer,
}

/// External view of training, consulted whenever every train and
/// validation sample is recognized.
pub trait InspectionHook {
    fn inspect(&mut self, iteration: usize, gan: &Gan) -> InspectionDecision;

    /// Called after every validation check.
    fn progress(&mut self, _record: &CheckRecord) {}

    /// Polled every iteration; returning true ends training as manual.
    fn cancelled(&mut self) -> bool {
        false
    }
}

/// Always defers to the proxy.
pub struct ProxyOnly;

impl InspectionHook for ProxyOnly {
    fn inspect(&mut self, _: usize, _: &Gan) -> InspectionDecision {
        InspectionDecision::Defer
    }
}

pub struct TrainOutcome {
    pub model: RecognizerModel,
    pub gan: Gan,
    pub report: TrainingReport,
}

fn fraction_above(net: &Network, images: &Tensor, tau: f32) -> Result<f64> {
    let n = images.shape()[0];
    let mut above = 0usize;
    for start in (0..n).step_by(64) {
        let p = net.predict(&images.slice_batch(start, (start + 64).min(n))?)?;
        above += p.data().iter().filter(|&&v| v > tau).count();
    }
    Ok(above as f64 / n as f64)
}

/// Trains a discriminator on `train_set` and stops once every train and
/// validation sample scores above τ and either the hook says stop or the
/// feature-matching proxy is satisfied.
pub fn train(
    train_set: &[PlotImage],
    val_set: &[PlotImage],
    class_name: &str,
    kind: RecognizerKind,
    d_cfg: &DiscriminatorConfig,
    g_cfg: &GeneratorConfig,
    t_cfg: &TrainingConfig,
    hook: &mut dyn InspectionHook,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let side = d_cfg.side;
    if let Some(bad) = train_set.iter().chain(val_set).find(|im| im.side() != side) {
        return Err(Error::Geometry {
            expected: side,
            got: bad.side(),
        });
    }
    let mut gan = Gan::new(d_cfg, g_cfg, t_cfg)?;
    let train_t = PlotImage::batch(&train_set.iter().collect::<Vec<_>>())?;
    let val_t = if val_set.is_empty() {
        None
    } else {
        Some(PlotImage::batch(&val_set.iter().collect::<Vec<_>>())?)
    };
    let m = train_set.len();
    let mut order: Vec<usize> = (0..m).collect();
    let mut cursor = m;
    let mut losses = Vec::new();
    let mut checks = Vec::new();
    let mut stop = None;
    let mut validation_complete = false;

    for it in 1..=t_cfg.max_iterations {
        if hook.cancelled() {
            stop = Some(StopReason::Manual);
            break;
        }
        let real = if m <= t_cfg.batch_limit {
            train_t.clone()
        } else {
            if cursor + t_cfg.batch_limit > m {
                order.shuffle(&mut rng::stream(rng::derive(t_cfg.seed, "shuffle"), it as u64));
                cursor = 0;
            }
            let rows = &order[cursor..cursor + t_cfg.batch_limit];
            cursor += t_cfg.batch_limit;
            let per = side * side;
            Tensor::new(
                vec![rows.len(), 1, side, side],
                rows.iter().flat_map(|&r| train_t.data()[r * per..(r + 1) * per].iter().copied()).collect(),
            )?
        };
        let step = gan.train_iteration(&real, rng::derive(t_cfg.seed, &format!("iteration/{it}")))?;
        losses.push(step);
        if it % t_cfg.check_period != 0 {
            continue;
        }
        let d = gan.discriminator.clone().with_mode(Mode::Inference);
        let train_fraction = fraction_above(&d, &train_t, t_cfg.tau)?;
        let validation_fraction = match &val_t {
            Some(v) => fraction_above(&d, v, t_cfg.tau)?,
            None => 1.0,
        };
        let record = CheckRecord {
            iteration: it,
            discriminator_loss: step.discriminator,
            feature_matching_loss: step.feature_matching,
            relative_feature_matching: step.relative_feature_matching(),
            train_fraction,
            validation_fraction,
        };
        hook.progress(&record);
        checks.push(record);
        if train_fraction < 1.0 || validation_fraction < 1.0 {
            continue;
        }
        validation_complete = true;
        let proxy = step.relative_feature_matching() < t_cfg.proxy_tolerance;
        let done = match hook.inspect(it, &gan) {
            InspectionDecision::Stop => Some(StopReason::Manual),
            InspectionDecision::Continue => None,
            InspectionDecision::Defer => proxy.then_some(StopReason::ValidationPass),
        };
        if done.is_some() {
            stop = done;
            break;
        }
    }

    let iterations = losses.len();
    let report = TrainingReport {
        iterations,
        losses,
        checks,
        stop_reason: stop.unwrap_or(StopReason::Budget),
        validation_complete,
        duration_secs: started.elapsed().as_secs_f64(),
    };
    let model = RecognizerModel::new(
        gan.discriminator.clone(),
        t_cfg.tau,
        class_name,
        kind,
        RecognizerProvenance {
            config_hash: config_hash(d_cfg, g_cfg, t_cfg),
            iterations,
            seed: t_cfg.seed,
            validation_complete,
        },
    )?;
    Ok(TrainOutcome { model, gan, report })
}

pub fn config_hash(d_cfg: &DiscriminatorConfig, g_cfg: &GeneratorConfig, t_cfg: &TrainingConfig) -> String {
    let json = serde_json::json!({"d": d_cfg, "g": g_cfg, "t": t_cfg});
    rng::hex_digest(json.to_string().as_bytes())[..16].to_string()
}
