use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvGeom};
use super::{gemm, LayerSpec, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Training,
    Inference,
}

/// Weight initialization. Biases and batchnorm shifts start at zero,
/// batchnorm scales at one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Normal { std: f64 },
    Zeros,
}

#[derive(Clone, Debug, PartialEq)]
struct RunningStats<T> {
    mean: Vec<T>,
    var: Vec<T>,
}

/// A sequential network: layer specs, their parameters and batchnorm state.
#[derive(Clone, Debug)]
pub struct Network<T = f32> {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Vec<Tensor<T>>>,
    running: Vec<Option<RunningStats<T>>>,
    mode: Mode,
    version: u64,
}

/// Equality of structure, weights, batchnorm state and mode; the tape
/// version stamp is ignored.
impl<T: PartialEq> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.layers == other.layers
            && self.params == other.params
            && self.running == other.running
            && self.mode == other.mode
    }
}

/// Parameter gradients (same layout as [`Network::params`]) and the
/// gradient with respect to the network input.
#[derive(Clone, Debug)]
pub struct Gradients<T = f32> {
    pub params: Vec<Vec<Tensor<T>>>,
    pub input: Tensor<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn is_finite(&self) -> bool {
        self.input.is_finite() && self.params.iter().flatten().all(Tensor::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.params
            .iter()
            .flatten()
            .flat_map(|t| t.data().iter())
            .map(|v| v.as_f64().abs())
            .fold(0.0, f64::max)
    }
}

enum Cache<T> {
    None,
    ArgMax(Vec<u32>),
    Norm {
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_mean: Vec<T>,
        batch_var: Vec<T>,
    },
    Mask(Vec<T>),
}

/// Recorded forward computation: activations entering each layer plus the
/// per-layer state needed to differentiate it.
pub struct Tape<T = f32> {
    version: u64,
    mode: Mode,
    acts: Vec<Tensor<T>>,
    caches: Vec<Cache<T>>,
}

impl<T: Scalar> Tape<T> {
    /// Output of the last recorded layer.
    pub fn output(&self) -> &Tensor<T> {
        self.acts.last().expect("tape always holds the input")
    }

    /// Activation entering layer `i` (`i == layers` is the output).
    pub fn activation(&self, i: usize) -> Option<&Tensor<T>> {
        self.acts.get(i)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn layers_recorded(&self) -> usize {
        self.caches.len()
    }

    /// Hash of every data-dependent branch taken (leaky-relu signs and
    /// max-pool winners). Two forward passes with equal signatures follow
    /// the same piecewise-smooth region.
    pub(crate) fn branch_signature(&self, layers: &[LayerSpec]) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (i, cache) in self.caches.iter().enumerate() {
            match (&layers[i], cache) {
                (LayerSpec::LeakyRelu { .. }, _) => {
                    for v in self.acts[i].data() {
                        (*v > T::zero()).hash(&mut h);
                    }
                }
                (_, Cache::ArgMax(a)) => a.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}

impl<T: Scalar> Network<T> {
    /// Builds a network and checks that consecutive shapes compose.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, init: Init, seed: u64) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Config(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.to_vec()];
        for (i, layer) in layers.iter().enumerate() {
            layer
                .validate()
                .map_err(|m| Error::Config(format!("layer {i} ({}): {m}", layer.kind())))?;
            let cur = shapes.last().unwrap();
            let next = layer.output_shape(cur).map_err(|expected| Error::Composition {
                layer: i,
                kind: layer.kind(),
                expected,
                got: cur.clone(),
            })?;
            shapes.push(next);
        }
        let mut params = Vec::with_capacity(layers.len());
        let mut running = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let mut rng = rng::stream(seed, i as u64);
            let mut tensors = Vec::new();
            for (j, shape) in layer.param_shapes().into_iter().enumerate() {
                let t = match (layer, j, init) {
                    (LayerSpec::BatchNorm { .. }, 0, _) => Tensor::full(&shape, T::one()),
                    (_, 0, Init::Normal { std }) => {
                        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
                        Tensor::from_fn(&shape, |_| T::from_f64_lossy(dist.sample(&mut rng)))
                    }
                    _ => Tensor::zeros(&shape),
                };
                tensors.push(t);
            }
            params.push(tensors);
            running.push(match layer {
                LayerSpec::BatchNorm { channels, .. } => Some(RunningStats {
                    mean: vec![T::zero(); *channels],
                    var: vec![T::one(); *channels],
                }),
                _ => None,
            });
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            shapes,
            params,
            running,
            mode: Mode::Training,
            version: 0,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Per-sample shape of the activation leaving layer `i`.
    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i + 1]
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Parameter version; bumped on every mutation through [`Network::params_mut`].
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn params(&self) -> &[Vec<Tensor<T>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor<T>>] {
        self.version += 1;
        &mut self.params
    }

    /// Running mean and variance of batchnorm layer `i`.
    pub fn running_stats(&self, i: usize) -> Option<(&[T], &[T])> {
        self.running
            .get(i)?
            .as_ref()
            .map(|r| (r.mean.as_slice(), r.var.as_slice()))
    }

    pub fn set_running_stats(&mut self, i: usize, mean: Vec<T>, var: Vec<T>) -> Result<()> {
        match self.running.get_mut(i) {
            Some(Some(r)) if r.mean.len() == mean.len() && r.var.len() == var.len() => {
                r.mean = mean;
                r.var = var;
                Ok(())
            }
            _ => Err(Error::Shape(format!("layer {i} has no matching batchnorm state"))),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn param_count_excluding_batchnorm(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| !matches!(l, LayerSpec::BatchNorm { .. }))
            .map(LayerSpec::param_count)
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::from_f64_lossy(x.as_f64())).collect();
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self
                .params
                .iter()
                .map(|ps| ps.iter().map(Tensor::cast).collect())
                .collect(),
            running: self
                .running
                .iter()
                .map(|r| {
                    r.as_ref().map(|r| RunningStats {
                        mean: conv(&r.mean),
                        var: conv(&r.var),
                    })
                })
                .collect(),
            mode: self.mode,
            version: self.version,
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let shape = input.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(Error::Composition {
                layer: 0,
                kind: self.layers.first().map_or("input", LayerSpec::kind),
                expected: self.input_shape.clone(),
                got: shape.get(1..).unwrap_or(&[]).to_vec(),
            });
        }
        Ok(shape[0])
    }

    /// Runs every layer and records a tape. `seed` drives dropout masks only.
    pub fn forward(&self, input: &Tensor<T>, seed: u64) -> Result<(Tensor<T>, Tape<T>)> {
        self.forward_prefix(input, self.layers.len(), seed)
    }

    /// Runs layers `0..upto`; the returned tensor is the activation leaving
    /// layer `upto - 1`.
    pub fn forward_prefix(&self, input: &Tensor<T>, upto: usize, seed: u64) -> Result<(Tensor<T>, Tape<T>)> {
        let tape = self.run(input, upto.min(self.layers.len()), seed, true)?;
        Ok((tape.output().clone(), tape))
    }

    /// Forward pass without keeping intermediate activations.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = self.run(input, self.layers.len(), 0, false)?;
        Ok(tape.acts.pop().unwrap())
    }

    fn run(&self, input: &Tensor<T>, upto: usize, seed: u64, record: bool) -> Result<Tape<T>> {
        let n = self.check_input(input)?;
        let mut acts = vec![input.clone()];
        let mut caches = Vec::with_capacity(upto);
        for i in 0..upto {
            let x = acts.last().unwrap();
            let (y, cache) = self.layer_forward(i, x, n, seed)?;
            if !y.is_finite() {
                return Err(Error::non_finite(format!(
                    "output of layer {i} ({})",
                    self.layers[i].kind()
                )));
            }
            if record {
                acts.push(y);
            } else {
                acts[0] = y;
            }
            caches.push(if record { cache } else { Cache::None });
        }
        Ok(Tape {
            version: self.version,
            mode: self.mode,
            acts,
            caches,
        })
    }

    fn layer_forward(&self, i: usize, x: &Tensor<T>, n: usize, seed: u64) -> Result<(Tensor<T>, Cache<T>)> {
        let in_shape = &self.shapes[i];
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&self.shapes[i + 1]);
        let p = &self.params[i];
        let xd = x.data();
        let (data, cache) = match &self.layers[i] {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = ConvGeom::new(in_shape[0], in_shape[1], in_shape[2], *kernel, *stride, *padding);
                let mut out = vec![T::zero(); n * out_channels * g.p()];
                ops::conv_forward(&g, n, *out_channels, xd, p[0].data(), p[1].data(), &mut out);
                (out, Cache::None)
            }
            LayerSpec::TransposedConv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let os = &self.shapes[i + 1];
                let g = ConvGeom::new(*out_channels, os[1], os[2], *kernel, *stride, *padding);
                let mut out = vec![T::zero(); n * os.iter().product::<usize>()];
                ops::tconv_forward(&g, n, *in_channels, xd, p[0].data(), p[1].data(), &mut out);
                (out, Cache::None)
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let (out, arg) =
                    ops::maxpool_forward(n, in_shape[0], in_shape[1], in_shape[2], *kernel, *stride, xd);
                (out, Cache::ArgMax(arg))
            }
            LayerSpec::Dense { inputs, units } => {
                let mut out = vec![T::zero(); n * units];
                for row in out.chunks_exact_mut(*units) {
                    row.copy_from_slice(p[1].data());
                }
                gemm(n, *inputs, *units, xd, false, p[0].data(), true, T::one(), &mut out);
                (out, Cache::None)
            }
            LayerSpec::BatchNorm { channels, epsilon, .. } => {
                self.batchnorm_forward(i, in_shape, n, *channels, *epsilon, xd)
            }
            LayerSpec::Dropout { keep } => {
                if self.mode == Mode::Inference || *keep >= 1.0 {
                    (xd.to_vec(), Cache::None)
                } else {
                    let mut rng = rng::stream(seed, i as u64);
                    let scale = T::from_f64_lossy(1.0 / *keep as f64);
                    let mask: Vec<T> = (0..xd.len())
                        .map(|_| {
                            if rng.random::<f32>() < *keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    let out = xd.iter().zip(&mask).map(|(a, m)| *a * *m).collect();
                    (out, Cache::Mask(mask))
                }
            }
            LayerSpec::LeakyRelu { slope } => {
                let s = T::from_f64_lossy(*slope as f64);
                (
                    xd.iter().map(|&v| if v > T::zero() { v } else { v * s }).collect(),
                    Cache::None,
                )
            }
            LayerSpec::Sigmoid => (
                xd.iter()
                    .map(|&v| T::one() / (T::one() + (-v).exp()))
                    .collect(),
                Cache::None,
            ),
            LayerSpec::Tanh => (xd.iter().map(|v| v.tanh()).collect(), Cache::None),
            LayerSpec::Flatten | LayerSpec::Reshape { .. } => (xd.to_vec(), Cache::None),
        };
        Ok((Tensor::new(out_shape, data)?, cache))
    }

    fn batchnorm_forward(
        &self,
        i: usize,
        in_shape: &[usize],
        n: usize,
        channels: usize,
        epsilon: f32,
        xd: &[T],
    ) -> (Vec<T>, Cache<T>) {
        let spatial: usize = in_shape[1..].iter().product();
        let gamma = self.params[i][0].data();
        let beta = self.params[i][1].data();
        let eps = epsilon as f64;
        // contiguous run of channel `c` in sample `b`
        let span = |b: usize, c: usize| (b * channels + c) * spatial..(b * channels + c + 1) * spatial;
        let mut out = vec![T::zero(); xd.len()];
        if self.mode == Mode::Inference {
            let r = self.running[i].as_ref().unwrap();
            for c in 0..channels {
                let inv = T::from_f64_lossy(1.0 / (r.var[c].as_f64() + eps).sqrt());
                let (scale, shift) = (gamma[c] * inv, beta[c] - gamma[c] * inv * r.mean[c]);
                for b in 0..n {
                    let rg = span(b, c);
                    for (o, &x) in out[rg.clone()].iter_mut().zip(&xd[rg]) {
                        *o = scale * x + shift;
                    }
                }
            }
            return (out, Cache::None);
        }
        let count = (n * spatial) as f64;
        let mut xhat = vec![T::zero(); xd.len()];
        let mut inv_std = Vec::with_capacity(channels);
        let mut batch_mean = Vec::with_capacity(channels);
        let mut batch_var = Vec::with_capacity(channels);
        for c in 0..channels {
            let sum: f64 = (0..n).map(|b| sum_f64(&xd[span(b, c)], |v| v)).sum();
            let mean = sum / count;
            let sq: f64 = (0..n)
                .map(|b| sum_f64(&xd[span(b, c)], |v| (v - mean) * (v - mean)))
                .sum();
            let var = sq / count;
            let inv = 1.0 / (var + eps).sqrt();
            let (m, iv) = (T::from_f64_lossy(mean), T::from_f64_lossy(inv));
            for b in 0..n {
                let rg = span(b, c);
                for ((h, o), &x) in xhat[rg.clone()].iter_mut().zip(&mut out[rg.clone()]).zip(&xd[rg]) {
                    *h = (x - m) * iv;
                    *o = gamma[c] * *h + beta[c];
                }
            }
            inv_std.push(iv);
            batch_mean.push(m);
            let unbiased = if count > 1.0 { sq / (count - 1.0) } else { var };
            batch_var.push(T::from_f64_lossy(unbiased));
        }
        (
            out,
            Cache::Norm {
                xhat,
                inv_std,
                batch_mean,
                batch_var,
            },
        )
    }

    /// Folds the batch statistics recorded on `tape` into the running
    /// statistics of every batchnorm layer.
    pub fn commit_running_stats(&mut self, tape: &Tape<T>) {
        for (i, cache) in tape.caches.iter().enumerate() {
            if let (
                LayerSpec::BatchNorm { momentum, .. },
                Cache::Norm {
                    batch_mean, batch_var, ..
                },
            ) = (&self.layers[i], cache)
            {
                let m = T::from_f64_lossy(*momentum as f64);
                let r = self.running[i].as_mut().unwrap();
                for c in 0..batch_mean.len() {
                    r.mean[c] = m * r.mean[c] + (T::one() - m) * batch_mean[c];
                    r.var[c] = m * r.var[c] + (T::one() - m) * batch_var[c];
                }
            }
        }
    }

    /// Reverse pass. `output_grad` is the gradient with respect to the last
    /// activation on the tape; layers beyond the recorded prefix receive
    /// zero gradients.
    pub fn backward(&self, tape: &Tape<T>, output_grad: &Tensor<T>) -> Result<Gradients<T>> {
        self.backward_from(tape, tape.layers_recorded(), output_grad)
    }

    /// Reverse pass starting from the activation entering layer `from`
    /// (so `from == tape.layers_recorded()` is the usual full backward).
    pub fn backward_from(&self, tape: &Tape<T>, from: usize, grad: &Tensor<T>) -> Result<Gradients<T>> {
        if tape.version != self.version {
            return Err(Error::StaleTape {
                recorded: tape.version,
                current: self.version,
            });
        }
        if from > tape.layers_recorded() {
            return Err(Error::Shape(format!(
                "backward from layer {from} but tape holds {}",
                tape.layers_recorded()
            )));
        }
        if grad.shape() != tape.acts[from].shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match activation {:?}",
                grad.shape(),
                tape.acts[from].shape()
            )));
        }
        let n = tape.acts[0].shape()[0];
        let mut params: Vec<Vec<Tensor<T>>> = self
            .params
            .iter()
            .map(|ps| ps.iter().map(|p| Tensor::zeros(p.shape())).collect())
            .collect();
        let mut g = grad.clone();
        for i in (0..from).rev() {
            let (dx, dparams) = self.layer_backward(i, tape, n, g)?;
            if !dparams.is_empty() {
                for (slot, d) in params[i].iter_mut().zip(dparams) {
                    *slot = Tensor::new(slot.shape().to_vec(), d)?;
                }
            }
            g = dx;
        }
        Ok(Gradients { params, input: g })
    }

    fn layer_backward(&self, i: usize, tape: &Tape<T>, n: usize, dy: Tensor<T>) -> Result<(Tensor<T>, Vec<Vec<T>>)> {
        let x = &tape.acts[i];
        let y = &tape.acts[i + 1];
        let in_shape = &self.shapes[i];
        let p = &self.params[i];
        let dyd = dy.data();
        let (dx, dparams): (Vec<T>, Vec<Vec<T>>) = match &self.layers[i] {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = ConvGeom::new(in_shape[0], in_shape[1], in_shape[2], *kernel, *stride, *padding);
                let (dx, dw, db) = ops::conv_backward(&g, n, *out_channels, x.data(), p[0].data(), dyd);
                (dx, vec![dw, db])
            }
            LayerSpec::TransposedConv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let os = &self.shapes[i + 1];
                let g = ConvGeom::new(*out_channels, os[1], os[2], *kernel, *stride, *padding);
                let (dx, dw, db) = ops::tconv_backward(&g, n, *in_channels, x.data(), p[0].data(), dyd);
                (dx, vec![dw, db])
            }
            LayerSpec::MaxPool2d { .. } => {
                let Cache::ArgMax(arg) = &tape.caches[i] else {
                    return Err(Error::Shape("maxpool tape entry missing".into()));
                };
                let mut dx = vec![T::zero(); x.len()];
                for (&src, &d) in arg.iter().zip(dyd) {
                    dx[src as usize] = dx[src as usize] + d;
                }
                (dx, Vec::new())
            }
            LayerSpec::Dense { inputs, units } => {
                let mut dw = vec![T::zero(); units * inputs];
                gemm(*units, n, *inputs, dyd, true, x.data(), false, T::zero(), &mut dw);
                let mut db = vec![0f64; *units];
                for row in dyd.chunks_exact(*units) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v.as_f64();
                    }
                }
                let mut dx = vec![T::zero(); n * inputs];
                gemm(n, *units, *inputs, dyd, false, p[0].data(), false, T::zero(), &mut dx);
                (dx, vec![dw, db.into_iter().map(T::from_f64_lossy).collect()])
            }
            LayerSpec::BatchNorm { channels, epsilon, .. } => {
                self.batchnorm_backward(i, tape, in_shape, n, *channels, *epsilon, x.data(), dyd)
            }
            LayerSpec::Dropout { .. } => match &tape.caches[i] {
                Cache::Mask(mask) => (dyd.iter().zip(mask).map(|(d, m)| *d * *m).collect(), Vec::new()),
                _ => (dyd.to_vec(), Vec::new()),
            },
            LayerSpec::LeakyRelu { slope } => {
                let s = T::from_f64_lossy(*slope as f64);
                (
                    x.data()
                        .iter()
                        .zip(dyd)
                        .map(|(&v, &d)| if v > T::zero() { d } else { d * s })
                        .collect(),
                    Vec::new(),
                )
            }
            LayerSpec::Sigmoid => (
                y.data()
                    .iter()
                    .zip(dyd)
                    .map(|(&s, &d)| d * s * (T::one() - s))
                    .collect(),
                Vec::new(),
            ),
            LayerSpec::Tanh => (
                y.data()
                    .iter()
                    .zip(dyd)
                    .map(|(&t, &d)| d * (T::one() - t * t))
                    .collect(),
                Vec::new(),
            ),
            LayerSpec::Flatten | LayerSpec::Reshape { .. } => (dyd.to_vec(), Vec::new()),
        };
        Ok((Tensor::new(x.shape().to_vec(), dx)?, dparams))
    }

    #[allow(clippy::too_many_arguments)]
    fn batchnorm_backward(
        &self,
        i: usize,
        tape: &Tape<T>,
        in_shape: &[usize],
        n: usize,
        channels: usize,
        epsilon: f32,
        xd: &[T],
        dyd: &[T],
    ) -> (Vec<T>, Vec<Vec<T>>) {
        let spatial: usize = in_shape[1..].iter().product();
        let gamma = self.params[i][0].data();
        let span = |b: usize, c: usize| (b * channels + c) * spatial..(b * channels + c + 1) * spatial;
        let mut dx = vec![T::zero(); xd.len()];
        let mut dgamma = vec![T::zero(); channels];
        let mut dbeta = vec![T::zero(); channels];
        let (xhat_owned, inv_std): (Option<Vec<T>>, Vec<T>) = match &tape.caches[i] {
            Cache::Norm { inv_std, .. } => (None, inv_std.clone()),
            _ => {
                // recorded in inference mode: an affine map with running statistics
                let r = self.running[i].as_ref().unwrap();
                let inv: Vec<T> = r
                    .var
                    .iter()
                    .map(|v| T::from_f64_lossy(1.0 / (v.as_f64() + epsilon as f64).sqrt()))
                    .collect();
                let mut xh = vec![T::zero(); xd.len()];
                for c in 0..channels {
                    for b in 0..n {
                        let rg = span(b, c);
                        for (h, &x) in xh[rg.clone()].iter_mut().zip(&xd[rg]) {
                            *h = (x - r.mean[c]) * inv[c];
                        }
                    }
                }
                (Some(xh), inv)
            }
        };
        let batch_stats = xhat_owned.is_none();
        let xhat: &[T] = match (&xhat_owned, &tape.caches[i]) {
            (Some(v), _) => v,
            (None, Cache::Norm { xhat, .. }) => xhat,
            _ => unreachable!(),
        };
        let count = (n * spatial) as f64;
        for c in 0..channels {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for b in 0..n {
                let rg = span(b, c);
                sum_dy += sum_f64(&dyd[rg.clone()], |v| v);
                sum_dy_xhat += dot_f64(&dyd[rg.clone()], &xhat[rg]);
            }
            dgamma[c] = T::from_f64_lossy(sum_dy_xhat);
            dbeta[c] = T::from_f64_lossy(sum_dy);
            if batch_stats {
                let scale = T::from_f64_lossy(gamma[c].as_f64() * inv_std[c].as_f64() / count);
                let (cn, sd, sdx) = (
                    T::from_f64_lossy(count),
                    T::from_f64_lossy(sum_dy),
                    T::from_f64_lossy(sum_dy_xhat),
                );
                for b in 0..n {
                    let rg = span(b, c);
                    for ((d, &g), &h) in dx[rg.clone()].iter_mut().zip(&dyd[rg.clone()]).zip(&xhat[rg]) {
                        *d = scale * (cn * g - sd - h * sdx);
                    }
                }
            } else {
                let scale = gamma[c] * inv_std[c];
                for b in 0..n {
                    let rg = span(b, c);
                    for (d, &g) in dx[rg.clone()].iter_mut().zip(&dyd[rg]) {
                        *d = g * scale;
                    }
                }
            }
        }
        (dx, vec![dgamma, dbeta])
    }
}

/// Sum of `f(v)` in f64 with four independent accumulators.
fn sum_f64<T: Scalar>(xs: &[T], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = [0f64; 4];
    let chunks = xs.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += f(v.as_f64());
        }
    }
    acc.iter().sum::<f64>() + rest.iter().map(|v| f(v.as_f64())).sum::<f64>()
}

fn dot_f64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut acc = [0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x.as_f64() * y.as_f64()).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k].as_f64() * y[k].as_f64();
        }
    }
    acc.iter().sum::<f64>() + tail
}
