use serde::{Deserialize, Serialize};

use super::{Gradients, Network, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment buffers for one parameter list.
#[derive(Clone, Debug)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn for_network(net: &Network<T>, config: AdamConfig) -> Self {
        let mut s = Self::new(config);
        s.ensure(&net.params().iter().flatten().map(Tensor::len).collect::<Vec<_>>());
        s
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn ensure(&mut self, lens: &[usize]) {
        if self.first.is_empty() {
            self.first = lens.iter().map(|&l| vec![T::zero(); l]).collect();
            self.second = self.first.clone();
        }
    }

    /// One bias-corrected ADAM update of `params` in place. Nothing is
    /// touched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "parameter {i}: {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::non_finite(format!("gradient of parameter {i}")));
            }
        }
        self.ensure(&params.iter().map(|p| p.len()).collect::<Vec<_>>());
        if self.first.len() != params.len() || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Shape("moment buffers do not match parameters".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + ob1 * gi;
                *vi = b2 * *vi + ob2 * gi * gi;
                let mhat = mi.as_f64() / bc1;
                let vhat = vi.as_f64() / bc2;
                *w = *w - T::from_f64_lossy(c.lr * mhat / (vhat.sqrt() + c.epsilon));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Network<T> {
    /// Applies one ADAM step with `grads` (as returned by `backward`).
    pub fn adam_step(&mut self, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
        let grad_refs: Vec<&Tensor<T>> = grads.params.iter().flatten().collect();
        let mut param_refs: Vec<&mut Tensor<T>> = self.params_mut().iter_mut().flatten().collect();
        state.step(&mut param_refs, &grad_refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut w = Tensor::<f32>::from_fn(&[3], |i| i as f32 - 1.0);
        let before = w.clone();
        let g = Tensor::zeros(&[3]);
        let mut st = AdamState::new(AdamConfig::default());
        st.step(&mut [&mut w], &[&g]).unwrap();
        assert_eq!(w, before);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // At t=1, m̂ = g and v̂ = g², so the step is lr·g/(|g|+eps).
        for g in [-3.0f64, -0.25, 0.5, 7.0] {
            let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
            let mut w = Tensor::<f64>::zeros(&[1]);
            let grad = Tensor::full(&[1], g);
            let mut st = AdamState::new(cfg);
            st.step(&mut [&mut w], &[&grad]).unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((w.data()[0] - expected).abs() < 1e-12);
            assert!((w.data()[0] + 0.01 * g.signum()).abs() <= 0.01 * 1e-8 / g.abs() + 1e-15);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        let mut w = Tensor::<f32>::full(&[1], 1.0);
        let mut st = AdamState::new(cfg);
        for _ in 0..200 {
            let g = Tensor::full(&[1], 2.0 * w.data()[0]);
            st.step(&mut [&mut w], &[&g]).unwrap();
        }
        assert!(w.data()[0].abs() < 0.1, "w = {}", w.data()[0]);
        assert_eq!(st.steps(), 200);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut w = Tensor::<f32>::full(&[2], 1.0);
        let g = Tensor::new(vec![2], vec![1.0, f32::NAN]).unwrap();
        let mut st = AdamState::new(AdamConfig::default());
        assert!(st.step(&mut [&mut w], &[&g]).is_err());
        assert_eq!(st.steps(), 0);
        assert_eq!(w.data(), &[1.0, 1.0]);
    }
}
