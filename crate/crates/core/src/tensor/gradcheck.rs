use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use super::{Network, Scalar, Tensor};
use crate::error::Result;
use crate::rng;

/// Outcome of comparing backward gradients against central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±h perturbation crossed a leaky-relu or max-pool
    /// branch; the finite difference is not a derivative there.
    pub skipped_kinks: usize,
}

/// Checks a network's gradients in f64 against central differences with step
/// `h`, sampling up to 16 coordinates of every parameter tensor and of the
/// input. The scalar under test is `Σ r·output` with fixed random `r`.
pub fn grad_check<T: Scalar>(net: &Network<T>, input: &Tensor<T>, h: f64) -> Result<GradCheckReport> {
    grad_check_sampled(net, input, h, 16, 0)
}

pub fn grad_check_sampled<T: Scalar>(
    net: &Network<T>,
    input: &Tensor<T>,
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let dropout_seed = rng::derive(seed, "dropout");
    let mut probe: Network<f64> = net.cast();
    let x: Tensor<f64> = input.cast();
    let (y, tape) = probe.forward(&x, dropout_seed)?;
    let mut rng = rng::stream(seed, 1);
    let weights = Tensor::from_fn(y.shape(), |_| StandardNormal.sample(&mut rng));
    let analytic = probe.backward(&tape, &weights)?;
    let base_sig = tape.branch_signature(probe.layers());

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    let record = |report: &mut GradCheckReport, a: f64, outcome: Option<f64>| match outcome {
        Some(cd) => {
            let rel = (a - cd).abs() / a.abs().max(cd.abs()).max(1e-8);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
        None => report.skipped_kinks += 1,
    };

    let slots: Vec<(usize, usize, usize)> = probe
        .params()
        .iter()
        .enumerate()
        .flat_map(|(l, ps)| ps.iter().enumerate().map(move |(j, t)| (l, j, t.len())))
        .collect();
    for (l, j, len) in slots {
        for idx in index::sample(&mut rng, len, per_tensor.min(len)) {
            let orig = probe.params()[l][j].data()[idx];
            let (xp, xm) = (orig + h, orig - h);
            let mut eval = |v: f64| -> Result<(Tensor<f64>, u64)> {
                probe.params_mut()[l][j].data_mut()[idx] = v;
                let (out, t) = probe.forward(&x, dropout_seed)?;
                Ok((out, t.branch_signature(probe.layers())))
            };
            let plus = eval(xp)?;
            let minus = eval(xm)?;
            probe.params_mut()[l][j].data_mut()[idx] = orig;
            let cd = central(&weights, &plus, &minus, base_sig, xp - xm);
            record(&mut report, analytic.params[l][j].data()[idx], cd);
        }
    }

    for idx in index::sample(&mut rng, x.len(), per_tensor.min(x.len())) {
        let orig = x.data()[idx];
        let (xp, xm) = (orig + h, orig - h);
        let eval = |v: f64| -> Result<(Tensor<f64>, u64)> {
            let mut xv = x.clone();
            xv.data_mut()[idx] = v;
            let (out, t) = probe.forward(&xv, dropout_seed)?;
            Ok((out, t.branch_signature(probe.layers())))
        };
        let plus = eval(xp)?;
        let minus = eval(xm)?;
        let cd = central(&weights, &plus, &minus, base_sig, xp - xm);
        record(&mut report, analytic.input.data()[idx], cd);
    }
    Ok(report)
}

fn central(
    weights: &Tensor<f64>,
    plus: &(Tensor<f64>, u64),
    minus: &(Tensor<f64>, u64),
    base_sig: u64,
    step: f64,
) -> Option<f64> {
    if plus.1 != base_sig || minus.1 != base_sig {
        return None;
    }
    Some(
        weights
            .data()
            .iter()
            .zip(plus.0.data().iter().zip(minus.0.data()))
            .map(|(r, (p, m))| r * ((p - m) / step))
            .sum(),
    )
}
