use serde::{Deserialize, Serialize};

/// Explicit per-edge zero padding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const NONE: Padding = Padding {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    /// Pads only the bottom and right edges; keeps the spatial size of a
    /// stride-1 convolution with an even kernel.
    pub fn same_trailing(kh: usize, kw: usize) -> Self {
        Padding {
            top: 0,
            bottom: kh - 1,
            left: 0,
            right: kw - 1,
        }
    }
}

/// One layer of a sequential network. Shapes exclude the batch axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: Padding,
    },
    /// Adjoint of [`LayerSpec::Conv2d`] with the same geometry; weight is
    /// stored as `[in_channels, out_channels, kh, kw]`.
    TransposedConv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: Padding,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Dense {
        inputs: usize,
        units: usize,
    },
    /// Per-channel (rank-3 input) or per-feature (rank-1 input) normalization.
    BatchNorm {
        channels: usize,
        momentum: f32,
        epsilon: f32,
    },
    Dropout {
        keep: f32,
    },
    LeakyRelu {
        slope: f32,
    },
    Sigmoid,
    Tanh,
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: Padding) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: [kernel, kernel],
            stride,
            padding,
        }
    }

    pub fn transposed_conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    ) -> Self {
        LayerSpec::TransposedConv2d {
            in_channels,
            out_channels,
            kernel: [kernel, kernel],
            stride,
            padding,
        }
    }

    pub fn dense(inputs: usize, units: usize) -> Self {
        LayerSpec::Dense { inputs, units }
    }

    pub fn batchnorm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            momentum: 0.9,
            epsilon: 1e-5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::TransposedConv2d { .. } => "transposed_conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            }
            | LayerSpec::TransposedConv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if *in_channels == 0 || *out_channels == 0 {
                    return Err("channel counts must be >= 1".into());
                }
                if kernel[0] == 0 || kernel[1] == 0 {
                    return Err("kernel dims must be >= 1".into());
                }
                if *stride == 0 {
                    return Err("stride must be >= 1".into());
                }
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                if *kernel == 0 || *stride == 0 {
                    return Err("pool kernel and stride must be >= 1".into());
                }
            }
            LayerSpec::Dense { inputs, units } => {
                if *inputs == 0 || *units == 0 {
                    return Err("dense inputs and units must be >= 1".into());
                }
            }
            LayerSpec::BatchNorm {
                channels,
                momentum,
                epsilon,
            } => {
                if *channels == 0 {
                    return Err("batchnorm needs >= 1 channel".into());
                }
                if !(0.0..=1.0).contains(momentum) || *epsilon <= 0.0 {
                    return Err("batchnorm momentum in [0,1], epsilon > 0".into());
                }
            }
            LayerSpec::Dropout { keep } => {
                if !(*keep > 0.0 && *keep <= 1.0) {
                    return Err(format!("dropout keep-probability {keep} not in (0,1]"));
                }
            }
            LayerSpec::LeakyRelu { slope } => {
                if !(0.0..1.0).contains(slope) {
                    return Err(format!("leaky slope {slope} not in [0,1)"));
                }
            }
            LayerSpec::Reshape { shape } => {
                if shape.is_empty() || shape.contains(&0) {
                    return Err("reshape target must be non-empty and positive".into());
                }
            }
            LayerSpec::Sigmoid | LayerSpec::Tanh | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, Vec<usize>> {
        let numel: usize = input.iter().product();
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = rank3(input)?;
                let expected = || vec![*in_channels, h.max(1), w.max(1)];
                if c != *in_channels {
                    return Err(expected());
                }
                let hp = h + padding.top + padding.bottom;
                let wp = w + padding.left + padding.right;
                if hp < kernel[0] || wp < kernel[1] {
                    return Err(expected());
                }
                Ok(vec![
                    *out_channels,
                    (hp - kernel[0]) / stride + 1,
                    (wp - kernel[1]) / stride + 1,
                ])
            }
            LayerSpec::TransposedConv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = rank3(input)?;
                let full_h = (h - 1) * stride + kernel[0];
                let full_w = (w - 1) * stride + kernel[1];
                if c != *in_channels
                    || full_h <= padding.top + padding.bottom
                    || full_w <= padding.left + padding.right
                {
                    return Err(vec![*in_channels, h, w]);
                }
                Ok(vec![
                    *out_channels,
                    full_h - padding.top - padding.bottom,
                    full_w - padding.left - padding.right,
                ])
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let [c, h, w] = rank3(input)?;
                if h < *kernel || w < *kernel {
                    return Err(vec![c, *kernel, *kernel]);
                }
                Ok(vec![c, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::Dense { inputs, units } => {
                if input.len() != 1 || input[0] != *inputs {
                    return Err(vec![*inputs]);
                }
                Ok(vec![*units])
            }
            LayerSpec::BatchNorm { channels, .. } => {
                if (input.len() == 1 || input.len() == 3) && input[0] == *channels {
                    Ok(input.to_vec())
                } else {
                    Err(vec![*channels])
                }
            }
            LayerSpec::Dropout { .. }
            | LayerSpec::LeakyRelu { .. }
            | LayerSpec::Sigmoid
            | LayerSpec::Tanh => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![numel]),
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() == numel {
                    Ok(shape.clone())
                } else {
                    Err(vec![shape.iter().product()])
                }
            }
        }
    }

    /// Shapes of the trainable tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![*out_channels, *in_channels, kernel[0], kernel[1]],
                vec![*out_channels],
            ],
            LayerSpec::TransposedConv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![*in_channels, *out_channels, kernel[0], kernel[1]],
                vec![*out_channels],
            ],
            LayerSpec::Dense { inputs, units } => vec![vec![*units, *inputs], vec![*units]],
            LayerSpec::BatchNorm { channels, .. } => vec![vec![*channels], vec![*channels]],
            _ => Vec::new(),
        }
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * (in_channels * kernel[0] * kernel[1] + 1),
            // one bias per output channel
            LayerSpec::TransposedConv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => in_channels * out_channels * kernel[0] * kernel[1] + out_channels,
            LayerSpec::Dense { inputs, units } => units * (inputs + 1),
            LayerSpec::BatchNorm { channels, .. } => 2 * channels,
            _ => 0,
        }
    }
}

fn rank3(input: &[usize]) -> Result<[usize; 3], Vec<usize>> {
    match input {
        [c, h, w] => Ok([*c, *h, *w]),
        _ => Err(vec![0, 0, 0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_counts() {
        assert_eq!(LayerSpec::dense(256, 512).param_count(), 131_584);
        assert_eq!(
            LayerSpec::conv2d(1, 64, 2, 1, Padding::same_trailing(2, 2)).param_count(),
            320
        );
        assert_eq!(LayerSpec::batchnorm(64).param_count(), 128);
        assert_eq!(LayerSpec::LeakyRelu { slope: 0.2 }.param_count(), 0);
    }

    #[test]
    fn trailing_pad_preserves_size() {
        let conv = LayerSpec::conv2d(1, 64, 2, 1, Padding::same_trailing(2, 2));
        assert_eq!(conv.output_shape(&[1, 48, 48]).unwrap(), vec![64, 48, 48]);
    }

    #[test]
    fn transposed_conv_doubles() {
        let t = LayerSpec::transposed_conv2d(8, 4, 2, 2, Padding::NONE);
        assert_eq!(t.output_shape(&[8, 3, 3]).unwrap(), vec![4, 6, 6]);
    }

    #[test]
    fn invariants_rejected() {
        assert!(LayerSpec::Dropout { keep: 0.0 }.validate().is_err());
        assert!(LayerSpec::Dropout { keep: 1.0 }.validate().is_ok());
        assert!(LayerSpec::LeakyRelu { slope: 1.0 }.validate().is_err());
        assert!(LayerSpec::conv2d(1, 1, 0, 1, Padding::NONE).validate().is_err());
        assert!(LayerSpec::conv2d(1, 1, 2, 0, Padding::NONE).validate().is_err());
        assert!(LayerSpec::dense(3, 0).validate().is_err());
    }
}
