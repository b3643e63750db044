//! Hand-built "color probe" weights: a network that classifies an image by
//! the signature color nearest to its mean pixel.
//!
//! Every convolution copies input channels 0..3 through its center tap and
//! zeroes the rest. The first one also adds 1, which turns normalized pixels
//! `p / 127.5 - 1` into `y = p / 127.5` so ReLU6 never clips. Pooling keeps
//! constant colors intact, and the final FC scores class `k` as
//! `2 s_k . y - |s_k|^2 = |y|^2 - |y - s_k|^2`, whose argmax is the nearest
//! signature `s_k` (in the same `/ 127.5` units).

use super::{LayerSpec, LayerWeights, Mode, ModelGraph};
use crate::dataset::class_signature;
use crate::error::{Error, Result};
use crate::kernels::{ConvSpec, ConvWeights};
use crate::tensor::{Shape, Tensor};

const COLOR_CHANNELS: usize = 3;

/// The default class signatures, one RGB color per category.
pub fn probe_signature_space() -> Vec<[u8; 3]> {
    (0..30).map(class_signature).collect()
}

fn passthrough_conv(spec: &ConvSpec, in_c: usize, bias: f32) -> Result<ConvWeights> {
    if spec.depthwise || in_c < COLOR_CHANNELS || spec.out_channels < COLOR_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "color probe needs dense convolutions with at least {COLOR_CHANNELS} channels"
        )));
    }
    if spec.kernel_h.is_multiple_of(2) || spec.kernel_w.is_multiple_of(2) {
        return Err(Error::InvalidArgument(
            "color probe needs odd kernels".into(),
        ));
    }
    let shape = spec.weight_shape(in_c);
    let out = spec.out_channels;
    let mut w = vec![0.0f32; shape.len()];
    let (cy, cx) = (spec.kernel_h / 2, spec.kernel_w / 2);
    for c in 0..COLOR_CHANNELS {
        w[((cy * spec.kernel_w + cx) * in_c + c) * out + c] = 1.0;
    }
    let mut b = vec![0.0f32; out];
    b[..COLOR_CHANNELS].fill(bias);
    Ok(ConvWeights {
        weights: Tensor::from_f32(shape, w)?,
        bias: Tensor::from_f32(Shape::new(1, 1, 1, out), b)?,
    })
}

fn scoring_fc(in_features: usize, signatures: &[[u8; 3]]) -> Result<ConvWeights> {
    let out = signatures.len();
    let mut w = vec![0.0f32; in_features * out];
    let mut b = vec![0.0f32; out];
    for (k, sig) in signatures.iter().enumerate() {
        let s = sig.map(|v| v as f64 / 127.5);
        for c in 0..COLOR_CHANNELS {
            w[c * out + k] = (2.0 * s[c]) as f32;
        }
        b[k] = -(s.iter().map(|v| v * v).sum::<f64>()) as f32;
    }
    Ok(ConvWeights {
        weights: Tensor::from_f32(Shape::new(1, 1, in_features, out), w)?,
        bias: Tensor::from_f32(Shape::new(1, 1, 1, out), b)?,
    })
}

/// Replaces the weights of a real-mode graph with color-probe weights.
///
/// The graph must be convolutions, pooling and resizes, followed by a single
/// FC layer producing one logit per signature, then the softmax head.
pub fn install_color_probe(g: &mut ModelGraph, signatures: &[[u8; 3]]) -> Result<()> {
    if g.mode() != Mode::Real {
        return Err(Error::InvalidArgument(
            "color probe needs a real-mode model".into(),
        ));
    }
    if g.input().channels != COLOR_CHANNELS {
        return Err(Error::InvalidArgument("color probe needs RGB input".into()));
    }
    let shapes = g.layer_input_shapes()?;
    g.map_layers(|layers| {
        let mut first_conv = true;
        let n = layers.len();
        for (i, (l, shape)) in layers.iter_mut().zip(&shapes).enumerate() {
            l.weights = match l.spec {
                LayerSpec::Conv { conv, .. } => {
                    let bias = if first_conv { 1.0 } else { 0.0 };
                    first_conv = false;
                    LayerWeights::Conv(passthrough_conv(&conv, shape.c, bias)?)
                }
                LayerSpec::Fc { out_features, .. } if i + 2 == n => {
                    if first_conv {
                        return Err(Error::InvalidArgument(
                            "color probe needs a leading convolution".into(),
                        ));
                    }
                    if out_features != signatures.len() || shape.h * shape.w != 1 {
                        return Err(Error::InvalidArgument(format!(
                            "classifier must map pooled features to {} logits",
                            signatures.len()
                        )));
                    }
                    LayerWeights::Conv(scoring_fc(shape.c, signatures)?)
                }
                LayerSpec::GlobalAvgPool
                | LayerSpec::MaxPool { .. }
                | LayerSpec::Resize { .. }
                | LayerSpec::Softmax => LayerWeights::None,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "color probe cannot configure a {:?} layer",
                        l.spec.kind()
                    )))
                }
            };
        }
        if !matches!(
            layers.get(n.wrapping_sub(2)).map(|l| l.spec),
            Some(LayerSpec::Fc { .. })
        ) {
            return Err(Error::InvalidArgument(
                "color probe needs an FC classifier before the head".into(),
            ));
        }
        Ok(())
    })
}
