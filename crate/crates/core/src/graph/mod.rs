//! Model representation and execution.
//!
//! A [`ModelGraph`] is an ordered list of layers run in sequence. In
//! quantized mode every activation edge carries its own encoding and the
//! whole pipeline between the input quantize and the softmax head runs on
//! INT8 codes.

mod calibrate;
mod exec;
mod format;
mod preset;
mod probe;

pub use calibrate::{quantize_model, quantize_model_from_tensors};
pub use exec::{normalize_pixels, LayerError};
pub use format::{load, save, FORMAT_VERSION, MAGIC};
pub use preset::{build_preset, PresetId};
pub use probe::{install_color_probe, probe_signature_space};

use crate::error::{Error, Result};
use crate::kernels::{Activation, BneckSpec, BneckWeights, ConvSpec, ConvWeights};
use crate::quant::QuantParams;
use crate::tensor::{DType, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Real,
    Quantized,
}

/// Model input geometry. Pixels in [0, 255] are normalized to [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InputDesc {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputDesc {
    pub fn shape(&self) -> Shape {
        Shape::hwc(self.height, self.width, self.channels)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Bneck,
    Fc,
    GlobalAvgPool,
    Softmax,
    Resize,
    MaxPool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv {
        conv: ConvSpec,
        activation: Activation,
    },
    Bneck(BneckSpec),
    Fc {
        out_features: usize,
        activation: Activation,
    },
    GlobalAvgPool,
    /// Non-overlapping `size x size` max pooling.
    MaxPool {
        size: usize,
    },
    Resize {
        height: usize,
        width: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv { .. } => LayerKind::Conv,
            LayerSpec::Bneck(_) => LayerKind::Bneck,
            LayerSpec::Fc { .. } => LayerKind::Fc,
            LayerSpec::GlobalAvgPool => LayerKind::GlobalAvgPool,
            LayerSpec::MaxPool { .. } => LayerKind::MaxPool,
            LayerSpec::Resize { .. } => LayerKind::Resize,
            LayerSpec::Softmax => LayerKind::Softmax,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self {
            LayerSpec::Conv { conv, .. } => conv.output_shape(input),
            LayerSpec::Bneck(b) => b.output_shape(input),
            LayerSpec::Fc { out_features, .. } => Ok(Shape::new(input.n, 1, 1, *out_features)),
            LayerSpec::GlobalAvgPool => Ok(Shape::new(input.n, 1, 1, input.c)),
            LayerSpec::MaxPool { size } => {
                if *size == 0 || input.h < *size || input.w < *size {
                    return Err(Error::ShapeMismatch(format!("max pool {size} on {input}")));
                }
                Ok(Shape::new(input.n, input.h / size, input.w / size, input.c))
            }
            LayerSpec::Resize { height, width } => {
                Ok(Shape::new(input.n, *height, *width, input.c))
            }
            LayerSpec::Softmax => Ok(input),
        }
    }

    /// Quantized activation edges produced inside this layer.
    pub fn edge_count(&self, input: Shape) -> usize {
        match self {
            LayerSpec::Conv { .. } | LayerSpec::Fc { .. } => 1,
            LayerSpec::Bneck(b) => b.edge_count(input.c),
            _ => 0,
        }
    }
}

// A model holds a few dozen of these; boxing the bneck variant buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum LayerWeights {
    None,
    Conv(ConvWeights),
    Bneck(BneckWeights),
}

impl LayerWeights {
    /// Weight tensors in serialization order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            LayerWeights::None => vec![],
            LayerWeights::Conv(c) => vec![&c.weights, &c.bias],
            LayerWeights::Bneck(b) => {
                let mut v = vec![
                    &b.expand.weights,
                    &b.expand.bias,
                    &b.depthwise.weights,
                    &b.depthwise.bias,
                ];
                if let Some(se) = &b.se {
                    v.extend([
                        &se.reduce.weights,
                        &se.reduce.bias,
                        &se.expand.weights,
                        &se.expand.bias,
                    ]);
                }
                v.extend([&b.project.weights, &b.project.bias]);
                v
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: LayerWeights,
    /// Activation encodings, empty in real mode.
    pub edges: Vec<QuantParams>,
}

impl Layer {
    pub fn new(spec: LayerSpec, weights: LayerWeights) -> Self {
        Layer {
            spec,
            weights,
            edges: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    input: InputDesc,
    layers: Vec<Layer>,
    mode: Mode,
    labels: Vec<String>,
    input_params: Option<QuantParams>,
}

impl ModelGraph {
    pub fn new(
        input: InputDesc,
        layers: Vec<Layer>,
        mode: Mode,
        labels: Vec<String>,
        input_params: Option<QuantParams>,
    ) -> Result<Self> {
        let g = ModelGraph {
            input,
            layers,
            mode,
            labels,
            input_params,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn input(&self) -> InputDesc {
        self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn input_params(&self) -> Option<&QuantParams> {
        self.input_params.as_ref()
    }

    /// Mutable access for weight surgery; the result is re-validated.
    pub fn map_layers<F: FnOnce(&mut Vec<Layer>) -> Result<()>>(&mut self, f: F) -> Result<()> {
        let mut layers = self.layers.clone();
        f(&mut layers)?;
        let candidate = ModelGraph {
            layers,
            ..self.clone()
        };
        candidate.validate()?;
        *self = candidate;
        Ok(())
    }

    /// Input shape of every layer, in order.
    pub fn layer_input_shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input.shape();
        for l in &self.layers {
            shapes.push(cur);
            cur = l.spec.output_shape(cur)?;
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        let mut cur = self.input.shape();
        for l in &self.layers {
            cur = l.spec.output_shape(cur)?;
        }
        Ok(cur)
    }

    /// Number of trainable parameters (weights and biases).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.weights.tensors())
            .map(|t| t.len())
            .sum()
    }

    pub fn serialized_size(&self) -> usize {
        format::to_bytes(self).len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::to_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        format::from_bytes(bytes)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.last().map(|l| l.spec) != Some(LayerSpec::Softmax) {
            return Err(Error::MalformedModel(
                "model must end with a softmax head".into(),
            ));
        }
        if self.layers[..self.layers.len() - 1]
            .iter()
            .any(|l| l.spec == LayerSpec::Softmax)
        {
            return Err(Error::MalformedModel(
                "softmax is only allowed as the head".into(),
            ));
        }
        match (self.mode, &self.input_params) {
            (Mode::Quantized, None) => {
                return Err(Error::MalformedModel(
                    "quantized model lacks input encoding".into(),
                ))
            }
            (Mode::Real, Some(_)) => {
                return Err(Error::MalformedModel(
                    "real model carries an input encoding".into(),
                ))
            }
            (Mode::Quantized, Some(q)) if q.is_per_channel() => {
                return Err(Error::MalformedModel(
                    "input encoding must be per tensor".into(),
                ))
            }
            _ => {}
        }
        let mut cur = self.input.shape();
        for (i, l) in self.layers.iter().enumerate() {
            let ctx = |e: Error| Error::MalformedModel(format!("layer {i}: {e}"));
            validate_weights(l, cur, self.mode).map_err(ctx)?;
            let edges = match self.mode {
                Mode::Real => 0,
                Mode::Quantized => l.spec.edge_count(cur),
            };
            if l.edges.len() != edges {
                return Err(Error::MalformedModel(format!(
                    "layer {i}: expected {edges} activation encodings, found {}",
                    l.edges.len()
                )));
            }
            if l.edges.iter().any(|q| q.is_per_channel()) {
                return Err(Error::MalformedModel(format!(
                    "layer {i}: activation encodings must be per tensor"
                )));
            }
            cur = l.spec.output_shape(cur).map_err(ctx)?;
        }
        if self.labels.len() != cur.c {
            return Err(Error::MalformedModel(format!(
                "{} labels for {} outputs",
                self.labels.len(),
                cur.c
            )));
        }
        Ok(())
    }
}

fn check_tensor(t: &Tensor, shape: Shape, dtype: DType, what: &str) -> Result<()> {
    if t.shape() != shape || t.dtype() != dtype {
        return Err(Error::ShapeMismatch(format!(
            "{what} is {:?} {}, expected {dtype:?} {shape}",
            t.dtype(),
            t.shape()
        )));
    }
    if dtype.is_integer() && !t.quant()?.is_per_channel() {
        return Err(Error::ShapeMismatch(format!(
            "{what} must be quantized per channel"
        )));
    }
    Ok(())
}

fn check_conv_weights(
    w: &ConvWeights,
    shape: Shape,
    out: usize,
    mode: Mode,
    what: &str,
) -> Result<()> {
    let (wt, bt) = match mode {
        Mode::Real => (DType::F32, DType::F32),
        Mode::Quantized => (DType::I8, DType::I32),
    };
    check_tensor(&w.weights, shape, wt, what)?;
    check_tensor(&w.bias, Shape::new(1, 1, 1, out), bt, what)
}

fn validate_weights(l: &Layer, input: Shape, mode: Mode) -> Result<()> {
    match (&l.spec, &l.weights) {
        (LayerSpec::Conv { conv, .. }, LayerWeights::Conv(w)) => check_conv_weights(
            w,
            conv.weight_shape(input.c),
            conv.out_channels,
            mode,
            "conv",
        ),
        (LayerSpec::Fc { out_features, .. }, LayerWeights::Conv(w)) => {
            let k = input.h * input.w * input.c;
            check_conv_weights(
                w,
                Shape::new(1, 1, k, *out_features),
                *out_features,
                mode,
                "fc",
            )
        }
        (LayerSpec::Bneck(b), LayerWeights::Bneck(w)) => {
            let e = b.expansion;
            check_conv_weights(
                &w.expand,
                b.expand_spec().weight_shape(input.c),
                e,
                mode,
                "expand",
            )?;
            check_conv_weights(
                &w.depthwise,
                b.depthwise_spec().weight_shape(e),
                e,
                mode,
                "depthwise",
            )?;
            match (&w.se, b.use_se) {
                (Some(se), true) => {
                    let r = crate::kernels::se_reduced_width(e);
                    check_conv_weights(&se.reduce, Shape::new(1, 1, e, r), r, mode, "se reduce")?;
                    check_conv_weights(&se.expand, Shape::new(1, 1, r, e), e, mode, "se expand")?;
                }
                (None, false) => {}
                _ => return Err(Error::ShapeMismatch("SE weights do not match spec".into())),
            }
            check_conv_weights(
                &w.project,
                b.project_spec().weight_shape(e),
                b.out_channels,
                mode,
                "project",
            )
        }
        (
            LayerSpec::GlobalAvgPool
            | LayerSpec::MaxPool { .. }
            | LayerSpec::Resize { .. }
            | LayerSpec::Softmax,
            LayerWeights::None,
        ) => Ok(()),
        _ => Err(Error::ShapeMismatch(format!(
            "{:?} layer has the wrong weight kind",
            l.spec.kind()
        ))),
    }
}
