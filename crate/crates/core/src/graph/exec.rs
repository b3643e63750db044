use super::{Layer, LayerSpec, LayerWeights, Mode, ModelGraph};
use crate::dataset::CAMERA_FRAME;
use crate::error::{Error, Result};
use crate::kernels::{
    bneck, bneck_q, conv2d, conv2d_q, fully_connected, fully_connected_q, global_avgpool,
    global_avgpool_q, max_pool, max_pool_q, relu6, relu6_q_in_place, resize_bilinear,
    resize_bilinear_q, softmax, Activation, BneckEdges, ConvWeights,
};
use crate::quant::quantize_tensor;
use crate::tensor::Tensor;

/// Maps pixels in [0, 255] to [-1, 1] via `x / 127.5 - 1`.
pub fn normalize_pixels(t: &Tensor) -> Result<Tensor> {
    let mut out = t.clone();
    for v in out.as_f32_mut()? {
        *v = *v / 127.5 - 1.0;
    }
    Ok(out)
}

/// Per-layer quantization error in units of that layer's output scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerError {
    pub layer: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
    pub scale: f64,
}

type Tap<'a> = &'a mut dyn FnMut(usize, usize, &Tensor);

impl ModelGraph {
    /// Resizes to the model input and normalizes.
    pub fn preprocess(&self, image: &Tensor) -> Result<Tensor> {
        let s = image.shape();
        if s.n != 1 || s.c != self.input.channels {
            return Err(Error::ShapeMismatch(format!(
                "image {s} does not have {} channels",
                self.input.channels
            )));
        }
        let resized = resize_bilinear(image, self.input.height, self.input.width)?;
        normalize_pixels(&resized)
    }

    /// Class probabilities for one camera frame (384x576x3, pixels 0..=255).
    pub fn infer(&self, image: &Tensor) -> Result<Vec<f64>> {
        if image.shape() != CAMERA_FRAME {
            return Err(Error::ShapeMismatch(format!(
                "expected a {CAMERA_FRAME} camera frame, got {}",
                image.shape()
            )));
        }
        self.probabilities(&self.preprocess(image)?)
    }

    /// Class probabilities for an already preprocessed input.
    pub fn probabilities(&self, normalized: &Tensor) -> Result<Vec<f64>> {
        let logits = match self.mode {
            Mode::Real => self.forward_real(normalized, &mut |_, _, _| {})?,
            Mode::Quantized => self
                .forward_quant(self.quantize_input(normalized)?)?
                .to_real(),
        };
        let logits: Vec<f64> = logits.as_f32()?.iter().map(|&v| v as f64).collect();
        softmax(&logits)
    }

    pub fn quantize_input(&self, normalized: &Tensor) -> Result<Tensor> {
        self.check_input(normalized)?;
        let q = self
            .input_params
            .as_ref()
            .ok_or_else(|| Error::MalformedModel("model is not quantized".into()))?;
        quantize_tensor(normalized, q)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input.shape() {
            return Err(Error::ShapeMismatch(format!(
                "model input is {}, got {}",
                self.input.shape(),
                x.shape()
            )));
        }
        Ok(())
    }

    fn body(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    /// Runs every layer but the softmax head in real arithmetic. `tap`
    /// receives `(layer, edge, tensor)` for each activation edge.
    pub fn forward_real(&self, x: &Tensor, tap: Tap<'_>) -> Result<Tensor> {
        if self.mode != Mode::Real {
            return Err(Error::MalformedModel(
                "real forward on a quantized model".into(),
            ));
        }
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, l) in self.body().iter().enumerate() {
            cur = run_real(l, &cur, &mut |e, t| tap(i, e, t))?;
        }
        Ok(cur)
    }

    /// Runs every layer but the softmax head on INT8 codes.
    pub fn forward_quant(&self, xq: Tensor) -> Result<Tensor> {
        if self.mode != Mode::Quantized {
            return Err(Error::MalformedModel(
                "quantized forward on a real model".into(),
            ));
        }
        let mut cur = xq;
        for l in self.body() {
            cur = run_quant(l, &cur)?;
        }
        Ok(cur)
    }

    /// Runs layer `index` alone on `x`, in the model's own arithmetic.
    pub fn layer_forward(&self, index: usize, x: &Tensor) -> Result<Tensor> {
        let l = self
            .body()
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer {index} before the head")))?;
        match self.mode {
            Mode::Real => run_real(l, x, &mut |_, _| {}),
            Mode::Quantized => run_quant(l, x),
        }
    }

    /// Output of every non-head layer, for inspection.
    pub fn trace(&self, normalized: &Tensor) -> Result<Vec<Tensor>> {
        let mut outs = Vec::new();
        match self.mode {
            Mode::Real => {
                self.check_input(normalized)?;
                let mut cur = normalized.clone();
                for l in self.body() {
                    cur = run_real(l, &cur, &mut |_, _| {})?;
                    outs.push(cur.clone());
                }
            }
            Mode::Quantized => {
                let mut cur = self.quantize_input(normalized)?;
                for l in self.body() {
                    cur = run_quant(l, &cur)?;
                    outs.push(cur.clone());
                }
            }
        }
        Ok(outs)
    }

    /// Paired execution of a real model and its quantized counterpart:
    /// per-layer absolute error of the dequantized output, in output-scale
    /// units, averaged over elements and images.
    pub fn layer_errors(
        real: &ModelGraph,
        quant: &ModelGraph,
        inputs: &[Tensor],
    ) -> Result<Vec<LayerError>> {
        if real.mode != Mode::Real || quant.mode != Mode::Quantized {
            return Err(Error::InvalidArgument(
                "need a real and a quantized model".into(),
            ));
        }
        if real.body().len() != quant.body().len() {
            return Err(Error::InvalidArgument(
                "models have different depths".into(),
            ));
        }
        let mut errs: Vec<LayerError> = (0..real.body().len())
            .map(|layer| LayerError {
                layer,
                mean_abs: 0.0,
                max_abs: 0.0,
                scale: 0.0,
            })
            .collect();
        if inputs.is_empty() {
            return Ok(errs);
        }
        for x in inputs {
            let r = real.trace(x)?;
            let q = quant.trace(x)?;
            for ((e, rt), qt) in errs.iter_mut().zip(&r).zip(&q) {
                let scale = qt.quant()?.scale(0);
                let qr = qt.to_real();
                let (a, b) = (rt.as_f32()?, qr.as_f32()?);
                let mut sum = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let d = (*x as f64 - *y as f64).abs() / scale;
                    sum += d;
                    e.max_abs = e.max_abs.max(d);
                }
                e.mean_abs += sum / a.len().max(1) as f64;
                e.scale = scale;
            }
        }
        for e in &mut errs {
            e.mean_abs /= inputs.len() as f64;
        }
        Ok(errs)
    }
}

fn conv_weights(l: &Layer) -> Result<&ConvWeights> {
    match &l.weights {
        LayerWeights::Conv(w) => Ok(w),
        _ => Err(Error::MalformedModel(
            "layer is missing conv weights".into(),
        )),
    }
}

fn run_real(l: &Layer, x: &Tensor, tap: &mut dyn FnMut(usize, &Tensor)) -> Result<Tensor> {
    let out = match &l.spec {
        LayerSpec::Conv { conv, activation } => {
            let y = conv2d(x, conv_weights(l)?, conv)?;
            let y = if *activation == Activation::Relu6 {
                relu6(&y)?
            } else {
                y
            };
            tap(0, &y);
            y
        }
        LayerSpec::Fc { activation, .. } => {
            let y = fully_connected(x, conv_weights(l)?)?;
            let y = if *activation == Activation::Relu6 {
                relu6(&y)?
            } else {
                y
            };
            tap(0, &y);
            y
        }
        LayerSpec::Bneck(spec) => match &l.weights {
            LayerWeights::Bneck(w) => bneck(x, spec, w, tap)?,
            _ => {
                return Err(Error::MalformedModel(
                    "bneck layer is missing weights".into(),
                ))
            }
        },
        LayerSpec::GlobalAvgPool => global_avgpool(x)?,
        LayerSpec::MaxPool { size } => max_pool(x, *size)?,
        LayerSpec::Resize { height, width } => resize_bilinear(x, *height, *width)?,
        LayerSpec::Softmax => x.clone(),
    };
    Ok(out)
}

fn run_quant(l: &Layer, x: &Tensor) -> Result<Tensor> {
    let out = match &l.spec {
        LayerSpec::Conv { conv, activation } => {
            let w = conv_weights(l)?;
            let mut y = conv2d_q(x, &w.weights, &w.bias, conv, &l.edges[0])?;
            if *activation == Activation::Relu6 {
                relu6_q_in_place(&mut y)?;
            }
            y
        }
        LayerSpec::Fc { activation, .. } => {
            let w = conv_weights(l)?;
            let mut y = fully_connected_q(x, &w.weights, &w.bias, &l.edges[0])?;
            if *activation == Activation::Relu6 {
                relu6_q_in_place(&mut y)?;
            }
            y
        }
        LayerSpec::Bneck(spec) => match &l.weights {
            LayerWeights::Bneck(w) => {
                let edges = BneckEdges::parse(spec, x.shape().c, &l.edges)?;
                bneck_q(x, spec, w, &edges)?
            }
            _ => {
                return Err(Error::MalformedModel(
                    "bneck layer is missing weights".into(),
                ))
            }
        },
        LayerSpec::GlobalAvgPool => global_avgpool_q(x)?,
        LayerSpec::MaxPool { size } => max_pool_q(x, *size)?,
        LayerSpec::Resize { height, width } => resize_bilinear_q(x, *height, *width)?,
        LayerSpec::Softmax => x.clone(),
    };
    Ok(out)
}
