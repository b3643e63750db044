//! Post-training quantization: run the real model over calibration inputs,
//! record min/max on every activation edge, then quantize weights per
//! channel and derive per-tensor activation encodings.

use super::{Layer, LayerSpec, LayerWeights, Mode, ModelGraph};
use crate::error::{Error, Result};
use crate::kernels::{add_min_output_scale, BneckWeights, ConvWeights, SeWeights};
use crate::quant::{
    params_from_range_min_scale, quantize_bias, quantize_weights, CalibrationStats, QuantParams,
};
use crate::tensor::Tensor;

/// Keeps `input_scale * weight_scale / output_scale` safely below one.
const MULTIPLIER_MARGIN: f64 = 1.0 + 1e-6;

struct Calibrator {
    input: CalibrationStats,
    edges: Vec<Vec<CalibrationStats>>,
}

impl Calibrator {
    fn new(g: &ModelGraph) -> Result<Self> {
        let shapes = g.layer_input_shapes()?;
        let edges = g
            .layers()
            .iter()
            .zip(shapes)
            .map(|(l, s)| vec![CalibrationStats::new(); l.spec.edge_count(s)])
            .collect();
        Ok(Calibrator {
            input: CalibrationStats::new(),
            edges,
        })
    }

    fn observe(&mut self, g: &ModelGraph, normalized: &Tensor) -> Result<()> {
        self.input.observe(normalized)?;
        let mut failure = None;
        let edges = &mut self.edges;
        g.forward_real(normalized, &mut |layer, edge, t| {
            if let Err(e) = edges[layer][edge].observe(t) {
                failure.get_or_insert(e);
            }
        })?;
        failure.map_or(Ok(()), Err)
    }
}

fn edge_params(stats: &CalibrationStats, min_scale: f64) -> Result<QuantParams> {
    if stats.count == 0 {
        return Err(Error::EmptyCalibrationSet);
    }
    params_from_range_min_scale(stats.min, stats.max, min_scale)
}

/// Quantizes one conv/FC and derives its output encoding from `stats`.
fn quantize_conv(
    w: &ConvWeights,
    input: &QuantParams,
    stats: &CalibrationStats,
) -> Result<(ConvWeights, QuantParams)> {
    let weights = quantize_weights(&w.weights)?;
    let wq = weights.quant()?;
    let max_product = wq
        .scales()
        .iter()
        .map(|s| s * input.scale(0))
        .fold(0.0, f64::max);
    let out = edge_params(stats, max_product * MULTIPLIER_MARGIN)?;
    let bias = quantize_bias(&w.bias, input, wq)?;
    Ok((ConvWeights { weights, bias }, out))
}

fn quantize_layers(g: &ModelGraph, cal: &Calibrator) -> Result<(QuantParams, Vec<Layer>)> {
    let input_q = cal.input.params()?;
    let mut cur = input_q.clone();
    let mut layers = Vec::with_capacity(g.layers().len());
    for (l, stats) in g.layers().iter().zip(&cal.edges) {
        let (weights, edges) = match (&l.spec, &l.weights) {
            (LayerSpec::Conv { .. } | LayerSpec::Fc { .. }, LayerWeights::Conv(w)) => {
                let (qw, out) = quantize_conv(w, &cur, &stats[0])?;
                (LayerWeights::Conv(qw), vec![out])
            }
            (LayerSpec::Bneck(spec), LayerWeights::Bneck(w)) => {
                let mut edges = Vec::with_capacity(stats.len());
                let mut s = stats.iter();
                let mut next = || s.next().ok_or(Error::EmptyCalibrationSet);
                let (expand, e_q) = quantize_conv(&w.expand, &cur, next()?)?;
                edges.push(e_q.clone());
                let (depthwise, d_q) = quantize_conv(&w.depthwise, &e_q, next()?)?;
                edges.push(d_q.clone());
                let se = match &w.se {
                    Some(se) => {
                        let (reduce, r_q) = quantize_conv(&se.reduce, &d_q, next()?)?;
                        edges.push(r_q.clone());
                        let (expand, x_q) = quantize_conv(&se.expand, &r_q, next()?)?;
                        edges.push(x_q);
                        Some(SeWeights { reduce, expand })
                    }
                    None => None,
                };
                let (project, p_q) = quantize_conv(&w.project, &d_q, next()?)?;
                edges.push(p_q.clone());
                if spec.has_residual(w.expand.weights.shape().w) {
                    let min_scale = add_min_output_scale(&cur, &p_q) * MULTIPLIER_MARGIN;
                    edges.push(edge_params(next()?, min_scale)?);
                }
                let qw = BneckWeights {
                    expand,
                    depthwise,
                    se,
                    project,
                };
                (LayerWeights::Bneck(qw), edges)
            }
            (_, LayerWeights::None) => (LayerWeights::None, Vec::new()),
            _ => {
                return Err(Error::MalformedModel(
                    "layer weights do not match spec".into(),
                ))
            }
        };
        if let Some(last) = edges.last() {
            cur = last.clone();
        }
        layers.push(Layer {
            spec: l.spec,
            weights,
            edges,
        });
    }
    Ok((input_q, layers))
}

/// Calibrates on preprocessed model inputs (already resized and normalized).
pub fn quantize_model_from_tensors(g: &ModelGraph, normalized: &[Tensor]) -> Result<ModelGraph> {
    quantize_with(g, normalized.iter().map(|t| Ok(t.clone())))
}

/// Calibrates on raw pixel images; each is resized and normalized first.
pub fn quantize_model<I>(g: &ModelGraph, images: I) -> Result<ModelGraph>
where
    I: IntoIterator<Item = Tensor>,
{
    quantize_with(g, images.into_iter().map(|img| g.preprocess(&img)))
}

fn quantize_with<I>(g: &ModelGraph, inputs: I) -> Result<ModelGraph>
where
    I: Iterator<Item = Result<Tensor>>,
{
    if g.mode() != Mode::Real {
        return Err(Error::InvalidArgument("model is already quantized".into()));
    }
    let mut cal = Calibrator::new(g)?;
    for x in inputs {
        cal.observe(g, &x?)?;
    }
    if cal.input.count == 0 {
        return Err(Error::EmptyCalibrationSet);
    }
    let (input_q, layers) = quantize_layers(g, &cal)?;
    ModelGraph::new(
        g.input(),
        layers,
        Mode::Quantized,
        g.labels().to_vec(),
        Some(input_q),
    )
}
