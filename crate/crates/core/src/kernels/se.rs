//! Squeeze-and-Excite: global pool, reduce FC with ReLU6, expand FC with
//! HardSigmoid, then a per-channel gate on the input.

use super::activation::{hardsigmoid, hardsigmoid_q, relu6, relu6_q_in_place};
use super::conv::{fully_connected, fully_connected_q, ConvWeights};
use super::pool::{global_avgpool, global_avgpool_q};
use crate::error::{Error, Result};
use crate::quant::{compute_requant, multiply_by_quantized_multiplier, QuantParams, QMAX, QMIN};
use crate::tensor::Tensor;

/// Width of the squeezed representation: a quarter of the channels, rounded
/// up to a multiple of 8.
pub fn se_reduced_width(channels: usize) -> usize {
    channels.div_ceil(4).div_ceil(8) * 8
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeWeights {
    pub reduce: ConvWeights,
    pub expand: ConvWeights,
}

/// Activation encodings inside the block: after the reduce FC (post ReLU6)
/// and after the expand FC (pre HardSigmoid).
#[derive(Clone, Copy, Debug)]
pub struct SeEdges<'a> {
    pub reduce: &'a QuantParams,
    pub expand: &'a QuantParams,
}

fn gate_channels(t: &Tensor, gate: &Tensor) -> Result<usize> {
    let c = t.shape().c;
    if gate.len() != c * t.shape().n {
        return Err(Error::ShapeMismatch(format!(
            "SE gate has {} entries for {} channels",
            gate.len(),
            c
        )));
    }
    Ok(c)
}

/// Real-valued block. `tap(0, ..)` receives the reduce output and
/// `tap(1, ..)` the expand output, for calibration.
pub fn se_block(t: &Tensor, w: &SeWeights, tap: &mut dyn FnMut(usize, &Tensor)) -> Result<Tensor> {
    let pooled = global_avgpool(t)?;
    let reduced = relu6(&fully_connected(&pooled, &w.reduce)?)?;
    tap(0, &reduced);
    let expanded = fully_connected(&reduced, &w.expand)?;
    tap(1, &expanded);
    let gate = hardsigmoid(&expanded)?;
    let c = gate_channels(t, &gate)?;
    let g = gate.as_f32()?;
    let hw = t.shape().h * t.shape().w;
    let mut out = t.clone();
    for (i, v) in out.as_f32_mut()?.iter_mut().enumerate() {
        let n = i / (hw * c);
        *v *= g[n * c + i % c];
    }
    Ok(out)
}

/// Integer block. The output keeps the input encoding; with the gate at
/// scale 1/256 the channel multiply requantizes by exactly 1/256.
pub fn se_block_q(t: &Tensor, w: &SeWeights, edges: SeEdges<'_>) -> Result<Tensor> {
    let tq = t.quant()?.clone();
    let pooled = global_avgpool_q(t)?;
    let mut reduced = fully_connected_q(&pooled, &w.reduce.weights, &w.reduce.bias, edges.reduce)?;
    relu6_q_in_place(&mut reduced)?;
    let expanded = fully_connected_q(&reduced, &w.expand.weights, &w.expand.bias, edges.expand)?;
    let gate = hardsigmoid_q(&expanded)?;
    let c = gate_channels(t, &gate)?;
    let g = gate.as_i8()?;
    let gq = gate.quant()?;
    let rm = compute_requant(tq.scale(0) * gq.scale(0) / tq.scale(0))?;
    let zp = tq.zero_point(0);
    let gzp = gq.zero_point(0);
    let hw = t.shape().h * t.shape().w;
    let data = t
        .as_i8()?
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let n = i / (hw * c);
            let gv = g[n * c + i % c] as i32 - gzp;
            let v = multiply_by_quantized_multiplier((q as i32 - zp) * gv, rm) + zp;
            v.clamp(QMIN, QMAX) as i8
        })
        .collect();
    Tensor::from_i8(t.shape(), data, tq)
}
