//! Inverted-residual bottleneck: 1x1 expand (ReLU6), depthwise (ReLU6),
//! optional Squeeze-and-Excite, 1x1 linear projection, and a residual
//! connection when the stride is 1 and the channel count is preserved.

use super::activation::{relu6, relu6_q_in_place};
use super::add::{residual_add, residual_add_q};
use super::conv::{conv2d, conv2d_q, ConvWeights};
use super::se::{se_block, se_block_q, SeEdges, SeWeights};
use super::ConvSpec;
use crate::error::{Error, Result};
use crate::quant::QuantParams;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BneckSpec {
    pub expansion: usize,
    pub kernel: usize,
    pub stride: usize,
    pub use_se: bool,
    pub out_channels: usize,
}

impl BneckSpec {
    pub fn has_residual(&self, in_channels: usize) -> bool {
        self.stride == 1 && in_channels == self.out_channels
    }

    pub fn expand_spec(&self) -> ConvSpec {
        ConvSpec::pointwise(self.expansion)
    }

    pub fn depthwise_spec(&self) -> ConvSpec {
        ConvSpec::depthwise(self.kernel, self.stride, self.expansion)
    }

    pub fn project_spec(&self) -> ConvSpec {
        ConvSpec::pointwise(self.out_channels)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let e = self.expand_spec().output_shape(input)?;
        let d = self.depthwise_spec().output_shape(e)?;
        self.project_spec().output_shape(d)
    }

    /// Number of quantized activation edges inside the block.
    pub fn edge_count(&self, in_channels: usize) -> usize {
        3 + 2 * usize::from(self.use_se) + usize::from(self.has_residual(in_channels))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BneckWeights {
    pub expand: ConvWeights,
    pub depthwise: ConvWeights,
    pub se: Option<SeWeights>,
    pub project: ConvWeights,
}

/// Named view over a block's edge parameters, stored in the order
/// expand, depthwise, [SE reduce, SE expand], project, [residual sum].
#[derive(Clone, Copy, Debug)]
pub struct BneckEdges<'a> {
    pub expand: &'a QuantParams,
    pub depthwise: &'a QuantParams,
    pub se: Option<SeEdges<'a>>,
    pub project: &'a QuantParams,
    pub residual: Option<&'a QuantParams>,
}

impl<'a> BneckEdges<'a> {
    pub fn parse(spec: &BneckSpec, in_channels: usize, edges: &'a [QuantParams]) -> Result<Self> {
        if edges.len() != spec.edge_count(in_channels) {
            return Err(Error::MalformedModel(format!(
                "bneck needs {} activation encodings, found {}",
                spec.edge_count(in_channels),
                edges.len()
            )));
        }
        let mut it = edges.iter();
        let mut next = || it.next().expect("length checked");
        let expand = next();
        let depthwise = next();
        let se = if spec.use_se {
            Some(SeEdges {
                reduce: next(),
                expand: next(),
            })
        } else {
            None
        };
        let project = next();
        let residual = spec.has_residual(in_channels).then(next);
        Ok(BneckEdges {
            expand,
            depthwise,
            se,
            project,
            residual,
        })
    }
}

/// Edge slot of the SE reduce output, used by calibration taps.
const SE_BASE: usize = 2;

/// Real-valued block. `tap(i, t)` sees edge `i` in canonical order.
pub fn bneck(
    input: &Tensor,
    spec: &BneckSpec,
    w: &BneckWeights,
    tap: &mut dyn FnMut(usize, &Tensor),
) -> Result<Tensor> {
    let in_c = input.shape().c;
    let mut slot = 0;
    let e = relu6(&conv2d(input, &w.expand, &spec.expand_spec())?)?;
    tap(slot, &e);
    slot += 1;
    let mut d = relu6(&conv2d(&e, &w.depthwise, &spec.depthwise_spec())?)?;
    tap(slot, &d);
    slot += 1;
    match (&w.se, spec.use_se) {
        (Some(se), true) => {
            d = se_block(&d, se, &mut |i, t| tap(SE_BASE + i, t))?;
            slot += 2;
        }
        (None, false) => {}
        _ => return Err(Error::MalformedModel("SE weights do not match spec".into())),
    }
    let mut p = conv2d(&d, &w.project, &spec.project_spec())?;
    tap(slot, &p);
    slot += 1;
    if spec.has_residual(in_c) {
        p = residual_add(input, &p)?;
        tap(slot, &p);
    }
    Ok(p)
}

pub fn bneck_q(
    input: &Tensor,
    spec: &BneckSpec,
    w: &BneckWeights,
    edges: &BneckEdges<'_>,
) -> Result<Tensor> {
    let mut e = conv2d_q(
        input,
        &w.expand.weights,
        &w.expand.bias,
        &spec.expand_spec(),
        edges.expand,
    )?;
    relu6_q_in_place(&mut e)?;
    let mut d = conv2d_q(
        &e,
        &w.depthwise.weights,
        &w.depthwise.bias,
        &spec.depthwise_spec(),
        edges.depthwise,
    )?;
    relu6_q_in_place(&mut d)?;
    drop(e);
    match (&w.se, edges.se) {
        (Some(se), Some(se_edges)) => d = se_block_q(&d, se, se_edges)?,
        (None, None) => {}
        _ => return Err(Error::MalformedModel("SE weights do not match spec".into())),
    }
    let p = conv2d_q(
        &d,
        &w.project.weights,
        &w.project.bias,
        &spec.project_spec(),
        edges.project,
    )?;
    match edges.residual {
        Some(out) => residual_add_q(input, &p, out),
        None => Ok(p),
    }
}
