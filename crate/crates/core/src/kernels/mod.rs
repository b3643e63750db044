//! Compute kernels. Every layer type has a real-valued reference and an
//! integer implementation operating on INT8 activations with INT32
//! accumulation.

mod activation;
mod add;
mod bneck;
mod conv;
mod pool;
mod resize;
mod se;
mod softmax;

pub use activation::{
    hardsigmoid, hardsigmoid_output_params, hardsigmoid_q, relu6, relu6_bounds, relu6_q,
    relu6_q_in_place, HardSigmoidLut,
};
pub(crate) use add::add_min_output_scale;
pub use add::{residual_add, residual_add_q};
pub use bneck::{bneck, bneck_q, BneckEdges, BneckSpec, BneckWeights};
pub use conv::{
    conv2d, conv2d_q, conv2d_q_with, depthwise_conv_q, fully_connected, fully_connected_q,
    ConvAlgo, ConvWeights,
};
pub use pool::{global_avgpool, global_avgpool_q, max_pool, max_pool_q};
pub use resize::{resize_bilinear, resize_bilinear_q};
pub use se::{se_block, se_block_q, se_reduced_width, SeEdges, SeWeights};
pub use softmax::softmax;

use crate::error::{Error, Result};
use crate::tensor::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    None,
    Relu6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    pub depthwise: bool,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(kernel: usize, stride: usize, out_channels: usize) -> Self {
        ConvSpec {
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding: Padding::Same,
            depthwise: false,
            out_channels,
        }
    }

    pub fn depthwise(kernel: usize, stride: usize, channels: usize) -> Self {
        ConvSpec {
            depthwise: true,
            ..Self::new(kernel, stride, channels)
        }
    }

    pub fn pointwise(out_channels: usize) -> Self {
        Self::new(1, 1, out_channels)
    }

    /// Expected weight tensor shape for `in_channels` inputs.
    pub fn weight_shape(&self, in_channels: usize) -> Shape {
        if self.depthwise {
            Shape::new(self.kernel_h, self.kernel_w, 1, in_channels)
        } else {
            Shape::new(self.kernel_h, self.kernel_w, in_channels, self.out_channels)
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        Ok(ConvGeometry::new(input, self)?.output)
    }
}

/// Resolved spatial layout of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub input: Shape,
    pub output: Shape,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn new(input: Shape, spec: &ConvSpec) -> Result<Self> {
        if spec.kernel_h == 0 || spec.kernel_w == 0 || spec.stride == 0 || spec.out_channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "degenerate conv spec {spec:?}"
            )));
        }
        if spec.depthwise && spec.out_channels != input.c {
            return Err(Error::ShapeMismatch(format!(
                "depthwise conv maps {} channels to {}",
                input.c, spec.out_channels
            )));
        }
        let (oh, pt) = out_extent(input.h, spec.kernel_h, spec.stride, spec.padding)?;
        let (ow, pl) = out_extent(input.w, spec.kernel_w, spec.stride, spec.padding)?;
        Ok(ConvGeometry {
            input,
            output: Shape::new(input.n, oh, ow, spec.out_channels),
            pad_top: pt,
            pad_left: pl,
        })
    }
}

/// Output extent and leading pad for one spatial axis.
pub(crate) fn out_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if input == 0 {
        return Err(Error::ShapeMismatch("empty spatial extent".into()));
    }
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, needed / 2))
        }
        Padding::Valid => {
            if input < kernel {
                return Err(Error::ShapeMismatch(format!(
                    "VALID kernel {kernel} larger than extent {input}"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
    }
}

/// Runs `f(row_index, row)` over fixed-size chunks of `out`, in parallel when
/// the `parallel` feature is on. Rows are independent so the result does not
/// depend on scheduling.
pub(crate) fn for_each_row<T, F>(out: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, r)| f(i, r));
    }
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, r)| f(i, r));
}
