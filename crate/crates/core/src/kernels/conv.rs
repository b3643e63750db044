//! Standard, depthwise and fully-connected layers.
//!
//! Weight layouts keep the output channel on the last axis so per-channel
//! quantization parameters always index the channel dimension:
//! standard conv `(kh, kw, in, out)`, depthwise `(kh, kw, 1, channels)`,
//! fully connected `(1, 1, in, out)`. Biases are `(1, 1, 1, out)`.

use super::{for_each_row, ConvGeometry, ConvSpec};
use crate::error::{Error, Result};
use crate::quant::{apply_requant, compute_requant, QuantParams, RequantMultiplier};
use crate::tensor::{Shape, Tensor};

/// Weights and bias of one conv or FC layer, real or quantized.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Integer convolution strategy. Both produce identical bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConvAlgo {
    Direct,
    #[default]
    Im2colGemm,
}

fn check_weights(
    geo: &ConvGeometry,
    spec: &ConvSpec,
    weights: &Tensor,
    bias: &Tensor,
) -> Result<()> {
    let want = spec.weight_shape(geo.input.c);
    if weights.shape() != want {
        return Err(Error::ShapeMismatch(format!(
            "conv weights are {}, expected {want}",
            weights.shape()
        )));
    }
    if bias.len() != spec.out_channels || bias.shape().c != spec.out_channels {
        return Err(Error::ShapeMismatch(format!(
            "bias has {} entries for {} output channels",
            bias.len(),
            spec.out_channels
        )));
    }
    Ok(())
}

/// Per-output-channel `input_scale * weight_scale / output_scale`.
pub(crate) fn channel_multipliers(
    input: &QuantParams,
    weights: &QuantParams,
    output: &QuantParams,
    channels: usize,
) -> Result<Vec<RequantMultiplier>> {
    (0..channels)
        .map(|c| compute_requant(input.scale(0) * weights.scale(c) / output.scale(0)))
        .collect()
}

fn check_activation_params(t: &Tensor) -> Result<&QuantParams> {
    let q = t.quant()?;
    if q.is_per_channel() {
        return Err(Error::InvalidQuantParams(
            "activations must be quantized per tensor".into(),
        ));
    }
    Ok(q)
}

/// Real-valued convolution, standard or depthwise per `spec`.
pub fn conv2d(input: &Tensor, w: &ConvWeights, spec: &ConvSpec) -> Result<Tensor> {
    let geo = ConvGeometry::new(input.shape(), spec)?;
    check_weights(&geo, spec, &w.weights, &w.bias)?;
    let x = input.as_f32()?;
    let wt = w.weights.as_f32()?;
    let b = w.bias.as_f32()?;
    let (is, os) = (geo.input, geo.output);
    let cin = is.c;
    let cout = os.c;
    let mut out = vec![0.0f32; os.len()];
    for_each_row(&mut out, os.w * cout, |row, dst| {
        let (n, oy) = (row / os.h, row % os.h);
        for ox in 0..os.w {
            let acc = &mut dst[ox * cout..(ox + 1) * cout];
            acc.copy_from_slice(b);
            for ky in 0..spec.kernel_h {
                let Some(iy) = tap(oy, ky, spec.stride, geo.pad_top, is.h) else {
                    continue;
                };
                for kx in 0..spec.kernel_w {
                    let Some(ix) = tap(ox, kx, spec.stride, geo.pad_left, is.w) else {
                        continue;
                    };
                    let px = &x[is.offset(n, iy, ix, 0)..][..cin];
                    if spec.depthwise {
                        let wk = &wt[(ky * spec.kernel_w + kx) * cout..][..cout];
                        for c in 0..cout {
                            acc[c] += px[c] * wk[c];
                        }
                    } else {
                        let wk = &wt[(ky * spec.kernel_w + kx) * cin * cout..][..cin * cout];
                        for (ic, &v) in px.iter().enumerate() {
                            let wrow = &wk[ic * cout..][..cout];
                            for c in 0..cout {
                                acc[c] += v * wrow[c];
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::from_f32(os, out)
}

#[inline]
fn tap(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let i = (o * stride + k).checked_sub(pad)?;
    (i < extent).then_some(i)
}

/// Integer convolution. Padding contributes the input zero point, i.e. a
/// real zero, so padded taps are skipped in the centered accumulation.
pub fn conv2d_q(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
    out_params: &QuantParams,
) -> Result<Tensor> {
    conv2d_q_with(input, weights, bias, spec, out_params, ConvAlgo::default())
}

pub fn conv2d_q_with(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
    out_params: &QuantParams,
    algo: ConvAlgo,
) -> Result<Tensor> {
    if spec.depthwise {
        return depthwise_conv_q(input, weights, bias, spec, out_params);
    }
    let geo = ConvGeometry::new(input.shape(), spec)?;
    check_weights(&geo, spec, weights, bias)?;
    let in_q = check_activation_params(input)?;
    let mults = channel_multipliers(in_q, weights.quant()?, out_params, spec.out_channels)?;
    let ctx = QConv {
        geo,
        spec,
        x: input.as_i8()?,
        zp_in: in_q.zero_point(0),
        w: weights.as_i8()?,
        bias: bias.as_i32()?,
        mults: &mults,
        zp_out: out_params.zero_point(0),
    };
    let mut out = vec![0i8; geo.output.len()];
    match algo {
        ConvAlgo::Direct => ctx.direct(&mut out),
        ConvAlgo::Im2colGemm => ctx.gemm(&mut out),
    }
    Tensor::from_i8(geo.output, out, out_params.clone())
}

struct QConv<'a> {
    geo: ConvGeometry,
    spec: &'a ConvSpec,
    x: &'a [i8],
    zp_in: i32,
    w: &'a [i8],
    bias: &'a [i32],
    mults: &'a [RequantMultiplier],
    zp_out: i32,
}

impl QConv<'_> {
    fn direct(&self, out: &mut [i8]) {
        let (is, os) = (self.geo.input, self.geo.output);
        let (cin, cout) = (is.c, os.c);
        let spec = self.spec;
        for_each_row(out, os.w * cout, |row, dst| {
            let (n, oy) = (row / os.h, row % os.h);
            for ox in 0..os.w {
                for oc in 0..cout {
                    let mut acc = self.bias[oc];
                    for ky in 0..spec.kernel_h {
                        let Some(iy) = tap(oy, ky, spec.stride, self.geo.pad_top, is.h) else {
                            continue;
                        };
                        for kx in 0..spec.kernel_w {
                            let Some(ix) = tap(ox, kx, spec.stride, self.geo.pad_left, is.w) else {
                                continue;
                            };
                            let base = is.offset(n, iy, ix, 0);
                            let wbase = (ky * spec.kernel_w + kx) * cin * cout;
                            for ic in 0..cin {
                                let xv = self.x[base + ic] as i32 - self.zp_in;
                                acc = acc.wrapping_add(xv * self.w[wbase + ic * cout + oc] as i32);
                            }
                        }
                    }
                    dst[ox * cout + oc] = apply_requant(acc, self.mults[oc], self.zp_out);
                }
            }
        });
    }

    /// Gathers one centered im2col row per output pixel and multiplies it
    /// against the `(k, out)` weight matrix.
    fn gemm(&self, out: &mut [i8]) {
        let (is, os) = (self.geo.input, self.geo.output);
        let (cin, cout) = (is.c, os.c);
        let spec = self.spec;
        let k_len = spec.kernel_h * spec.kernel_w * cin;
        let w32: Vec<i32> = self.w.iter().map(|&v| v as i32).collect();
        for_each_row(out, os.w * cout, |row, dst| {
            let (n, oy) = (row / os.h, row % os.h);
            let mut patch = vec![0i32; k_len];
            let mut acc = vec![0i32; cout];
            for ox in 0..os.w {
                patch.fill(0);
                for ky in 0..spec.kernel_h {
                    let Some(iy) = tap(oy, ky, spec.stride, self.geo.pad_top, is.h) else {
                        continue;
                    };
                    for kx in 0..spec.kernel_w {
                        let Some(ix) = tap(ox, kx, spec.stride, self.geo.pad_left, is.w) else {
                            continue;
                        };
                        let src = &self.x[is.offset(n, iy, ix, 0)..][..cin];
                        let dstp = &mut patch[(ky * spec.kernel_w + kx) * cin..][..cin];
                        for (d, &s) in dstp.iter_mut().zip(src) {
                            *d = s as i32 - self.zp_in;
                        }
                    }
                }
                acc.copy_from_slice(self.bias);
                for (k, &a) in patch.iter().enumerate() {
                    if a == 0 {
                        continue;
                    }
                    let wrow = &w32[k * cout..][..cout];
                    for (acc_c, &wv) in acc.iter_mut().zip(wrow) {
                        *acc_c = acc_c.wrapping_add(a * wv);
                    }
                }
                let o = &mut dst[ox * cout..][..cout];
                for c in 0..cout {
                    o[c] = apply_requant(acc[c], self.mults[c], self.zp_out);
                }
            }
        });
    }
}

/// Integer depthwise convolution: one filter per channel.
pub fn depthwise_conv_q(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
    out_params: &QuantParams,
) -> Result<Tensor> {
    if !spec.depthwise {
        return Err(Error::ShapeMismatch(
            "depthwise kernel given a standard conv spec".into(),
        ));
    }
    let geo = ConvGeometry::new(input.shape(), spec)?;
    check_weights(&geo, spec, weights, bias)?;
    let in_q = check_activation_params(input)?;
    let mults = channel_multipliers(in_q, weights.quant()?, out_params, spec.out_channels)?;
    let x = input.as_i8()?;
    let w: Vec<i32> = weights.as_i8()?.iter().map(|&v| v as i32).collect();
    let b = bias.as_i32()?;
    let zp_in = in_q.zero_point(0);
    let zp_out = out_params.zero_point(0);
    let (is, os) = (geo.input, geo.output);
    let ch = os.c;
    let mut out = vec![0i8; os.len()];
    for_each_row(&mut out, os.w * ch, |row, dst| {
        let (n, oy) = (row / os.h, row % os.h);
        let mut acc = vec![0i32; ch];
        for ox in 0..os.w {
            acc.copy_from_slice(b);
            for ky in 0..spec.kernel_h {
                let Some(iy) = tap(oy, ky, spec.stride, geo.pad_top, is.h) else {
                    continue;
                };
                for kx in 0..spec.kernel_w {
                    let Some(ix) = tap(ox, kx, spec.stride, geo.pad_left, is.w) else {
                        continue;
                    };
                    let px = &x[is.offset(n, iy, ix, 0)..][..ch];
                    let wk = &w[(ky * spec.kernel_w + kx) * ch..][..ch];
                    for c in 0..ch {
                        acc[c] = acc[c].wrapping_add((px[c] as i32 - zp_in) * wk[c]);
                    }
                }
            }
            let o = &mut dst[ox * ch..][..ch];
            for c in 0..ch {
                o[c] = apply_requant(acc[c], mults[c], zp_out);
            }
        }
    });
    Tensor::from_i8(os, out, out_params.clone())
}

fn fc_dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let batch = input.shape().n;
    let k = input.len().checked_div(batch).unwrap_or(0);
    let ws = weights.shape();
    if ws.n != 1 || ws.h != 1 || ws.w != k {
        return Err(Error::ShapeMismatch(format!(
            "FC weights {ws} do not accept {k} inputs"
        )));
    }
    if bias.len() != ws.c {
        return Err(Error::ShapeMismatch(format!(
            "FC bias has {} entries for {} outputs",
            bias.len(),
            ws.c
        )));
    }
    Ok((batch, k, ws.c))
}

/// Real fully-connected layer over the flattened per-image input.
pub fn fully_connected(input: &Tensor, w: &ConvWeights) -> Result<Tensor> {
    let (batch, k, o) = fc_dims(input, &w.weights, &w.bias)?;
    let x = input.as_f32()?;
    let wt = w.weights.as_f32()?;
    let b = w.bias.as_f32()?;
    let mut out = Vec::with_capacity(batch * o);
    for n in 0..batch {
        let mut acc = b.to_vec();
        for (i, &v) in x[n * k..(n + 1) * k].iter().enumerate() {
            for (a, &wv) in acc.iter_mut().zip(&wt[i * o..(i + 1) * o]) {
                *a += v * wv;
            }
        }
        out.extend(acc);
    }
    Tensor::from_f32(Shape::new(batch, 1, 1, o), out)
}

/// Integer fully-connected layer: INT32 dot products, per-channel requant.
pub fn fully_connected_q(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    out_params: &QuantParams,
) -> Result<Tensor> {
    let (batch, k, o) = fc_dims(input, weights, bias)?;
    let in_q = check_activation_params(input)?;
    let mults = channel_multipliers(in_q, weights.quant()?, out_params, o)?;
    let x = input.as_i8()?;
    let w: Vec<i32> = weights.as_i8()?.iter().map(|&v| v as i32).collect();
    let b = bias.as_i32()?;
    let zp_in = in_q.zero_point(0);
    let zp_out = out_params.zero_point(0);
    let mut out = vec![0i8; batch * o];
    for (n, dst) in out.chunks_mut(o.max(1)).enumerate().take(batch) {
        let mut acc = b.to_vec();
        for (i, &v) in x[n * k..(n + 1) * k].iter().enumerate() {
            let a = v as i32 - zp_in;
            if a == 0 {
                continue;
            }
            for (acc_c, &wv) in acc.iter_mut().zip(&w[i * o..(i + 1) * o]) {
                *acc_c = acc_c.wrapping_add(a * wv);
            }
        }
        for c in 0..o {
            dst[c] = apply_requant(acc[c], mults[c], zp_out);
        }
    }
    Tensor::from_i8(Shape::new(batch, 1, 1, o), out, out_params.clone())
}
