use crate::error::{Error, Result};
use crate::quant::div_round_half_away;
use crate::tensor::{Shape, Tensor};

fn pooled_shape(s: Shape) -> Result<Shape> {
    if s.h == 0 || s.w == 0 {
        return Err(Error::ShapeMismatch(format!(
            "cannot pool empty extent {s}"
        )));
    }
    Ok(Shape::new(s.n, 1, 1, s.c))
}

pub fn global_avgpool(t: &Tensor) -> Result<Tensor> {
    let s = t.shape();
    let out_shape = pooled_shape(s)?;
    let x = t.as_f32()?;
    let area = (s.h * s.w) as f64;
    let mut out = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        let mut sums = vec![0.0f64; s.c];
        for px in x[n * s.h * s.w * s.c..(n + 1) * s.h * s.w * s.c].chunks(s.c) {
            for (acc, &v) in sums.iter_mut().zip(px) {
                *acc += v as f64;
            }
        }
        out.extend(sums.into_iter().map(|v| (v / area) as f32));
    }
    Tensor::from_f32(out_shape, out)
}

/// Per-channel mean of the codes, rounded half away from zero. The output
/// keeps the input's quantization parameters.
pub fn global_avgpool_q(t: &Tensor) -> Result<Tensor> {
    let s = t.shape();
    let out_shape = pooled_shape(s)?;
    let x = t.as_i8()?;
    let area = (s.h * s.w) as i64;
    let mut out = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        let mut sums = vec![0i64; s.c];
        for px in x[n * s.h * s.w * s.c..(n + 1) * s.h * s.w * s.c].chunks(s.c) {
            for (acc, &v) in sums.iter_mut().zip(px) {
                *acc += v as i64;
            }
        }
        out.extend(sums.into_iter().map(|v| div_round_half_away(v, area) as i8));
    }
    Tensor::from_i8(out_shape, out, t.quant()?.clone())
}

fn max_pool_impl<T: Copy + PartialOrd>(x: &[T], s: Shape, size: usize) -> Result<(Shape, Vec<T>)> {
    if size == 0 || s.h < size || s.w < size {
        return Err(Error::ShapeMismatch(format!("max pool {size} on {s}")));
    }
    let os = Shape::new(s.n, s.h / size, s.w / size, s.c);
    let mut out = Vec::with_capacity(os.len());
    for n in 0..s.n {
        for oy in 0..os.h {
            for ox in 0..os.w {
                let first = s.offset(n, oy * size, ox * size, 0);
                let mut best: Vec<T> = x[first..first + s.c].to_vec();
                for ky in 0..size {
                    for kx in 0..size {
                        let base = s.offset(n, oy * size + ky, ox * size + kx, 0);
                        for (b, &v) in best.iter_mut().zip(&x[base..base + s.c]) {
                            if v > *b {
                                *b = v;
                            }
                        }
                    }
                }
                out.extend(best);
            }
        }
    }
    Ok((os, out))
}

/// Non-overlapping `size x size` max pooling (VALID, stride = size).
pub fn max_pool(t: &Tensor, size: usize) -> Result<Tensor> {
    let (os, out) = max_pool_impl(t.as_f32()?, t.shape(), size)?;
    Tensor::from_f32(os, out)
}

pub fn max_pool_q(t: &Tensor, size: usize) -> Result<Tensor> {
    let (os, out) = max_pool_impl(t.as_i8()?, t.shape(), size)?;
    Tensor::from_i8(os, out, t.quant()?.clone())
}
