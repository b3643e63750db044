//! Bilinear resampling with half-pixel centers.

use crate::error::{Error, Result};
use crate::quant::div_round_half_away;
use crate::tensor::{Shape, Tensor};

/// Source taps and fractional weight for one output coordinate.
#[derive(Clone, Copy, Debug)]
struct Taps {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(out_len: usize, in_len: usize) -> Vec<Taps> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            Taps {
                lo,
                hi: (lo + 1).min(in_len - 1),
                frac: src - lo as f64,
            }
        })
        .collect()
}

fn check(s: Shape, out_h: usize, out_w: usize) -> Result<()> {
    if out_h == 0 || out_w == 0 || s.h == 0 || s.w == 0 {
        return Err(Error::ShapeMismatch(format!(
            "cannot resize {s} to {out_h}x{out_w}"
        )));
    }
    Ok(())
}

pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = img.shape();
    check(s, out_h, out_w)?;
    if (s.h, s.w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let x = img.as_f32()?;
    let (ty, tx) = (taps(out_h, s.h), taps(out_w, s.w));
    let os = Shape::new(s.n, out_h, out_w, s.c);
    let mut out = Vec::with_capacity(os.len());
    for n in 0..s.n {
        for y in &ty {
            for xt in &tx {
                for c in 0..s.c {
                    let at = |yy, xx| x[s.offset(n, yy, xx, c)] as f64;
                    let top = at(y.lo, xt.lo) + xt.frac * (at(y.lo, xt.hi) - at(y.lo, xt.lo));
                    let bot = at(y.hi, xt.lo) + xt.frac * (at(y.hi, xt.hi) - at(y.hi, xt.lo));
                    out.push((top + y.frac * (bot - top)) as f32);
                }
            }
        }
    }
    Tensor::from_f32(os, out)
}

const FRAC_BITS: u32 = 11;
const ONE: i64 = 1 << FRAC_BITS;

/// Integer resize on codes with 11-bit fixed-point weights. Interpolation
/// weights sum to one, so the output keeps the input encoding.
pub fn resize_bilinear_q(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = t.shape();
    check(s, out_h, out_w)?;
    let q = t.quant()?.clone();
    if (s.h, s.w) == (out_h, out_w) {
        return Ok(t.clone());
    }
    let x = t.as_i8()?;
    let fixed = |tp: &Taps| (tp.frac * ONE as f64).round() as i64;
    let (ty, tx) = (taps(out_h, s.h), taps(out_w, s.w));
    let os = Shape::new(s.n, out_h, out_w, s.c);
    let mut out = Vec::with_capacity(os.len());
    for n in 0..s.n {
        for y in &ty {
            let wy = fixed(y);
            for xt in &tx {
                let wx = fixed(xt);
                for c in 0..s.c {
                    let at = |yy, xx| x[s.offset(n, yy, xx, c)] as i64;
                    let top = at(y.lo, xt.lo) * (ONE - wx) + at(y.lo, xt.hi) * wx;
                    let bot = at(y.hi, xt.lo) * (ONE - wx) + at(y.hi, xt.hi) * wx;
                    let v = div_round_half_away(top * (ONE - wy) + bot * wy, ONE * ONE);
                    out.push(v as i8);
                }
            }
        }
    }
    Tensor::from_i8(os, out, q)
}
