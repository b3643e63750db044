use crate::error::Result;
use crate::quant::QuantParams;
use crate::tensor::Tensor;

pub fn relu6(t: &Tensor) -> Result<Tensor> {
    let mut out = t.clone();
    for v in out.as_f32_mut()? {
        *v = v.clamp(0.0, 6.0);
    }
    Ok(out)
}

/// Codes of real 0 and real 6 under `q`, each saturated into int8.
pub fn relu6_bounds(q: &QuantParams) -> (i8, i8) {
    (q.quantize(0.0, 0), q.quantize(6.0, 0))
}

pub fn relu6_q(t: &Tensor) -> Result<Tensor> {
    let mut out = t.clone();
    relu6_q_in_place(&mut out)?;
    Ok(out)
}

pub fn relu6_q_in_place(t: &mut Tensor) -> Result<()> {
    let (lo, hi) = relu6_bounds(t.quant()?);
    for v in t.as_i8_mut()? {
        *v = (*v).clamp(lo, hi.max(lo));
    }
    Ok(())
}

/// `relu6(x + 3) / 6`.
#[inline]
pub fn hardsigmoid_scalar(x: f32) -> f32 {
    (x + 3.0).clamp(0.0, 6.0) / 6.0
}

pub fn hardsigmoid(t: &Tensor) -> Result<Tensor> {
    let mut out = t.clone();
    for v in out.as_f32_mut()? {
        *v = hardsigmoid_scalar(*v);
    }
    Ok(out)
}

/// Fixed output encoding of the gate: range [0, 1] at scale 1/256.
pub fn hardsigmoid_output_params() -> QuantParams {
    QuantParams::per_tensor(1.0 / 256.0, -128).expect("constant params")
}

/// Precomputed HardSigmoid over all 256 input codes for one input encoding.
#[derive(Clone, Debug)]
pub struct HardSigmoidLut {
    table: [i8; 256],
}

impl HardSigmoidLut {
    pub fn new(input: &QuantParams) -> Self {
        let out = hardsigmoid_output_params();
        let mut table = [0i8; 256];
        for (i, slot) in table.iter_mut().enumerate() {
            let code = i as i32 - 128;
            let x = input.dequantize(code, 0);
            let y = ((x + 3.0).clamp(0.0, 6.0)) / 6.0;
            *slot = out.quantize(y, 0);
        }
        HardSigmoidLut { table }
    }

    #[inline]
    pub fn get(&self, code: i8) -> i8 {
        self.table[(code as i32 + 128) as usize]
    }
}

pub fn hardsigmoid_q(t: &Tensor) -> Result<Tensor> {
    let lut = HardSigmoidLut::new(t.quant()?);
    let data = t.as_i8()?.iter().map(|&v| lut.get(v)).collect();
    Tensor::from_i8(t.shape(), data, hardsigmoid_output_params())
}
