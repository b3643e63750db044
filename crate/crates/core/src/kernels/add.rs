use crate::error::{Error, Result};
use crate::quant::{compute_requant, multiply_by_quantized_multiplier, QuantParams, QMAX, QMIN};
use crate::tensor::Tensor;

/// Headroom bits used when bringing both operands to a common scale.
const LEFT_SHIFT: u32 = 20;

pub fn residual_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "add {} + {}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .as_f32()?
        .iter()
        .zip(b.as_f32()?)
        .map(|(x, y)| x + y)
        .collect();
    Tensor::from_f32(a.shape(), data)
}

/// Smallest output scale for which [`residual_add_q`] multipliers stay < 1.
pub(crate) fn add_min_output_scale(a: &QuantParams, b: &QuantParams) -> f64 {
    2.0 * a.scale(0).max(b.scale(0)) / (1u64 << LEFT_SHIFT) as f64
}

/// Integer addition. Both operands are shifted left, rescaled to twice the
/// larger input scale, summed and requantized to `out_params`.
pub fn residual_add_q(a: &Tensor, b: &Tensor, out_params: &QuantParams) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "add {} + {}",
            a.shape(),
            b.shape()
        )));
    }
    let (qa, qb) = (a.quant()?, b.quant()?);
    let twice_max = 2.0 * qa.scale(0).max(qb.scale(0));
    let ma = compute_requant(qa.scale(0) / twice_max)?;
    let mb = compute_requant(qb.scale(0) / twice_max)?;
    let mo = compute_requant(twice_max / ((1u64 << LEFT_SHIFT) as f64 * out_params.scale(0)))?;
    let (za, zb, zo) = (qa.zero_point(0), qb.zero_point(0), out_params.zero_point(0));
    let data = a
        .as_i8()?
        .iter()
        .zip(b.as_i8()?)
        .map(|(&x, &y)| {
            let xs = multiply_by_quantized_multiplier((x as i32 - za) << LEFT_SHIFT, ma);
            let ys = multiply_by_quantized_multiplier((y as i32 - zb) << LEFT_SHIFT, mb);
            let v = multiply_by_quantized_multiplier(xs + ys, mo) + zo;
            v.clamp(QMIN, QMAX) as i8
        })
        .collect();
    Tensor::from_i8(a.shape(), data, out_params.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::params_from_range;
    use crate::tensor::Shape;

    #[test]
    fn adding_zero_is_identity() {
        let qa = params_from_range(-1.0, 3.0).unwrap();
        let qb = params_from_range(-2.0, 2.0).unwrap();
        let codes: Vec<i8> = (-128..=127).map(|v| v as i8).collect();
        let a = Tensor::from_i8(Shape::hwc(1, 1, 256), codes, qa.clone()).unwrap();
        let zb = qb.quantize(0.0, 0);
        let b = Tensor::from_i8(Shape::hwc(1, 1, 256), vec![zb; 256], qb).unwrap();
        let y = residual_add_q(&a, &b, &qa).unwrap();
        assert_eq!(y.as_i8().unwrap(), a.as_i8().unwrap());
    }

    #[test]
    fn doubling() {
        let q = params_from_range(-1.0, 1.0).unwrap();
        let out = params_from_range(-2.0, 2.0).unwrap();
        let vals: Vec<f64> = (0..50).map(|i| -1.0 + i as f64 * 0.04).collect();
        let codes: Vec<i8> = vals.iter().map(|&v| q.quantize(v, 0)).collect();
        let a = Tensor::from_i8(Shape::hwc(1, 1, 50), codes, q).unwrap();
        let y = residual_add_q(&a, &a, &out).unwrap().to_real();
        let ar = a.to_real();
        for (yv, av) in y.as_f32().unwrap().iter().zip(ar.as_f32().unwrap()) {
            assert!(((yv - 2.0 * av).abs() as f64) <= out.scale(0) * 0.5 + 1e-6);
        }
    }

    #[test]
    fn shape_mismatch() {
        let q = QuantParams::per_tensor(1.0, 0).unwrap();
        let a = Tensor::from_i8(Shape::hwc(1, 1, 2), vec![0; 2], q.clone()).unwrap();
        let b = Tensor::from_i8(Shape::hwc(1, 2, 1), vec![0; 2], q.clone()).unwrap();
        assert!(matches!(
            residual_add_q(&a, &b, &q),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
