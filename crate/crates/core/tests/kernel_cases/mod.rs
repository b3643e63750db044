//! Randomized kernel cases checked against the loop oracles. Each entry
//! point panics on the first mismatch.

use crate::oracles::{self, ConvCase};
use maiq_core::kernels::{
    conv2d_q_with, depthwise_conv_q, fully_connected_q, global_avgpool_q, max_pool_q,
    residual_add_q, ConvAlgo, ConvSpec, Padding,
};
use maiq_core::quant::{apply_requant, compute_requant, RequantMultiplier};
use maiq_core::{QuantParams, Shape, Tensor};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn codes(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n)
        .map(|_| rng.random_range(-128..=127i32) as i8)
        .collect()
}

fn weight_codes(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n)
        .map(|_| rng.random_range(-127..=127i32) as i8)
        .collect()
}

/// Output scale putting the largest multiplier in (1e-4, 0.99).
fn out_scale(rng: &mut ChaCha8Rng, s_in: f64, s_w: &[f64]) -> f64 {
    let max = s_w.iter().fold(0.0f64, |a, &b| a.max(b)) * s_in;
    max * rng.random_range(1.02..1e4f64.sqrt()).powi(2)
}

fn random_conv(rng: &mut ChaCha8Rng, depthwise: bool) -> ConvCase {
    let kernel = (
        *[1, 2, 3, 5].get(rng.random_range(0..4usize)).unwrap(),
        *[1, 3, 4].get(rng.random_range(0..3usize)).unwrap(),
    );
    let same = rng.random_bool(0.7);
    let h = rng.random_range(if same { 1 } else { kernel.0 }..=9);
    let w = rng.random_range(if same { 1 } else { kernel.1 }..=9);
    let n = rng.random_range(1..=2);
    let ic = rng.random_range(1..=7);
    let out_c = if depthwise {
        ic
    } else {
        rng.random_range(1..=7)
    };
    let wn = kernel.0 * kernel.1 * if depthwise { ic } else { ic * out_c };
    let s_in = rng.random_range(0.002..0.2);
    let s_w: Vec<f64> = (0..out_c).map(|_| rng.random_range(0.0005..0.05)).collect();
    let s_out = out_scale(rng, s_in, &s_w);
    ConvCase {
        in_shape: [n, h, w, ic],
        x: codes(rng, n * h * w * ic),
        zp_in: rng.random_range(-128..=127),
        s_in,
        kernel,
        stride: rng.random_range(1..=3),
        same,
        depthwise,
        out_c,
        w: weight_codes(rng, wn),
        s_w,
        bias: (0..out_c)
            .map(|_| rng.random_range(-20_000..=20_000))
            .collect(),
        s_out,
        zp_out: rng.random_range(-128..=127),
    }
}

struct ConvTensors {
    x: Tensor,
    w: Tensor,
    b: Tensor,
    spec: ConvSpec,
    out: QuantParams,
}

fn tensors(c: &ConvCase) -> ConvTensors {
    let [n, h, w, ic] = c.in_shape;
    let in_q = QuantParams::per_tensor(c.s_in, c.zp_in as i32).unwrap();
    let w_shape = if c.depthwise {
        Shape::new(c.kernel.0, c.kernel.1, 1, c.out_c)
    } else {
        Shape::new(c.kernel.0, c.kernel.1, ic, c.out_c)
    };
    let b_scales = c.s_w.iter().map(|s| s * c.s_in).collect();
    ConvTensors {
        x: Tensor::from_i8(Shape::new(n, h, w, ic), c.x.clone(), in_q).unwrap(),
        w: Tensor::from_i8(
            w_shape,
            c.w.clone(),
            QuantParams::per_channel(c.s_w.clone()).unwrap(),
        )
        .unwrap(),
        b: Tensor::from_i32(
            Shape::new(1, 1, 1, c.out_c),
            c.bias.clone(),
            QuantParams::per_channel(b_scales).unwrap(),
        )
        .unwrap(),
        spec: ConvSpec {
            kernel_h: c.kernel.0,
            kernel_w: c.kernel.1,
            stride: c.stride,
            padding: if c.same {
                Padding::Same
            } else {
                Padding::Valid
            },
            depthwise: c.depthwise,
            out_channels: c.out_c,
        },
        out: QuantParams::per_tensor(c.s_out, c.zp_out as i32).unwrap(),
    }
}

pub fn conv(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    for case in 0..cases {
        let c = random_conv(&mut rng, false);
        let t = tensors(&c);
        let (oh, ow, want) = oracles::conv(&c);
        for algo in [ConvAlgo::Direct, ConvAlgo::Im2colGemm] {
            let y = conv2d_q_with(&t.x, &t.w, &t.b, &t.spec, &t.out, algo).unwrap();
            assert_eq!(
                y.shape(),
                Shape::new(c.in_shape[0], oh, ow, c.out_c),
                "case {case}"
            );
            assert_eq!(y.as_i8().unwrap(), &want[..], "case {case} {algo:?}");
        }
    }
}

pub fn depthwise(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD0);
    for case in 0..cases {
        let c = random_conv(&mut rng, true);
        let t = tensors(&c);
        let (_, _, want) = oracles::conv(&c);
        let y = depthwise_conv_q(&t.x, &t.w, &t.b, &t.spec, &t.out).unwrap();
        assert_eq!(y.as_i8().unwrap(), &want[..], "case {case}");
    }
}

pub fn fully_connected(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFC);
    for case in 0..cases {
        let batch = rng.random_range(1..=3);
        let (h, w, c) = (
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=24),
        );
        let k = h * w * c;
        let out = rng.random_range(1..=16);
        let x = codes(&mut rng, batch * k);
        let wq = weight_codes(&mut rng, k * out);
        let (s_in, zp_in) = (rng.random_range(0.002..0.2), rng.random_range(-128..=127));
        let s_w: Vec<f64> = (0..out).map(|_| rng.random_range(0.0005..0.05)).collect();
        let s_out = out_scale(&mut rng, s_in, &s_w);
        let zp_out = rng.random_range(-128..=127);
        let bias: Vec<i32> = (0..out)
            .map(|_| rng.random_range(-20_000..=20_000))
            .collect();
        let want = oracles::fc(&x, batch, zp_in, s_in, &wq, out, &s_w, &bias, s_out, zp_out);

        let xt = Tensor::from_i8(
            Shape::new(batch, h, w, c),
            x,
            QuantParams::per_tensor(s_in, zp_in as i32).unwrap(),
        )
        .unwrap();
        let wt = Tensor::from_i8(
            Shape::new(1, 1, k, out),
            wq,
            QuantParams::per_channel(s_w.clone()).unwrap(),
        )
        .unwrap();
        let bt = Tensor::from_i32(
            Shape::new(1, 1, 1, out),
            bias,
            QuantParams::per_channel(s_w.iter().map(|s| s * s_in).collect()).unwrap(),
        )
        .unwrap();
        let oq = QuantParams::per_tensor(s_out, zp_out as i32).unwrap();
        let y = fully_connected_q(&xt, &wt, &bt, &oq).unwrap();
        assert_eq!(y.shape(), Shape::new(batch, 1, 1, out));
        assert_eq!(y.as_i8().unwrap(), &want[..], "case {case}");
    }
}

pub fn avgpool(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA0);
    for case in 0..cases {
        let dims = [
            rng.random_range(1..=2),
            rng.random_range(1..=12),
            rng.random_range(1..=12),
            rng.random_range(1..=9),
        ];
        let x = codes(&mut rng, dims.iter().product());
        let q = QuantParams::per_tensor(rng.random_range(0.01..1.0), rng.random_range(-128..=127))
            .unwrap();
        let t = Tensor::from_i8(
            Shape::new(dims[0], dims[1], dims[2], dims[3]),
            x.clone(),
            q.clone(),
        )
        .unwrap();
        let y = global_avgpool_q(&t).unwrap();
        assert_eq!(
            y.as_i8().unwrap(),
            &oracles::avgpool(&x, dims)[..],
            "case {case}"
        );
        assert_eq!(y.quant().unwrap(), &q);
    }
}

pub fn residual_add(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xADD);
    for case in 0..cases {
        let n = rng.random_range(1..=64);
        let (a, b) = (codes(&mut rng, n), codes(&mut rng, n));
        let sa = rng.random_range(0.001..0.5);
        let sb = sa * rng.random_range(0.05..20.0);
        let (za, zb) = (rng.random_range(-128..=127), rng.random_range(-128..=127));
        // output scale above the 2*max(sa, sb)/2^20 floor
        let so = (sa + sb) * rng.random_range(0.05..2.0);
        let zo = rng.random_range(-128..=127);
        let want = oracles::add(&a, sa, za, &b, sb, zb, so, zo);
        let shape = Shape::hwc(1, 1, n);
        let at =
            Tensor::from_i8(shape, a, QuantParams::per_tensor(sa, za as i32).unwrap()).unwrap();
        let bt =
            Tensor::from_i8(shape, b, QuantParams::per_tensor(sb, zb as i32).unwrap()).unwrap();
        let y = residual_add_q(&at, &bt, &QuantParams::per_tensor(so, zo as i32).unwrap()).unwrap();
        assert_eq!(y.as_i8().unwrap(), &want[..], "case {case}");
    }
}

pub fn max_pool(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3A);
    for case in 0..cases {
        let size = rng.random_range(1..=3);
        let (h, w, c) = (
            rng.random_range(size..=10),
            rng.random_range(size..=10),
            rng.random_range(1..=5),
        );
        let x = codes(&mut rng, h * w * c);
        let q = QuantParams::per_tensor(0.1, 3).unwrap();
        let t = Tensor::from_i8(Shape::hwc(h, w, c), x.clone(), q).unwrap();
        let (oh, ow) = (h / size, w / size);
        let mut want = Vec::new();
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut m = i8::MIN;
                    for ky in 0..size {
                        for kx in 0..size {
                            m = m.max(x[((oy * size + ky) * w + ox * size + kx) * c + ch]);
                        }
                    }
                    want.push(m);
                }
            }
        }
        assert_eq!(
            max_pool_q(&t, size).unwrap().as_i8().unwrap(),
            &want[..],
            "case {case}"
        );
    }
}

/// Panics unless every case is bit-exact against the fixed-point oracle
/// and within one code of exact rounding.
pub fn requantization(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut exact_hits = 0;
    for case in 0..cases {
        let m = if case % 10 == 0 {
            rng.random_range(0.5..0.999_999)
        } else {
            rng.random_range(-30.0..-1.0f64).exp2()
        };
        let acc = match case % 4 {
            0 => rng.random_range(-1_000..=1_000),
            1 => rng.random_range(-1_000_000..=1_000_000),
            _ => rng.random_range(i32::MIN / 2..=i32::MAX / 2),
        };
        let zp = rng.random_range(-128..=127);
        let rm = compute_requant(m).unwrap();
        let (mant, shift) = oracles::fixed_multiplier(m);
        assert_eq!(
            rm,
            RequantMultiplier {
                mantissa: mant as i32,
                shift
            },
            "multiplier {m}"
        );
        assert!((1 << 30..1i64 << 31).contains(&(rm.mantissa as i64)));
        assert!((rm.to_f64() - m).abs() <= m * 2f64.powi(-30));

        let got = apply_requant(acc, rm, zp) as i64;
        // bit-exact against the fixed-point reference
        assert_eq!(
            got,
            oracles::clamp8(oracles::fixed_mul(acc as i64, mant, shift) + zp as i64) as i64
        );
        // within one code of the exactly rounded product
        let exact = oracles::clamp8(oracles::exact_mul(acc as i64, mant, shift) + zp as i64) as i64;
        assert!(
            (got - exact).abs() <= 1,
            "acc {acc} m {m}: {got} vs {exact}"
        );
        exact_hits += (got == exact) as usize;
    }
    assert!(
        exact_hits * 10 > cases * 9,
        "only {exact_hits} of {cases} exact"
    );
}
