mod oracles;

use maiq_core::dataset::{decode_p6, encode_p6};
use maiq_core::kernels::{hardsigmoid, hardsigmoid_output_params, hardsigmoid_q, relu6, relu6_q};
use maiq_core::quant::{params_from_range, quantize_tensor, CalibrationStats};
use maiq_core::scoreboard::{final_score, topk, ScoringConfig};
use maiq_core::{QuantParams, Shape, Tensor};
use proptest::prelude::*;

fn range() -> impl Strategy<Value = (f64, f64)> {
    (-50.0..50.0f64, 0.0..100.0f64).prop_map(|(lo, span)| (lo, lo + span))
}

proptest! {
    #[test]
    fn zero_is_exactly_representable((lo, hi) in range()) {
        let q = params_from_range(lo, hi).unwrap();
        prop_assert_eq!(q.dequantize(q.quantize(0.0, 0) as i32, 0), 0.0);
    }

    #[test]
    fn in_range_values_round_trip_within_half_a_step((lo, hi) in range(), t in 0.0..1.0f64) {
        let q = params_from_range(lo, hi).unwrap();
        let x = lo + t * (hi - lo);
        let back = q.dequantize(q.quantize(x, 0) as i32, 0);
        prop_assert!((back - x).abs() <= q.scale(0) / 2.0 + 1e-9 * q.scale(0).max(1.0),
            "x {} back {} scale {}", x, back, q.scale(0));
    }

    #[test]
    fn quantization_is_monotonic((lo, hi) in range(), a in -200.0..200.0f64, b in -200.0..200.0f64) {
        let q = params_from_range(lo, hi).unwrap();
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(q.quantize(x, 0) <= q.quantize(y, 0));
    }

    #[test]
    fn calibration_range_covers_observations(v in proptest::collection::vec(-20.0..20.0f32, 1..64)) {
        let t = Tensor::from_f32(Shape::hwc(1, 1, v.len()), v.clone()).unwrap();
        let mut stats = CalibrationStats::new();
        stats.observe(&t).unwrap();
        let q = stats.params().unwrap();
        let codes = quantize_tensor(&t, &q).unwrap();
        let back = codes.to_real();
        for (x, y) in v.iter().zip(back.as_f32().unwrap()) {
            prop_assert!(((x - y).abs() as f64) <= q.scale(0) / 2.0 + 1e-5);
        }
    }

    #[test]
    fn relu6_commutes_with_quantization(v in proptest::collection::vec(-10.0..10.0f32, 1..64)) {
        let t = Tensor::from_f32(Shape::hwc(1, 1, v.len()), v).unwrap();
        let q = params_from_range(-10.0, 10.0).unwrap();
        let a = relu6_q(&quantize_tensor(&t, &q).unwrap()).unwrap();
        let b = quantize_tensor(&relu6(&t).unwrap(), &q).unwrap();
        prop_assert_eq!(a.as_i8().unwrap(), b.as_i8().unwrap());
    }

    #[test]
    fn hardsigmoid_lut_tracks_real_function(v in proptest::collection::vec(-8.0..8.0f32, 1..64)) {
        let q = params_from_range(-8.0, 8.0).unwrap();
        let t = quantize_tensor(&Tensor::from_f32(Shape::hwc(1, 1, v.len()), v).unwrap(), &q).unwrap();
        let got = hardsigmoid_q(&t).unwrap().to_real();
        let want = hardsigmoid(&t.to_real()).unwrap();
        let out = hardsigmoid_output_params();
        let step = out.scale(0);
        // 1.0 itself is one step above the largest code
        let top = out.dequantize(127, 0);
        for (g, w) in got.as_f32().unwrap().iter().zip(want.as_f32().unwrap()) {
            let w = (*w as f64).min(top);
            prop_assert!((*g as f64 - w).abs() <= step / 2.0 + 1e-6);
        }
    }

    #[test]
    fn topk_is_nested_and_sorted(p in proptest::collection::vec(0.0..1.0f64, 30)) {
        let t1 = topk(&p, 1);
        let t3 = topk(&p, 3);
        prop_assert!(t3.contains(&t1[0]));
        prop_assert_eq!(t3[0], t1[0]);
        for w in t3.windows(2) {
            prop_assert!(p[w[0]] > p[w[1]] || (p[w[0]] == p[w[1]] && w[0] < w[1]));
        }
        let best = p.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert_eq!(p[t1[0]], best);
    }

    #[test]
    fn score_ratio_is_independent_of_c(
        a1 in 50.0..100.0f64, a3 in 50.0..100.0f64, ar in 0.5..100.0f64,
        b1 in 50.0..100.0f64, b3 in 50.0..100.0f64, br in 0.5..100.0f64,
        c in 150.0..220.0f64,
    ) {
        let cfg = ScoringConfig { log2c: c };
        let sa = final_score(a1, a3, ar, &cfg).unwrap();
        let sb = final_score(b1, b3, br, &cfg).unwrap();
        let log_ratio = (a1 + a3) - (b1 + b3) + (br / ar).log2();
        prop_assert!((sa.log2() - sb.log2() - log_ratio).abs() < 1e-9);
    }

    #[test]
    fn score_is_monotone(t1 in 50.0..99.0f64, t3 in 50.0..99.0f64, rt in 0.5..100.0f64, d in 0.01..1.0f64) {
        let cfg = ScoringConfig::default();
        let s = final_score(t1, t3, rt, &cfg).unwrap();
        prop_assert!(final_score(t1 + d, t3, rt, &cfg).unwrap() > s);
        prop_assert!(final_score(t1, t3 + d, rt, &cfg).unwrap() > s);
        prop_assert!(final_score(t1, t3, rt + d, &cfg).unwrap() < s);
        prop_assert!((final_score(t1, t3, 2.0 * rt, &cfg).unwrap() - s / 2.0).abs() <= s * 1e-12);
    }

    #[test]
    fn p6_round_trips(h in 1..8usize, w in 1..8usize, seed in any::<u64>()) {
        let px: Vec<f32> = (0..h * w * 3).map(|i| ((seed >> (i % 56)) as u8 ^ i as u8) as f32).collect();
        let t = Tensor::from_f32(Shape::hwc(h, w, 3), px).unwrap();
        let bytes = encode_p6(&t).unwrap();
        prop_assert_eq!(decode_p6(&bytes).unwrap(), t);
    }
}

#[test]
fn degenerate_and_invalid_ranges() {
    assert_eq!(
        params_from_range(2.0, 2.0).unwrap(),
        QuantParams::per_tensor(1.0, 0).unwrap()
    );
    assert!(params_from_range(1.0, 0.0).is_err());
    assert!(params_from_range(f64::NAN, 1.0).is_err());
    assert!(CalibrationStats::new().params().is_err());
}

#[test]
fn score_matches_definition() {
    for &(_, t1, t3, rt, _) in &oracles::LEADERBOARD {
        let s = final_score(t1, t3, rt, &ScoringConfig::default()).unwrap();
        let want = oracles::score(t1, t3, rt, 185.0);
        assert!((s - want).abs() <= want * 1e-12);
    }
}
