use maiq_core::bench::{benchmark, BenchReport};
use maiq_core::dataset::{
    class_signature, decode_image_bytes, generate_synthetic, scan_corpus, synthetic_image,
    CategoryRegistry, SyntheticSpec, CAMERA_FRAME, CATEGORY_COUNT,
};
use maiq_core::graph::{
    build_preset, install_color_probe, probe_signature_space, quantize_model, PresetId,
};
use maiq_core::scoreboard::{evaluate, ScoringConfig};
use maiq_core::{Error, Mode, ModelGraph, Tensor};

fn probe_models() -> (ModelGraph, ModelGraph) {
    let mut g = build_preset(PresetId::Tiny, 0).unwrap();
    install_color_probe(&mut g, &probe_signature_space()).unwrap();
    let spec = SyntheticSpec::new(1, 8, 99);
    let calib =
        (0..CATEGORY_COUNT).map(|k| decode_image_bytes(&synthetic_image(&spec, k, 0)).unwrap());
    let q = quantize_model(&g, calib).unwrap();
    (g, q)
}

#[test]
fn synthetic_corpus_is_deterministic_and_ordered() {
    let spec = SyntheticSpec::new(2, 8, 5);
    let reg = CategoryRegistry::camsdd();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = generate_synthetic(&spec, a.path(), &reg).unwrap();
    let pb = generate_synthetic(&spec, b.path(), &reg).unwrap();
    assert_eq!(pa.len(), 60);
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let corpus = scan_corpus(a.path(), &reg).unwrap();
    assert_eq!(corpus.len(), 60);
    assert_eq!(corpus.class_counts(), vec![2; 30]);
    let folders: Vec<_> = corpus
        .entries()
        .iter()
        .map(|(p, _)| p.parent().unwrap().to_path_buf())
        .collect();
    let mut sorted = folders.clone();
    sorted.sort();
    assert_eq!(folders, sorted);
    let img = corpus.load(0).unwrap();
    assert_eq!(img.pixels.shape(), CAMERA_FRAME);

    std::fs::create_dir(a.path().join("Not A Scene")).unwrap();
    assert!(matches!(
        scan_corpus(a.path(), &reg),
        Err(Error::UnknownCategoryFolder(_))
    ));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        scan_corpus(empty.path(), &reg),
        Err(Error::EmptyCorpus)
    ));
}

#[test]
fn synthetic_pixels_stay_near_their_signature() {
    let spec = SyntheticSpec::new(1, 8, 1);
    for k in [0, 13, 29] {
        let t = decode_image_bytes(&synthetic_image(&spec, k, 0)).unwrap();
        let sig = class_signature(k);
        for px in t.as_f32().unwrap().chunks(3).step_by(997) {
            for (v, s) in px.iter().zip(sig) {
                assert!((v - s as f32).abs() <= 8.0);
            }
        }
    }
}

#[test]
fn color_probe_is_perfect_in_both_modes() {
    let (real, quant) = probe_models();
    assert_eq!(quant.mode(), Mode::Quantized);
    let dir = tempfile::tempdir().unwrap();
    let reg = CategoryRegistry::camsdd();
    generate_synthetic(&SyntheticSpec::new(3, 8, 0), dir.path(), &reg).unwrap();
    let corpus = scan_corpus(dir.path(), &reg).unwrap();
    for model in [&real, &quant] {
        let r = evaluate(model, &corpus).unwrap();
        assert_eq!((r.n, r.top1, r.top3), (90, 1.0, 1.0), "{:?}", model.mode());
        let r = r.with_runtime(5.0, &ScoringConfig::default()).unwrap();
        assert!((r.final_score.unwrap() - 6553.6).abs() < 1e-9);
    }
}

#[test]
fn per_layer_error_is_within_two_steps() {
    let (real, quant) = probe_models();
    let spec = SyntheticSpec::new(1, 8, 99);
    let inputs: Vec<Tensor> = (0..CATEGORY_COUNT)
        .map(|k| {
            real.preprocess(&decode_image_bytes(&synthetic_image(&spec, k, 0)).unwrap())
                .unwrap()
        })
        .collect();
    for e in ModelGraph::layer_errors(&real, &quant, &inputs).unwrap() {
        assert!(e.max_abs <= 2.0, "layer {}: {:?}", e.layer, e);
    }
}

#[test]
fn label_mismatch_is_rejected() {
    let (real, _) = probe_models();
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = (0..30).map(|i| format!("scene {i}")).collect();
    let reg = CategoryRegistry::from_names(names).unwrap();
    generate_synthetic(&SyntheticSpec::new(1, 0, 0), dir.path(), &reg).unwrap();
    let corpus = scan_corpus(dir.path(), &reg).unwrap();
    assert!(matches!(
        evaluate(&real, &corpus),
        Err(Error::LabelMismatch(_))
    ));
}

#[test]
fn stages_are_deterministic() {
    let (r1, q1) = probe_models();
    let (r2, q2) = probe_models();
    assert_eq!(r1.to_bytes(), r2.to_bytes());
    assert_eq!(q1.to_bytes(), q2.to_bytes());
    let a = build_preset(PresetId::Evai, 3).unwrap();
    assert_eq!(
        a.to_bytes(),
        build_preset(PresetId::Evai, 3).unwrap().to_bytes()
    );
    assert_ne!(
        a.to_bytes(),
        build_preset(PresetId::Evai, 4).unwrap().to_bytes()
    );

    let dir = tempfile::tempdir().unwrap();
    let reg = CategoryRegistry::camsdd();
    generate_synthetic(&SyntheticSpec::new(1, 8, 0), dir.path(), &reg).unwrap();
    let corpus = scan_corpus(dir.path(), &reg).unwrap();
    assert_eq!(
        evaluate(&q1, &corpus).unwrap().to_json(),
        evaluate(&q2, &corpus).unwrap().to_json()
    );

    let frame = corpus.load(4).unwrap().pixels;
    let b1 = benchmark(&q1, &frame, 1, 3, false).unwrap();
    let b2 = benchmark(&q1, &frame, 1, 3, true).unwrap();
    assert_eq!(b1.probabilities, b2.probabilities);
    assert_eq!(b1.probabilities, q1.infer(&frame).unwrap());
}

#[test]
fn bench_statistics() {
    let r = BenchReport::from_latencies(2, vec![4.0, 1.0, 3.0, 2.0], false).unwrap();
    assert_eq!((r.median_ms, r.mean_ms, r.min_ms), (2.5, 2.5, 1.0));
    assert!((r.std_ms - 1.25f64.sqrt()).abs() < 1e-12);
    assert_eq!(r.fps, 400.0);
    let (_, q) = probe_models();
    let frame = decode_image_bytes(&synthetic_image(&SyntheticSpec::new(1, 0, 0), 0, 0)).unwrap();
    assert!(matches!(
        benchmark(&q, &frame, 0, 2, false),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn constant_model_gives_uniform_probabilities() {
    let mut g = build_preset(PresetId::Tiny, 0).unwrap();
    install_color_probe(&mut g, &[[0, 0, 0]; 30]).unwrap();
    let frame = decode_image_bytes(&synthetic_image(&SyntheticSpec::new(1, 8, 0), 7, 0)).unwrap();
    for p in g.infer(&frame).unwrap() {
        assert!((p - 1.0 / 30.0).abs() < 1e-9);
    }
}

/// Feeds each layer the same input in both arithmetics, so error measured
/// at a layer is that layer's own and not inherited from upstream drift.
#[test]
fn isolated_layer_error_of_random_weights_is_small() {
    let spec = SyntheticSpec::new(1, 8, 2);
    let frames: Vec<Tensor> = (0..4)
        .map(|k| decode_image_bytes(&synthetic_image(&spec, 7 * k, 0)).unwrap())
        .collect();
    let real = build_preset(PresetId::Tiny, 1).unwrap();
    let quant = quantize_model(&real, frames.clone()).unwrap();
    let body = quant.layers().len() - 1;
    for frame in &frames {
        let mut xq = quant
            .quantize_input(&quant.preprocess(frame).unwrap())
            .unwrap();
        for i in 0..body {
            let yq = quant.layer_forward(i, &xq).unwrap();
            let yr = real.layer_forward(i, &xq.to_real()).unwrap();
            let scale = yq.quant().unwrap().scale(0);
            let (a, b) = (yr.as_f32().unwrap(), yq.to_real());
            let mean = a
                .iter()
                .zip(b.as_f32().unwrap())
                .map(|(x, y)| (x - y).abs() as f64 / scale)
                .sum::<f64>()
                / a.len() as f64;
            assert!(mean <= 1.0, "layer {i}: mean error {mean:.3} steps");
            xq = yq;
        }
    }
}
