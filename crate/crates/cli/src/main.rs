//! `maiq`: build, quantize, run and score scene detection models.
//!
//! Exit codes: 0 on success, 1 when the operation fails, 2 on bad usage.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maiq_core::bench::{benchmark, DEFAULT_RUNS, DEFAULT_WARMUP};
use maiq_core::dataset::{
    decode_image, decode_image_bytes, generate_synthetic, scan_corpus, synthetic_image,
    CategoryRegistry, SyntheticSpec,
};
use maiq_core::graph::{self, build_preset, install_color_probe, probe_signature_space, PresetId};
use maiq_core::scoreboard::{
    evaluate, final_score, render_leaderboard, topk, ScoreRow, ScoringConfig,
};
use maiq_core::{Error, ModelGraph, Result, Tensor};

#[derive(Parser)]
#[command(name = "maiq", version, about = "INT8 camera scene detection toolkit")]
struct Cli {
    /// Worker threads for parallel kernels and evaluation.
    #[arg(long, global = true, env = "MAIQ_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a preset architecture with seeded random weights.
    Build(BuildArgs),
    /// Calibrate a real model on a corpus and write its INT8 version.
    Quantize(QuantizeArgs),
    /// Print the top predictions for one image.
    Classify(ClassifyArgs),
    /// Measure top-1/top-3 accuracy on a corpus.
    Evaluate(EvaluateArgs),
    /// Time single-image inference.
    Bench(BenchArgs),
    /// Compute the challenge score from accuracy and runtime.
    Score(ScoreArgs),
    /// Write a synthetic corpus with one signature color per category.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    preset: PresetId,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Replace the random weights with the hand-built color-probe classifier.
    #[arg(long)]
    probe: bool,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus directory providing calibration images.
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Maximum calibration images, sampled evenly across the corpus.
    #[arg(long, default_value_t = 100)]
    limit: usize,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 3)]
    top: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Externally measured runtime; adds the final score to the report.
    #[arg(long)]
    runtime_ms: Option<f64>,
    /// Write the machine-readable report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Team name for the leaderboard row.
    #[arg(long, default_value = "model")]
    name: String,
    #[arg(long, default_value_t = 185.0)]
    log2c: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: usize,
    /// Frame to run on; defaults to a synthetic frame.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Time resizing and normalization as part of each run.
    #[arg(long)]
    with_preprocessing: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    top1: f64,
    #[arg(long)]
    top3: f64,
    #[arg(long)]
    runtime_ms: f64,
    #[arg(long, default_value_t = 185.0)]
    log2c: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-pixel uniform noise amplitude in pixel levels.
    #[arg(long, default_value_t = 8)]
    noise: u8,
}

fn build(a: BuildArgs) -> Result<()> {
    let mut g = build_preset(a.preset, a.seed)?;
    if a.probe {
        install_color_probe(&mut g, &probe_signature_space())?;
    }
    graph::save(&g, &a.out)?;
    println!(
        "built {} ({} parameters, {} bytes) -> {}",
        a.preset,
        g.param_count(),
        g.serialized_size(),
        a.out.display()
    );
    Ok(())
}

fn quantize(a: QuantizeArgs) -> Result<()> {
    let model = graph::load(&a.model)?;
    let corpus = scan_corpus(&a.calib, &CategoryRegistry::for_corpus(&a.calib)?)?;
    if a.limit == 0 {
        return Err(Error::EmptyCalibrationSet);
    }
    let n = corpus.len().min(a.limit);
    let picks: Vec<usize> = (0..n).map(|i| i * corpus.len() / n).collect();
    let images = picks
        .iter()
        .map(|&i| corpus.load(i).map(|img| img.pixels))
        .collect::<Result<Vec<Tensor>>>()?;
    let q = graph::quantize_model(&model, images.iter().cloned())?;

    // layer fidelity on a handful of the calibration frames
    let probe = images
        .iter()
        .take(4)
        .map(|img| model.preprocess(img))
        .collect::<Result<Vec<_>>>()?;
    let errors = ModelGraph::layer_errors(&model, &q, &probe)?;
    let worst = errors
        .iter()
        .max_by(|a, b| a.mean_abs.total_cmp(&b.mean_abs));
    graph::save(&q, &a.out)?;
    println!(
        "calibrated on {n} images; {} bytes -> {}",
        q.serialized_size(),
        a.out.display()
    );
    if let Some(w) = worst {
        println!(
            "worst layer error: layer {} mean {:.3} max {:.3} output-scale units",
            w.layer, w.mean_abs, w.max_abs
        );
    }
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let model = graph::load(&a.model)?;
    let probs = model.infer(&decode_image(&a.image)?)?;
    for (rank, k) in topk(&probs, a.top.max(1)).into_iter().enumerate() {
        println!("{}. {:<16} {:.4}", rank + 1, model.labels()[k], probs[k]);
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model = graph::load(&a.model)?;
    let corpus = scan_corpus(&a.data, &CategoryRegistry::for_corpus(&a.data)?)?;
    let cfg = ScoringConfig { log2c: a.log2c };
    let mut report = evaluate(&model, &corpus)?;
    if let Some(rt) = a.runtime_ms {
        report = report.with_runtime(rt, &cfg)?;
    }
    println!(
        "n={} top1={:.2} top3={:.2}",
        report.n,
        report.top1_pct(),
        report.top3_pct()
    );
    if let (Some(rt), Some(score)) = (a.runtime_ms, report.final_score) {
        println!("final_score={score:.2}");
        let row = ScoreRow {
            name: a.name,
            top1_pct: report.top1_pct(),
            top3_pct: report.top3_pct(),
            runtime_ms: rt,
            final_score: score,
        };
        print!("{}", render_leaderboard(&[row]));
    }
    if let Some(path) = a.json {
        fs::write(path, report.to_json())?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let model = graph::load(&a.model)?;
    let image = match &a.image {
        Some(p) => decode_image(p)?,
        None => decode_image_bytes(&synthetic_image(&SyntheticSpec::new(1, 8, 0), 0, 0))?,
    };
    let report = benchmark(&model, &image, a.warmup, a.runs, a.with_preprocessing)?;
    println!("{}", report.summary());
    if let Some(path) = a.json {
        fs::write(path, report.to_json())?;
    }
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let s = final_score(
        a.top1,
        a.top3,
        a.runtime_ms,
        &ScoringConfig { log2c: a.log2c },
    )?;
    println!("{s:.2}");
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec::new(a.per_class, a.noise, a.seed);
    let paths = generate_synthetic(&spec, &a.out, &CategoryRegistry::camsdd())?;
    println!("wrote {} images under {}", paths.len(), a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "thread count must be positive".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match cli.command {
        Command::Build(a) => build(a),
        Command::Quantize(a) => quantize(a),
        Command::Classify(a) => classify(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Score(a) => score(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
