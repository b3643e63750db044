//! Wall-clock latency measurement of single-image inference.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ModelGraph;
use crate::tensor::Tensor;

pub const DEFAULT_WARMUP: usize = 5;
pub const DEFAULT_RUNS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub warmup_runs: usize,
    pub timed_runs: usize,
    pub latencies_ms: Vec<f64>,
    pub median_ms: f64,
    pub mean_ms: f64,
    /// Population standard deviation.
    pub std_ms: f64,
    pub min_ms: f64,
    /// `1000 / median_ms`.
    pub fps: f64,
    pub includes_preprocessing: bool,
    /// Class probabilities of the last timed run.
    pub probabilities: Vec<f64>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

impl BenchReport {
    /// Aggregates raw per-run latencies.
    pub fn from_latencies(
        warmup_runs: usize,
        latencies_ms: Vec<f64>,
        includes_preprocessing: bool,
    ) -> Result<Self> {
        if latencies_ms.is_empty() {
            return Err(Error::InvalidArgument("no timed runs".into()));
        }
        if latencies_ms.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidArgument(
                "latencies must be finite and non-negative".into(),
            ));
        }
        let mut sorted = latencies_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = latencies_ms.iter().sum::<f64>() / n;
        let var = latencies_ms.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        let med = median(&sorted);
        Ok(BenchReport {
            warmup_runs,
            timed_runs: latencies_ms.len(),
            median_ms: med,
            mean_ms: mean,
            std_ms: var.sqrt(),
            min_ms: sorted[0],
            // sub-nanosecond medians cannot be resolved; keep fps finite
            fps: 1000.0 / med.max(1e-6),
            includes_preprocessing,
            latencies_ms,
            probabilities: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        format!(
            "runs {} (warmup {}), median {:.3} ms, mean {:.3} ms, std {:.3} ms, min {:.3} ms, {:.1} fps{}",
            self.timed_runs,
            self.warmup_runs,
            self.median_ms,
            self.mean_ms,
            self.std_ms,
            self.min_ms,
            self.fps,
            if self.includes_preprocessing { " (with preprocessing)" } else { "" }
        )
    }
}

/// Times `runs` inferences on a camera frame after `warmup` discarded ones.
/// Without `include_preprocessing`, resizing and normalization happen once
/// up front and each timed interval covers only the network.
pub fn benchmark(
    model: &ModelGraph,
    image: &Tensor,
    warmup: usize,
    runs: usize,
    include_preprocessing: bool,
) -> Result<BenchReport> {
    if runs < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 timed runs, got {runs}"
        )));
    }
    let normalized = model.preprocess(image)?;
    let run = || -> Result<Vec<f64>> {
        if include_preprocessing {
            model.infer(image)
        } else {
            model.probabilities(&normalized)
        }
    };
    for _ in 0..warmup {
        run()?;
    }
    let mut latencies = Vec::with_capacity(runs);
    let mut probabilities = Vec::new();
    for _ in 0..runs {
        let t0 = Instant::now();
        probabilities = run()?;
        latencies.push(t0.elapsed().as_secs_f64() * 1000.0);
    }
    let mut report = BenchReport::from_latencies(warmup, latencies, include_preprocessing)?;
    report.probabilities = probabilities;
    Ok(report)
}
