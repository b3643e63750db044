//! Challenge metrics: top-k accuracy, confusion matrices, the final-score
//! formula and leaderboard rendering.

use serde::Serialize;

use crate::dataset::Corpus;
use crate::error::{Error, Result};
use crate::graph::ModelGraph;

/// Indices of the `k` largest probabilities, largest first. Ties go to the
/// lower index. `k` is clamped to the vector length.
pub fn topk(probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub top1: f64,
    pub top3: f64,
    pub labels: Vec<String>,
    /// `None` for classes without images.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub final_score: Option<f64>,
}

impl EvalReport {
    pub fn top1_pct(&self) -> f64 {
        self.top1 * 100.0
    }

    pub fn top3_pct(&self) -> f64 {
        self.top3 * 100.0
    }

    /// Attaches a challenge score computed from an external runtime.
    pub fn with_runtime(mut self, runtime_ms: f64, cfg: &ScoringConfig) -> Result<Self> {
        self.final_score = Some(final_score(
            self.top1_pct(),
            self.top3_pct(),
            runtime_ms,
            cfg,
        )?);
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Builds a report from `(true label, class probabilities)` pairs.
pub fn report_from_predictions(
    labels: &[String],
    predictions: &[(usize, Vec<f64>)],
) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let classes = labels.len();
    let mut confusion = vec![vec![0u64; classes]; classes];
    let (mut hit1, mut hit3) = (0usize, 0usize);
    for (label, probs) in predictions {
        if *label >= classes || probs.len() != classes {
            return Err(Error::LabelMismatch(format!(
                "prediction over {} classes for label {label} of {classes}",
                probs.len()
            )));
        }
        let top = topk(probs, 3);
        confusion[*label][top[0]] += 1;
        hit1 += (top[0] == *label) as usize;
        hit3 += top.contains(label) as usize;
    }
    let n = predictions.len();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    Ok(EvalReport {
        n,
        top1: hit1 as f64 / n as f64,
        top3: hit3 as f64 / n as f64,
        labels: labels.to_vec(),
        per_class_accuracy,
        confusion,
        final_score: None,
    })
}

/// Classifies every corpus image. Images are processed in parallel when the
/// `parallel` feature is on; counting is order independent, so the report is
/// deterministic.
pub fn evaluate(model: &ModelGraph, corpus: &Corpus) -> Result<EvalReport> {
    if model.labels() != corpus.registry().names() {
        return Err(Error::LabelMismatch(
            "model label table differs from the corpus categories".into(),
        ));
    }
    let predictions = crate::map_range(corpus.len(), |i| {
        let img = corpus.load(i)?;
        Ok((img.label, model.infer(&img.pixels)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    report_from_predictions(model.labels(), &predictions)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScoringConfig {
    /// Base-2 logarithm of the normalization constant C.
    pub log2c: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig { log2c: 185.0 }
    }
}

/// `2^(top1 + top3) / (C * runtime_ms)` with accuracies in percent. The
/// exponent is reduced before exponentiation since `2^(top1 + top3)` alone
/// overflows an f64.
pub fn final_score(
    top1_pct: f64,
    top3_pct: f64,
    runtime_ms: f64,
    cfg: &ScoringConfig,
) -> Result<f64> {
    if !runtime_ms.is_finite() || runtime_ms <= 0.0 {
        return Err(Error::NonPositiveRuntime(runtime_ms));
    }
    if !top1_pct.is_finite() || !top3_pct.is_finite() || !cfg.log2c.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok((top1_pct + top3_pct - cfg.log2c - runtime_ms.log2()).exp2())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreRow {
    pub name: String,
    pub top1_pct: f64,
    pub top3_pct: f64,
    pub runtime_ms: f64,
    pub final_score: f64,
}

impl ScoreRow {
    pub fn new(
        name: impl Into<String>,
        top1_pct: f64,
        top3_pct: f64,
        runtime_ms: f64,
        cfg: &ScoringConfig,
    ) -> Result<Self> {
        Ok(ScoreRow {
            name: name.into(),
            top1_pct,
            top3_pct,
            runtime_ms,
            final_score: final_score(top1_pct, top3_pct, runtime_ms, cfg)?,
        })
    }
}

/// Fixed-width leaderboard, best score first; equal scores keep input order.
pub fn render_leaderboard(rows: &[ScoreRow]) -> String {
    let mut sorted: Vec<&ScoreRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.final_score.total_cmp(&a.final_score));
    let name_w = sorted
        .iter()
        .map(|r| r.name.chars().count())
        .max()
        .unwrap_or(0)
        .max(4);
    let mut out = format!(
        "{:<name_w$}  {:>8}  {:>8}  {:>11}  {:>11}\n",
        "Team", "Top-1, %", "Top-3, %", "Runtime, ms", "Final Score"
    );
    out.push_str(&"-".repeat(name_w + 48));
    out.push('\n');
    for r in sorted {
        out.push_str(&format!(
            "{:<name_w$}  {:>8.2}  {:>8.2}  {:>11.2}  {:>11.2}\n",
            r.name, r.top1_pct, r.top3_pct, r.runtime_ms, r.final_score
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_breaks_ties_by_index() {
        let mut p = vec![0.0; 30];
        p[7] = 1.0;
        assert_eq!(topk(&p, 3), vec![7, 0, 1]);
        assert_eq!(topk(&[0.1, 0.5, 0.4], 2), vec![1, 2]);
    }

    #[test]
    fn runtime_must_be_positive() {
        let cfg = ScoringConfig::default();
        assert!(matches!(
            final_score(90.0, 95.0, 0.0, &cfg),
            Err(Error::NonPositiveRuntime(_))
        ));
        assert!(matches!(
            final_score(90.0, 95.0, -1.0, &cfg),
            Err(Error::NonPositiveRuntime(_))
        ));
    }

    #[test]
    fn report_counts() {
        let labels: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let preds = vec![
            (0, vec![0.8, 0.1, 0.1]),
            (1, vec![0.5, 0.3, 0.2]),
            (2, vec![0.1, 0.2, 0.7]),
        ];
        let r = report_from_predictions(&labels, &preds).unwrap();
        assert_eq!(r.n, 3);
        assert!((r.top1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.top3, 1.0);
        assert_eq!(r.confusion[1], vec![1, 0, 0]);
        assert!(report_from_predictions(&labels, &[]).is_err());
    }
}
