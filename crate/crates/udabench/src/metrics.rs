//! Evaluation metrics: overall accuracy, the open-set metric family
//! (ALL*, UNK, OS, ALL, H-score), TOPSIS ranking, and the
//! Best/Last x Mean/Max aggregation over seeds.

use crate::tasks::ScenarioKind;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A model decision for one test sample: a known class id or "unknown".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    Known(u32),
    Unknown,
}

/// Ground truth for one test sample; target-private classes collapse to
/// `Unknown` at evaluation time.
pub type Truth = Prediction;

/// Overall accuracy: exact count ratio.
pub fn overall_accuracy(predictions: &[Prediction], truths: &[Truth]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(Error::Data("accuracy needs equal-length nonempty inputs".into()));
    }
    let correct = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Counts underlying the open-set metric family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenSetCounts {
    /// Correctly classified shared-class samples.
    pub shared_correct: usize,
    /// All shared-class samples.
    pub shared_total: usize,
    /// Correctly detected unknown-class samples.
    pub unknown_correct: usize,
    /// All unknown-class samples.
    pub unknown_total: usize,
    /// Per-class `(correct, total)`, keyed by class id, with the unknown
    /// pseudo-class stored under `None`.
    pub per_class: BTreeMap<Option<u32>, (usize, usize)>,
}

impl OpenSetCounts {
    pub fn tally(predictions: &[Prediction], truths: &[Truth]) -> Self {
        let mut counts = OpenSetCounts::default();
        for (p, t) in predictions.iter().zip(truths) {
            let correct = p == t;
            match t {
                Prediction::Known(c) => {
                    counts.shared_total += 1;
                    counts.shared_correct += correct as usize;
                    let e = counts.per_class.entry(Some(*c)).or_insert((0, 0));
                    e.1 += 1;
                    e.0 += correct as usize;
                }
                Prediction::Unknown => {
                    counts.unknown_total += 1;
                    counts.unknown_correct += correct as usize;
                    let e = counts.per_class.entry(None).or_insert((0, 0));
                    e.1 += 1;
                    e.0 += correct as usize;
                }
            }
        }
        counts
    }
}

/// The five open-set metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenSetMetrics {
    /// Shared-class accuracy `M_S / N_S`.
    pub all_star: f64,
    /// Unknown-class accuracy `M_U / N_U`.
    pub unk: f64,
    /// Class-averaged accuracy over the classes present in the test set
    /// (including the unknown pseudo-class).
    pub os: f64,
    /// Plain accuracy `(M_S + M_U) / (N_S + N_U)`.
    pub all: f64,
    /// Harmonic mean of `all_star` and `unk`.
    pub h_score: f64,
}

impl OpenSetMetrics {
    pub const NAMES: [&'static str; 5] = ["ALL*", "UNK", "OS", "ALL", "H-score"];

    pub fn values(&self) -> [f64; 5] {
        [self.all_star, self.unk, self.os, self.all, self.h_score]
    }
}

/// Compute the open-set metric family from counts.
///
/// Classes absent from the test set contribute nothing to the OS average.
/// A task without unknown-class test samples is a task-construction bug.
pub fn openset_metrics(counts: &OpenSetCounts) -> Result<OpenSetMetrics> {
    if counts.shared_total == 0 {
        return Err(Error::Data("open-set metrics need at least one shared-class test sample".into()));
    }
    if counts.unknown_total == 0 {
        return Err(Error::Data(
            "open-set metrics need unknown-class test samples; the task construction is inconsistent".into(),
        ));
    }
    let all_star = counts.shared_correct as f64 / counts.shared_total as f64;
    let unk = counts.unknown_correct as f64 / counts.unknown_total as f64;
    let present: Vec<f64> = counts
        .per_class
        .values()
        .filter(|(_, total)| *total > 0)
        .map(|(correct, total)| *correct as f64 / *total as f64)
        .collect();
    let os = present.iter().sum::<f64>() / present.len() as f64;
    let all = (counts.shared_correct + counts.unknown_correct) as f64
        / (counts.shared_total + counts.unknown_total) as f64;
    let h_score = if all_star + unk > 0.0 { 2.0 * all_star * unk / (all_star + unk) } else { 0.0 };
    Ok(OpenSetMetrics { all_star, unk, os, all, h_score })
}

/// TOPSIS ranking over benefit-type criteria.
///
/// Columns are vector-normalized, weighted (weights renormalized to sum 1),
/// and scored by relative closeness `D- / (D+ + D-)` to the ideal
/// best/worst alternatives. Higher is better. A fully degenerate matrix
/// (all alternatives identical) scores 0.5 everywhere.
pub fn topsis(matrix: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::Data("topsis needs at least two alternatives".into()));
    }
    let k = matrix[0].len();
    if k == 0 || matrix.iter().any(|row| row.len() != k) || weights.len() != k {
        return Err(Error::Data("topsis matrix/weight dimensions are inconsistent".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Data("topsis weights must be nonnegative with positive sum".into()));
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / wsum).collect();

    // vector normalization, then weighting
    let mut v = vec![vec![0.0; k]; n];
    for j in 0..k {
        let norm = matrix.iter().map(|row| row[j] * row[j]).sum::<f64>().sqrt();
        for i in 0..n {
            let x = if norm > 0.0 { matrix[i][j] / norm } else { 0.0 };
            v[i][j] = weights[j] * x;
        }
    }
    let mut best = vec![f64::NEG_INFINITY; k];
    let mut worst = vec![f64::INFINITY; k];
    for row in &v {
        for j in 0..k {
            best[j] = best[j].max(row[j]);
            worst[j] = worst[j].min(row[j]);
        }
    }
    let scores = v
        .iter()
        .map(|row| {
            let dp: f64 = row.iter().zip(&best).map(|(x, b)| (x - b) * (x - b)).sum::<f64>().sqrt();
            let dm: f64 = row.iter().zip(&worst).map(|(x, w)| (x - w) * (x - w)).sum::<f64>().sqrt();
            if dp + dm == 0.0 {
                0.5
            } else {
                dm / (dp + dm)
            }
        })
        .collect();
    Ok(scores)
}

/// Per-epoch evaluation record for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub epoch: usize,
    pub scenario: ScenarioKind,
    /// Overall target-test accuracy (all scenarios).
    pub accuracy: f64,
    /// Open-set family; present for open-set/universal scenarios.
    pub open_set: Option<OpenSetMetrics>,
    /// Source-test accuracy, recorded for transfer-health analysis.
    pub source_accuracy: Option<f64>,
    /// Mean per-step classification loss over the epoch.
    pub cls_loss: f64,
    /// Mean per-step transfer loss over the epoch (0 before activation).
    pub transfer_loss: f64,
    /// Trade-off factor used this epoch.
    pub tradeoff: f64,
}

impl MetricReport {
    /// The model-selection metric: H-score for scenarios with unknowns,
    /// overall accuracy otherwise.
    pub fn selection_metric(&self) -> f64 {
        match &self.open_set {
            Some(os) => os.h_score,
            None => self.accuracy,
        }
    }

    /// The five open-set values, or accuracy replicated when absent.
    fn metric_values(&self) -> Vec<f64> {
        match &self.open_set {
            Some(os) => os.values().to_vec(),
            None => vec![self.accuracy],
        }
    }

    fn metric_names(&self) -> Vec<&'static str> {
        match &self.open_set {
            Some(_) => OpenSetMetrics::NAMES.to_vec(),
            None => vec!["accuracy"],
        }
    }
}

/// The Best/Last x Mean/Max aggregation grid.
///
/// Keys look like `"Last-Mean"` (closed/partial) or `"Last-Mean-UNK"`
/// (open/universal). `Best` uses each seed's best epoch by the selection
/// metric; `Max` picks the best seed by the selection metric and reports
/// that seed's co-metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cells: BTreeMap<String, f64>,
    pub seeds: usize,
}

/// Aggregate per-seed epoch traces.
pub fn aggregate(traces: &[Vec<MetricReport>]) -> Result<Aggregate> {
    if traces.is_empty() {
        return Err(Error::Data("aggregation needs at least one seed trace".into()));
    }
    let epochs = traces[0].len();
    if epochs == 0 || traces.iter().any(|t| t.len() != epochs) {
        return Err(Error::Data("seed traces must be nonempty and of equal length".into()));
    }
    let last: Vec<&MetricReport> = traces.iter().map(|t| t.last().unwrap()).collect();
    let best: Vec<&MetricReport> = traces
        .iter()
        .map(|t| {
            t.iter()
                .max_by(|a, b| a.selection_metric().partial_cmp(&b.selection_metric()).unwrap())
                .unwrap()
        })
        .collect();
    let names = last[0].metric_names();
    let mut cells = BTreeMap::new();
    for (stage, reports) in [("Best", &best), ("Last", &last)] {
        let max_seed = reports
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.selection_metric().partial_cmp(&b.selection_metric()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        for (mi, name) in names.iter().enumerate() {
            let mean = reports.iter().map(|r| r.metric_values()[mi]).sum::<f64>() / reports.len() as f64;
            let maxv = reports[max_seed].metric_values()[mi];
            let suffix = if names.len() == 1 { String::new() } else { format!("-{name}") };
            cells.insert(format!("{stage}-Mean{suffix}"), mean);
            cells.insert(format!("{stage}-Max{suffix}"), maxv);
        }
    }
    Ok(Aggregate { cells, seeds: traces.len() })
}
