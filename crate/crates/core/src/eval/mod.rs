//! Classification-quality harness: confusion metrics, rank-based AUCs,
//! cross-validated logistic regression over the seven features, drop-column
//! feature importance and top-K ranking stability under ablation.

mod logistic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scoring::{score_contract, CorpusStats, ScoredContract, StatsSnapshot, FEATURE_COUNT};

pub use logistic::{logistic_cv, CvOutcome};

/// Feature matrix with binary labels (positive = obfuscated).
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub matrix: Vec<[f64; FEATURE_COUNT]>,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Parse the `id,f1,...,f7,label` CSV (header required).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Invalid("empty labeled csv".into()))?;
        let expected = "id,f1,f2,f3,f4,f5,f6,f7,label";
        if header.trim() != expected {
            return Err(Error::Invalid(format!(
                "labeled csv header must be {expected:?}, got {header:?}"
            )));
        }
        let mut set = LabeledSet {
            ids: Vec::new(),
            matrix: Vec::new(),
            labels: Vec::new(),
        };
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(Error::Invalid(format!(
                    "line {}: expected 9 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let mut row = [0.0f64; FEATURE_COUNT];
            for (i, value) in fields[1..8].iter().enumerate() {
                row[i] = value.trim().parse().map_err(|_| {
                    Error::Invalid(format!("line {}: bad number {value:?}", lineno + 2))
                })?;
            }
            let label: u8 = fields[8].trim().parse().map_err(|_| {
                Error::Invalid(format!("line {}: bad label {:?}", lineno + 2, fields[8]))
            })?;
            if label > 1 {
                return Err(Error::Invalid(format!(
                    "line {}: labels must be 0 or 1",
                    lineno + 2
                )));
            }
            set.ids.push(fields[0].trim().to_string());
            set.matrix.push(row);
            set.labels.push(label);
        }
        Ok(set)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,f1,f2,f3,f4,f5,f6,f7,label\n");
        for i in 0..self.len() {
            let row = self.matrix[i];
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.ids[i],
                row[0],
                row[1],
                row[2],
                row[3],
                row[4],
                row[5],
                row[6],
                self.labels[i]
            ));
        }
        out
    }
}

/// Threshold metrics plus the confusion counts behind them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pr_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_denominator: bool,
}

/// Standard precision/recall/F1 from aligned label/prediction vectors.
/// Zero-denominator cases report 0 with the flag set rather than erroring.
pub fn confusion_metrics(labels: &[u8], predictions: &[u8]) -> Result<MetricReport> {
    if labels.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            predictions: predictions.len(),
        });
    }
    let mut report = MetricReport::default();
    for (&label, &pred) in labels.iter().zip(predictions) {
        match (label, pred) {
            (1, 1) => report.tp += 1,
            (0, 1) => report.fp += 1,
            (1, 0) => report.fn_ += 1,
            _ => report.tn += 1,
        }
    }
    report.precision = ratio(report.tp, report.tp + report.fp, &mut report.zero_denominator);
    report.recall = ratio(report.tp, report.tp + report.fn_, &mut report.zero_denominator);
    report.f1 = if report.precision + report.recall > 0.0 {
        2.0 * report.precision * report.recall / (report.precision + report.recall)
    } else {
        report.zero_denominator = true;
        0.0
    };
    Ok(report)
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Build a report from raw confusion counts (for published-table arithmetic).
pub fn metrics_from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> MetricReport {
    let mut report = MetricReport {
        tp,
        fp,
        fn_,
        tn,
        ..Default::default()
    };
    report.precision = ratio(tp, tp + fp, &mut report.zero_denominator);
    report.recall = ratio(tp, tp + fn_, &mut report.zero_denominator);
    report.f1 = if report.precision + report.recall > 0.0 {
        2.0 * report.precision * report.recall / (report.precision + report.recall)
    } else {
        report.zero_denominator = true;
        0.0
    };
    report
}

/// ROC-AUC by the Mann-Whitney rank formula with midranks for ties.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            predictions: scores.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // midranks over tie groups
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let n_pos = positives as f64;
    let n_neg = negatives as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

/// PR-AUC as average precision: step-interpolated integration of the
/// precision-recall curve over descending score thresholds.
pub fn pr_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            predictions: scores.len(),
        });
    }
    let total_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let total_neg = labels.len() as f64 - total_pos;
    if total_pos == 0.0 || total_neg == 0.0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut auc = 0.0f64;
    let mut tp = 0.0f64;
    let mut fp = 0.0f64;
    let mut prev_recall = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        // advance through a whole tie group before emitting a curve point
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        let recall = tp / total_pos;
        let precision = tp / (tp + fp);
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(auc)
}

/// Drop-column importance row.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DropColumnRow {
    /// 0-based feature index (0 = F1).
    pub feature: usize,
    pub delta_pr_auc: f64,
    pub delta_f1: f64,
}

/// Retrain without one feature at a time over the same folds; report the
/// metric drop, ranked by ΔPR-AUC descending.
pub fn drop_column(set: &LabeledSet, folds: usize, seed: u64) -> Result<Vec<DropColumnRow>> {
    let full = logistic_cv(set, folds, seed)?;
    let full_pr = full.report.pr_auc.unwrap_or(0.0);
    let full_f1 = full.report.f1;
    let mut rows = Vec::with_capacity(FEATURE_COUNT);
    for drop in 0..FEATURE_COUNT {
        let reduced = LabeledSet {
            ids: set.ids.clone(),
            matrix: set
                .matrix
                .iter()
                .map(|row| {
                    let mut out = *row;
                    out[drop] = 0.0; // constant column carries no information
                    out
                })
                .collect(),
            labels: set.labels.clone(),
        };
        let outcome = logistic_cv(&reduced, folds, seed)?;
        rows.push(DropColumnRow {
            feature: drop,
            delta_pr_auc: full_pr - outcome.report.pr_auc.unwrap_or(0.0),
            delta_f1: full_f1 - outcome.report.f1,
        });
    }
    rows.sort_by(|a, b| b.delta_pr_auc.partial_cmp(&a.delta_pr_auc).unwrap());
    Ok(rows)
}

/// |topK(full) ∩ topK(ablated)| / k.
pub fn ranking_overlap(
    full: &[ScoredContract],
    ablated: &[ScoredContract],
    k: usize,
) -> Result<f64> {
    if k > full.len() || k > ablated.len() {
        return Err(Error::KTooLarge {
            k,
            n: full.len().min(ablated.len()),
        });
    }
    if k == 0 {
        return Ok(1.0);
    }
    let top = |scored: &[ScoredContract]| -> std::collections::HashSet<String> {
        crate::scoring::top_k(scored, k)
            .into_iter()
            .map(|s| s.id.clone())
            .collect()
    };
    let a = top(full);
    let b = top(ablated);
    Ok(a.intersection(&b).count() as f64 / k as f64)
}

/// Re-score a corpus with feature `drop` removed: mu/sigma re-estimated over
/// the remaining six features so the overlap measures ranking information,
/// not scale artifacts.
pub fn ablated_scores(
    ids: &[String],
    matrix: &[[f64; FEATURE_COUNT]],
    drop: usize,
) -> Result<Vec<ScoredContract>> {
    let mut stats = CorpusStats::default();
    for row in matrix {
        let mut masked = *row;
        masked[drop] = 0.0;
        stats.push_row(masked);
    }
    if stats.n() < 2 {
        return Err(Error::InsufficientCorpus(stats.n() as usize));
    }
    let mut snapshot = StatsSnapshot::from_stats(format!("ablate-f{}", drop + 1), &stats);
    // a zeroed column has sigma 0; keep its term inert rather than clamped
    snapshot.sigma[drop] = 0.0;
    snapshot.mu[drop] = 0.0;
    Ok(ids
        .iter()
        .zip(matrix)
        .map(|(id, row)| {
            let mut masked = *row;
            masked[drop] = 0.0;
            score_contract(id.clone(), masked, &snapshot)
        })
        .collect())
}

/// Stratified fold assignment: class ratios stay stable per fold and the
/// shuffle is fully determined by the seed.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut assignment = vec![0usize; labels.len()];
    let mut rng = SplitMix64::new(seed);
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut members);
        for (slot, idx) in members.into_iter().enumerate() {
            assignment[idx] = slot % folds;
        }
    }
    assignment
}
