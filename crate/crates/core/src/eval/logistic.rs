//! L2-regularized logistic regression fit by Newton iterations, evaluated
//! with out-of-fold predictions under seeded stratified cross-validation.
//! Standardization is fit on training folds only so no information leaks
//! into the held-out fold.

use crate::error::{Error, Result};
use crate::flags::{Flag, FlagSet};
use crate::scoring::FEATURE_COUNT;

use super::{confusion_metrics, pr_auc, roc_auc, stratified_folds, LabeledSet, MetricReport};

const DIM: usize = FEATURE_COUNT + 1; // weights + intercept
const L2_LAMBDA: f64 = 1.0;
const GRAD_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct CvOutcome {
    /// Out-of-fold probability per row, aligned with the input set.
    pub oof_probabilities: Vec<f64>,
    /// Thresholded (0.5) metrics plus AUCs over the out-of-fold scores.
    pub report: MetricReport,
    pub converged: bool,
    pub flags: FlagSet,
}

/// Per-feature standardization parameters fit on one training split.
struct Standardizer {
    mean: [f64; FEATURE_COUNT],
    std: [f64; FEATURE_COUNT],
}

impl Standardizer {
    fn fit(rows: &[[f64; FEATURE_COUNT]]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        for row in rows {
            for i in 0..FEATURE_COUNT {
                mean[i] += row[i];
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = [0.0; FEATURE_COUNT];
        for row in rows {
            for i in 0..FEATURE_COUNT {
                let d = row[i] - mean[i];
                var[i] += d * d;
            }
        }
        let std = std::array::from_fn(|i| {
            let s = (var[i] / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        });
        Self { mean, std }
    }

    fn transform(&self, row: &[f64; FEATURE_COUNT]) -> [f64; DIM] {
        let mut out = [0.0; DIM];
        for i in 0..FEATURE_COUNT {
            out[i] = (row[i] - self.mean[i]) / self.std[i];
        }
        out[FEATURE_COUNT] = 1.0; // intercept
        out
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Newton/IRLS fit; returns (weights, converged).
fn fit(rows: &[[f64; DIM]], labels: &[u8]) -> ([f64; DIM], bool) {
    let mut w = [0.0f64; DIM];
    for _ in 0..MAX_ITERS {
        // gradient of the penalized negative log-likelihood
        let mut grad = [0.0f64; DIM];
        let mut hessian = [[0.0f64; DIM]; DIM];
        for (row, &label) in rows.iter().zip(labels) {
            let z: f64 = (0..DIM).map(|i| w[i] * row[i]).sum();
            let p = sigmoid(z);
            let err = p - label as f64;
            let weight = (p * (1.0 - p)).max(1e-10);
            for i in 0..DIM {
                grad[i] += err * row[i];
                for j in i..DIM {
                    hessian[i][j] += weight * row[i] * row[j];
                }
            }
        }
        // L2 penalty on everything but the intercept
        for i in 0..FEATURE_COUNT {
            grad[i] += L2_LAMBDA * w[i];
            hessian[i][i] += L2_LAMBDA;
        }
        for i in 0..DIM {
            for j in 0..i {
                hessian[i][j] = hessian[j][i];
            }
        }
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < GRAD_TOL {
            return (w, true);
        }
        let Some(step) = solve(hessian, grad) else {
            return (w, false);
        };
        for i in 0..DIM {
            w[i] -= step[i];
        }
    }
    // final gradient check after the cap
    let mut grad = [0.0f64; DIM];
    for (row, &label) in rows.iter().zip(labels) {
        let z: f64 = (0..DIM).map(|i| w[i] * row[i]).sum();
        let err = sigmoid(z) - label as f64;
        for i in 0..DIM {
            grad[i] += err * row[i];
        }
    }
    for i in 0..FEATURE_COUNT {
        grad[i] += L2_LAMBDA * w[i];
    }
    let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    (w, norm < GRAD_TOL)
}

/// Gaussian elimination with partial pivoting for the DIM x DIM system.
fn solve(mut a: [[f64; DIM]; DIM], mut b: [f64; DIM]) -> Option<[f64; DIM]> {
    for col in 0..DIM {
        let pivot = (col..DIM).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..DIM {
            let factor = a[row][col] / a[col][col];
            for k in col..DIM {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0f64; DIM];
    for col in (0..DIM).rev() {
        let mut acc = b[col];
        for k in col + 1..DIM {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// Seeded, stratified k-fold cross-validation. Deterministic end to end for
/// a fixed seed: fold assignment, fits, and metrics all replay identically.
pub fn logistic_cv(set: &LabeledSet, folds: usize, seed: u64) -> Result<CvOutcome> {
    if folds < 2 {
        return Err(Error::Invalid("folds must be at least 2".into()));
    }
    if set.len() < folds {
        return Err(Error::Invalid(format!(
            "need at least {} rows for {} folds",
            folds, folds
        )));
    }
    let positives = set.positives();
    if positives == 0 || positives == set.len() {
        return Err(Error::SingleClass);
    }

    let assignment = stratified_folds(&set.labels, folds, seed);
    let mut oof = vec![0.0f64; set.len()];
    let mut all_converged = true;

    for fold in 0..folds {
        let train_idx: Vec<usize> = (0..set.len()).filter(|&i| assignment[i] != fold).collect();
        let test_idx: Vec<usize> = (0..set.len()).filter(|&i| assignment[i] == fold).collect();
        if test_idx.is_empty() {
            continue;
        }
        let train_rows: Vec<[f64; FEATURE_COUNT]> =
            train_idx.iter().map(|&i| set.matrix[i]).collect();
        let standardizer = Standardizer::fit(&train_rows);
        let design: Vec<[f64; DIM]> = train_rows
            .iter()
            .map(|row| standardizer.transform(row))
            .collect();
        let train_labels: Vec<u8> = train_idx.iter().map(|&i| set.labels[i]).collect();
        let (weights, converged) = fit(&design, &train_labels);
        all_converged &= converged;
        for &i in &test_idx {
            let x = standardizer.transform(&set.matrix[i]);
            let z: f64 = (0..DIM).map(|d| weights[d] * x[d]).sum();
            oof[i] = sigmoid(z);
        }
    }

    let predictions: Vec<u8> = oof.iter().map(|&p| (p >= 0.5) as u8).collect();
    let mut report = confusion_metrics(&set.labels, &predictions)?;
    report.roc_auc = Some(roc_auc(&set.labels, &oof)?);
    report.pr_auc = Some(pr_auc(&set.labels, &oof)?);

    let mut flags = FlagSet::new();
    if !all_converged {
        flags.insert(Flag::NoConvergence);
    }
    Ok(CvOutcome {
        oof_probabilities: oof,
        report,
        converged: all_converged,
        flags,
    })
}
