//! Corpus statistics, the standardized-sum score, threshold derivation and
//! descriptive corpus analytics.
//!
//! A contract's score is the sum over the seven features of
//! (x_i - mu_i) / sigma_i against corpus-level statistics, so the score
//! measures joint extremeness on unitless scales and re-estimating the
//! statistics per snapshot keeps it comparable over time.

pub mod student_t;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::flags::{Flag, FlagSet};

pub const FEATURE_COUNT: usize = 7;

/// Clamp applied to a standardized term whose sigma is zero but whose value
/// differs from the mean. Keeps degenerate snapshot corpora scorable.
pub const DEGENERATE_SIGMA_CLAMP: f64 = 1e6;

/// Streaming per-feature mean/variance (Welford), mergeable across shards
/// (Chan's parallel update).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Welford) -> Welford {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 =
            self.m2 + other.m2 + delta * delta * self.n as f64 * other.n as f64 / n as f64;
        Welford { n, mean, m2 }
    }

    /// Sample standard deviation (n-1 denominator).
    pub fn std_dev(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

/// Per-feature corpus statistics. Vectors flagged no-transfer never enter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub features: [Welford; FEATURE_COUNT],
}

impl CorpusStats {
    pub fn push(&mut self, vector: &FeatureVector) {
        if !vector.has_transfers() {
            return;
        }
        self.push_row(vector.as_array());
    }

    pub fn push_row(&mut self, values: [f64; FEATURE_COUNT]) {
        for (w, x) in self.features.iter_mut().zip(values) {
            w.push(x);
        }
    }

    pub fn merge(&self, other: &CorpusStats) -> CorpusStats {
        let mut out = CorpusStats::default();
        for i in 0..FEATURE_COUNT {
            out.features[i] = self.features[i].merge(&other.features[i]);
        }
        out
    }

    pub fn n(&self) -> u64 {
        self.features[0].n
    }

    pub fn means(&self) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|i| self.features[i].mean)
    }

    pub fn std_devs(&self) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|i| self.features[i].std_dev())
    }
}

/// Build statistics over a corpus of vectors. Errors when fewer than two
/// transfer-bearing vectors are available (no deviation estimate otherwise).
pub fn corpus_stats(vectors: &[FeatureVector]) -> Result<CorpusStats> {
    let mut stats = CorpusStats::default();
    for v in vectors {
        stats.push(v);
    }
    let n = stats.n() as usize;
    if n < 2 {
        return Err(Error::InsufficientCorpus(n));
    }
    Ok(stats)
}

/// Row-matrix variant for synthetic corpora and labeled feature files.
pub fn corpus_stats_rows(rows: &[[f64; FEATURE_COUNT]]) -> Result<CorpusStats> {
    if rows.len() < 2 {
        return Err(Error::InsufficientCorpus(rows.len()));
    }
    let mut stats = CorpusStats::default();
    for &row in rows {
        stats.push_row(row);
    }
    Ok(stats)
}

/// Versioned snapshot so scores are reproducible against a pinned baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub format_version: u32,
    pub snapshot_id: String,
    pub n: u64,
    pub mu: [f64; FEATURE_COUNT],
    pub sigma: [f64; FEATURE_COUNT],
}

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

impl StatsSnapshot {
    pub fn from_stats(snapshot_id: impl Into<String>, stats: &CorpusStats) -> Self {
        Self {
            format_version: SNAPSHOT_FORMAT_VERSION,
            snapshot_id: snapshot_id.into(),
            n: stats.n(),
            mu: stats.means(),
            sigma: stats.std_devs(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snapshot: StatsSnapshot = serde_json::from_str(text)?;
        if snapshot.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported snapshot format version {}",
                snapshot.format_version
            )));
        }
        Ok(snapshot)
    }
}

/// One scored contract: the total is exactly the sum of the per-feature
/// standardized terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredContract {
    pub id: String,
    pub values: [f64; FEATURE_COUNT],
    pub z: f64,
    pub terms: [f64; FEATURE_COUNT],
    pub flags: FlagSet,
}

/// Standardized-sum score against pinned mu/sigma. Zero-sigma features
/// contribute 0 at the mean and a clamped ±1e6 otherwise (flagged).
pub fn z_score(values: &[f64; 7], mu: &[f64; 7], sigma: &[f64; 7]) -> (f64, [f64; 7], FlagSet) {
    let mut terms = [0.0f64; FEATURE_COUNT];
    let mut flags = FlagSet::new();
    for i in 0..FEATURE_COUNT {
        let delta = values[i] - mu[i];
        terms[i] = if sigma[i] > 0.0 {
            delta / sigma[i]
        } else if delta == 0.0 {
            0.0
        } else {
            flags.insert(Flag::DegenerateSigma);
            DEGENERATE_SIGMA_CLAMP.copysign(delta)
        };
    }
    (terms.iter().sum(), terms, flags)
}

pub fn score_contract(
    id: impl Into<String>,
    values: [f64; FEATURE_COUNT],
    snapshot: &StatsSnapshot,
) -> ScoredContract {
    let (z, terms, flags) = z_score(&values, &snapshot.mu, &snapshot.sigma);
    ScoredContract {
        id: id.into(),
        values,
        z,
        terms,
        flags,
    }
}

/// Upper confidence bound `mean + t_{(1+confidence)/2, n-1} * std / sqrt(n)`.
pub fn threshold(mean: f64, std: f64, n: u64, confidence: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&confidence) || confidence <= 0.0 {
        return Err(Error::InvalidConfidence(confidence));
    }
    if n < 2 {
        return Err(Error::InsufficientCorpus(n as usize));
    }
    let p = (1.0 + confidence) / 2.0;
    let t = student_t::t_quantile(p, (n - 1) as f64);
    Ok(mean + t * std / (n as f64).sqrt())
}

/// Strict-greater prevalence split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prevalence {
    pub above: u64,
    pub below: u64,
    pub pct_above: f64,
    pub empty: bool,
}

pub fn prevalence(scores: impl IntoIterator<Item = f64>, cutoff: f64) -> Prevalence {
    let mut above = 0u64;
    let mut below = 0u64;
    for s in scores {
        if s > cutoff {
            above += 1;
        } else {
            below += 1;
        }
    }
    let total = above + below;
    Prevalence {
        above,
        below,
        pct_above: if total == 0 {
            0.0
        } else {
            100.0 * above as f64 / total as f64
        },
        empty: total == 0,
    }
}

/// Nearest-rank quantiles (ceil(p*n)-th order statistic) plus nonzero rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureQuantiles {
    pub nonzero_rate: f64,
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
}

pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Per-feature nonzero rate, median, P90 and P99 over a feature matrix.
pub fn feature_quantiles(matrix: &[[f64; FEATURE_COUNT]]) -> [FeatureQuantiles; FEATURE_COUNT] {
    std::array::from_fn(|i| {
        let mut column: Vec<f64> = matrix.iter().map(|row| row[i]).collect();
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nonzero = column.iter().filter(|&&x| x > 0.0).count();
        FeatureQuantiles {
            nonzero_rate: if column.is_empty() {
                0.0
            } else {
                100.0 * nonzero as f64 / column.len() as f64
            },
            median: nearest_rank(&column, 0.5),
            p90: nearest_rank(&column, 0.9),
            p99: nearest_rank(&column, 0.99),
        }
    })
}

/// Mean absolute standardized contribution per feature, normalized to sum to
/// 100%.
pub fn contribution_shares(scored: &[ScoredContract]) -> [f64; FEATURE_COUNT] {
    let mut sums = [0.0f64; FEATURE_COUNT];
    for s in scored {
        for i in 0..FEATURE_COUNT {
            sums[i] += s.terms[i].abs();
        }
    }
    let total: f64 = sums.iter().sum();
    if total == 0.0 {
        return [0.0; FEATURE_COUNT];
    }
    sums.map(|x| 100.0 * x / total)
}

/// Top-k by score descending, ties broken by id ascending.
pub fn top_k(scored: &[ScoredContract], k: usize) -> Vec<&ScoredContract> {
    let mut refs: Vec<&ScoredContract> = scored.iter().collect();
    refs.sort_by(|a, b| {
        b.z.partial_cmp(&a.z)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    refs.truncate(k);
    refs
}

/// Welch's unequal-variance t statistic with Welch-Satterthwaite degrees of
/// freedom and a two-sided p value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn welch_t(group_a: &[f64], group_b: &[f64]) -> Result<WelchResult> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::InsufficientGroup);
    }
    let (na, nb) = (group_a.len() as f64, group_b.len() as f64);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0);
    let (ma, mb) = (mean(group_a), mean(group_b));
    let (va, vb) = (var(group_a, ma), var(group_b, mb));
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        // identical constant groups: no evidence of difference
        return Ok(WelchResult {
            t: 0.0,
            df: na + nb - 2.0,
            p: 1.0,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let p = student_t::t_sf_two_sided(t.abs(), df);
    Ok(WelchResult { t, df, p })
}

/// UTC calendar month bucket aggregates: median score and per-feature
/// nonzero prevalence. Months with no contracts are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthAggregate {
    pub year: i64,
    pub month: u8,
    pub count: usize,
    pub median_z: f64,
    pub nonzero_rate: [f64; FEATURE_COUNT],
}

pub fn monthly_aggregate(entries: &[(i64, &ScoredContract)]) -> Vec<MonthAggregate> {
    use std::collections::BTreeMap;
    let mut buckets: BTreeMap<(i64, u8), Vec<&ScoredContract>> = BTreeMap::new();
    for &(timestamp, scored) in entries {
        let (year, month, _) = civil_from_unix(timestamp);
        buckets.entry((year, month)).or_default().push(scored);
    }
    buckets
        .into_iter()
        .map(|((year, month), group)| {
            let mut zs: Vec<f64> = group.iter().map(|s| s.z).collect();
            zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median_z = median_of_sorted(&zs);
            let mut nonzero = [0.0f64; FEATURE_COUNT];
            for s in &group {
                let values = s.values;
                for i in 0..FEATURE_COUNT {
                    if values[i] > 0.0 {
                        nonzero[i] += 1.0;
                    }
                }
            }
            for rate in nonzero.iter_mut() {
                *rate = 100.0 * *rate / group.len() as f64;
            }
            MonthAggregate {
                year,
                month,
                count: group.len(),
                median_z,
                nonzero_rate: nonzero,
            }
        })
        .collect()
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Days-to-civil conversion (proleptic Gregorian), for UTC month bucketing.
fn civil_from_unix(timestamp: i64) -> (i64, u8, u8) {
    let days = timestamp.div_euclid(86_400);
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
    let month = (if mp < 10 { mp + 3 } else { mp - 9 }) as u8;
    let year = if month <= 2 { year + 1 } else { year };
    (year, month, day)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(values: [f64; 7]) -> FeatureVector {
        let mut v = FeatureVector::from_array(values);
        // keep raw magnitudes for the synthetic columns
        v.f3_external_call = 0;
        v.f7_irrelevant_logs = 0;
        v
    }

    fn uniform_snapshot(mu: f64, sigma: f64) -> StatsSnapshot {
        StatsSnapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            snapshot_id: "test".into(),
            n: 100,
            mu: [mu; 7],
            sigma: [sigma; 7],
        }
    }

    #[test]
    fn two_identical_vectors_zero_sigma() {
        let v = vector([1.0, 2.0, 0.0, 3.0, 0.5, 50.0, 1.0]);
        let stats = corpus_stats(&[v.clone(), v]).unwrap();
        for sigma in stats.std_devs() {
            assert_eq!(sigma, 0.0);
        }
    }

    #[test]
    fn two_point_column_closed_form() {
        // column {0, 2}: mean 1, sample std sqrt(2)
        let a = vector([0.0; 7]);
        let b = vector([2.0; 7]);
        let stats = corpus_stats(&[a, b]).unwrap();
        assert!((stats.means()[0] - 1.0).abs() < 1e-12);
        assert!((stats.std_devs()[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn merge_equals_concatenation() {
        let mut rng = crate::rng::SplitMix64::new(11);
        let vectors: Vec<FeatureVector> = (0..257)
            .map(|_| vector(std::array::from_fn(|_| rng.next_f64() * 10.0)))
            .collect();
        let whole = corpus_stats(&vectors).unwrap();
        for split in [1, 37, 128, 255] {
            let left = corpus_stats(&vectors[..split]).ok();
            let right = corpus_stats(&vectors[split..]).ok();
            let merged = match (left, right) {
                (Some(l), Some(r)) => l.merge(&r),
                _ => continue,
            };
            for i in 0..FEATURE_COUNT {
                let rel = |a: f64, b: f64| {
                    let denom = a.abs().max(b.abs()).max(1e-12);
                    (a - b).abs() / denom
                };
                assert!(rel(merged.features[i].mean, whole.features[i].mean) < 1e-9);
                assert!(rel(merged.features[i].m2, whole.features[i].m2) < 1e-9);
            }
        }
    }

    #[test]
    fn insufficient_corpus_rejected() {
        let v = vector([1.0; 7]);
        assert!(matches!(
            corpus_stats(&[v]),
            Err(Error::InsufficientCorpus(1))
        ));
    }

    #[test]
    fn no_transfer_vectors_excluded() {
        let mut flagged = vector([100.0; 7]);
        flagged.flags.insert(Flag::NoTransfer);
        let a = vector([1.0; 7]);
        let b = vector([3.0; 7]);
        let stats = corpus_stats(&[a, b, flagged]).unwrap();
        assert_eq!(stats.n(), 2);
        assert!((stats.means()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn z_score_of_mean_vector_is_zero() {
        let snapshot = uniform_snapshot(3.0, 1.5);
        let (z, terms, flags) = z_score(&[3.0; 7], &snapshot.mu, &snapshot.sigma);
        assert_eq!(z, 0.0);
        assert_eq!(terms, [0.0; 7]);
        assert!(flags.is_empty());
    }

    #[test]
    fn one_sigma_everywhere_scores_seven() {
        let snapshot = uniform_snapshot(3.0, 1.5);
        let (z, _, _) = z_score(&[4.5; 7], &snapshot.mu, &snapshot.sigma);
        assert!((z - 7.0).abs() < 1e-9);
    }

    #[test]
    fn two_sigma_single_feature() {
        let snapshot = uniform_snapshot(0.0, 2.0);
        let mut values = [0.0; 7];
        values[0] = 4.0;
        let (z, terms, _) = z_score(&values, &snapshot.mu, &snapshot.sigma);
        assert!((z - 2.0).abs() < 1e-9);
        assert!((terms[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_sigma_clamped_and_flagged() {
        let snapshot = uniform_snapshot(1.0, 0.0);
        let (z, _, flags) = z_score(&[1.0; 7], &snapshot.mu, &snapshot.sigma);
        assert_eq!(z, 0.0);
        assert!(flags.is_empty());
        let mut values = [1.0; 7];
        values[2] = 2.0;
        let (z, _, flags) = z_score(&values, &snapshot.mu, &snapshot.sigma);
        assert_eq!(z, DEGENERATE_SIGMA_CLAMP);
        assert!(flags.contains(&Flag::DegenerateSigma));
    }

    #[test]
    fn threshold_replicates_published_bound() {
        let got = threshold(4.571, 0.641, 361, 0.95).unwrap();
        assert!((got - 4.637).abs() < 0.001, "got {got}");
    }

    #[test]
    fn threshold_zero_spread_is_mean() {
        assert_eq!(threshold(7.25, 0.0, 100, 0.95).unwrap(), 7.25);
    }

    #[test]
    fn threshold_tiny_sample_uses_heavy_tail() {
        // df = 1: t_{0.975,1} = 12.7062; 12.7062 / sqrt(2) = 8.9846
        let got = threshold(0.0, 1.0, 2, 0.95).unwrap();
        assert!((got - 8.9846).abs() < 1e-3, "got {got}");
    }

    #[test]
    fn threshold_monotonicity() {
        let base = threshold(1.0, 1.0, 50, 0.95).unwrap();
        assert!(threshold(1.0, 2.0, 50, 0.95).unwrap() > base);
        assert!(threshold(1.0, 1.0, 500, 0.95).unwrap() < base);
        assert!(threshold(1.0, 1.0, 50, 0.99).unwrap() > base);
    }

    #[test]
    fn prevalence_strict_greater() {
        let p = prevalence([1.0, 2.0, 3.0], 2.0);
        assert_eq!(p.above, 1);
        assert_eq!(p.below, 2);
        let all_at_cutoff = prevalence([2.0, 2.0], 2.0);
        assert_eq!(all_at_cutoff.above, 0);
        let empty = prevalence([], 1.0);
        assert!(empty.empty);
        assert_eq!(empty.pct_above, 0.0);
    }

    #[test]
    fn quantiles_nearest_rank() {
        let matrix: Vec<[f64; 7]> = (1..=100)
            .map(|i| [i as f64, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .collect();
        let q = feature_quantiles(&matrix);
        assert_eq!(q[0].median, 50.0);
        assert_eq!(q[0].p90, 90.0);
        assert_eq!(q[0].p99, 99.0);
        assert_eq!(q[0].nonzero_rate, 100.0);
        // all-zero column
        assert_eq!(q[1].nonzero_rate, 0.0);
        assert_eq!(q[1].median, 0.0);
        assert_eq!(q[1].p99, 0.0);
    }

    #[test]
    fn constant_column_quantiles() {
        let matrix: Vec<[f64; 7]> = (0..10).map(|_| [3.0; 7]).collect();
        let q = feature_quantiles(&matrix);
        assert_eq!(q[3].nonzero_rate, 100.0);
        assert_eq!(q[3].median, 3.0);
        assert_eq!(q[3].p90, 3.0);
    }

    #[test]
    fn shares_sum_to_hundred() {
        let snapshot = uniform_snapshot(0.0, 1.0);
        let mut rng = crate::rng::SplitMix64::new(3);
        let scored: Vec<ScoredContract> = (0..100)
            .map(|i| {
                let row: [f64; 7] = std::array::from_fn(|_| rng.next_gaussian());
                score_contract(format!("c{i}"), row, &snapshot)
            })
            .collect();
        let shares = contribution_shares(&scored);
        let total: f64 = shares.iter().sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn single_varying_feature_takes_all_share() {
        let snapshot = uniform_snapshot(0.0, 1.0);
        let scored: Vec<ScoredContract> = (0..10)
            .map(|i| {
                let mut values = [0.0; 7];
                values[4] = i as f64;
                score_contract(format!("c{i}"), values, &snapshot)
            })
            .collect();
        let shares = contribution_shares(&scored);
        assert!((shares[4] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn top_k_ordering_and_ties() {
        let snapshot = uniform_snapshot(0.0, 1.0);
        let mk = |id: &str, x: f64| {
            let mut values = [0.0; 7];
            values[0] = x;
            score_contract(id, values, &snapshot)
        };
        let scored = vec![mk("b", 5.0), mk("a", 5.0), mk("c", 9.0), mk("d", 1.0)];
        let top = top_k(&scored, 3);
        let ids: Vec<&str> = top.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert!(top_k(&scored, 0).is_empty());
        assert_eq!(top_k(&scored, 10).len(), 4);
    }

    #[test]
    fn welch_hand_computed_case() {
        // A={1,2,3}, B={4,5,6}: t = -3.674, df = 4 by the Welch formula
        let r = welch_t(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((r.t + 3.6742).abs() < 1e-3, "t = {}", r.t);
        assert!((r.df - 4.0).abs() < 1e-9);
        // antisymmetry
        let swapped = welch_t(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((swapped.t - 3.6742).abs() < 1e-3);
        assert_eq!(r.p, swapped.p);
    }

    #[test]
    fn welch_identical_groups() {
        let r = welch_t(&[2.0, 2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert!(welch_t(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn monthly_buckets_on_utc_boundaries() {
        let snapshot = uniform_snapshot(0.0, 1.0);
        let mk = |z: f64| {
            let mut values = [0.0; 7];
            values[0] = z;
            score_contract("x", values, &snapshot)
        };
        let contracts: Vec<ScoredContract> = vec![mk(4.0), mk(5.0), mk(6.0), mk(9.0)];
        // 2022-06-30 23:59:59 and 2022-07-01 00:00:00 land in different buckets
        let entries = vec![
            (1656633599, &contracts[0]),
            (1656633600, &contracts[1]),
            (1656633601, &contracts[2]),
            (1659312000, &contracts[3]), // 2022-08-01
        ];
        let months = monthly_aggregate(&entries);
        assert_eq!(months.len(), 3);
        assert_eq!((months[0].year, months[0].month), (2022, 6));
        assert_eq!((months[1].year, months[1].month), (2022, 7));
        assert_eq!(months[1].count, 2);
        assert!((months[1].median_z - 5.5).abs() < 1e-12);
        assert_eq!((months[2].year, months[2].month), (2022, 8));
    }

    #[test]
    fn snapshot_json_round_trip() {
        let v1 = vector([1.0; 7]);
        let v2 = vector([2.0; 7]);
        let stats = corpus_stats(&[v1, v2]).unwrap();
        let snapshot = StatsSnapshot::from_stats("unit-test", &stats);
        let text = snapshot.to_json().unwrap();
        let parsed = StatsSnapshot::from_json(&text).unwrap();
        assert_eq!(parsed.n, 2);
        assert_eq!(parsed.mu, snapshot.mu);
        assert_eq!(parsed.sigma, snapshot.sigma);
    }

    #[test]
    fn top_k_invariant_under_constant_feature_shift() {
        // shifting every contract's same feature by a constant shifts mu
        // identically and leaves the ranking untouched
        let mut rng = crate::rng::SplitMix64::new(13);
        let rows: Vec<[f64; 7]> = (0..50)
            .map(|_| std::array::from_fn(|_| rng.next_f64() * 10.0))
            .collect();
        let rank = |rows: &[[f64; 7]]| -> Vec<String> {
            let stats = corpus_stats_rows(rows).unwrap();
            let snapshot = StatsSnapshot::from_stats("shift", &stats);
            let scored: Vec<ScoredContract> = rows
                .iter()
                .enumerate()
                .map(|(i, row)| score_contract(format!("c{i:02}"), *row, &snapshot))
                .collect();
            top_k(&scored, 10).into_iter().map(|s| s.id.clone()).collect()
        };
        let base = rank(&rows);
        let shifted: Vec<[f64; 7]> = rows
            .iter()
            .map(|row| {
                let mut out = *row;
                out[3] += 123.45;
                out
            })
            .collect();
        assert_eq!(base, rank(&shifted));
    }

    #[test]
    fn prevalence_above_count_non_increasing_in_cutoff() {
        let mut rng = crate::rng::SplitMix64::new(29);
        let scores: Vec<f64> = (0..500).map(|_| rng.next_f64() * 20.0).collect();
        let mut previous = u64::MAX;
        for step in 0..40 {
            let cutoff = step as f64 * 0.5;
            let p = prevalence(scores.iter().copied(), cutoff);
            assert!(p.above <= previous);
            previous = p.above;
        }
    }

    #[test]
    fn affine_response_property() {
        // raising feature i by k*sigma_i raises z by exactly k
        let mut rng = crate::rng::SplitMix64::new(5);
        let snapshot = uniform_snapshot(2.0, 0.5);
        for _ in 0..1000 {
            let base: [f64; 7] = std::array::from_fn(|_| rng.next_f64() * 8.0);
            let i = rng.next_below(7);
            let k = (rng.next_f64() - 0.5) * 6.0;
            let (z0, _, _) = z_score(&base, &snapshot.mu, &snapshot.sigma);
            let mut shifted = base;
            shifted[i] += k * snapshot.sigma[i];
            let (z1, _, _) = z_score(&shifted, &snapshot.mu, &snapshot.sigma);
            assert!((z1 - z0 - k).abs() < 1e-9, "delta {} vs k {}", z1 - z0, k);
        }
    }
}
