//! Exact (non-private) ROC/AUC machinery.
//!
//! AUC is computed three ways: by integrating the ROC curve of a threshold
//! sweep, by the rank-sum formula, and by brute-force enumeration of
//! positive/negative pairs. Ties are credited 0.5 in the pairwise count and
//! receive average ranks in the rank formula, so the last two agree exactly.

use std::cmp::Ordering;
use std::ops::Deref;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub score: f64,
    pub label: u8,
}

impl Sample {
    pub fn new(score: f64, label: u8) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(invalid(format!("score {score} outside [0, 1]")));
        }
        if label > 1 {
            return Err(invalid(format!("label {label} is not 0 or 1")));
        }
        Ok(Self { score, label })
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// A non-empty evaluation set.
///
/// Scores are normally in `[0, 1]`. [`Dataset::with_unbounded_scores`] lifts
/// that bound for score-perturbation experiments, where noise is added to the
/// scores and deliberately not clamped back.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    positives: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.score) {
                return Err(invalid(format!("sample {i}: score {} outside [0, 1]", s.score)));
            }
        }
        Self::with_unbounded_scores(samples)
    }

    pub fn with_unbounded_scores(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("dataset must contain at least one sample"));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.score.is_finite() {
                return Err(invalid(format!("sample {i}: score is not finite")));
            }
            if s.label > 1 {
                return Err(invalid(format!("sample {i}: label {} is not 0 or 1", s.label)));
            }
        }
        let positives = samples.iter().filter(|s| s.is_positive()).count();
        Ok(Self { samples, positives })
    }

    /// Builds a dataset from parallel score and label slices.
    pub fn from_parts(scores: &[f64], labels: &[u8]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(invalid(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        Self::new(
            scores
                .iter()
                .zip(labels)
                .map(|(&score, &label)| Sample { score, label })
                .collect(),
        )
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn negatives(&self) -> usize {
        self.samples.len() - self.positives
    }

    pub fn scores(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.score).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}

impl Deref for Dataset {
    type Target = [Sample];

    fn deref(&self) -> &[Sample] {
        &self.samples
    }
}

/// Strictly increasing decision thresholds in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    thresholds: Vec<f64>,
}

impl ThresholdGrid {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(invalid("threshold grid must not be empty"));
        }
        if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(invalid(format!("threshold {t} outside (0, 1]")));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("thresholds must be strictly increasing"));
        }
        Ok(Self { thresholds })
    }

    /// `θ_j = j / size` for `j = 1..=size`.
    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(invalid("threshold grid size must be at least 1"));
        }
        Self::new((1..=size).map(|j| j as f64 / size as f64).collect())
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Confusion counts at one threshold. Real-valued so that noisy counts use
/// the same type; noisy counts may be negative or fractional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionCounts {
    pub threshold: f64,
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
}

impl ConfusionCounts {
    pub fn zero(threshold: f64) -> Self {
        Self {
            threshold,
            tp: 0.0,
            fp: 0.0,
            tn: 0.0,
            fn_: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Component-wise sum; the threshold of `self` is kept.
    pub fn add(&self, other: &Self) -> Self {
        Self {
            threshold: self.threshold,
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

/// A sample is predicted positive when `score >= threshold`.
pub fn confusion_at(samples: &[Sample], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::zero(threshold);
    for s in samples {
        match (s.is_positive(), s.score >= threshold) {
            (true, true) => c.tp += 1.0,
            (true, false) => c.fn_ += 1.0,
            (false, true) => c.fp += 1.0,
            (false, false) => c.tn += 1.0,
        }
    }
    c
}

/// Confusion counts at every threshold of `grid`, in `O(M log |Θ| + |Θ|)`.
///
/// Produces the same counts as calling [`confusion_at`] per threshold.
pub fn confusion_sweep(samples: &[Sample], grid: &ThresholdGrid) -> Vec<ConfusionCounts> {
    let thresholds = grid.thresholds();
    // bucket j holds samples with exactly j thresholds <= score
    let mut pos = vec![0u64; thresholds.len() + 1];
    let mut neg = vec![0u64; thresholds.len() + 1];
    for s in samples {
        let j = thresholds.partition_point(|&t| t <= s.score);
        if s.is_positive() {
            pos[j] += 1;
        } else {
            neg[j] += 1;
        }
    }
    let total_pos: u64 = pos.iter().sum();
    let total_neg: u64 = neg.iter().sum();

    // predicted positive at threshold index i <=> bucket > i
    let mut below_pos = 0u64;
    let mut below_neg = 0u64;
    thresholds
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            below_pos += pos[i];
            below_neg += neg[i];
            ConfusionCounts {
                threshold: t,
                tp: (total_pos - below_pos) as f64,
                fp: (total_neg - below_neg) as f64,
                tn: below_neg as f64,
                fn_: below_pos as f64,
            }
        })
        .collect()
}

/// `(tpr, fpr)` for one set of counts, or `None` when either denominator is
/// not strictly positive. Never divides by zero.
pub fn tpr_fpr(counts: &ConfusionCounts) -> Option<(f64, f64)> {
    let pos = counts.tp + counts.fn_;
    let neg = counts.fp + counts.tn;
    if pos > 0.0 && neg > 0.0 {
        Some((counts.tp / pos, counts.fp / neg))
    } else {
        None
    }
}

/// ROC curve as `(fpr, tpr)` points, sorted and padded with `(0,0)` and `(1,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<(f64, f64)>,
}

impl RocCurve {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Drops non-finite points, clamps coordinates to `[0, 1]`, sorts by fpr
/// then tpr, and adds the `(0,0)` and `(1,1)` endpoints. No isotonic
/// smoothing is applied to non-monotone noisy curves.
pub fn roc_canonicalize<I>(raw_points: I) -> RocCurve
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut points: Vec<(f64, f64)> = raw_points
        .into_iter()
        .filter(|(f, t)| f.is_finite() && t.is_finite())
        .map(|(f, t)| (f.clamp(0.0, 1.0), t.clamp(0.0, 1.0)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    points.insert(0, (0.0, 0.0));
    points.push((1.0, 1.0));
    RocCurve { points }
}

pub fn auc_trapezoid(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// ROC curve of the exact threshold sweep, canonicalized.
pub fn exact_roc(samples: &[Sample], grid: &ThresholdGrid) -> RocCurve {
    roc_canonicalize(
        confusion_sweep(samples, grid)
            .iter()
            .filter_map(tpr_fpr)
            .map(|(tpr, fpr)| (fpr, tpr)),
    )
}

/// Trapezoidal AUC of the exact sweep over `grid`.
pub fn auc_sweep(samples: &[Sample], grid: &ThresholdGrid) -> f64 {
    auc_trapezoid(&exact_roc(samples, grid))
}

/// Zero-based ascending ranks; ties share the mean of the ranks they span.
#[derive(Debug, Clone, PartialEq)]
pub struct RankAssignment {
    ranks: Vec<f64>,
}

impl RankAssignment {
    pub fn ranks(&self) -> &[f64] {
        &self.ranks
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.ranks
    }
}

pub fn rank_scores(scores: &[f64]) -> RankAssignment {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]].total_cmp(&scores[order[start]]) == Ordering::Equal {
            end += 1;
        }
        // mean of start..end-1
        let rank = (start + end - 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    RankAssignment { ranks }
}

fn class_counts(samples: &[Sample]) -> Result<(f64, f64)> {
    let p = samples.iter().filter(|s| s.is_positive()).count() as f64;
    let n = samples.len() as f64 - p;
    if p < 1.0 || n < 1.0 {
        return Err(Error::UndefinedAuc {
            positives: p,
            negatives: n,
        });
    }
    Ok((p, n))
}

/// `(Σ r_i y_i − P(P−1)/2) / (P·N)` with average ranks.
pub fn auc_rank(samples: &[Sample]) -> Result<f64> {
    let (p, n) = class_counts(samples)?;
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let ranks = rank_scores(&scores);
    let rank_sum: f64 = ranks
        .ranks()
        .iter()
        .zip(samples)
        .filter(|(_, s)| s.is_positive())
        .map(|(r, _)| r)
        .sum();
    Ok((rank_sum - p * (p - 1.0) / 2.0) / (p * n))
}

/// Fraction of correctly ordered positive/negative pairs, ties counting 0.5.
/// `O(P·N)`; intended as a reference.
pub fn auc_pairwise(samples: &[Sample]) -> Result<f64> {
    let (p, n) = class_counts(samples)?;
    // count half-pairs in integers so the result is exact
    let mut half_pairs: u64 = 0;
    for pos in samples.iter().filter(|s| s.is_positive()) {
        for neg in samples.iter().filter(|s| !s.is_positive()) {
            if pos.score > neg.score {
                half_pairs += 2;
            } else if pos.score == neg.score {
                half_pairs += 1;
            }
        }
    }
    Ok(half_pairs as f64 / 2.0 / (p * n))
}
