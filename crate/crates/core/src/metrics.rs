//! Rank correlation, ROC AUC, F1 threshold sweep and Cohen's kappa.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{statistic}: input lengths differ ({left} vs {right})")]
    LengthMismatch {
        statistic: &'static str,
        left: usize,
        right: usize,
    },
    #[error("{statistic}: need at least {min} observations, got {got}")]
    TooFew {
        statistic: &'static str,
        min: usize,
        got: usize,
    },
    #[error("{0}: correlation undefined for a constant input")]
    Constant(&'static str),
    #[error("{0}: non-finite input value")]
    NonFinite(&'static str),
    #[error("{0}: both classes must be present")]
    SingleClass(&'static str),
    #[error("{0}: recall undefined without positives")]
    NoPositives(&'static str),
}

impl MetricsError {
    pub fn statistic(&self) -> &'static str {
        match self {
            MetricsError::LengthMismatch { statistic, .. } | MetricsError::TooFew { statistic, .. } => statistic,
            MetricsError::Constant(s)
            | MetricsError::NonFinite(s)
            | MetricsError::SingleClass(s)
            | MetricsError::NoPositives(s) => s,
        }
    }
}

/// A continuous score paired with a numeric (possibly ordinal) label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub score: f64,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryLabeledScore {
    pub score: f64,
    pub positive: bool,
}

impl BinaryLabeledScore {
    pub fn new(score: f64, positive: bool) -> Self {
        Self { score, positive }
    }
}

/// 1-based ranks with ties sharing the mean of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    // sqrt of the product keeps identical rankings at exactly ±1
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of tie-averaged ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    const NAME: &str = "spearman";
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch {
            statistic: NAME,
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooFew {
            statistic: NAME,
            min: 2,
            got: xs.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite(NAME));
    }
    pearson(&average_ranks(xs), &average_ranks(ys)).ok_or(MetricsError::Constant(NAME))
}

pub fn spearman_pairs(pairs: &[RankedPair]) -> Result<f64, MetricsError> {
    let xs: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.label).collect();
    spearman_rho(&xs, &ys)
}

fn split_classes(data: &[BinaryLabeledScore], name: &'static str) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if data.iter().any(|d| !d.score.is_finite()) {
        return Err(MetricsError::NonFinite(name));
    }
    let (pos, neg): (Vec<&BinaryLabeledScore>, Vec<_>) = data.iter().partition(|d| d.positive);
    Ok((
        pos.into_iter().map(|d| d.score).collect(),
        neg.into_iter().map(|d| d.score).collect(),
    ))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Exact over all positive–negative pairs.
pub fn roc_auc(data: &[BinaryLabeledScore]) -> Result<f64, MetricsError> {
    const NAME: &str = "auc";
    let (pos, neg) = split_classes(data, NAME)?;
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::SingleClass(NAME));
    }
    // count in half-units to stay exact
    let mut half_wins: u64 = 0;
    for p in &pos {
        for n in &neg {
            half_wins += match p.partial_cmp(n) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(half_wins as f64 / (2 * pos.len() * neg.len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Sweep {
    pub best_f1: f64,
    pub best_threshold: f64,
    /// `(threshold, f1)` for every distinct score, ascending by threshold.
    pub curve: Vec<(f64, f64)>,
}

/// F1 of the rule "positive iff score ≥ t" at every distinct observed score.
/// Equal F1 values resolve to the larger threshold.
pub fn f1_sweep(data: &[BinaryLabeledScore]) -> Result<F1Sweep, MetricsError> {
    const NAME: &str = "f1";
    let (pos, _) = split_classes(data, NAME)?;
    if pos.is_empty() {
        return Err(MetricsError::NoPositives(NAME));
    }
    let total_pos = pos.len();

    let mut sorted: Vec<BinaryLabeledScore> = data.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    // sweep from the highest score down, one candidate per distinct score
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        while i < sorted.len() && sorted[i].score == t {
            if sorted[i].positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let fn_ = total_pos - tp;
        let f1 = if tp == 0 {
            0.0
        } else {
            (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
        };
        curve.push((t, f1));
    }
    curve.reverse();

    let (best_threshold, best_f1) = curve
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, -1.0), |(bt, bf), (t, f)| {
            if f > bf || (f == bf && t > bt) {
                (t, f)
            } else {
                (bt, bf)
            }
        });
    Ok(F1Sweep {
        best_f1,
        best_threshold,
        curve,
    })
}

/// Cohen's kappa between two label assignments over the same items.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    const NAME: &str = "kappa";
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            statistic: NAME,
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MetricsError::TooFew {
            statistic: NAME,
            min: 1,
            got: 0,
        });
    }
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    if agree == a.len() {
        return Ok(1.0);
    }
    let mut margins: HashMap<&T, (u128, u128)> = HashMap::new();
    for x in a {
        margins.entry(x).or_default().0 += 1;
    }
    for y in b {
        margins.entry(y).or_default().1 += 1;
    }
    // (p_o - p_e) / (1 - p_e) scaled by n^2: integer sums, so the result does
    // not depend on map iteration order
    let n = a.len() as u128;
    let chance: u128 = margins.values().map(|&(ca, cb)| ca * cb).sum();
    let num = (agree as u128 * n) as f64 - chance as f64;
    let den = (n * n - chance) as f64;
    Ok(num / den)
}
