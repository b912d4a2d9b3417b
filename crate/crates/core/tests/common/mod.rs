//! Independent reference implementations and corpus helpers shared by the
//! integration tests and the acceptance runner. Nothing here calls into the
//! code it checks.

#![allow(dead_code)]

pub mod checks;

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use cloze_core::backends::{EmbeddingMode, EmbeddingProvider, EmbeddingVector, PosProvider, PosTag, ProviderError};
use cloze_core::textnorm::NormalizedToken;

pub const ALPHABET: [char; 3] = ['a', 'b', 'c'];

/// Every string over `alphabet` with length `0..=max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Restricted edit distance straight from its recursive definition over
/// prefix lengths, memoized only to keep the exhaustive run short.
pub fn osa_oracle(a: &str, b: &str) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == 0 {
            return j;
        }
        if j == 0 {
            return i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let cost = usize::from(a[i - 1] != b[j - 1]);
        let mut best = (go(a, b, i - 1, j, memo) + 1)
            .min(go(a, b, i, j - 1, memo) + 1)
            .min(go(a, b, i - 1, j - 1, memo) + cost);
        if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
            best = best.min(go(a, b, i - 2, j - 2, memo) + 1);
        }
        memo.insert((i, j), best);
        best
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    go(&a, &b, a.len(), b.len(), &mut HashMap::new())
}

/// Unrestricted distance as a shortest path: breadth-first search where one
/// step is a single insertion, deletion, substitution or adjacent swap.
/// Returns the distance from `source` to every string reached, exploring
/// strings up to `max_len` characters.
pub fn bfs_distances(source: &str, alphabet: &[char], max_len: usize) -> HashMap<String, usize> {
    let mut dist = HashMap::from([(source.to_string(), 0usize)]);
    let mut queue = VecDeque::from([source.to_string()]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        let chars: Vec<char> = s.chars().collect();
        let mut next = Vec::new();
        for i in 0..chars.len() {
            let mut t = chars.clone();
            t.remove(i);
            next.push(t);
            for &c in alphabet {
                if c != chars[i] {
                    let mut t = chars.clone();
                    t[i] = c;
                    next.push(t);
                }
            }
            if i + 1 < chars.len() && chars[i] != chars[i + 1] {
                let mut t = chars.clone();
                t.swap(i, i + 1);
                next.push(t);
            }
        }
        if chars.len() < max_len {
            for i in 0..=chars.len() {
                for &c in alphabet {
                    let mut t = chars.clone();
                    t.insert(i, c);
                    next.push(t);
                }
            }
        }
        for t in next {
            let t: String = t.into_iter().collect();
            if !dist.contains_key(&t) {
                dist.insert(t.clone(), d + 1);
                queue.push_back(t);
            }
        }
    }
    dist
}

/// The rule as stated: a distance counts as a misspelling when it is below a
/// third of the word length, and a single edit is always allowed.
pub fn allowance_rule(len: usize, d: usize) -> bool {
    d >= 1 && (3 * d < len || d == 1)
}

/// Rank of each value: the number of smaller values plus the mean position
/// among equal ones.
pub fn ranks_by_counting(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Textbook two-pass Pearson; `None` when either side has no spread.
pub fn pearson_oracle(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx.sqrt() * vy.sqrt()))
    }
}

pub fn spearman_oracle(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson_oracle(&ranks_by_counting(xs), &ranks_by_counting(ys))
}

/// AUC through the Mann-Whitney rank sum, `None` with a single class.
pub fn auc_oracle(data: &[(f64, bool)]) -> Option<f64> {
    let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
    let ranks = ranks_by_counting(&scores);
    let n_pos = data.iter().filter(|d| d.1).count() as f64;
    let n_neg = data.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let rank_sum: f64 = ranks.iter().zip(data).filter(|(_, d)| d.1).map(|(r, _)| r).sum();
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Best F1 over thresholds drawn from the observed scores, scanning each one
/// independently. Returns `(f1, threshold)`; F1 is compared as an exact
/// fraction and ties go to the larger threshold.
pub fn f1_oracle(data: &[(f64, bool)]) -> Option<(f64, f64)> {
    if !data.iter().any(|d| d.1) {
        return None;
    }
    let mut best: Option<(u64, u64, f64)> = None;
    for &(t, _) in data {
        let tp = data.iter().filter(|d| d.0 >= t && d.1).count() as u64;
        let fp = data.iter().filter(|d| d.0 >= t && !d.1).count() as u64;
        let fn_ = data.iter().filter(|d| d.0 < t && d.1).count() as u64;
        let (num, den) = (2 * tp, 2 * tp + fp + fn_);
        best = match best {
            None => Some((num, den, t)),
            Some((bn, bd, bt)) => {
                let lhs = num * bd;
                let rhs = bn * den;
                if lhs > rhs || (lhs == rhs && t > bt) {
                    Some((num, den, t))
                } else {
                    Some((bn, bd, bt))
                }
            }
        };
    }
    best.map(|(n, d, t)| (n as f64 / d as f64, t))
}

/// Kappa from an explicit confusion matrix over the union of labels.
pub fn kappa_oracle(a: &[u8], b: &[u8]) -> f64 {
    let labels: Vec<u8> = {
        let mut l: Vec<u8> = a.iter().chain(b).copied().collect::<HashSet<_>>().into_iter().collect();
        l.sort();
        l
    };
    let k = labels.len();
    let idx = |x: u8| labels.iter().position(|&l| l == x).unwrap();
    let mut m = vec![vec![0.0f64; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        m[idx(x)][idx(y)] += 1.0;
    }
    let n = a.len() as f64;
    let p_o: f64 = (0..k).map(|i| m[i][i]).sum::<f64>() / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: f64 = m[i].iter().sum();
            let col: f64 = m.iter().map(|r| r[i]).sum();
            row * col
        })
        .sum::<f64>()
        / (n * n);
    if p_o == 1.0 {
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    }
}

/// Fails every call and counts how often it was contacted.
#[derive(Default)]
pub struct Poisoned {
    pub calls: AtomicUsize,
}

impl Poisoned {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn hit(&self) -> ProviderError {
        self.calls.fetch_add(1, Ordering::SeqCst);
        ProviderError::Transport("poisoned provider was called".into())
    }
}

impl PosProvider for Poisoned {
    fn backend_id(&self) -> &str {
        "poisoned"
    }
    fn tagger_id(&self) -> &str {
        "poisoned"
    }
    fn tag(&self, _: &str, _: &NormalizedToken) -> Result<PosTag, ProviderError> {
        Err(self.hit())
    }
}

impl EmbeddingProvider for Poisoned {
    fn backend_id(&self) -> &str {
        "poisoned"
    }
    fn declared_dim(&self, _: &str) -> Option<usize> {
        self.hit();
        None
    }
    fn embed(&self, _: &str, _: &str, _: &NormalizedToken, _: EmbeddingMode) -> Result<EmbeddingVector, ProviderError> {
        Err(self.hit())
    }
}

pub fn mini_corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini-corpus")
}
