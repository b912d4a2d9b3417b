//! Response normalization and transposition-aware edit distance.
//!
//! Distances are counted over Unicode scalar values. Diacritics are kept,
//! so `esta` and `está` are one substitution apart.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// A trimmed, lowercased, NFC-composed string with single internal spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NormalizedToken(String);

impl NormalizedToken {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }
}

impl fmt::Display for NormalizedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NormalizedToken {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub fn normalize(raw: &str) -> NormalizedToken {
    let composed: String = raw.nfc().collect();
    let lowered: String = composed.to_lowercase().nfc().collect();
    let mut out = String::with_capacity(lowered.len());
    for (i, word) in lowered.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(word);
    }
    NormalizedToken(out)
}

/// Which transposition discipline the edit distance follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditVariant {
    /// Optimal string alignment: no substring is edited more than once.
    #[default]
    Restricted,
    /// Full Damerau-Levenshtein metric (Lowrance-Wagner).
    Unrestricted,
}

impl EditVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            EditVariant::Restricted => "restricted",
            EditVariant::Unrestricted => "unrestricted",
        }
    }
}

pub fn edit_distance(a: &NormalizedToken, b: &NormalizedToken) -> usize {
    osa_distance(a.as_str(), b.as_str())
}

pub fn edit_distance_with(variant: EditVariant, a: &NormalizedToken, b: &NormalizedToken) -> usize {
    match variant {
        EditVariant::Restricted => osa_distance(a.as_str(), b.as_str()),
        EditVariant::Unrestricted => damerau_distance(a.as_str(), b.as_str()),
    }
}

/// Optimal string alignment distance between two strings.
pub fn osa_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }

    // three rolling rows: i-2, i-1, i
    let mut prev2 = vec![0usize; m + 1];
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut d = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d = d.min(prev2[j - 2] + 1);
            }
            cur[j] = d;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Unrestricted Damerau-Levenshtein distance.
pub fn damerau_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let max = n + m;

    // table shifted by one so row/column 0 can hold the sentinel
    let width = m + 2;
    let mut d = vec![0usize; (n + 2) * width];
    let at = |i: usize, j: usize| i * width + j;
    d[at(0, 0)] = max;
    for i in 0..=n {
        d[at(i + 1, 0)] = max;
        d[at(i + 1, 1)] = i;
    }
    for j in 0..=m {
        d[at(0, j + 1)] = max;
        d[at(1, j + 1)] = j;
    }

    let mut last_row: HashMap<char, usize> = HashMap::new();
    for i in 1..=n {
        let mut last_match_col = 0;
        for j in 1..=m {
            let i1 = *last_row.get(&b[j - 1]).unwrap_or(&0);
            let j1 = last_match_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_match_col = j;
                0
            } else {
                1
            };
            let best = (d[at(i, j)] + cost)
                .min(d[at(i + 1, j)] + 1)
                .min(d[at(i, j + 1)] + 1)
                .min(d[at(i1, j1)] + (i - i1 - 1) + 1 + (j - j1 - 1));
            d[at(i + 1, j + 1)] = best;
        }
        last_row.insert(a[i - 1], i);
    }
    d[at(n + 1, m + 1)]
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("spelling allowance is undefined for an empty expected word")]
pub struct ZeroLengthError;

/// Largest accepted misspelling distance for a key of `expected_length`
/// characters: the largest integer strictly below a third of the length,
/// never less than 1.
pub fn spelling_allowance(expected_length: usize) -> Result<usize, ZeroLengthError> {
    if expected_length == 0 {
        return Err(ZeroLengthError);
    }
    Ok(expected_length.div_ceil(3).saturating_sub(1).max(1))
}

pub fn is_misspelling_match(response: &NormalizedToken, expected: &NormalizedToken) -> bool {
    misspelling_distance(EditVariant::Restricted, response, expected).is_some()
}

/// The distance to the key when it qualifies as a misspelling, else `None`.
pub fn misspelling_distance(
    variant: EditVariant,
    response: &NormalizedToken,
    expected: &NormalizedToken,
) -> Option<usize> {
    let allowance = spelling_allowance(expected.char_len()).ok()?;
    if response.is_empty() {
        return None;
    }
    let d = edit_distance_with(variant, response, expected);
    (1..=allowance).contains(&d).then_some(d)
}
