//! Domain vocabulary shared by every stage: answer keys, response sheets,
//! verdict categories with their fixed point values, and per-respondent
//! reports.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::PosTag;
use crate::textnorm;

/// Marker substituted by the filler word in every sentence context.
pub const PLACEHOLDER: &str = "{{BLANK}}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("placeholder missing in gap {0}")]
    PlaceholderMissing(String),
    #[error("placeholder appears more than once in gap {0}")]
    PlaceholderDuplicated(String),
    #[error("expected word is empty in gap {0}")]
    EmptyExpectedWord(String),
    #[error("duplicate gap_id {0}")]
    DuplicateGapId(String),
    #[error("test {0} has no gaps")]
    NoGaps(String),
    #[error("respondent {respondent_id} answers gap {gap_id} more than once")]
    DuplicateResponse { respondent_id: String, gap_id: String },
    #[error("respondent {respondent_id} answers unknown gap {gap_id}")]
    UnknownGap { respondent_id: String, gap_id: String },
    #[error("empty report")]
    EmptyReport,
    #[error("ordinal label {0} outside 0..=3")]
    OrdinalOutOfRange(i64),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
}

/// One gap of the answer key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapSpec {
    gap_id: String,
    expected_word: String,
    sentence_context: String,
    expected_pos: Option<PosTag>,
}

impl GapSpec {
    pub fn new(
        gap_id: impl Into<String>,
        expected_word: impl Into<String>,
        sentence_context: impl Into<String>,
        expected_pos: Option<PosTag>,
    ) -> Result<Self, ModelError> {
        let gap_id = gap_id.into();
        let expected_word = expected_word.into();
        let sentence_context = sentence_context.into();
        match sentence_context.matches(PLACEHOLDER).count() {
            0 => return Err(ModelError::PlaceholderMissing(gap_id)),
            1 => {}
            _ => return Err(ModelError::PlaceholderDuplicated(gap_id)),
        }
        if textnorm::normalize(&expected_word).is_empty() {
            return Err(ModelError::EmptyExpectedWord(gap_id));
        }
        Ok(Self {
            gap_id,
            expected_word,
            sentence_context,
            expected_pos,
        })
    }

    pub fn gap_id(&self) -> &str {
        &self.gap_id
    }

    pub fn expected_word(&self) -> &str {
        &self.expected_word
    }

    pub fn sentence_context(&self) -> &str {
        &self.sentence_context
    }

    /// Precomputed tag overriding the backend lookup for the key word.
    pub fn expected_pos(&self) -> Option<PosTag> {
        self.expected_pos
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeTest {
    test_id: String,
    gaps: Vec<GapSpec>,
}

impl ClozeTest {
    pub fn new(test_id: impl Into<String>, gaps: Vec<GapSpec>) -> Result<Self, ModelError> {
        let test_id = test_id.into();
        if gaps.is_empty() {
            return Err(ModelError::NoGaps(test_id));
        }
        let mut seen = HashSet::new();
        for gap in &gaps {
            if !seen.insert(gap.gap_id.as_str()) {
                return Err(ModelError::DuplicateGapId(gap.gap_id.clone()));
            }
        }
        Ok(Self { test_id, gaps })
    }

    pub fn test_id(&self) -> &str {
        &self.test_id
    }

    pub fn gaps(&self) -> &[GapSpec] {
        &self.gaps
    }

    pub fn gap(&self, gap_id: &str) -> Option<&GapSpec> {
        self.gaps.iter().find(|g| g.gap_id == gap_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapResponse {
    pub gap_id: String,
    pub raw_text: String,
}

impl GapResponse {
    pub fn new(gap_id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Self {
            gap_id: gap_id.into(),
            raw_text: raw_text.into(),
        }
    }

    pub fn blank(gap_id: impl Into<String>) -> Self {
        Self::new(gap_id, "")
    }
}

/// All answers given by one respondent. Gaps without a response count as blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSheet {
    pub respondent_id: String,
    pub cohort: Option<String>,
    pub responses: Vec<GapResponse>,
}

impl ResponseSheet {
    pub fn new(
        respondent_id: impl Into<String>,
        cohort: Option<String>,
        responses: Vec<GapResponse>,
    ) -> Self {
        Self {
            respondent_id: respondent_id.into(),
            cohort,
            responses,
        }
    }

    /// Checks that every response targets a gap of `test` at most once.
    pub fn check_against(&self, test: &ClozeTest) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for r in &self.responses {
            if test.gap(&r.gap_id).is_none() {
                return Err(ModelError::UnknownGap {
                    respondent_id: self.respondent_id.clone(),
                    gap_id: r.gap_id.clone(),
                });
            }
            if !seen.insert(r.gap_id.as_str()) {
                return Err(ModelError::DuplicateResponse {
                    respondent_id: self.respondent_id.clone(),
                    gap_id: r.gap_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// The response for `gap_id`, or a blank one when the sheet has none.
    pub fn response_for(&self, gap_id: &str) -> GapResponse {
        self.responses
            .iter()
            .find(|r| r.gap_id == gap_id)
            .cloned()
            .unwrap_or_else(|| GapResponse::blank(gap_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Exact,
    Misspelled,
    Acceptable,
    ClassCorrect,
    Blank,
    Incorrect,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Exact,
        Category::Misspelled,
        Category::Acceptable,
        Category::ClassCorrect,
        Category::Blank,
        Category::Incorrect,
    ];

    pub fn points(self) -> f64 {
        category_points(self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Exact => "exact",
            Category::Misspelled => "misspelled",
            Category::Acceptable => "acceptable",
            Category::ClassCorrect => "class_correct",
            Category::Blank => "blank",
            Category::Incorrect => "incorrect",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ModelError::UnknownCategory(s.to_string()))
    }
}

/// Fixed point value of each category.
pub fn category_points(category: Category) -> f64 {
    match category {
        Category::Exact | Category::Misspelled | Category::Acceptable => 1.0,
        Category::ClassCorrect => 0.5,
        Category::Blank | Category::Incorrect => 0.0,
    }
}

/// Evidence gathered by the stages that actually ran for one response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub normalized_response: String,
    pub edit_distance: Option<usize>,
    pub response_pos: Option<PosTag>,
    pub expected_pos: Option<PosTag>,
    pub similarity: Option<f64>,
    pub threshold_used: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapVerdict {
    pub gap_id: String,
    pub category: Category,
    pub points: f64,
    pub diagnostics: Diagnostics,
}

impl GapVerdict {
    pub fn new(gap_id: impl Into<String>, category: Category, diagnostics: Diagnostics) -> Self {
        Self {
            gap_id: gap_id.into(),
            category,
            points: category.points(),
            diagnostics,
        }
    }
}

/// Percentage of available points earned: 100 × mean verdict points.
pub fn comprehension_rate(verdicts: &[GapVerdict]) -> Result<f64, ModelError> {
    if verdicts.is_empty() {
        return Err(ModelError::EmptyReport);
    }
    let total: f64 = verdicts.iter().map(|v| v.points).sum();
    Ok(100.0 * total / verdicts.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub respondent_id: String,
    pub cohort: Option<String>,
    pub verdicts: Vec<GapVerdict>,
    pub comprehension_rate: f64,
}

impl EvaluationReport {
    pub fn new(
        respondent_id: impl Into<String>,
        cohort: Option<String>,
        verdicts: Vec<GapVerdict>,
    ) -> Result<Self, ModelError> {
        let comprehension_rate = comprehension_rate(&verdicts)?;
        Ok(Self {
            respondent_id: respondent_id.into(),
            cohort,
            verdicts,
            comprehension_rate,
        })
    }

    /// Number of verdicts per category, in `Category::ALL` order.
    pub fn category_counts(&self) -> [usize; 6] {
        let mut counts = [0; 6];
        for v in &self.verdicts {
            let idx = Category::ALL.iter().position(|c| *c == v.category).unwrap();
            counts[idx] += 1;
        }
        counts
    }
}

/// Human judgement on the 0–3 scale: 3 exact, 2 acceptable, 1 class-correct,
/// 0 incorrect or blank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrdinalLabel(u8);

impl OrdinalLabel {
    pub const INCORRECT: OrdinalLabel = OrdinalLabel(0);
    pub const CLASS_CORRECT: OrdinalLabel = OrdinalLabel(1);
    pub const ACCEPTABLE: OrdinalLabel = OrdinalLabel(2);
    pub const EXACT: OrdinalLabel = OrdinalLabel(3);

    pub fn new(value: i64) -> Result<Self, ModelError> {
        match value {
            0..=3 => Ok(OrdinalLabel(value as u8)),
            _ => Err(ModelError::OrdinalOutOfRange(value)),
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}
