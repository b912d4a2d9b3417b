//! Threshold calibration of similarity scores against human judgements.
//!
//! Human labels map onto the ordinal scale (exact 3, acceptable 2,
//! class-correct 1, incorrect/blank 0). Spearman is computed against the
//! ordinal values; AUC and the F1 sweep use the binary split
//! acceptable = {2, 3}.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::EmbeddingMode;
use crate::metrics::{f1_sweep, roc_auc, spearman_rho, BinaryLabeledScore, MetricsError};
use crate::model::OrdinalLabel;

/// Annotation vocabulary accepted at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanLabel {
    Exact,
    Acceptable,
    ClassCorrect,
    Incorrect,
    Blank,
}

impl HumanLabel {
    pub const ALL: [HumanLabel; 5] = [
        HumanLabel::Exact,
        HumanLabel::Acceptable,
        HumanLabel::ClassCorrect,
        HumanLabel::Incorrect,
        HumanLabel::Blank,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HumanLabel::Exact => "exact",
            HumanLabel::Acceptable => "acceptable",
            HumanLabel::ClassCorrect => "class_correct",
            HumanLabel::Incorrect => "incorrect",
            HumanLabel::Blank => "blank",
        }
    }
}

impl fmt::Display for HumanLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown human label {0:?} (expected exact, acceptable, class_correct, incorrect or blank)")]
pub struct UnknownLabel(pub String);

impl FromStr for HumanLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HumanLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s.trim())
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

pub fn human_to_ordinal(label: HumanLabel) -> OrdinalLabel {
    match label {
        HumanLabel::Exact => OrdinalLabel::EXACT,
        HumanLabel::Acceptable => OrdinalLabel::ACCEPTABLE,
        HumanLabel::ClassCorrect => OrdinalLabel::CLASS_CORRECT,
        HumanLabel::Incorrect | HumanLabel::Blank => OrdinalLabel::INCORRECT,
    }
}

/// Acceptable iff the ordinal is 2 or 3.
pub fn binarize_ordinal(o: OrdinalLabel) -> bool {
    o.value() >= 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    pub gap_id: String,
    pub respondent_id: String,
    pub similarity: f64,
    pub human_ordinal: OrdinalLabel,
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub model_id: String,
    pub mode: EmbeddingMode,
    pub auc: f64,
    pub f1_max: f64,
    pub optimal_threshold: f64,
    pub spearman: f64,
    pub n_samples: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("calibration needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("similarity of {respondent_id}/{gap_id} is not finite")]
    NonFinite { respondent_id: String, gap_id: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub fn calibrate(
    samples: &[CalibrationSample],
    model_id: &str,
    mode: EmbeddingMode,
) -> Result<CalibrationReport, CalibrationError> {
    if samples.len() < 2 {
        return Err(CalibrationError::TooFewSamples(samples.len()));
    }
    if let Some(s) = samples.iter().find(|s| !s.similarity.is_finite()) {
        return Err(CalibrationError::NonFinite {
            respondent_id: s.respondent_id.clone(),
            gap_id: s.gap_id.clone(),
        });
    }
    let scores: Vec<f64> = samples.iter().map(|s| s.similarity).collect();
    let ordinals: Vec<f64> = samples.iter().map(|s| f64::from(s.human_ordinal.value())).collect();
    let binary: Vec<BinaryLabeledScore> = samples
        .iter()
        .map(|s| BinaryLabeledScore::new(s.similarity, binarize_ordinal(s.human_ordinal)))
        .collect();

    let auc = roc_auc(&binary)?;
    let sweep = f1_sweep(&binary)?;
    let spearman = spearman_rho(&scores, &ordinals)?;
    Ok(CalibrationReport {
        model_id: model_id.to_string(),
        mode,
        auc,
        f1_max: sweep.best_f1,
        optimal_threshold: sweep.best_threshold,
        spearman,
        n_samples: samples.len(),
    })
}

/// Reports ordered by descending AUC; equal AUCs keep their input order.
pub fn compare_configs(runs: &[CalibrationReport]) -> Vec<CalibrationReport> {
    let mut ranked = runs.to_vec();
    ranked.sort_by(|a, b| b.auc.total_cmp(&a.auc));
    ranked
}

/// Fixed-width text rendering of a comparison table.
pub fn render_table(runs: &[CalibrationReport]) -> String {
    let mut out = format!(
        "{:<24} {:<10} {:>8} {:>8} {:>10} {:>9} {:>6}\n",
        "model", "mode", "auc", "f1_max", "threshold", "spearman", "n"
    );
    for r in runs {
        out.push_str(&format!(
            "{:<24} {:<10} {:>8.3} {:>8.3} {:>10.3} {:>9.3} {:>6}\n",
            r.model_id, r.mode, r.auc, r.f1_max, r.optimal_threshold, r.spearman, r.n_samples
        ));
    }
    out
}
