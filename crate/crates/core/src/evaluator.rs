//! The hierarchical gap-correction flow and sheet-level scoring.
//!
//! Each response goes through the stages in order and stops at the first
//! one that classifies it:
//!
//! 1. empty after normalization → [`Category::Blank`]
//! 2. equal to the normalized key → [`Category::Exact`]
//! 3. within the spelling allowance of the key → [`Category::Misspelled`]
//! 4. same (AUX-collapsed) POS as the key and cosine similarity of the two
//!    target vectors ≥ threshold → [`Category::Acceptable`]
//! 5. same POS → [`Category::ClassCorrect`]
//! 6. anything else → [`Category::Incorrect`]
//!
//! Stages 1–3 never touch a provider.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::backends::{
    cosine_similarity, embed, map_pos, tag_in_context, EmbeddingMode, EmbeddingProvider, PosProvider,
    PosTag, ProviderError,
};
use crate::model::{
    Category, ClozeTest, Diagnostics, EvaluationReport, GapResponse, GapSpec, GapVerdict, ModelError,
    ResponseSheet,
};
use crate::textnorm::{misspelling_distance, normalize, EditVariant, NormalizedToken};

/// Similarity cut-off of the reference configuration.
pub const DEFAULT_THRESHOLD: f64 = 0.652;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorConfig {
    pub semantic_threshold: f64,
    pub edit_variant: EditVariant,
    pub embedding_mode: EmbeddingMode,
    pub model_id: String,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            semantic_threshold: DEFAULT_THRESHOLD,
            edit_variant: EditVariant::Restricted,
            embedding_mode: EmbeddingMode::Contextual,
            model_id: "default".to_string(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("semantic threshold {0} outside [0, 1]")]
pub struct ThresholdError(pub f64);

impl EvaluatorConfig {
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, ThresholdError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ThresholdError(threshold));
        }
        self.semantic_threshold = threshold;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ThresholdError> {
        if (0.0..=1.0).contains(&self.semantic_threshold) {
            Ok(())
        } else {
            Err(ThresholdError(self.semantic_threshold))
        }
    }
}

/// The two evidence sources the semantic stages consult.
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub pos: &'a dyn PosProvider,
    pub embeddings: &'a dyn EmbeddingProvider,
}

impl<'a> Providers<'a> {
    pub fn new(pos: &'a dyn PosProvider, embeddings: &'a dyn EmbeddingProvider) -> Self {
        Self { pos, embeddings }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// POS lookup for the response or the key.
    Grammatical,
    /// Embedding lookup or similarity.
    Semantic,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Grammatical => "grammatical",
            Stage::Semantic => "semantic",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("gap {gap_id}: {stage} stage failed: {source}")]
pub struct EvaluationError {
    pub gap_id: String,
    pub stage: Stage,
    #[source]
    pub source: ProviderError,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SheetError {
    #[error(transparent)]
    Invalid(#[from] ModelError),
    #[error("respondent {respondent_id}: {} gap(s) failed", failures.len())]
    Gaps {
        respondent_id: String,
        failures: Vec<EvaluationError>,
    },
}

impl SheetError {
    /// Ids of the gaps that could not be evaluated.
    pub fn failed_gap_ids(&self) -> Vec<&str> {
        match self {
            SheetError::Invalid(_) => Vec::new(),
            SheetError::Gaps { failures, .. } => failures.iter().map(|f| f.gap_id.as_str()).collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{} sheet(s) could not be evaluated", errors.len())]
pub struct CorpusError {
    pub errors: Vec<SheetError>,
}

impl CorpusError {
    /// Every provider error behind the failure, in sheet then gap order.
    pub fn provider_errors(&self) -> impl Iterator<Item = &ProviderError> {
        self.errors.iter().flat_map(|e| match e {
            SheetError::Gaps { failures, .. } => failures.iter().map(|f| &f.source).collect::<Vec<_>>(),
            SheetError::Invalid(_) => Vec::new(),
        })
    }
}

/// Classifies one response against its gap.
pub fn evaluate_gap(
    gap: &GapSpec,
    response: &GapResponse,
    providers: Providers<'_>,
    config: &EvaluatorConfig,
) -> Result<GapVerdict, EvaluationError> {
    let normalized = normalize(&response.raw_text);
    let expected = normalize(gap.expected_word());
    let mut diagnostics = Diagnostics {
        normalized_response: normalized.as_str().to_string(),
        ..Diagnostics::default()
    };
    let verdict = |category, diagnostics| GapVerdict::new(gap.gap_id(), category, diagnostics);

    if normalized.is_empty() {
        return Ok(verdict(Category::Blank, diagnostics));
    }
    if normalized == expected {
        diagnostics.edit_distance = Some(0);
        return Ok(verdict(Category::Exact, diagnostics));
    }
    if let Some(d) = misspelling_distance(config.edit_variant, &normalized, &expected) {
        diagnostics.edit_distance = Some(d);
        return Ok(verdict(Category::Misspelled, diagnostics));
    }

    let fail = |stage, source| EvaluationError {
        gap_id: gap.gap_id().to_string(),
        stage,
        source,
    };
    let context = gap.sentence_context();
    let response_pos = map_pos(
        tag_in_context(providers.pos, context, &normalized).map_err(|e| fail(Stage::Grammatical, e))?,
    );
    let expected_pos = match gap.expected_pos() {
        Some(tag) => map_pos(tag),
        None => map_pos(
            tag_in_context(providers.pos, context, &expected).map_err(|e| fail(Stage::Grammatical, e))?,
        ),
    };
    diagnostics.response_pos = Some(response_pos);
    diagnostics.expected_pos = Some(expected_pos);
    if response_pos != expected_pos {
        return Ok(verdict(Category::Incorrect, diagnostics));
    }

    let similarity = target_similarity(context, &expected, &normalized, providers.embeddings, config)
        .map_err(|e| fail(Stage::Semantic, e))?;
    diagnostics.similarity = Some(similarity);
    diagnostics.threshold_used = Some(config.semantic_threshold);
    let category = if similarity >= config.semantic_threshold {
        Category::Acceptable
    } else {
        Category::ClassCorrect
    };
    Ok(verdict(category, diagnostics))
}

fn target_similarity(
    context: &str,
    expected: &NormalizedToken,
    response: &NormalizedToken,
    embeddings: &dyn EmbeddingProvider,
    config: &EvaluatorConfig,
) -> Result<f64, ProviderError> {
    let key_vec = embed(embeddings, &config.model_id, context, expected, config.embedding_mode)?;
    let resp_vec = embed(embeddings, &config.model_id, context, response, config.embedding_mode)?;
    cosine_similarity(&key_vec, &resp_vec).map_err(|e| ProviderError::Protocol(e.to_string()))
}

/// Similarity between the key and a raw response, skipping the orthographic
/// and POS stages. `None` for a blank response.
pub fn score_similarity(
    gap: &GapSpec,
    raw_response: &str,
    embeddings: &dyn EmbeddingProvider,
    config: &EvaluatorConfig,
) -> Result<Option<f64>, EvaluationError> {
    let response = normalize(raw_response);
    if response.is_empty() {
        return Ok(None);
    }
    let expected = normalize(gap.expected_word());
    target_similarity(gap.sentence_context(), &expected, &response, embeddings, config)
        .map(Some)
        .map_err(|source| EvaluationError {
            gap_id: gap.gap_id().to_string(),
            stage: Stage::Semantic,
            source,
        })
}

/// Scores every gap of `test` for one respondent. Missing answers are blank.
/// If any gap fails, no report is produced and every failed gap is listed.
pub fn evaluate_sheet(
    test: &ClozeTest,
    sheet: &ResponseSheet,
    providers: Providers<'_>,
    config: &EvaluatorConfig,
) -> Result<EvaluationReport, SheetError> {
    sheet.check_against(test)?;
    let mut verdicts = Vec::with_capacity(test.gaps().len());
    let mut failures = Vec::new();
    for gap in test.gaps() {
        match evaluate_gap(gap, &sheet.response_for(gap.gap_id()), providers, config) {
            Ok(v) => verdicts.push(v),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(SheetError::Gaps {
            respondent_id: sheet.respondent_id.clone(),
            failures,
        });
    }
    Ok(EvaluationReport::new(
        sheet.respondent_id.clone(),
        sheet.cohort.clone(),
        verdicts,
    )?)
}

/// Evaluates all sheets on a pool of `workers` threads (0 = available
/// parallelism). Reports come back in sheet order.
pub fn evaluate_sheets(
    test: &ClozeTest,
    sheets: &[ResponseSheet],
    providers: Providers<'_>,
    config: &EvaluatorConfig,
    workers: usize,
) -> Result<Vec<EvaluationReport>, CorpusError> {
    let results: Vec<Result<EvaluationReport, SheetError>> = with_pool(workers, || {
        sheets
            .par_iter()
            .map(|sheet| evaluate_sheet(test, sheet, providers, config))
            .collect()
    });
    let mut reports = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(report) => reports.push(report),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(reports)
    } else {
        Err(CorpusError { errors })
    }
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build worker pool");
    pool.install(job)
}

/// Outcome of a cache-warming pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmReport {
    /// Responses that needed provider evidence.
    pub queried: usize,
    pub failures: Vec<(String, EvaluationError)>,
}

/// Runs the flow over every response so that each provider key the corpus
/// needs gets requested once. Failures are collected instead of aborting.
pub fn warm_corpus(
    test: &ClozeTest,
    sheets: &[ResponseSheet],
    providers: Providers<'_>,
    config: &EvaluatorConfig,
    workers: usize,
) -> WarmReport {
    let jobs: Vec<(&ResponseSheet, &GapSpec)> = sheets
        .iter()
        .flat_map(|s| test.gaps().iter().map(move |g| (s, g)))
        .collect();
    let outcomes: Vec<Option<(String, Result<GapVerdict, EvaluationError>)>> = with_pool(workers, || {
        jobs.par_iter()
            .map(|(sheet, gap)| {
                let response = sheet.response_for(gap.gap_id());
                if !needs_providers(gap, &response, config) {
                    return None;
                }
                Some((
                    sheet.respondent_id.clone(),
                    evaluate_gap(gap, &response, providers, config),
                ))
            })
            .collect()
    });
    let mut report = WarmReport::default();
    for (respondent, outcome) in outcomes.into_iter().flatten() {
        report.queried += 1;
        if let Err(e) = outcome {
            report.failures.push((respondent, e));
        }
    }
    report
}

/// Whether the response falls through the orthographic stages.
pub fn needs_providers(gap: &GapSpec, response: &GapResponse, config: &EvaluatorConfig) -> bool {
    let normalized = normalize(&response.raw_text);
    let expected = normalize(gap.expected_word());
    !normalized.is_empty()
        && normalized != expected
        && misspelling_distance(config.edit_variant, &normalized, &expected).is_none()
}

/// POS pair the flow compares, as recorded in diagnostics.
pub fn pos_pair(verdict: &GapVerdict) -> Option<(PosTag, PosTag)> {
    Some((verdict.diagnostics.response_pos?, verdict.diagnostics.expected_pos?))
}
