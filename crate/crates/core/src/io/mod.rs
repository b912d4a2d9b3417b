//! File formats: test definitions (JSON), response sheets, annotations and
//! similarity samples (CSV), and the report set written after a run.
//!
//! CSV input is strict: comma-delimited, double-quote escaping, UTF-8
//! without a byte-order mark. Output uses `\n` line endings and fixed
//! six-decimal reals so identical inputs give identical bytes.

pub mod canonical;

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{AgreementReport, Annotation, StandardLabel};
use crate::backends::PosTag;
use crate::calibration::{human_to_ordinal, CalibrationReport, CalibrationSample, HumanLabel};
use crate::model::{
    Category, ClozeTest, Diagnostics, EvaluationReport, GapResponse, GapSpec, GapVerdict, ModelError,
    ResponseSheet,
};
use canonical::{fixed6, Json};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: header does not match the test (missing: [{}]; unknown: [{}])", missing.join(", "), extra.join(", "))]
    HeaderMismatch {
        path: PathBuf,
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("{path}: duplicate respondent_id {id}")]
    DuplicateRespondent { path: PathBuf, id: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestFile {
    test_id: String,
    gaps: Vec<GapFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GapFile {
    gap_id: String,
    expected: String,
    context: String,
    #[serde(default)]
    expected_pos: Option<PosTag>,
}

pub fn load_test(path: impl AsRef<Path>) -> Result<ClozeTest, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_test(&text, path)
}

/// Parses a test definition; `origin` only labels errors.
pub fn parse_test(text: &str, origin: &Path) -> Result<ClozeTest, IoError> {
    let file: TestFile = serde_json::from_str(text).map_err(|e| IoError::Json {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    let invalid = |source| IoError::Invalid {
        path: origin.to_path_buf(),
        source,
    };
    let gaps = file
        .gaps
        .into_iter()
        .map(|g| GapSpec::new(g.gap_id, g.expected, g.context, g.expected_pos))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    ClozeTest::new(file.test_id, gaps).map_err(invalid)
}

pub fn test_to_json(test: &ClozeTest) -> String {
    let file = TestFile {
        test_id: test.test_id().to_string(),
        gaps: test
            .gaps()
            .iter()
            .map(|g| GapFile {
                gap_id: g.gap_id().to_string(),
                expected: g.expected_word().to_string(),
                context: g.sentence_context().to_string(),
                expected_pos: g.expected_pos(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("test serialization");
    text.push('\n');
    text
}

fn strict_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b',')
        .quote(b'"')
        .double_quote(true)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader)
}

fn read_utf8(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
        return Err(csv_err(path, "file starts with a UTF-8 byte-order mark; re-save without BOM"));
    }
    String::from_utf8(bytes).map_err(|e| csv_err(path, format!("not valid UTF-8: {e}")))
}

fn headers(reader: &mut csv::Reader<&[u8]>, path: &Path) -> Result<Vec<String>, IoError> {
    Ok(reader
        .headers()
        .map_err(|e| csv_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn expect_header(found: &[String], expected: &[&str], path: &Path) -> Result<(), IoError> {
    if found.iter().map(String::as_str).eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(csv_err(
            path,
            format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        ))
    }
}

pub fn load_sheets(path: impl AsRef<Path>, test: &ClozeTest) -> Result<Vec<ResponseSheet>, IoError> {
    let path = path.as_ref();
    let text = read_utf8(path)?;
    parse_sheets(&text, test, path)
}

/// One sheet per data row. Cells are kept verbatim; an empty cell is a blank
/// response.
pub fn parse_sheets(text: &str, test: &ClozeTest, origin: &Path) -> Result<Vec<ResponseSheet>, IoError> {
    let mut reader = strict_reader(text.as_bytes());
    let header = headers(&mut reader, origin)?;
    if header.len() < 2 || header[0] != "respondent_id" || header[1] != "cohort" {
        return Err(csv_err(origin, "header must start with `respondent_id,cohort`"));
    }
    let columns = &header[2..];
    let known: HashSet<&str> = test.gaps().iter().map(|g| g.gap_id()).collect();
    let present: HashSet<&str> = columns.iter().map(String::as_str).collect();
    let mut extra: Vec<String> = columns
        .iter()
        .filter(|c| !known.contains(c.as_str()))
        .cloned()
        .collect();
    let missing: Vec<String> = test
        .gaps()
        .iter()
        .map(|g| g.gap_id())
        .filter(|g| !present.contains(g))
        .map(str::to_string)
        .collect();
    let mut seen_cols = HashSet::new();
    for c in columns {
        if !seen_cols.insert(c.as_str()) && !extra.contains(c) {
            extra.push(c.clone());
        }
    }
    if !missing.is_empty() || !extra.is_empty() {
        return Err(IoError::HeaderMismatch {
            path: origin.to_path_buf(),
            missing,
            extra,
        });
    }

    let mut sheets = Vec::new();
    let mut ids = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(origin, e.to_string()))?;
        let id = row[0].to_string();
        if !ids.insert(id.clone()) {
            return Err(IoError::DuplicateRespondent {
                path: origin.to_path_buf(),
                id,
            });
        }
        let cohort = Some(row[1].to_string()).filter(|c| !c.is_empty());
        let responses = columns
            .iter()
            .zip(row.iter().skip(2))
            .map(|(gap, cell)| GapResponse::new(gap.clone(), cell))
            .collect();
        sheets.push(ResponseSheet::new(id, cohort, responses));
    }
    Ok(sheets)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv output is UTF-8")
}

/// Sheets in the ingestion format, gap columns in test order.
pub fn sheets_to_csv(sheets: &[ResponseSheet], test: &ClozeTest) -> String {
    let mut w = csv_writer();
    let mut header = vec!["respondent_id".to_string(), "cohort".to_string()];
    header.extend(test.gaps().iter().map(|g| g.gap_id().to_string()));
    w.write_record(&header).unwrap();
    for s in sheets {
        let mut row = vec![s.respondent_id.clone(), s.cohort.clone().unwrap_or_default()];
        row.extend(test.gaps().iter().map(|g| s.response_for(g.gap_id()).raw_text));
        w.write_record(&row).unwrap();
    }
    finish(w)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>, IoError> {
    let path = path.as_ref();
    let text = read_utf8(path)?;
    let mut reader = strict_reader(text.as_bytes());
    expect_header(&headers(&mut reader, path)?, &["respondent_id", "gap_id", "human_label"], path)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e.to_string()))?;
        let label: HumanLabel = row[2]
            .parse()
            .map_err(|e| csv_err(path, format!("row {}: {e}", i + 2)))?;
        out.push(Annotation::new(&row[0], &row[1], label));
    }
    Ok(out)
}

pub fn annotations_to_csv(annotations: &[Annotation]) -> String {
    let mut w = csv_writer();
    w.write_record(["respondent_id", "gap_id", "human_label"]).unwrap();
    for a in annotations {
        w.write_record([a.respondent_id.as_str(), a.gap_id.as_str(), a.label.as_str()])
            .unwrap();
    }
    finish(w)
}

/// A similarity sample as stored on disk, keeping the raw human label.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub respondent_id: String,
    pub gap_id: String,
    pub similarity: f64,
    pub label: HumanLabel,
}

impl SimilarityRow {
    pub fn to_sample(&self) -> CalibrationSample {
        CalibrationSample {
            gap_id: self.gap_id.clone(),
            respondent_id: self.respondent_id.clone(),
            similarity: self.similarity,
            human_ordinal: human_to_ordinal(self.label),
        }
    }
}

pub fn load_similarity_rows(path: impl AsRef<Path>) -> Result<Vec<SimilarityRow>, IoError> {
    let path = path.as_ref();
    let text = read_utf8(path)?;
    let mut reader = strict_reader(text.as_bytes());
    expect_header(
        &headers(&mut reader, path)?,
        &["respondent_id", "gap_id", "similarity", "human_label"],
        path,
    )?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e.to_string()))?;
        let line = i + 2;
        let similarity: f64 = row[2]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, format!("row {line}: bad similarity {:?}", &row[2])))?;
        if !similarity.is_finite() || !(-1.0..=1.0).contains(&similarity) {
            return Err(csv_err(path, format!("row {line}: similarity {similarity} outside [-1, 1]")));
        }
        let label: HumanLabel = row[3]
            .parse()
            .map_err(|e| csv_err(path, format!("row {line}: {e}")))?;
        out.push(SimilarityRow {
            respondent_id: row[0].to_string(),
            gap_id: row[1].to_string(),
            similarity,
            label,
        });
    }
    Ok(out)
}

pub fn load_calibration_samples(path: impl AsRef<Path>) -> Result<Vec<CalibrationSample>, IoError> {
    Ok(load_similarity_rows(path)?.iter().map(SimilarityRow::to_sample).collect())
}

/// Similarity samples in the calibration input format. Similarities keep
/// full precision so calibration sees the scores the providers produced.
pub fn similarity_rows_to_csv(rows: &[SimilarityRow]) -> String {
    let mut w = csv_writer();
    w.write_record(["respondent_id", "gap_id", "similarity", "human_label"])
        .unwrap();
    for r in rows {
        w.write_record([
            r.respondent_id.as_str(),
            r.gap_id.as_str(),
            &r.similarity.to_string(),
            r.label.as_str(),
        ])
        .unwrap();
    }
    finish(w)
}

fn verdict_json(v: &GapVerdict) -> Json {
    let d = &v.diagnostics;
    Json::object([
        ("gap_id", Json::str(&v.gap_id)),
        ("category", Json::str(v.category.as_str())),
        ("points", Json::Real(v.points)),
        (
            "diagnostics",
            Json::object([
                ("normalized_response", Json::str(&d.normalized_response)),
                ("edit_distance", d.edit_distance.map_or(Json::Null, Json::count)),
                ("response_pos", Json::opt_str(d.response_pos.map(PosTag::as_str))),
                ("expected_pos", Json::opt_str(d.expected_pos.map(PosTag::as_str))),
                ("similarity", Json::opt_real(d.similarity)),
                ("threshold_used", Json::opt_real(d.threshold_used)),
            ]),
        ),
    ])
}

/// Full verdicts with diagnostics for every respondent, in input order.
pub fn reports_to_json(reports: &[EvaluationReport]) -> String {
    let items = reports
        .iter()
        .map(|r| {
            Json::object([
                ("respondent_id", Json::str(&r.respondent_id)),
                ("cohort", Json::opt_str(r.cohort.clone())),
                ("comprehension_rate", Json::Real(r.comprehension_rate)),
                ("verdicts", Json::Array(r.verdicts.iter().map(verdict_json).collect())),
            ])
        })
        .collect();
    Json::object([("reports", Json::Array(items))]).render()
}

#[derive(Deserialize)]
struct ReportsFile {
    reports: Vec<ReportFile>,
}

#[derive(Deserialize)]
struct ReportFile {
    respondent_id: String,
    cohort: Option<String>,
    verdicts: Vec<VerdictFile>,
}

#[derive(Deserialize)]
struct VerdictFile {
    gap_id: String,
    category: Category,
    diagnostics: DiagnosticsFile,
}

#[derive(Deserialize)]
struct DiagnosticsFile {
    normalized_response: String,
    edit_distance: Option<usize>,
    response_pos: Option<PosTag>,
    expected_pos: Option<PosTag>,
    similarity: Option<f64>,
    threshold_used: Option<f64>,
}

/// Reads a `reports.json` back. Points and rates are recomputed from the
/// categories; stored diagnostics keep their six-decimal precision.
pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<EvaluationReport>, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: ReportsFile = serde_json::from_str(&text).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    file.reports
        .into_iter()
        .map(|r| {
            let verdicts = r
                .verdicts
                .into_iter()
                .map(|v| {
                    let d = v.diagnostics;
                    GapVerdict::new(
                        v.gap_id,
                        v.category,
                        Diagnostics {
                            normalized_response: d.normalized_response,
                            edit_distance: d.edit_distance,
                            response_pos: d.response_pos,
                            expected_pos: d.expected_pos,
                            similarity: d.similarity,
                            threshold_used: d.threshold_used,
                        },
                    )
                })
                .collect();
            EvaluationReport::new(r.respondent_id, r.cohort, verdicts).map_err(|source| IoError::Invalid {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// One row per respondent: rate and per-category counts.
pub fn summary_to_csv(reports: &[EvaluationReport]) -> String {
    let mut w = csv_writer();
    let mut header = vec!["respondent_id", "cohort", "comprehension_rate"];
    header.extend(Category::ALL.iter().map(|c| c.as_str()));
    w.write_record(&header).unwrap();
    for r in reports {
        let mut row = vec![
            r.respondent_id.clone(),
            r.cohort.clone().unwrap_or_default(),
            fixed6(r.comprehension_rate),
        ];
        row.extend(r.category_counts().iter().map(usize::to_string));
        w.write_record(&row).unwrap();
    }
    finish(w)
}

pub fn agreement_to_json(report: &AgreementReport) -> String {
    let labels = StandardLabel::ALL.iter().map(|l| Json::str(l.as_str())).collect();
    let matrix = report
        .confusion
        .iter()
        .map(|row| Json::Array(row.iter().map(|&c| Json::count(c)).collect()))
        .collect();
    Json::object([
        ("spearman", Json::Real(report.spearman)),
        ("spearman_per_respondent", Json::opt_real(report.spearman_per_respondent)),
        ("kappa", Json::Real(report.kappa)),
        ("n", Json::count(report.n)),
        ("misspelled_as", Json::str(report.misspelled_as.label().as_str())),
        (
            "confusion",
            Json::object([
                ("rows", Json::str("system")),
                ("columns", Json::str("human")),
                ("labels", Json::Array(labels)),
                ("matrix", Json::Array(matrix)),
            ]),
        ),
    ])
    .render()
}

pub fn calibration_to_csv(runs: &[CalibrationReport]) -> String {
    let mut w = csv_writer();
    w.write_record(["model", "mode", "auc", "f1_max", "optimal_threshold", "spearman", "n"])
        .unwrap();
    for r in runs {
        w.write_record([
            r.model_id.clone(),
            r.mode.to_string(),
            fixed6(r.auc),
            fixed6(r.f1_max),
            fixed6(r.optimal_threshold),
            fixed6(r.spearman),
            r.n_samples.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

pub fn calibration_to_json(runs: &[CalibrationReport]) -> String {
    let rows = runs
        .iter()
        .map(|r| {
            Json::object([
                ("model", Json::str(&r.model_id)),
                ("mode", Json::str(r.mode.as_str())),
                ("auc", Json::Real(r.auc)),
                ("f1_max", Json::Real(r.f1_max)),
                ("optimal_threshold", Json::Real(r.optimal_threshold)),
                ("spearman", Json::Real(r.spearman)),
                ("n", Json::count(r.n_samples)),
            ])
        })
        .collect();
    Json::Array(rows).render()
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), IoError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    written.push(path);
    Ok(())
}

/// Writes `reports.json` and `summary.csv`, plus `agreement.json` and
/// `calibration.{csv,json}` when given. Returns the written paths.
pub fn write_reports(
    reports: &[EvaluationReport],
    agreement: Option<&AgreementReport>,
    calibration: Option<&[CalibrationReport]>,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, IoError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    write_file(dir, "reports.json", &reports_to_json(reports), &mut written)?;
    write_file(dir, "summary.csv", &summary_to_csv(reports), &mut written)?;
    if let Some(a) = agreement {
        write_file(dir, "agreement.json", &agreement_to_json(a), &mut written)?;
    }
    if let Some(c) = calibration {
        write_file(dir, "calibration.csv", &calibration_to_csv(c), &mut written)?;
        write_file(dir, "calibration.json", &calibration_to_json(c), &mut written)?;
    }
    Ok(written)
}
