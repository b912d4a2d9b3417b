//! One function per acceptance criterion. Each returns a short summary on
//! success and a description of the first mismatch on failure, so the same
//! checks back both `cargo test` assertions and the acceptance report.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use cloze_core::agreement::{self, MisspelledAs};
use cloze_core::backends::{EmbeddingMode, FixtureStore, HttpBackend, HttpConfig};
use cloze_core::calibration::{self, CalibrationReport};
use cloze_core::evaluator::{self, EvaluatorConfig, Providers};
use cloze_core::io;
use cloze_core::metrics::{cohen_kappa, f1_sweep, roc_auc, spearman_rho, BinaryLabeledScore, MetricsError};
use cloze_core::model::{Category, ClozeTest, GapResponse, GapSpec, ResponseSheet};
use cloze_core::textnorm::{
    damerau_distance, edit_distance, edit_distance_with, is_misspelling_match, normalize, osa_distance,
    spelling_allowance, EditVariant,
};

use super::*;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn edit_distance_equivalence() -> Check {
    let started = Instant::now();
    let words = all_strings(&ALPHABET, 4);
    let mut pairs = 0usize;
    for a in &words {
        let reachable = bfs_distances(a, &ALPHABET, 7);
        for b in &words {
            pairs += 1;
            let restricted = osa_distance(a, b);
            let oracle = osa_oracle(a, b);
            ensure(restricted == oracle, || format!("restricted d({a:?}, {b:?}) = {restricted}, oracle {oracle}"))?;
            let via_tokens = edit_distance(&normalize(a), &normalize(b));
            ensure(via_tokens == restricted, || format!("token distance differs on ({a:?}, {b:?})"))?;
            let unrestricted = damerau_distance(a, b);
            let shortest = reachable[b];
            ensure(unrestricted == shortest, || {
                format!("unrestricted d({a:?}, {b:?}) = {unrestricted}, shortest path {shortest}")
            })?;
        }
    }
    let (ca, abc) = (normalize("ca"), normalize("abc"));
    let r = edit_distance_with(EditVariant::Restricted, &ca, &abc);
    let u = edit_distance_with(EditVariant::Unrestricted, &ca, &abc);
    ensure((r, u) == (3, 2), || format!("d(ca, abc): restricted {r}, unrestricted {u}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed.as_secs() < 60, || format!("took {elapsed:?}"))?;
    Ok(format!("{pairs} pairs, 0 mismatches, d(ca,abc) = 3 vs 2, {:.2}s", elapsed.as_secs_f64()))
}

pub fn allowance_law() -> Check {
    for (len, want) in [(9, 2), (4, 1), (2, 1)] {
        let got = spelling_allowance(len).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("allowance({len}) = {got}, want {want}"))?;
    }
    let mut cases = 0;
    for len in 1..=60usize {
        let allowance = spelling_allowance(len).map_err(|e| e.to_string())?;
        let expected = normalize(&"a".repeat(len));
        for d in 1..=60usize {
            cases += 1;
            let rule = allowance_rule(len, d);
            ensure((d <= allowance) == rule, || format!("L={len} d={d}: allowance {allowance}, rule {rule}"))?;
            // a response at distance exactly d: substitutions, then insertions
            let response = if d <= len {
                format!("{}{}", "b".repeat(d), "a".repeat(len - d))
            } else {
                "b".repeat(d)
            };
            let response = normalize(&response);
            let accepted = is_misspelling_match(&response, &expected);
            ensure(accepted == rule, || format!("L={len} d={d}: accepted {accepted}, rule {rule}"))?;
        }
    }
    Ok(format!("{cases} (L, d) cases; allowance(9)=2, allowance(4)=1, allowance(2)=1"))
}

/// Scores with frequent ties: half the instances draw from a coarse grid.
fn random_scores(rng: &mut StdRng, n: usize) -> Vec<f64> {
    if rng.gen_bool(0.5) {
        (0..n).map(|_| f64::from(rng.gen_range(0..5u8)) / 4.0).collect()
    } else {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

pub fn statistics_oracles() -> Check {
    const INSTANCES: usize = 500;
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut defined = [0usize; 4];
    for i in 0..INSTANCES {
        let n = rng.gen_range(1..=12);
        let xs = random_scores(&mut rng, n);
        let ys = random_scores(&mut rng, n);
        match (spearman_rho(&xs, &ys), spearman_oracle(&xs, &ys)) {
            (Ok(got), Some(want)) => {
                ensure(close(got, want), || format!("spearman #{i}: {got} vs {want} on {xs:?} {ys:?}"))?;
                defined[0] += 1;
            }
            (Err(_), None) => {}
            (got, want) => return Err(format!("spearman #{i}: {got:?} vs oracle {want:?} on {xs:?} {ys:?}")),
        }

        let labelled: Vec<(f64, bool)> = xs.iter().map(|&x| (x, rng.gen_bool(0.5))).collect();
        let data: Vec<BinaryLabeledScore> = labelled.iter().map(|&(s, p)| BinaryLabeledScore::new(s, p)).collect();
        match (roc_auc(&data), auc_oracle(&labelled)) {
            (Ok(got), Some(want)) => {
                ensure(close(got, want), || format!("auc #{i}: {got} vs {want} on {labelled:?}"))?;
                defined[1] += 1;
            }
            (Err(MetricsError::SingleClass(_)), None) => {}
            (got, want) => return Err(format!("auc #{i}: {got:?} vs oracle {want:?}")),
        }
        match (f1_sweep(&data), f1_oracle(&labelled)) {
            (Ok(got), Some((f1, t))) => {
                ensure(close(got.best_f1, f1) && got.best_threshold == t, || {
                    format!("f1 #{i}: ({}, {}) vs ({f1}, {t}) on {labelled:?}", got.best_f1, got.best_threshold)
                })?;
                defined[2] += 1;
            }
            (Err(MetricsError::NoPositives(_)), None) => {}
            (got, want) => return Err(format!("f1 #{i}: {got:?} vs oracle {want:?}")),
        }

        let k = rng.gen_range(1..=4u8);
        let a: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let got = cohen_kappa(&a, &b).map_err(|e| format!("kappa #{i}: {e}"))?;
        let want = kappa_oracle(&a, &b);
        ensure(close(got, want), || format!("kappa #{i}: {got} vs {want} on {a:?} {b:?}"))?;
        defined[3] += 1;
    }

    let ranks = [3.0, 1.0, 4.0, 1.5, 9.0];
    ensure(spearman_rho(&ranks, &ranks) == Ok(1.0), || "rho of identical rankings is not exactly 1".into())?;
    let ties: Vec<BinaryLabeledScore> = (0..6).map(|i| BinaryLabeledScore::new(0.3, i % 2 == 0)).collect();
    ensure(roc_auc(&ties) == Ok(0.5), || "AUC of all-tied scores is not exactly 0.5".into())?;
    let labels = ["x", "y", "y", "z"];
    ensure(cohen_kappa(&labels, &labels) == Ok(1.0), || "kappa of identical labels is not exactly 1".into())?;
    let indep = cohen_kappa(&["X", "X", "Y", "Y"], &["X", "Y", "X", "Y"]);
    ensure(indep == Ok(0.0), || format!("independence example gave {indep:?}"))?;

    Ok(format!(
        "{INSTANCES} instances each; defined: spearman {}, auc {}, f1 {}, kappa {}; anchors exact",
        defined[0], defined[1], defined[2], defined[3]
    ))
}

pub fn planted_threshold() -> Check {
    let mut rng = StdRng::seed_from_u64(0x7e57);
    for round in 0..200 {
        let n_pos = rng.gen_range(1..=10);
        let n_neg = rng.gen_range(0..=10);
        let mut data = Vec::new();
        for _ in 0..n_pos {
            data.push(BinaryLabeledScore::new(rng.gen_range(0.7..=1.0), true));
        }
        for _ in 0..n_neg {
            data.push(BinaryLabeledScore::new(rng.gen_range(0.0..=0.5), false));
        }
        data.sort_by(|a, b| a.score.total_cmp(&b.score).reverse());
        let sweep = f1_sweep(&data).map_err(|e| e.to_string())?;
        let min_pos = data.iter().filter(|d| d.positive).map(|d| d.score).fold(f64::INFINITY, f64::min);
        let max_neg = data.iter().filter(|d| !d.positive).map(|d| d.score).fold(f64::NEG_INFINITY, f64::max);
        ensure(sweep.best_f1 == 1.0, || format!("round {round}: best F1 {}", sweep.best_f1))?;
        ensure(sweep.best_threshold > max_neg && sweep.best_threshold <= min_pos, || {
            format!("round {round}: threshold {} outside ({max_neg}, {min_pos}]", sweep.best_threshold)
        })?;
        ensure(sweep.best_threshold == min_pos, || format!("round {round}: threshold is not the smallest positive"))?;
    }
    let worked = [(0.9, true), (0.8, false), (0.7, true), (0.6, false)].map(|(s, p)| BinaryLabeledScore::new(s, p));
    let sweep = f1_sweep(&worked).map_err(|e| e.to_string())?;
    ensure(sweep.best_f1 == 0.8 && sweep.best_threshold == 0.7, || {
        format!("worked example: F1 {} at {}", sweep.best_f1, sweep.best_threshold)
    })?;
    Ok("200 separable draws recover F1 = 1 at the smallest positive; worked example F1 = 0.8 at t = 0.7".into())
}

pub fn load_mini_corpus() -> Result<(ClozeTest, Vec<ResponseSheet>, FixtureStore), String> {
    let dir = mini_corpus();
    let test = io::load_test(dir.join("test.json")).map_err(|e| e.to_string())?;
    let sheets = io::load_sheets(dir.join("sheets.csv"), &test).map_err(|e| e.to_string())?;
    let store = FixtureStore::load(dir.join("fixture.jsonl"), "sidecar", "default").map_err(|e| e.to_string())?;
    Ok((test, sheets, store))
}

pub fn render_mini_corpus(workers: usize) -> Result<String, String> {
    let (test, sheets, store) = load_mini_corpus()?;
    let reports = evaluator::evaluate_sheets(
        &test,
        &sheets,
        Providers::new(&store, &store),
        &EvaluatorConfig::default(),
        workers,
    )
    .map_err(|e| e.to_string())?;
    Ok(io::reports_to_json(&reports))
}

pub fn golden_pipeline() -> Check {
    let (test, sheets, store) = load_mini_corpus()?;
    let reports = evaluator::evaluate_sheets(&test, &sheets, Providers::new(&store, &store), &EvaluatorConfig::default(), 1)
        .map_err(|e| e.to_string())?;
    let first = &reports[0];
    let got: Vec<Category> = first.verdicts.iter().map(|v| v.category).collect();
    use Category::*;
    let want = [Exact, Misspelled, Acceptable, ClassCorrect, Blank];
    ensure(got == want, || format!("verdicts {got:?}"))?;
    let rate = io::canonical::fixed6(first.comprehension_rate);
    ensure(rate == "70.000000", || format!("comprehension rate {rate}"))?;

    let golden = fs::read_to_string(mini_corpus().join("expected/reports.json")).map_err(|e| e.to_string())?;
    let runs = [render_mini_corpus(1)?, render_mini_corpus(1)?, render_mini_corpus(8)?, render_mini_corpus(8)?];
    for (i, run) in runs.iter().enumerate() {
        ensure(run == &golden, || format!("run {i} differs from the golden reports.json"))?;
    }
    Ok("verdicts Exact, Misspelled, Acceptable, ClassCorrect, Blank; rate 70.000000; byte-identical with 1 and 8 workers".into())
}

pub fn provider_isolation() -> Check {
    let poisoned = Poisoned::default();
    let providers = Providers::new(&poisoned, &poisoned);
    let config = EvaluatorConfig::default();
    let gap = |id: &str, word: &str| GapSpec::new(id, word, "Ele {{BLANK}} ontem.", None).unwrap();
    let cases = [
        ("correu", "correu", Category::Exact),
        ("correu", "  CORREU ", Category::Exact),
        ("correu", "coreu", Category::Misspelled),
        ("correu", "coreru", Category::Misspelled),
        ("corremos", "corremso", Category::Misspelled),
        ("correu", "", Category::Blank),
        ("correu", " \t ", Category::Blank),
    ];
    let test = ClozeTest::new(
        "isolation",
        cases.iter().enumerate().map(|(i, (w, _, _))| gap(&format!("g{i}"), w)).collect(),
    )
    .unwrap();
    let sheet = ResponseSheet::new(
        "r1",
        None,
        cases.iter().enumerate().map(|(i, (_, r, _))| GapResponse::new(format!("g{i}"), *r)).collect(),
    );
    let report = evaluator::evaluate_sheet(&test, &sheet, providers, &config).map_err(|e| e.to_string())?;
    for (v, (_, r, want)) in report.verdicts.iter().zip(&cases) {
        ensure(v.category == *want, || format!("{r:?} gave {:?}, want {want:?}", v.category))?;
    }
    ensure(poisoned.calls() == 0, || format!("{} provider call(s) observed", poisoned.calls()))?;

    // the poison does fire once a response needs grammatical evidence
    let probe = evaluator::evaluate_gap(&gap("g", "correu"), &GapResponse::new("g", "andou"), providers, &config);
    ensure(probe.is_err() && poisoned.calls() > 0, || "poisoned provider did not fail on a semantic case".into())?;
    Ok(format!("{} orthographic verdicts with 0 provider calls", cases.len()))
}

/// Outcome of the conditional reproduction; `None` means the inputs are absent.
pub fn reference_reproduction() -> Option<Check> {
    let data = std::env::var_os("CLOZE_REFERENCE_DATA")?;
    let endpoint = std::env::var("CLOZE_ENDPOINT").ok()?;
    let model = std::env::var("CLOZE_REFERENCE_MODEL").unwrap_or_else(|_| "default".to_string());
    Some(reproduce(Path::new(&data), &endpoint, &model))
}

fn reproduce(dir: &Path, endpoint: &str, model: &str) -> Check {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let test = io::load_test(dir.join("test.json")).map_err(|e| err(&e))?;
    let sheets = io::load_sheets(dir.join("sheets.csv"), &test).map_err(|e| err(&e))?;
    let annotations = io::load_annotations(dir.join("annotations.csv")).map_err(|e| err(&e))?;
    let http = HttpBackend::new(HttpConfig::new(endpoint));
    let config = EvaluatorConfig {
        model_id: model.to_string(),
        ..EvaluatorConfig::default()
    };
    let reports = evaluator::evaluate_sheets(&test, &sheets, Providers::new(&http, &http), &config, 0).map_err(|e| err(&e))?;
    let agreement = agreement::validate(&reports, &annotations, MisspelledAs::Exact).map_err(|e| err(&e))?;

    let by_id: HashMap<&str, &ResponseSheet> = sheets.iter().map(|s| (s.respondent_id.as_str(), s)).collect();
    let mut runs: Vec<CalibrationReport> = Vec::new();
    for mode in [EmbeddingMode::Contextual, EmbeddingMode::Isolated] {
        let config = EvaluatorConfig {
            embedding_mode: mode,
            ..config.clone()
        };
        let mut samples = Vec::new();
        for a in &annotations {
            let (Some(sheet), Some(gap)) = (by_id.get(a.respondent_id.as_str()), test.gap(&a.gap_id)) else {
                continue;
            };
            let response = sheet.response_for(&a.gap_id);
            if let Some(similarity) = evaluator::score_similarity(gap, &response.raw_text, &http, &config).map_err(|e| err(&e))? {
                samples.push(calibration::CalibrationSample {
                    gap_id: a.gap_id.clone(),
                    respondent_id: a.respondent_id.clone(),
                    similarity,
                    human_ordinal: calibration::human_to_ordinal(a.label),
                });
            }
        }
        runs.push(calibration::calibrate(&samples, model, mode).map_err(|e| err(&e))?);
    }
    let summary = format!(
        "rho {:.3} (0.832), kappa {:.3} (0.727), AUC contextual {:.3} vs isolated {:.3}",
        agreement.spearman, agreement.kappa, runs[0].auc, runs[1].auc
    );
    ensure((agreement.spearman - 0.832).abs() <= 0.02, || summary.clone())?;
    ensure((agreement.kappa - 0.727).abs() <= 0.02, || summary.clone())?;
    ensure(runs[0].auc > runs[1].auc, || summary.clone())?;
    Ok(summary)
}
