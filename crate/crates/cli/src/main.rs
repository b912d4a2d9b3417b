use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cloze_core::agreement::{self, AgreementReport, Annotation, MisspelledAs};
use cloze_core::backends::{
    CachedProvider, EmbeddingMode, EmbeddingProvider, FixtureStore, HttpBackend, HttpConfig,
    ProviderError, ProviderKey,
};
use cloze_core::calibration::{self, CalibrationReport};
use cloze_core::evaluator::{self, CorpusError, EvaluatorConfig, Providers, DEFAULT_THRESHOLD};
use cloze_core::io::{self, SimilarityRow};
use cloze_core::model::{Category, ClozeTest, EvaluationReport, ResponseSheet};
use cloze_core::textnorm::EditVariant;

#[derive(Parser)]
#[command(name = "cloze", version, about = "Score cloze test responses and check them against human raters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every response sheet and write reports.json and summary.csv.
    Evaluate(EvaluateArgs),
    /// Threshold calibration: AUC, best F1 and Spearman per model and mode.
    Calibrate(CalibrateArgs),
    /// Agreement between system verdicts and human annotations.
    Validate(ValidateArgs),
    /// Query every provider key the corpus needs and append it to a fixture.
    CacheWarm(CacheWarmArgs),
    /// Similarity of each annotated response, in the calibration input format.
    Score(ScoreArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Fixture,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Contextual,
    Isolated,
}

impl From<ModeArg> for EmbeddingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Contextual => EmbeddingMode::Contextual,
            ModeArg::Isolated => EmbeddingMode::Isolated,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Restricted,
    Unrestricted,
}

#[derive(Clone, Copy, ValueEnum)]
enum MisspelledArg {
    Exact,
    Acceptable,
}

#[derive(Args)]
struct CorpusArgs {
    /// Test definition (JSON).
    #[arg(long)]
    test: PathBuf,
    /// Response sheets (CSV).
    #[arg(long)]
    sheets: PathBuf,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "fixture")]
    backend: BackendKind,
    /// Fixture JSONL replayed by the fixture backend.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Sidecar base URL for the http backend.
    #[arg(long, env = "CLOZE_ENDPOINT")]
    endpoint: Option<String>,
    /// Read-through cache for the http backend; new answers are appended.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value = "sidecar")]
    backend_id: String,
    #[arg(long, default_value = "default")]
    tagger_id: String,
    /// Per-request timeout for the http backend, in seconds.
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
}

#[derive(Args)]
struct ScoringArgs {
    #[arg(long, default_value = "default")]
    model_id: String,
    #[arg(long, value_enum, default_value = "contextual")]
    mode: ModeArg,
    /// Minimum cosine similarity for an acceptable answer, in [0, 1].
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_threshold)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "restricted")]
    edit_variant: VariantArg,
}

impl ScoringArgs {
    fn config(&self) -> EvaluatorConfig {
        EvaluatorConfig {
            semantic_threshold: self.threshold,
            edit_variant: match self.edit_variant {
                VariantArg::Restricted => EditVariant::Restricted,
                VariantArg::Unrestricted => EditVariant::Unrestricted,
            },
            embedding_mode: self.mode.into(),
            model_id: self.model_id.clone(),
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Also validate against these annotations and write agreement.json.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    misspelled_as: MisspelledArg,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Precomputed samples (respondent_id,gap_id,similarity,human_label).
    /// Without it, similarities are computed from the corpus and providers.
    #[arg(long, conflicts_with_all = ["test", "sheets"])]
    samples: Option<PathBuf>,
    #[arg(long, requires_all = ["sheets", "annotations"])]
    test: Option<PathBuf>,
    #[arg(long)]
    sheets: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Models to compare; repeat the flag for several.
    #[arg(long = "model-id", default_value = "default")]
    model_ids: Vec<String>,
    /// Embedding modes to compare; repeat the flag for several.
    #[arg(long = "mode", value_enum, default_value = "contextual")]
    modes: Vec<ModeArg>,
    #[arg(long, value_enum, default_value = "restricted")]
    edit_variant: VariantArg,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Verdicts from an earlier `evaluate` run.
    #[arg(long, conflicts_with_all = ["test", "sheets"])]
    reports: Option<PathBuf>,
    #[arg(long, requires = "sheets")]
    test: Option<PathBuf>,
    #[arg(long)]
    sheets: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long, value_enum, default_value = "exact")]
    misspelled_as: MisspelledArg,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CacheWarmArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Sidecar base URL.
    #[arg(long, env = "CLOZE_ENDPOINT")]
    endpoint: String,
    /// Fixture JSONL to extend; created if absent.
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long, default_value = "sidecar")]
    backend_id: String,
    #[arg(long, default_value = "default")]
    tagger_id: String,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    annotations: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(format!("{t} is outside [0, 1]"))
    }
}

fn misspelled(arg: MisspelledArg) -> MisspelledAs {
    match arg {
        MisspelledArg::Exact => MisspelledAs::Exact,
        MisspelledArg::Acceptable => MisspelledAs::Acceptable,
    }
}

/// Either offline replay or a live sidecar, optionally behind a cache.
enum Backend {
    Fixture(FixtureStore),
    Http(Box<HttpBackend>),
    Cached(Box<CachedProvider<HttpBackend>>),
}

impl Backend {
    fn open(args: &BackendArgs) -> Result<Self> {
        match args.backend {
            BackendKind::Fixture => {
                let Some(path) = &args.fixture else {
                    usage_error("--backend fixture requires --fixture <PATH>");
                };
                let store = FixtureStore::load(path, &args.backend_id, &args.tagger_id)?;
                Ok(Backend::Fixture(store))
            }
            BackendKind::Http => {
                let Some(endpoint) = &args.endpoint else {
                    usage_error("--backend http requires --endpoint <URL> or CLOZE_ENDPOINT");
                };
                let http = HttpBackend::new(HttpConfig {
                    endpoint: endpoint.clone(),
                    backend_id: args.backend_id.clone(),
                    tagger_id: args.tagger_id.clone(),
                    timeout: Duration::from_secs(args.timeout_secs),
                });
                match &args.cache {
                    Some(path) => Ok(Backend::Cached(Box::new(CachedProvider::persistent(
                        http,
                        path,
                        &args.backend_id,
                        &args.tagger_id,
                    )?))),
                    None => Ok(Backend::Http(Box::new(http))),
                }
            }
        }
    }

    fn providers(&self) -> Providers<'_> {
        match self {
            Backend::Fixture(f) => Providers::new(f, f),
            Backend::Http(h) => Providers::new(h.as_ref(), h.as_ref()),
            Backend::Cached(c) => Providers::new(c.as_ref(), c.as_ref()),
        }
    }

    fn embeddings(&self) -> &dyn EmbeddingProvider {
        self.providers().embeddings
    }
}

fn usage_error(message: &str) -> ! {
    use clap::CommandFactory;
    Cli::command()
        .error(clap::error::ErrorKind::MissingRequiredArgument, message)
        .exit()
}

fn load_corpus(test: &Path, sheets: &Path) -> Result<(ClozeTest, Vec<ResponseSheet>)> {
    let test = io::load_test(test)?;
    let sheets = io::load_sheets(sheets, &test)?;
    Ok((test, sheets))
}

/// Lists every fixture key that was missing, so it can be warmed.
fn explain_corpus_error(err: &CorpusError) -> anyhow::Error {
    let missing: BTreeSet<&ProviderKey> = err
        .provider_errors()
        .filter_map(|e| match e {
            ProviderError::FixtureMiss(key) => Some(&**key),
            _ => None,
        })
        .collect();
    for e in &err.errors {
        eprintln!("error: {e}");
        if let evaluator::SheetError::Gaps { failures, .. } = e {
            for f in failures {
                eprintln!("  {f}");
            }
        }
    }
    if !missing.is_empty() {
        eprintln!("{} fixture key(s) missing; run `cloze cache-warm` against a sidecar:", missing.len());
        for key in &missing {
            eprintln!("  {key}");
        }
    }
    anyhow::anyhow!("{} respondent(s) could not be evaluated", err.errors.len())
}

fn evaluate_corpus(
    test: &ClozeTest,
    sheets: &[ResponseSheet],
    backend: &Backend,
    config: &EvaluatorConfig,
    workers: usize,
) -> Result<Vec<EvaluationReport>> {
    evaluator::evaluate_sheets(test, sheets, backend.providers(), config, workers)
        .map_err(|e| explain_corpus_error(&e))
}

fn print_counts(reports: &[EvaluationReport]) {
    let mut totals = [0usize; 6];
    for r in reports {
        for (t, c) in totals.iter_mut().zip(r.category_counts()) {
            *t += c;
        }
    }
    println!("evaluated {} respondent(s)", reports.len());
    for (cat, n) in Category::ALL.iter().zip(totals) {
        println!("  {:<14}{n}", cat.as_str());
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let (test, sheets) = load_corpus(&args.corpus.test, &args.corpus.sheets)?;
    let annotations = args.annotations.as_deref().map(io::load_annotations).transpose()?;
    let backend = Backend::open(&args.backend)?;
    let config = args.scoring.config();
    let reports = evaluate_corpus(&test, &sheets, &backend, &config, args.workers)?;
    print_counts(&reports);
    let agreement = annotations
        .map(|a| agreement::validate(&reports, &a, misspelled(args.misspelled_as)))
        .transpose()?;
    if let Some(a) = &agreement {
        print!("\n{}", a.render_table());
    }
    print_written(&io::write_reports(&reports, agreement.as_ref(), None, &args.out_dir)?);
    Ok(())
}

/// Similarity of every annotated, non-blank response. Exact and misspelled
/// answers are scored too, since calibration ranks them against the rest.
fn score_annotated(
    test: &ClozeTest,
    sheets: &[ResponseSheet],
    annotations: &[Annotation],
    embeddings: &dyn EmbeddingProvider,
    config: &EvaluatorConfig,
) -> Result<Vec<SimilarityRow>> {
    let by_id: HashMap<&str, &ResponseSheet> = sheets.iter().map(|s| (s.respondent_id.as_str(), s)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for a in annotations {
        let (Some(sheet), Some(gap)) = (by_id.get(a.respondent_id.as_str()), test.gap(&a.gap_id)) else {
            bail!("annotation {}/{} has no matching response", a.respondent_id, a.gap_id);
        };
        let response = sheet.response_for(gap.gap_id());
        match evaluator::score_similarity(gap, &response.raw_text, embeddings, config) {
            Ok(Some(similarity)) => rows.push(SimilarityRow {
                respondent_id: a.respondent_id.clone(),
                gap_id: a.gap_id.clone(),
                similarity,
                label: a.label,
            }),
            Ok(None) => {}
            Err(e) => failures.push(format!("{}/{e}", a.respondent_id)),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("  {f}");
        }
        bail!("{} response(s) could not be scored", failures.len());
    }
    Ok(rows)
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let (test, sheets) = load_corpus(&args.corpus.test, &args.corpus.sheets)?;
    let annotations = io::load_annotations(&args.annotations)?;
    let backend = Backend::open(&args.backend)?;
    let rows = score_annotated(&test, &sheets, &annotations, backend.embeddings(), &args.scoring.config())?;
    std::fs::write(&args.out, io::similarity_rows_to_csv(&rows))
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("scored {} response(s); wrote {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let mut runs: Vec<CalibrationReport> = Vec::new();
    if let Some(path) = &args.samples {
        let samples = io::load_calibration_samples(path)?;
        for model in &args.model_ids {
            for mode in &args.modes {
                runs.push(calibration::calibrate(&samples, model, (*mode).into())?);
            }
        }
    } else {
        let (Some(test), Some(sheets), Some(annotations)) = (&args.test, &args.sheets, &args.annotations) else {
            usage_error("calibrate needs --samples, or --test, --sheets and --annotations");
        };
        let (test, sheets) = load_corpus(test, sheets)?;
        let annotations = io::load_annotations(annotations)?;
        let backend = Backend::open(&args.backend)?;
        for model in &args.model_ids {
            for mode in &args.modes {
                let config = EvaluatorConfig {
                    model_id: model.clone(),
                    embedding_mode: (*mode).into(),
                    edit_variant: match args.edit_variant {
                        VariantArg::Restricted => EditVariant::Restricted,
                        VariantArg::Unrestricted => EditVariant::Unrestricted,
                    },
                    ..EvaluatorConfig::default()
                };
                let rows = score_annotated(&test, &sheets, &annotations, backend.embeddings(), &config)?;
                let samples: Vec<_> = rows.iter().map(SimilarityRow::to_sample).collect();
                runs.push(calibration::calibrate(&samples, model, (*mode).into())?);
            }
        }
    }
    let ranked = calibration::compare_configs(&runs);
    print!("{}", calibration::render_table(&ranked));
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    for (name, contents) in [
        ("calibration.csv", io::calibration_to_csv(&ranked)),
        ("calibration.json", io::calibration_to_json(&ranked)),
    ] {
        let path = args.out_dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let annotations = io::load_annotations(&args.annotations)?;
    let reports = match (&args.reports, &args.test, &args.sheets) {
        (Some(path), _, _) => io::load_reports(path)?,
        (None, Some(test), Some(sheets)) => {
            let (test, sheets) = load_corpus(test, sheets)?;
            let backend = Backend::open(&args.backend)?;
            evaluate_corpus(&test, &sheets, &backend, &args.scoring.config(), args.workers)?
        }
        _ => usage_error("validate needs --reports, or --test and --sheets"),
    };
    let report: AgreementReport = agreement::validate(&reports, &annotations, misspelled(args.misspelled_as))?;
    print!("{}", report.render_table());
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let path = args.out_dir.join("agreement.json");
    std::fs::write(&path, io::agreement_to_json(&report)).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_cache_warm(args: CacheWarmArgs) -> Result<()> {
    let (test, sheets) = load_corpus(&args.corpus.test, &args.corpus.sheets)?;
    let http = HttpBackend::new(HttpConfig {
        endpoint: args.endpoint.clone(),
        backend_id: args.backend_id.clone(),
        tagger_id: args.tagger_id.clone(),
        timeout: Duration::from_secs(args.timeout_secs),
    });
    let cache = CachedProvider::persistent(http, &args.fixture, &args.backend_id, &args.tagger_id)?;
    let report = evaluator::warm_corpus(
        &test,
        &sheets,
        Providers::new(&cache, &cache),
        &args.scoring.config(),
        args.workers,
    );
    let stats = cache.stats();
    println!(
        "{} response(s) needed providers; {} key(s) fetched and stored, {} already cached, {} response(s) failed",
        report.queried,
        stats.stored,
        stats.hits,
        report.failures.len()
    );
    if !report.failures.is_empty() {
        for (respondent, e) in &report.failures {
            eprintln!("  {respondent}/{e}");
        }
        bail!("cache warm incomplete: {} response(s) failed", report.failures.len());
    }
    println!("fixture: {}", args.fixture.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::CacheWarm(a) => cmd_cache_warm(a),
        Command::Score(a) => cmd_score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
