//! Command-line entry point for the measurement workflow. One subcommand
//! per stage, each independently rerunnable:
//!
//! `validate` -> `personas` -> `run` -> `score` -> `analyze` -> `report`,
//! with `cvi` for expert-review content validity.
//!
//! Exit codes: 0 success, 1 validation or analysis findings, 2 usage/IO
//! errors.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use psymetric_core::measure::{
    content_validity_index, load_measure_file, render_cvi_table, validate_measure, ExpertReview,
    MeasureError,
};
use psymetric_core::persona::{PersonaFile, TraitSet, DEFAULT_SEED_TEMPLATE};
use psymetric_core::protocol::{
    administer, FixedClock, HttpChatClient, Phase, ProtocolConfig, SystemClock, TranscriptStore,
};
use psymetric_core::report::{analyze_scores, render_markdown, write_validity_csv, AnalysisReport};
use psymetric_core::scoring::{
    read_item_scores_csv, read_measure_scores_csv, score_run, write_item_scores_csv,
    write_measure_scores_csv, ScoreSheet,
};
use psymetric_core::simulant::{SimulantClient, SimulantConfig};
use psymetric_core::stats::{ReliabilityInterpretation, SplitScheme, ValidityVerdict};

use crate::io::{
    load_measures, load_personas, load_thresholds, provenance, sha256_file, write_json_pretty,
    write_text, PersonaDoc,
};

/// Environment variable holding the endpoint API key; `OPENAI_API_KEY` is
/// accepted as a fallback.
const API_KEY_ENV: &str = "PSYMETRIC_API_KEY";

#[derive(Parser)]
#[command(name = "psymetric", version, about = "Administer psychometric measures to chat models and analyze reliability and validity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check measure files against the schema and every invariant.
    Validate(ValidateArgs),
    /// Generate seeded trait-combination personas.
    Personas(PersonasArgs),
    /// Administer measures to an endpoint (or the simulant) into a store.
    Run(RunArgs),
    /// Score a transcript store into item/measure score CSVs.
    Score(ScoreArgs),
    /// Compute descriptives, reliability, and validity from score CSVs.
    Analyze(AnalyzeArgs),
    /// Render an analysis report as Markdown.
    Report(ReportArgs),
    /// Compute the content validity index from expert reviews.
    Cvi(CviArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Measure file(s) to validate.
    #[arg(long = "measure", required = true)]
    measures: Vec<PathBuf>,
}

#[derive(Args)]
struct PersonasArgs {
    /// Trait-set file (JSON: {"traits": [...]}).
    #[arg(long)]
    traits: PathBuf,
    /// Number of personas to draw.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Seeding-prompt template containing `{traits}` exactly once.
    #[arg(long)]
    template: Option<String>,
    /// Output persona file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PhasesArg {
    Test,
    TestRetest,
}

impl PhasesArg {
    fn phases(self) -> Vec<Phase> {
        match self {
            PhasesArg::Test => vec![Phase::Test],
            PhasesArg::TestRetest => vec![Phase::Test, Phase::Retest],
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Measure file(s) to administer.
    #[arg(long = "measure", required = true)]
    measures: Vec<PathBuf>,
    /// Persona file from `psymetric personas`.
    #[arg(long)]
    personas: PathBuf,
    /// Transcript store (JSONL, append-only; reruns resume).
    #[arg(long)]
    store: PathBuf,
    /// Manifest output path (default: <store>.manifest.json).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Administration phases.
    #[arg(long, value_enum, default_value = "test")]
    phases: PhasesArg,
    /// Simulant latent-model config; runs without any network.
    #[arg(long, conflicts_with_all = ["endpoint", "model"])]
    simulant: Option<PathBuf>,
    /// Chat-completions endpoint base URL.
    #[arg(long, requires = "model")]
    endpoint: Option<String>,
    /// Model identifier sent to the endpoint.
    #[arg(long)]
    model: Option<String>,
    /// Sampling temperature.
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Nucleus sampling mass.
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
    /// Response token cap.
    #[arg(long, default_value_t = 256)]
    max_tokens: u32,
    /// Decoding seed forwarded to the endpoint.
    #[arg(long)]
    request_seed: Option<u64>,
    /// Maximum concurrently outstanding requests.
    #[arg(long, default_value_t = 1)]
    max_in_flight: usize,
    /// Retries per request after a transient failure (cap 10).
    #[arg(long, default_value_t = 3)]
    retry_limit: u32,
    /// Per-request timeout in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
}

#[derive(Args)]
struct ScoreArgs {
    /// Transcript store produced by `psymetric run`.
    #[arg(long)]
    store: PathBuf,
    /// The measure file(s) the store was administered from.
    #[arg(long = "measure", required = true)]
    measures: Vec<PathBuf>,
    /// The persona file the store was administered with.
    #[arg(long)]
    personas: PathBuf,
    /// Output directory for item_scores.csv and measure_scores.csv.
    #[arg(long)]
    out: PathBuf,
    /// Thresholds override file (JSON).
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SplitSchemeArg {
    OddEven,
    FirstSecond,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory holding item_scores.csv and measure_scores.csv.
    #[arg(long)]
    scores: PathBuf,
    /// Output directory for analysis.json and validity.csv.
    #[arg(long)]
    out: PathBuf,
    /// Thresholds override file (JSON).
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Item split used for split-half reliability.
    #[arg(long, value_enum, default_value = "odd-even")]
    split_scheme: SplitSchemeArg,
}

#[derive(Args)]
struct ReportArgs {
    /// analysis.json written by `psymetric analyze`.
    #[arg(long)]
    analysis: PathBuf,
    /// Markdown output path (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CviArgs {
    /// Measure file the reviews rate.
    #[arg(long)]
    measure: PathBuf,
    /// Expert review file (JSON array).
    #[arg(long)]
    reviews: PathBuf,
    /// Optional JSON report output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Personas(args) => cmd_personas(args),
        Command::Run(args) => cmd_run(args),
        Command::Score(args) => cmd_score(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Report(args) => cmd_report(args),
        Command::Cvi(args) => cmd_cvi(args),
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode> {
    let mut findings = false;
    for path in &args.measures {
        match load_measure_file(path) {
            Ok(spec) => {
                // load_measure_file already enforces invariants; re-run the
                // diagnostic pass so --measure output is uniform.
                let diags = validate_measure(&spec);
                if diags.is_empty() {
                    println!("{}: OK ({}, {} items)", path.display(), spec.id, spec.items.len());
                } else {
                    findings = true;
                    for d in diags {
                        println!("{}: {}", path.display(), d);
                    }
                }
            }
            Err(MeasureError::Invariant { measure_id, diagnostics }) => {
                findings = true;
                for d in diagnostics {
                    println!("{}: [{}] {}", path.display(), measure_id, d);
                }
            }
            Err(e @ MeasureError::Schema { .. }) | Err(e @ MeasureError::Io(_)) => {
                return Err(anyhow::Error::new(e).context(format!("{}", path.display())));
            }
        }
    }
    Ok(if findings { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_personas(args: PersonasArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.traits)
        .with_context(|| format!("cannot read trait file {}", args.traits.display()))?;
    let trait_set: TraitSet = serde_json::from_str(&text)
        .with_context(|| format!("trait file {} does not parse", args.traits.display()))?;
    let template = args.template.as_deref().unwrap_or(DEFAULT_SEED_TEMPLATE);

    let file = PersonaFile::generate(trait_set, args.n, args.seed, template)?;
    let doc = PersonaDoc {
        provenance: provenance(
            "personas",
            json!({
                "traits_file": args.traits.display().to_string(),
                "traits_sha256": sha256_file(&args.traits)?,
                "n": args.n,
                "seed": args.seed,
            }),
        ),
        file,
    };
    write_json_pretty(&args.out, &doc)?;
    println!("wrote {} personas to {}", doc.file.personas.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let measures = load_measures(&args.measures)?;
    for (path, measure) in args.measures.iter().zip(&measures) {
        let diags = validate_measure(measure);
        if !diags.is_empty() {
            bail!("measure {} fails validation; run `psymetric validate` first", path.display());
        }
    }
    let personas = load_personas(&args.personas)?;
    let phases = args.phases.phases();

    let config = ProtocolConfig {
        endpoint_url: args.endpoint.clone().unwrap_or_else(|| "simulant://local".into()),
        model_id: args.model.clone().unwrap_or_else(|| "simulant".into()),
        temperature: args.temperature,
        top_p: args.top_p,
        max_tokens: args.max_tokens,
        request_seed: args.request_seed,
        max_in_flight: args.max_in_flight,
        retry_limit: args.retry_limit,
        timeout_ms: args.timeout_ms,
        backoff_base_ms: 200,
    };

    let store = TranscriptStore::new(&args.store);
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| args.store.with_extension("manifest.json"));

    let manifest = match &args.simulant {
        Some(sim_path) => {
            let text = std::fs::read_to_string(sim_path)
                .with_context(|| format!("cannot read simulant config {}", sim_path.display()))?;
            let sim_config: SimulantConfig = serde_json::from_str(&text)
                .with_context(|| format!("simulant config {} does not parse", sim_path.display()))?;
            let client = SimulantClient::new(sim_config, measures.clone())
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            // Fixed clock: simulant stores carry no volatile fields, so a
            // rerun from the same inputs reproduces byte-identical outputs.
            administer(&measures, &personas.file.personas, &phases, &client, &config, &store, &FixedClock(0))
        }
        None => {
            if args.endpoint.is_none() {
                bail!("provide either --simulant <config> or --endpoint <url> --model <id>");
            }
            let api_key = std::env::var(API_KEY_ENV)
                .or_else(|_| std::env::var("OPENAI_API_KEY"))
                .ok();
            let client = HttpChatClient::new(&config, api_key).map_err(|e| anyhow::anyhow!("{e}"))?;
            administer(&measures, &personas.file.personas, &phases, &client, &config, &store, &SystemClock)
        }
    }
    .context("administration failed")?;

    write_json_pretty(&manifest_path, &manifest)?;
    println!(
        "run {}: {} planned, {} completed, {} failed -> {}",
        manifest.run_id,
        manifest.planned,
        manifest.completed_keys.len(),
        manifest.failed_keys.len(),
        args.store.display()
    );
    if !manifest.failed_keys.is_empty() {
        for failed in manifest.failed_keys.iter().take(5) {
            eprintln!("failed: {} ({})", failed.key, failed.error);
        }
        eprintln!("failed keys stay missing for the scorer; rerun to retry them");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_score(args: ScoreArgs) -> Result<ExitCode> {
    let measures = load_measures(&args.measures)?;
    let personas = load_personas(&args.personas)?;
    let (thresholds, _) = load_thresholds(args.thresholds.as_ref())?;

    let store = TranscriptStore::new(&args.store);
    let contents = store.load().with_context(|| {
        format!(
            "cannot load transcript store {} (produce one with `psymetric run`)",
            args.store.display()
        )
    })?;
    for corrupt in &contents.corrupt {
        eprintln!(
            "warning: skipped corrupt store line {}: {}",
            corrupt.line, corrupt.reason
        );
    }

    let mut phases: Vec<Phase> = contents.transcripts.iter().map(|t| t.key.phase).collect();
    phases.sort();
    phases.dedup();
    if phases.is_empty() {
        bail!("store {} holds no transcripts", args.store.display());
    }

    let sheet = score_run(
        &measures,
        &personas.file.personas,
        &phases,
        &contents.transcripts,
        thresholds.missing,
    );

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let prov = serde_json::to_string(&provenance(
        "score",
        json!({
            "store": args.store.display().to_string(),
            "store_sha256": sha256_file(&args.store)?,
            "measures": measures.iter().map(|m| m.id.clone()).collect::<Vec<_>>(),
            "personas_sha256": sha256_file(&args.personas)?,
            "missing_threshold": thresholds.missing,
        }),
    ))?;

    let item_path = args.out.join("item_scores.csv");
    let mut buf = Vec::new();
    write_item_scores_csv(&mut buf, &sheet.item_scores, &prov)?;
    write_text(&item_path, std::str::from_utf8(&buf)?)?;

    let measure_path = args.out.join("measure_scores.csv");
    let mut buf = Vec::new();
    write_measure_scores_csv(&mut buf, &sheet.measure_scores, &prov)?;
    write_text(&measure_path, std::str::from_utf8(&buf)?)?;

    println!(
        "scored {} item responses across {} personas -> {}",
        sheet.item_scores.len(),
        personas.file.personas.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let item_path = args.scores.join("item_scores.csv");
    let measure_path = args.scores.join("measure_scores.csv");
    let item_text = std::fs::read_to_string(&item_path).with_context(|| {
        format!(
            "cannot read {} (produce scores with `psymetric score`)",
            item_path.display()
        )
    })?;
    let measure_text = std::fs::read_to_string(&measure_path)
        .with_context(|| format!("cannot read {}", measure_path.display()))?;

    let sheet = ScoreSheet {
        item_scores: read_item_scores_csv(&item_text)?,
        measure_scores: read_measure_scores_csv(&measure_text)?,
    };
    let (thresholds, relations) = load_thresholds(args.thresholds.as_ref())?;
    let scheme = match args.split_scheme {
        SplitSchemeArg::OddEven => SplitScheme::OddEven,
        SplitSchemeArg::FirstSecond => SplitScheme::FirstSecond,
    };

    let mut report = analyze_scores(&sheet, &thresholds, scheme, &relations);
    report.provenance = provenance(
        "analyze",
        json!({
            "item_scores_sha256": sha256_file(&item_path)?,
            "measure_scores_sha256": sha256_file(&measure_path)?,
            "thresholds": thresholds,
            "split_scheme": scheme,
        }),
    );

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    write_json_pretty(&args.out.join("analysis.json"), &report)?;
    if let Some(validity) = &report.validity {
        let mut buf = Vec::new();
        write_validity_csv(&mut buf, validity, &serde_json::to_string(&report.provenance)?)?;
        write_text(&args.out.join("validity.csv"), std::str::from_utf8(&buf)?)?;
    }

    // Findings: anything a measure developer would have to act on.
    let mut findings = Vec::new();
    for entry in &report.reliability {
        if let Some(row) = &entry.row {
            if row.interpretation == ReliabilityInterpretation::Low {
                findings.push(format!(
                    "low test-retest reliability for {} (rho = {:.3})",
                    row.measure_id, row.spearman_rho
                ));
            }
        }
    }
    if let Some(validity) = &report.validity {
        for cell in &validity.cells {
            match cell.verdict {
                ValidityVerdict::NotConvergent => findings.push(format!(
                    "no convergence between {} and {} (rho = {:.3})",
                    cell.measure_a, cell.measure_b, cell.rho
                )),
                ValidityVerdict::DiscriminantFailure => findings.push(format!(
                    "discriminant failure between {} and {} (rho = {:.3})",
                    cell.measure_a, cell.measure_b, cell.rho
                )),
                _ => {}
            }
        }
    }

    println!("analysis written to {}", args.out.join("analysis.json").display());
    if findings.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for finding in &findings {
            println!("finding: {finding}");
        }
        Ok(ExitCode::from(1))
    }
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.analysis).with_context(|| {
        format!(
            "cannot read {} (produce it with `psymetric analyze`)",
            args.analysis.display()
        )
    })?;
    let report: AnalysisReport = serde_json::from_str(&text)
        .with_context(|| format!("{} does not parse as an analysis report", args.analysis.display()))?;
    let markdown = render_markdown(&report);
    if let Some(out) = &args.out {
        write_text(out, &markdown)?;
        println!("report written to {}", out.display());
    } else {
        print!("{markdown}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_cvi(args: CviArgs) -> Result<ExitCode> {
    let measure = load_measure_file(&args.measure)
        .with_context(|| format!("loading measure {}", args.measure.display()))?;
    let text = std::fs::read_to_string(&args.reviews)
        .with_context(|| format!("cannot read reviews file {}", args.reviews.display()))?;
    let reviews: Vec<ExpertReview> = serde_json::from_str(&text)
        .with_context(|| format!("reviews file {} does not parse", args.reviews.display()))?;

    let report = content_validity_index(&measure, &reviews)?;
    print!("{}", render_cvi_table(&report));
    if let Some(out) = &args.out {
        let doc = json!({
            "provenance": provenance(
                "cvi",
                json!({
                    "measure": measure.id,
                    "measure_sha256": sha256_file(&args.measure)?,
                    "reviews_sha256": sha256_file(&args.reviews)?,
                }),
            ),
            "report": report,
        });
        write_json_pretty(out, &doc)?;
        println!("cvi report written to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}
