//! Command-line entry point.

use crate::bench::{self, AnswerSource, ReportFormat, OUTCOME_SCHEMA};
use crate::clock;
use crate::config::Config;
use crate::dialogue::{self, PipelineOptions, DIALOGUE_SCHEMA};
use crate::gateway::CacheMode;
use crate::ingest::{self, PAIR_SCHEMA};
use crate::knowledge::{self, KNOWLEDGE_SCHEMA};
use crate::model::{read_jsonl, write_jsonl, EvalOutcome, JsonlRead, KnowledgeStatus, QaPair, TopicManifest};
use crate::review::{self, ReviewStore};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "psyforge", version, about = "Build counseling-domain training corpora and evaluate models on them")]
pub struct Cli {
    /// JSON config file. Every key is optional; unknown keys are an error.
    /// Defaults: replay-only provider, no cache, min_chars 100, min_likes 5,
    /// support_threshold 0.5, one integration round, spans of 800 chars,
    /// k = 4, CJK-character tokenizer, hashing embedder.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for retry jitter and any randomized tie-breaking.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replay cache mode: read-write, read-only or bypass.
    #[arg(long, global = true)]
    pub cache_mode: Option<CacheMode>,
    /// Worker threads for per-item parallelism.
    #[arg(long, global = true, default_value_t = 4)]
    pub jobs: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw platform export into single-turn QA pairs.
    Ingest(IngestArgs),
    /// Generate dialogues or knowledge items.
    #[command(subcommand)]
    Forge(ForgeCommand),
    /// Run or report benchmark evaluations.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Serve the review API.
    Serve(ServeArgs),
    /// Write accepted items as chat-format JSONL.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw records (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cleaning report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Corpus statistics of the kept pairs (JSON).
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ForgeCommand {
    /// Turn QA pairs into evidence-grounded multi-turn dialogues.
    Dialogues(DialogueArgs),
    /// Build teacher-adjudicated QA from books.
    Knowledge(KnowledgeArgs),
}

#[derive(Debug, Args)]
pub struct DialogueArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Resume directory [default: <out>.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Queue refined dialogues in the review store.
    #[arg(long)]
    pub enqueue: bool,
    #[arg(long)]
    pub review_dir: Option<PathBuf>,
    /// Run summary (JSON).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KnowledgeArgs {
    /// Directory of UTF-8 text files, one per book.
    #[arg(long)]
    pub books: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Queue adjudicated items in the review store.
    #[arg(long)]
    pub enqueue: bool,
    #[arg(long)]
    pub review_dir: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Score one model on a benchmark file.
    Run(EvalRunArgs),
    /// Aggregate outcome files into a results table.
    Report(EvalReportArgs),
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    #[arg(long)]
    pub bench: PathBuf,
    /// Recorded model outputs (JSONL of item_id, raw_output); without it the
    /// configured provider is queried.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Model to query; overrides eval.model.model_id.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalReportArgs {
    /// Outcome file, optionally as NAME=PATH; the name defaults to the file stem.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<String>,
    /// Benchmark file; when given, absent cells follow its manifest.
    #[arg(long)]
    pub bench: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
    /// One row per model and level.
    #[arg(long)]
    pub by_level: bool,
    /// Output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long)]
    pub review_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub review_dir: Option<PathBuf>,
    /// Cleaned QA pairs to include as single exchanges.
    #[arg(long)]
    pub pairs: Vec<PathBuf>,
    /// Imported textbook exercises to include.
    #[arg(long)]
    pub exercises: Vec<PathBuf>,
    /// Leave out reviewed tasks.
    #[arg(long)]
    pub no_review: bool,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let mut c = Config::load(path)?;
            c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
            c
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.gateway.seed = seed;
    }
    if let Some(mode) = cli.cache_mode {
        cfg.gateway.cache_mode = mode;
    }
    Ok(cfg)
}

fn review_dir(flag: &Option<PathBuf>, cfg: &Config) -> PathBuf {
    flag.clone().or_else(|| cfg.review_dir.clone()).unwrap_or_else(|| PathBuf::from("review"))
}

fn read_all<T: serde::de::DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>> {
    let JsonlRead { items, diagnostics } = read_jsonl(path, schema)?;
    for d in &diagnostics {
        log::warn!("{}:{}: {}", path.display(), d.line, d.message);
    }
    Ok(items)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Ingest(a) => run_ingest(a, &cfg, cli.jobs),
        Command::Forge(ForgeCommand::Dialogues(a)) => run_dialogues(a, &cfg, cli.jobs),
        Command::Forge(ForgeCommand::Knowledge(a)) => run_knowledge(a, &cfg, cli.jobs),
        Command::Eval(EvalCommand::Run(a)) => run_eval(a, &cfg, cli.jobs),
        Command::Eval(EvalCommand::Report(a)) => run_report(a),
        Command::Serve(a) => run_serve(a, &cfg),
        Command::Export(a) => run_export(a, &cfg),
    }
}

#[derive(Serialize)]
struct IngestReport<'a> {
    skipped_lines: usize,
    #[serde(flatten)]
    clean: &'a ingest::CleanReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    topics: Option<ingest::LabelSummary>,
}

fn run_ingest(a: &IngestArgs, cfg: &Config, jobs: usize) -> Result<()> {
    let raw = ingest::parse_raw(&a.input)?;
    for d in &raw.diagnostics {
        log::warn!("{}:{}: {}", a.input.display(), d.line, d.message);
    }
    let (mut pairs, report) = ingest::clean(&raw.items, &cfg.ingest.clean)?;
    let mut topics = None;
    if let Some(path) = &cfg.ingest.topics {
        let manifest = TopicManifest::load(path)?;
        let gw = cfg.gateway()?;
        let (labeled, summary) = ingest::label_topics(pairs, &gw, &cfg.ingest.label_model, &manifest, jobs);
        pairs = labeled;
        topics = Some(summary);
    }
    write_jsonl(&a.out, PAIR_SCHEMA, &pairs)?;
    eprintln!("kept {} of {} candidate entries", report.kept_count, report.input_count);
    if let Some(path) = &a.report {
        write_json(path, &IngestReport { skipped_lines: raw.diagnostics.len(), clean: &report, topics })?;
    }
    if let Some(path) = &a.stats {
        write_json(path, &ingest::corpus_stats(&pairs, &[], cfg.eval.tokenizer))?;
    }
    Ok(())
}

fn run_dialogues(a: &DialogueArgs, cfg: &Config, jobs: usize) -> Result<()> {
    let pairs: Vec<QaPair> = read_all(&a.input, PAIR_SCHEMA)?;
    let pcfg = cfg.pipeline.clone().prepare()?;
    let gw = cfg.gateway()?;
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| a.out.with_extension("ckpt"));
    let store = if a.enqueue { Some(ReviewStore::open(&review_dir(&a.review_dir, cfg))?) } else { None };
    let opts = PipelineOptions {
        jobs,
        clock: Arc::from(clock::from_env()),
        cancel: None,
        sink: store.as_ref().map(|s| s as &dyn dialogue::DialogueSink),
    };
    let summary = dialogue::run_pipeline(&pairs, &gw, &pcfg, &ckpt, &opts)?;
    write_jsonl(&a.out, DIALOGUE_SCHEMA, &summary.dialogues)?;
    if let Some(path) = &a.summary {
        write_json(path, &summary)?;
    }
    eprintln!(
        "{} pairs: {} refined, {} rejected, {} integrated, {} low-evidence, {} parked",
        summary.total,
        summary.refined,
        summary.rejected,
        summary.integrated,
        summary.low_evidence,
        summary.parked.len()
    );
    if !summary.parked.is_empty() {
        bail!("{} items stopped on gateway errors; rerun to resume from {}", summary.parked.len(), ckpt.display());
    }
    Ok(())
}

fn run_knowledge(a: &KnowledgeArgs, cfg: &Config, jobs: usize) -> Result<()> {
    let books = knowledge::load_books(&a.books).with_context(|| format!("reading books from {}", a.books.display()))?;
    if books.is_empty() {
        bail!("no books found in {}", a.books.display());
    }
    let gw = cfg.gateway()?;
    let summary = knowledge::forge_knowledge(&books, &gw, &cfg.knowledge, jobs)?;
    write_jsonl(&a.out, KNOWLEDGE_SCHEMA, &summary.items)?;
    if a.enqueue {
        let store = ReviewStore::open(&review_dir(&a.review_dir, cfg))?;
        let ready: Vec<_> = summary.items.iter().filter(|i| i.status == KnowledgeStatus::Adjudicated).cloned().collect();
        let queued = knowledge::enqueue_for_review(&ready, &store)?;
        eprintln!("queued {queued} items for review");
    }
    if let Some(path) = &a.summary {
        write_json(path, &summary)?;
    }
    eprintln!(
        "{} spans: {} adjudicated, {} answered, {} drafted, {} skipped",
        summary.spans,
        summary.adjudicated,
        summary.answered,
        summary.drafted,
        summary.skipped_spans.len()
    );
    Ok(())
}

fn run_eval(a: &EvalRunArgs, cfg: &Config, jobs: usize) -> Result<()> {
    let benchmark = bench::load_benchmark(&a.bench)?;
    for d in &benchmark.diagnostics {
        log::warn!("{}:{}: {}", a.bench.display(), d.line, d.message);
    }
    let ecfg = cfg.eval_config(jobs)?;
    let gw;
    let source = match &a.transcript {
        Some(path) => AnswerSource::Transcript(bench::load_transcript(path)?),
        None => {
            gw = cfg.gateway()?;
            let mut spec = cfg.eval.model.clone();
            if let Some(m) = &a.model {
                spec.model_id = m.clone();
            }
            AnswerSource::Gateway { gateway: &gw, spec }
        }
    };
    let outcomes = bench::evaluate_model(&benchmark.items, &source, &ecfg);
    write_jsonl(&a.out, OUTCOME_SCHEMA, &outcomes)?;
    let name = a.model.clone().unwrap_or_else(|| stem(&a.out));
    let row = bench::aggregate(&name, &outcomes, Some(&benchmark.manifest));
    eprint!("{}", bench::render_report(&[row], ReportFormat::Markdown));
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

fn run_report(a: &EvalReportArgs) -> Result<()> {
    let manifest = match &a.bench {
        Some(path) => Some(bench::load_benchmark(path)?.manifest),
        None => None,
    };
    let mut rows = Vec::new();
    for spec in &a.inputs {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
            _ => (stem(Path::new(spec)), PathBuf::from(spec)),
        };
        if !path.exists() {
            bail!("{}: no such file", path.display());
        }
        let outcomes: Vec<EvalOutcome> = read_all(&path, OUTCOME_SCHEMA)?;
        if a.by_level {
            rows.extend(bench::aggregate_by_level(&name, &outcomes, manifest.as_ref()));
        } else {
            rows.push(bench::aggregate(&name, &outcomes, manifest.as_ref()));
        }
    }
    let text = bench::render_report(&rows, a.format);
    match &a.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_serve(a: &ServeArgs, cfg: &Config) -> Result<()> {
    let store = Arc::new(ReviewStore::open(&review_dir(&a.review_dir, cfg))?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(review::http::serve(store.clone(), a.addr, async {
        let _ = tokio::signal::ctrl_c().await;
    }))?;
    store.snapshot()?;
    Ok(())
}

fn run_export(a: &ExportArgs, cfg: &Config) -> Result<()> {
    let mut records = Vec::new();
    if !a.no_review {
        let dir = review_dir(&a.review_dir, cfg);
        if !dir.is_dir() {
            bail!("{}: review store not found", dir.display());
        }
        let store = ReviewStore::open(&dir)?;
        records.extend(review::task_records(&store.state().tasks));
    }
    for path in &a.pairs {
        let pairs: Vec<QaPair> = read_all(path, PAIR_SCHEMA)?;
        records.extend(pairs.iter().map(review::qa_pair_record));
    }
    for path in &a.exercises {
        let read = knowledge::load_exercises(path)?;
        for d in &read.diagnostics {
            log::warn!("{}:{}: {}", path.display(), d.line, d.message);
        }
        records.extend(read.items.iter().map(review::exercise_record));
    }
    let file = std::fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let n = review::write_sft(std::io::BufWriter::new(file), &records)?;
    eprintln!("exported {n} records to {}", a.out.display());
    Ok(())
}
