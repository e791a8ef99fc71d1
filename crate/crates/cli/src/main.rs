//! `hotscore`: hot-comment scoring pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 provider
//! error.

mod artifacts;
mod config;
mod error;
mod pipeline;
mod report;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hotscore::corpus::parse_corpus;
use hotscore::providers::EntityLinker;
use hotscore::reward::RankedSequence;
use hotscore::weights::LabeledComponents;
use serde::Serialize;

use crate::artifacts::{write_json, write_text};
use crate::config::{read_json, read_jsonl, RunConfig};
use crate::error::{Classify, CliError, CliResult};
use crate::stages::{IngestSummary, Refinement};

#[derive(Parser, Debug)]
#[command(name = "hotscore", version, about = "Score, filter and refine short-video comments")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Print the resolved configuration and exit without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Worker threads for comment scoring.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Parse a corpus, reporting malformed lines.
    Ingest(IngestArgs),
    /// Apply the comment and video filtering rules.
    Filter(FilterArgs),
    /// Score every comment of a corpus.
    Score(ScoreArgs),
    /// Fit metric weights against binary labels.
    FitWeights(FitArgs),
    /// Train a linear scorer on ranked comment sequences.
    TrainReward(TrainArgs),
    /// Build and optimize the thought tree for one comment and refine it.
    TotRefine(TotArgs),
    /// Compute ranking and generation metrics over a task file.
    Evaluate(EvalArgs),
    /// Walk through the fusion and training losses on sample inputs.
    ExplainLosses(LossArgs),
    /// Summarize a pipeline directory.
    Report(ReportArgs),
    /// Run every stage, writing artifacts into one directory.
    #[command(alias = "pipeline")]
    Run(RunArgs),
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Normalized corpus output.
    #[arg(long)]
    out: PathBuf,
    /// Counts and malformed lines.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Fail on the first malformed line.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug, Serialize)]
struct FilterArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory of `<category>.txt` lexicons.
    #[arg(long)]
    lexicons: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    /// Labeled component rows (JSONL).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Starting weights; table defaults otherwise.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Corpus with annotator ratings; enables the agreement filter.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Also fit the four top-level weights against label `F`.
    #[arg(long)]
    fit_top_level: bool,
    /// Per-pair fit diagnostics.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Training diagnostics.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TotArgs {
    /// Corpus holding the video.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    video: String,
    #[arg(long)]
    comment: String,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long)]
    tasks: PathBuf,
    /// Comma-separated: r@K, mr, mrr, bleu, rouge_l.
    #[arg(long, default_value = stages::DEFAULT_METRICS)]
    metrics: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct LossArgs {
    /// JSON inputs; built-in sample values otherwise.
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Trace output; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Pipeline output directory.
    #[arg(long)]
    dir: PathBuf,
    /// Defaults to `<dir>/report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to `<dir>/report.txt`.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RunArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    lexicons: Option<PathBuf>,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    params: Option<PathBuf>,
}

fn set(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

/// Config file, then global flags, then subcommand flags.
fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }
    match &cli.command {
        Command::Ingest(a) => set(&mut cfg.corpus, &a.corpus),
        Command::Filter(a) => {
            set(&mut cfg.corpus, &a.corpus);
            set(&mut cfg.lexicons, &a.lexicons);
        }
        Command::Score(a) => {
            set(&mut cfg.corpus, &a.corpus);
            set(&mut cfg.weights, &a.weights);
            set(&mut cfg.params, &a.params);
        }
        Command::FitWeights(a) => {
            set(&mut cfg.weights, &a.weights);
            set(&mut cfg.corpus, &a.corpus);
            cfg.fit_top_level |= a.fit_top_level;
        }
        Command::TotRefine(a) => {
            set(&mut cfg.corpus, &a.corpus);
            set(&mut cfg.kb, &a.kb);
        }
        Command::Run(a) => {
            set(&mut cfg.corpus, &a.corpus);
            set(&mut cfg.lexicons, &a.lexicons);
            set(&mut cfg.kb, &a.kb);
            set(&mut cfg.weights, &a.weights);
            set(&mut cfg.params, &a.params);
        }
        Command::TrainReward(_) | Command::Evaluate(_) | Command::ExplainLosses(_) | Command::Report(_) => {}
    }
    cfg.finish()
}

fn say(quiet: bool, msg: impl std::fmt::Display) {
    if !quiet {
        eprintln!("{msg}");
    }
}

fn load_corpus(path: &Path) -> CliResult<hotscore::corpus::Corpus> {
    parse_corpus(path)
        .data_err("reading corpus")?
        .strict()
        .data_err(format!("{}", path.display()))
}

fn execute(cli: &Cli, cfg: &RunConfig) -> CliResult<()> {
    let quiet = cli.quiet;
    match &cli.command {
        Command::Ingest(a) => {
            let path = cfg.corpus_path()?;
            let corpus = parse_corpus(path).data_err("reading corpus")?;
            for e in &corpus.malformed {
                log::warn!("{}: {e}", path.display());
            }
            let summary = IngestSummary::of(&corpus);
            if let Some(report) = &a.report {
                write_json(report, &summary)?;
            }
            if a.strict && !corpus.malformed.is_empty() {
                return Err(CliError::data(format!("{} malformed line(s)", corpus.malformed.len())));
            }
            write_text(&a.out, &corpus.to_jsonl())?;
            say(
                quiet,
                format_args!(
                    "ingested {} videos, {} comments, {} malformed",
                    summary.videos,
                    summary.comments,
                    summary.malformed.len()
                ),
            );
        }
        Command::Filter(a) => {
            let corpus = load_corpus(cfg.corpus_path()?)?;
            let (kept, summary) = stages::filter(corpus, cfg)?;
            write_text(&a.out, &kept.to_jsonl())?;
            if let Some(report) = &a.report {
                write_json(report, &summary)?;
            }
            say(
                quiet,
                format_args!("kept {} videos, {} comments", kept.videos.len(), kept.comments.len()),
            );
        }
        Command::Score(a) => {
            let corpus = load_corpus(cfg.corpus_path()?)?;
            let providers = cfg.providers()?;
            let scores = stages::score(&corpus, &providers, cfg)?;
            write_text(&a.out, &stages::scores_jsonl(&scores))?;
            say(quiet, format_args!("scored {} comments", scores.len()));
        }
        Command::FitWeights(a) => {
            let rows: Vec<LabeledComponents> = read_jsonl(&a.labels)?;
            let rows = match &cfg.corpus {
                Some(p) => stages::agreement_filter(rows, &load_corpus(p)?.comments, cfg)?.0,
                None => rows,
            };
            let (weights, log) = stages::fit(&rows, cfg)?;
            write_json(&a.out, &weights)?;
            if let Some(p) = &a.log {
                write_json(p, &log)?;
            }
            say(
                quiet,
                format_args!("fitted on {} rows (fitted: {})", rows.len(), weights.fitted),
            );
        }
        Command::TrainReward(a) => {
            let sequences: Vec<RankedSequence> = read_jsonl(&a.sequences)?;
            let (scorer, training) = stages::train(&sequences, cfg)?;
            write_json(&a.out, &scorer)?;
            if let Some(p) = &a.report {
                write_json(p, &training)?;
            }
            say(
                quiet,
                format_args!(
                    "trained on {} sequences; pairwise accuracy {:.4}",
                    training.sequences, training.pairwise_accuracy
                ),
            );
        }
        Command::TotRefine(a) => {
            let corpus = load_corpus(cfg.corpus_path()?)?;
            let video = corpus
                .video(&a.video)
                .ok_or_else(|| CliError::data(format!("video {} not in corpus", a.video)))?;
            let providers = cfg.providers()?;
            let linker = cfg.linker()?;
            let out = stages::refine(
                video,
                &a.comment,
                &providers,
                linker.as_ref().map(|l| l as &dyn EntityLinker),
                cfg,
            )?;
            let refinement = Refinement {
                tree: out.tree,
                refined_comment: out.refined_comment,
            };
            write_json(&a.out, &refinement)?;
            say(quiet, &refinement.refined_comment);
        }
        Command::Evaluate(a) => {
            let metrics = stages::parse_metrics(&a.metrics)?;
            let lines: Vec<stages::TaskLine> = read_jsonl(&a.tasks)?;
            let report = stages::evaluate(&lines, &metrics, cfg.eval.max_n)?;
            write_json(&a.out, &report)?;
            say(
                quiet,
                format_args!(
                    "evaluated {} ranking and {} generation tasks",
                    report.ranking_tasks, report.generation_tasks
                ),
            );
        }
        Command::ExplainLosses(a) => {
            let inputs = match &a.inputs {
                Some(p) => read_json(p)?,
                None => stages::LossInputs::default(),
            };
            let trace = stages::explain_losses(inputs, &cfg.fusion)?;
            match &a.out {
                Some(p) => write_json(p, &trace)?,
                None => print!("{}", artifacts::to_json(&trace)),
            }
        }
        Command::Report(a) => {
            let report = report::build(&a.dir)?;
            let out = a.out.clone().unwrap_or_else(|| a.dir.join(artifacts::REPORT));
            let table = a.table.clone().unwrap_or_else(|| a.dir.join(artifacts::REPORT_TABLE));
            write_json(&out, &report)?;
            let text = report::render_text(&report);
            write_text(&table, &text)?;
            say(quiet, text.trim_end());
        }
        Command::Run(a) => {
            let report = pipeline::run(cfg, &a.out_dir)?;
            say(quiet, report::render_text(&report).trim_end());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DryRun<'a> {
    command: &'a Command,
    config: &'a RunConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = resolve(&cli).and_then(|cfg| {
        if cli.dry_run {
            print!(
                "{}",
                artifacts::to_json(&DryRun {
                    command: &cli.command,
                    config: &cfg,
                })
            );
            Ok(())
        } else {
            execute(&cli, &cfg)
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
