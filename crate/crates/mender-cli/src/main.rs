//! `mender` — last-mile program repair from the command line.
//!
//! Three subcommands bind the library into a tool: `repair` fixes one
//! program and prints ranked candidates, `bank` builds and inspects
//! retrieval banks of buggy/fixed pairs, and `eval` runs a dataset through
//! the whole pipeline and reports pass@k. Data goes to stdout, logs to
//! stderr; exit codes are documented per subcommand.

mod config;

use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mender::bank::{
    build_bank, select_shots, BankBuildOptions, BuggyFixedPair, Embedder, ExampleBank,
    HashEmbedder, PairSource, ShotQuery, ShotStrategy,
};
use mender::diag::DiagnosticReport;
use mender::engine::{Engine, Outcome, RepairResult, RepairTask};
use mender::eval::{
    load_dataset, render_report, run_eval, write_report_json, write_summary_csv, EvalOptions,
    Metric,
};
use mender::prompt::PromptConfig;
use mender::text::{LanguageId, LanguageRegistry, SourceProgram};

use config::{Effective, EffectiveOverrides, LoadedConfig, PromptOnlyProvider};

/// Version of the JSON shapes printed by `repair --format json` and
/// `bank query --format json`.
const CLI_OUTPUT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "mender",
    version,
    about = "Last-mile program repair: diagnose, prompt a code model, rank the fixes."
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration to stderr before running.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repair one program and print ranked candidate fixes.
    ///
    /// Exits 0 when at least one candidate survives ranking, 2 when the
    /// program already passes diagnostics, 1 on no candidates or error.
    Repair(RepairArgs),
    /// Build, query, or summarize an example bank.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Evaluate the pipeline over a JSONL dataset and report pass@k.
    Eval(Box<EvalArgs>),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

/// Flags shared by every command that assembles an engine.
#[derive(Args)]
struct EngineArgs {
    /// Shot-selection strategy: none, fixed, error-vector, or embedding.
    #[arg(long)]
    strategy: Option<String>,
    /// Number of shots to include in the prompt.
    #[arg(long)]
    shots: Option<usize>,
    /// Error-message style in prompts: detailed, abstracted, or none.
    #[arg(long)]
    message_style: Option<String>,
    /// Example bank file for the error-vector and embedding strategies.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// JSONL of buggy/fixed pairs used verbatim with --strategy fixed.
    #[arg(long)]
    shots_file: Option<PathBuf>,
    /// Diagnostics adapter config (TOML), overriding the config file.
    #[arg(long)]
    adapter: Option<PathBuf>,
    /// Scripted completions file; forces the offline mock provider.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Cache completions on disk under this directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Candidates sampled per repair.
    #[arg(long)]
    n: Option<usize>,
    /// Token budget per sampled candidate.
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Prompt budget in characters; shots are dropped from the end to fit.
    #[arg(long)]
    max_prompt_chars: Option<usize>,
    /// Omit the instruction line at the top of prompts.
    #[arg(long)]
    no_preamble: bool,
}

#[derive(Args)]
struct RepairArgs {
    /// Language id (python, c, javascript, excel, powershell, powerfx, toy).
    #[arg(long)]
    language: String,
    /// Program file to repair; reads stdin when omitted.
    #[arg(long)]
    file: Option<PathBuf>,
    /// How many ranked candidates to print.
    #[arg(long, default_value_t = 3)]
    top: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    /// Print the prompt that would be sent and exit without sampling.
    #[arg(long)]
    show_prompt: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Subcommand)]
enum BankCommand {
    /// Diagnose buggy/fixed pairs and write a retrieval bank.
    Build(BankBuildArgs),
    /// Retrieve the nearest bank entries for a buggy program.
    Query(BankQueryArgs),
    /// Summarize a bank file: entries, categories, sources.
    Stats(BankStatsArgs),
}

#[derive(Args)]
struct BankBuildArgs {
    /// Language id the pairs are written in.
    #[arg(long)]
    language: String,
    /// JSONL of {id, buggy, fixed, source?} pairs.
    #[arg(long)]
    pairs: PathBuf,
    /// Where to write the bank.
    #[arg(long)]
    output: PathBuf,
    /// Also embed each pair's error message (enables --strategy embedding).
    #[arg(long)]
    embed: bool,
    /// Message rendering that gets embedded: detailed or abstracted.
    #[arg(long, default_value = "detailed")]
    embed_style: String,
    /// Diagnostics adapter config (TOML), overriding the config file.
    #[arg(long)]
    adapter: Option<PathBuf>,
}

#[derive(Args)]
struct BankQueryArgs {
    /// Bank file to query.
    #[arg(long)]
    bank: PathBuf,
    /// Buggy program file; reads stdin when omitted.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Language id; defaults to the bank's language.
    #[arg(long)]
    language: Option<String>,
    /// Retrieval strategy: error-vector or embedding.
    #[arg(long, default_value = "error-vector")]
    strategy: String,
    /// How many entries to print.
    #[arg(short, long, default_value_t = 3)]
    n: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    /// Diagnostics adapter config (TOML), overriding the config file.
    #[arg(long)]
    adapter: Option<PathBuf>,
}

#[derive(Args)]
struct BankStatsArgs {
    /// Bank file to summarize.
    #[arg(long)]
    bank: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// JSONL dataset of {id, language, buggy, fixed?} tasks.
    #[arg(long)]
    dataset: PathBuf,
    /// Language id; defaults to the dataset's language.
    #[arg(long)]
    language: Option<String>,
    /// Success judge: exact-match or parse-and-distance.
    #[arg(long, default_value = "exact-match")]
    metric: String,
    /// pass@k columns, comma separated (e.g. 1,3,50).
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    ks: Vec<usize>,
    /// Judge this many top candidates per task (default: the largest k).
    #[arg(long)]
    max_k: Option<usize>,
    /// Localization windows in tokens, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    loc_ks: Vec<usize>,
    /// Edit-distance bound for parse-and-distance.
    #[arg(long, default_value_t = 5)]
    distance_threshold: usize,
    /// Drop the edit-distance bound (parse success alone decides).
    #[arg(long)]
    no_edit_limit: bool,
    /// Exclude each task's own bank entry during shot selection.
    #[arg(long)]
    leave_one_out: bool,
    /// Worker threads; the report is identical for any value.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the full JSON report here.
    #[arg(long)]
    output_json: Option<PathBuf>,
    /// Write the per-task CSV summary here.
    #[arg(long)]
    output_csv: Option<PathBuf>,
    /// Exit nonzero when more than this fraction of tasks errored.
    #[arg(long, default_value_t = 0.0)]
    max_error_fraction: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    #[command(flatten)]
    engine: EngineArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{}", render_error(&err));
            ExitCode::from(1)
        }
    }
}

/// Render an error chain, skipping causes whose text the parent message
/// already embeds (library errors display their sources inline).
fn render_error(err: &anyhow::Error) -> String {
    let mut out = format!("error: {err}");
    let mut prev = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !prev.contains(&text) {
            out.push_str("\n  caused by: ");
            out.push_str(&text);
        }
        prev = text;
    }
    out
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Repair(args) => cmd_repair(cli, args),
        Command::Bank(BankCommand::Build(args)) => cmd_bank_build(cli, args),
        Command::Bank(BankCommand::Query(args)) => cmd_bank_query(cli, args),
        Command::Bank(BankCommand::Stats(args)) => cmd_bank_stats(args),
        Command::Eval(args) => cmd_eval(cli, args),
    }
}

/// An engine plus the resolved settings, kept for `--verbose`.
struct BuiltEngine {
    engine: Engine,
    effective: Effective,
    provider_id: String,
}

fn build_engine(
    cfg: &LoadedConfig,
    language: &LanguageId,
    args: &EngineArgs,
    leave_one_out: bool,
    prompt_only: bool,
) -> Result<BuiltEngine> {
    let effective = Effective::resolve(
        cfg,
        &EffectiveOverrides {
            strategy: args.strategy.as_deref(),
            shots: args.shots,
            message_style: args.message_style.as_deref(),
            temperature: args.temperature,
            n: args.n,
            max_tokens: args.max_tokens,
            max_prompt_chars: args.max_prompt_chars,
        },
    )?;

    let registry = LanguageRegistry::builtin();
    let profile = registry
        .profile(language)
        .with_context(|| format!("language `{language}` has no built-in profile"))?
        .clone();

    let diagnostics = cfg.build_diagnostics(language, args.adapter.as_deref())?;
    let needs_diagnostics = effective.message_style.is_some() || effective.strategy.is_smart();
    if needs_diagnostics && diagnostics.is_none() {
        bail!(
            "no diagnostics adapter configured for `{language}`, but the current \
             message style / shot strategy needs one: set [languages.{language}].adapter \
             in the config file or pass --adapter (or use --message-style none)"
        );
    }

    let provider: Arc<dyn mender::llm::CompletionProvider> = if prompt_only {
        Arc::new(PromptOnlyProvider)
    } else {
        cfg.build_provider(args.mock_script.as_deref(), args.cache_dir.as_deref())?
    };
    let provider_id = provider.id().to_string();

    let section = cfg.language_section(language);
    let bank = if effective.strategy.is_smart() {
        let path = args
            .bank
            .clone()
            .or_else(|| section.and_then(|s| s.bank.as_deref()).map(|p| cfg.resolve(p)));
        let Some(path) = path else {
            bail!(
                "the {:?} strategy needs an example bank: set [languages.{language}].bank \
                 in the config file or pass --bank",
                effective.strategy
            );
        };
        Some(
            ExampleBank::load(&path)
                .with_context(|| format!("cannot load bank `{}`", path.display()))?,
        )
    } else {
        None
    };

    let embedder: Option<Arc<dyn Embedder>> = if effective.strategy == ShotStrategy::Embedding {
        // Prefer the exact embedder the bank was built with so dimensions
        // always line up; fall back to the configured one.
        let from_bank = bank
            .as_ref()
            .and_then(|b| b.embedding_provider())
            .and_then(HashEmbedder::from_provider_id);
        Some(match from_bank {
            Some(embedder) => Arc::new(embedder),
            None => cfg.build_embedder()?,
        })
    } else {
        None
    };

    let fixed_shots = if effective.strategy == ShotStrategy::Fixed {
        let path = args
            .shots_file
            .clone()
            .or_else(|| section.and_then(|s| s.shots_file.as_deref()).map(|p| cfg.resolve(p)));
        let Some(path) = path else {
            bail!(
                "the fixed strategy needs shots: set [languages.{language}].shots_file \
                 in the config file or pass --shots-file"
            );
        };
        load_pairs(&path)?
    } else {
        Vec::new()
    };

    let prompt = PromptConfig {
        message_style: effective.message_style,
        shot_strategy: effective.strategy,
        shots: effective.shots,
        max_prompt_chars: effective.max_prompt_chars,
        include_preamble: !args.no_preamble,
        ..PromptConfig::new(profile.display.clone())
    };

    let mut builder = Engine::builder(language.clone())
        .registry(registry)
        .provider(provider)
        .prompt_config(prompt)
        .sampling(effective.sampling.clone())
        .leave_one_out(leave_one_out);
    if let Some(diag) = diagnostics {
        builder = builder.diagnostics(diag);
    }
    if let Some(bank) = bank {
        builder = builder.bank(bank);
    }
    if let Some(embedder) = embedder {
        builder = builder.embedder(embedder);
    }
    if !fixed_shots.is_empty() {
        builder = builder.fixed_shots(fixed_shots);
    }
    let engine = builder.build()?;
    Ok(BuiltEngine {
        engine,
        effective,
        provider_id,
    })
}

// ---------------------------------------------------------------------------
// repair

fn cmd_repair(cli: &Cli, args: &RepairArgs) -> Result<u8> {
    let cfg = LoadedConfig::load(cli.config.as_deref())?;
    let language = LanguageId::new(args.language.as_str())?;
    let text = read_program(args.file.as_deref())?;
    let program = SourceProgram::new(language.clone(), text);

    let built = build_engine(&cfg, &language, &args.engine, false, args.show_prompt)?;
    if cli.verbose {
        eprint!("{}", built.effective.render(&language, &built.provider_id));
    }

    let task = RepairTask::new(task_id_for(args.file.as_deref()), program, None)?;

    if args.show_prompt {
        let (_report, prompt) = built.engine.preview_prompt(&task)?;
        return match prompt {
            Some(prompt) => {
                print!("{}", prompt.text);
                io::stdout().flush()?;
                Ok(0)
            }
            None => {
                println!("program already passes diagnostics");
                Ok(2)
            }
        };
    }

    let result = built.engine.repair(&task)?;
    match args.format {
        OutputFormat::Text => print_repair_text(&result, args.top),
        OutputFormat::Json => print_repair_json(&task, &language, &result, args.top)?,
    }
    Ok(match result.outcome {
        Outcome::Candidates(_) => 0,
        Outcome::AlreadyValid => 2,
        Outcome::NoCandidates => 1,
    })
}

fn print_repair_text(result: &RepairResult, top: usize) {
    match &result.outcome {
        Outcome::AlreadyValid => println!("program already passes diagnostics"),
        Outcome::NoCandidates => println!("no candidates survived filtering"),
        Outcome::Candidates(candidates) => {
            for (i, candidate) in candidates.iter().take(top).enumerate() {
                println!("--- candidate {} (score {:.4})", i + 1, candidate.score);
                print!("{}", candidate.text);
                if !candidate.text.ends_with('\n') {
                    println!();
                }
            }
        }
    }
}

#[derive(Serialize)]
struct RepairOutput<'a> {
    schema_version: u32,
    task_id: &'a str,
    language: &'a str,
    outcome: &'static str,
    candidates: Vec<CandidateOutput<'a>>,
    trace: TraceOutput<'a>,
}

#[derive(Serialize)]
struct CandidateOutput<'a> {
    rank: usize,
    score: f64,
    text: &'a str,
}

#[derive(Serialize)]
struct TraceOutput<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a DiagnosticReport>,
    shot_ids: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt_hash: Option<&'a str>,
    prompt_truncated: bool,
    raw_candidates: usize,
    filtered_candidates: usize,
}

fn print_repair_json(
    task: &RepairTask,
    language: &LanguageId,
    result: &RepairResult,
    top: usize,
) -> Result<()> {
    let (outcome, candidates) = match &result.outcome {
        Outcome::AlreadyValid => ("already_valid", Vec::new()),
        Outcome::NoCandidates => ("no_candidates", Vec::new()),
        Outcome::Candidates(list) => (
            "candidates",
            list.iter()
                .take(top)
                .enumerate()
                .map(|(i, c)| CandidateOutput {
                    rank: i + 1,
                    score: c.score,
                    text: c.text.as_str(),
                })
                .collect(),
        ),
    };
    let output = RepairOutput {
        schema_version: CLI_OUTPUT_VERSION,
        task_id: task.id(),
        language: language.as_str(),
        outcome,
        candidates,
        trace: TraceOutput {
            report: result.trace.report.as_ref(),
            shot_ids: &result.trace.shot_ids,
            prompt_hash: result.trace.prompt_hash.as_deref(),
            prompt_truncated: result.trace.prompt_truncated,
            raw_candidates: result.trace.raw_candidates,
            filtered_candidates: result.trace.filtered_candidates,
        },
    };
    let stdout = io::stdout();
    let mut handle = stdout.lock();
    serde_json::to_writer_pretty(&mut handle, &output)?;
    handle.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// bank

fn cmd_bank_build(cli: &Cli, args: &BankBuildArgs) -> Result<u8> {
    let cfg = LoadedConfig::load(cli.config.as_deref())?;
    let language = LanguageId::new(args.language.as_str())?;
    let diag = cfg
        .build_diagnostics(&language, args.adapter.as_deref())?
        .ok_or_else(|| {
            anyhow::anyhow!(
                "bank build needs a diagnostics adapter for `{language}`: set \
                 [languages.{language}].adapter in the config file or pass --adapter"
            )
        })?;

    let pairs = load_pairs(&args.pairs)?;
    if pairs.is_empty() {
        bail!("no pairs found in `{}`", args.pairs.display());
    }

    let embedder = if args.embed {
        Some(cfg.build_embedder()?)
    } else {
        None
    };
    let embed_style = match config::parse_message_style(&args.embed_style)? {
        Some(style) => style,
        None => bail!("--embed-style must be detailed or abstracted"),
    };

    let outcome = build_bank(
        pairs,
        diag.as_ref(),
        embedder.as_deref(),
        &BankBuildOptions { embed_style },
    )?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    outcome.bank.save(&args.output)?;
    println!(
        "bank written: {} ({} entries, {} categories{})",
        args.output.display(),
        outcome.bank.len(),
        outcome.bank.category_index().len(),
        match outcome.bank.embedding_provider() {
            Some(provider) => format!(", embeddings by {provider}"),
            None => String::new(),
        }
    );
    Ok(0)
}

fn cmd_bank_query(cli: &Cli, args: &BankQueryArgs) -> Result<u8> {
    let cfg = LoadedConfig::load(cli.config.as_deref())?;
    let bank = ExampleBank::load(&args.bank)
        .with_context(|| format!("cannot load bank `{}`", args.bank.display()))?;

    let language = match args.language.as_deref() {
        Some(name) => {
            let id = LanguageId::new(name)?;
            if &id != bank.language() {
                bail!("bank `{}` holds `{}` pairs, not `{id}`", args.bank.display(), bank.language());
            }
            id
        }
        None => bank.language().clone(),
    };

    let strategy = config::parse_strategy(&args.strategy)?;
    if !strategy.is_smart() {
        bail!("query strategy must be error-vector or embedding");
    }

    let diag = cfg
        .build_diagnostics(&language, args.adapter.as_deref())?
        .ok_or_else(|| {
            anyhow::anyhow!(
                "bank query needs a diagnostics adapter for `{language}`: set \
                 [languages.{language}].adapter in the config file or pass --adapter"
            )
        })?;

    let text = read_program(args.file.as_deref())?;
    let program = SourceProgram::new(language, text);
    let report = diag.diagnose(&program)?;
    if report.exit_ok {
        eprintln!("note: the program already passes diagnostics; retrieval runs on an empty error profile");
    }

    let embedder: Option<Arc<dyn Embedder>> = if strategy == ShotStrategy::Embedding {
        let from_bank = bank
            .embedding_provider()
            .and_then(HashEmbedder::from_provider_id);
        Some(match from_bank {
            Some(embedder) => Arc::new(embedder),
            None => cfg.build_embedder()?,
        })
    } else {
        None
    };

    let query = ShotQuery {
        report: &report,
        n: args.n,
        strategy,
        fixed_set: &[],
        exclude_id: None,
    };
    let shots = select_shots(
        Some(&bank),
        &query,
        embedder.as_deref(),
        diag.abstraction_patterns(),
    )?;

    let measure = match strategy {
        ShotStrategy::ErrorVector => "l2_distance",
        ShotStrategy::Embedding => "cosine_similarity",
        _ => unreachable!("query strategy is always smart"),
    };
    match args.format {
        OutputFormat::Text => {
            for (i, shot) in shots.iter().enumerate() {
                let score = shot.score.unwrap_or(f64::NAN);
                println!("{}. {}  {} {:.4}", i + 1, shot.pair.id(), measure, score);
            }
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct ShotRow<'a> {
                rank: usize,
                id: &'a str,
                score: f64,
            }
            #[derive(Serialize)]
            struct QueryOutput<'a> {
                schema_version: u32,
                measure: &'a str,
                shots: Vec<ShotRow<'a>>,
            }
            let output = QueryOutput {
                schema_version: CLI_OUTPUT_VERSION,
                measure,
                shots: shots
                    .iter()
                    .enumerate()
                    .map(|(i, shot)| ShotRow {
                        rank: i + 1,
                        id: shot.pair.id(),
                        score: shot.score.unwrap_or(f64::NAN),
                    })
                    .collect(),
            };
            println!("{}", serde_json::to_string_pretty(&output)?);
        }
    }
    Ok(0)
}

fn cmd_bank_stats(args: &BankStatsArgs) -> Result<u8> {
    let bank = ExampleBank::load(&args.bank)
        .with_context(|| format!("cannot load bank `{}`", args.bank.display()))?;
    println!("language: {}", bank.language());
    println!("entries: {}", bank.len());
    println!(
        "categories ({}): {}",
        bank.category_index().len(),
        bank.category_index().join(", ")
    );
    match bank.embedding_provider() {
        Some(provider) => println!("embeddings: {provider}"),
        None => println!("embeddings: none"),
    }
    let sources = bank.source_counts();
    let rendered: Vec<String> = sources
        .iter()
        .map(|(source, count)| format!("{}={count}", source_label(*source)))
        .collect();
    println!("sources: {}", rendered.join(", "));
    Ok(0)
}

fn source_label(source: PairSource) -> &'static str {
    match source {
        PairSource::Forum => "forum",
        PairSource::Telemetry => "telemetry",
        PairSource::Curated => "curated",
        PairSource::Bootstrapped => "bootstrapped",
    }
}

// ---------------------------------------------------------------------------
// eval

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<u8> {
    let cfg = LoadedConfig::load(cli.config.as_deref())?;

    let file = fs::File::open(&args.dataset)
        .with_context(|| format!("cannot open dataset `{}`", args.dataset.display()))?;
    let dataset = load_dataset(BufReader::new(file))
        .with_context(|| format!("invalid dataset `{}`", args.dataset.display()))?;
    if dataset.is_empty() {
        bail!("dataset `{}` holds no tasks", args.dataset.display());
    }

    let language = match args.language.as_deref() {
        Some(name) => LanguageId::new(name)?,
        None => dataset[0].language.clone(),
    };

    let built = build_engine(&cfg, &language, &args.engine, args.leave_one_out, false)?;
    if cli.verbose {
        eprint!("{}", built.effective.render(&language, &built.provider_id));
    }

    let metric = parse_metric(&args.metric)?;
    let mut options = EvalOptions::new(metric);
    options.ks = args.ks.clone();
    options.max_k = args.max_k;
    options.localization_ks = args.loc_ks.clone();
    options.distance_threshold = if args.no_edit_limit {
        None
    } else {
        Some(args.distance_threshold)
    };
    options.jobs = args.jobs;

    let report = run_eval(&built.engine, &dataset, &options)?;

    if let Some(path) = &args.output_json {
        let file = fs::File::create(path)
            .with_context(|| format!("cannot write report `{}`", path.display()))?;
        write_report_json(&report, file)?;
        eprintln!("report written: {}", path.display());
    }
    if let Some(path) = &args.output_csv {
        let file = fs::File::create(path)
            .with_context(|| format!("cannot write summary `{}`", path.display()))?;
        write_summary_csv(&report, file)?;
        eprintln!("summary written: {}", path.display());
    }

    match args.format {
        OutputFormat::Text => print!("{}", render_report(&report)),
        OutputFormat::Json => {
            let stdout = io::stdout();
            write_report_json(&report, stdout.lock())?;
        }
    }

    let error_fraction = report.counts.error as f64 / report.dataset_size as f64;
    if error_fraction > args.max_error_fraction {
        eprintln!(
            "error fraction {:.4} exceeds the permitted {:.4}",
            error_fraction, args.max_error_fraction
        );
        return Ok(1);
    }
    Ok(0)
}

fn parse_metric(name: &str) -> Result<Metric> {
    match name {
        "exact-match" | "exact_match" => Ok(Metric::ExactMatch),
        "parse-and-distance" | "parse_and_distance" => Ok(Metric::ParseAndDistance),
        other => bail!("unknown metric `{other}` (expected exact-match or parse-and-distance)"),
    }
}

// ---------------------------------------------------------------------------
// shared helpers

fn read_program(file: Option<&Path>) -> Result<String> {
    match file {
        Some(path) => {
            fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))
        }
        None => {
            let mut text = String::new();
            io::stdin()
                .read_to_string(&mut text)
                .context("cannot read program from stdin")?;
            Ok(text)
        }
    }
}

fn task_id_for(file: Option<&Path>) -> String {
    file.and_then(|p| p.file_name())
        .map(|name| name.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stdin".to_string())
}

fn load_pairs(path: &Path) -> Result<Vec<BuggyFixedPair>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read pairs file `{}`", path.display()))?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: BuggyFixedPair = serde_json::from_str(line)
            .with_context(|| format!("{}: line {}", path.display(), idx + 1))?;
        pairs.push(pair);
    }
    Ok(pairs)
}
