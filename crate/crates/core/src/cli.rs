//! The `tooldc` command line: `eval`, `inject`, `build-cot`, `explain`.
//!
//! Exit status is 0 on success, 1 on data or runtime failure and 2 on
//! usage errors.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::callgrammar::serialize_invocations;
use crate::cotforge::{load_raw_corpus, CotBuilder, CotError};
use crate::evalharness::{
    dataset_to_jsonl, evaluate, inject_dataset, load_dataset, EvalConfig, EvalInstance, Metrics,
};
use crate::grouping::{GroupingConfig, DEFAULT_GROUPS};
use crate::llmport::{
    ChatDefaults, CompletionPort, HttpConfig, HttpPort, ScriptedMock, ENV_API_KEY_VAR,
    ENV_ENDPOINT, ENV_MODEL,
};
use crate::pipeline::{Pipeline, PipelineConfig, RunTrace, Strategy};
use crate::schema::load_library;

const PRECEDENCE_HELP: &str = "\
Settings resolve as: command-line flags, then the --config TOML file, then \
the environment (TOOLDC_ENDPOINT, TOOLDC_MODEL, TOOLDC_API_KEY_VAR). The API \
key itself is read from the variable named by --api-key-var (default \
OPENAI_API_KEY).

Config file keys: endpoint, mock, model, api_key_var, temperature, \
max_tokens, concurrency, k, max_group_size.";

#[derive(Debug, Parser)]
#[command(name = "tooldc", version, about = "Divide-and-conquer tool calling", after_help = PRECEDENCE_HELP)]
pub struct Cli {
    /// TOML file with default settings.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a strategy over a dataset and score it.
    Eval(EvalArgs),
    /// Pad every instance's library with distractors from a pool.
    Inject(InjectArgs),
    /// Build chain-of-thought training records from a raw corpus.
    BuildCot(BuildCotArgs),
    /// Show one run trace.
    Explain(ExplainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Tooldc,
    AllFuns,
    TopK,
    GtFuns,
}

#[derive(Debug, Args, Default)]
pub struct PortArgs {
    /// Scripted mock fixture (JSON) instead of a live endpoint.
    #[arg(long, value_name = "FILE", conflicts_with = "endpoint")]
    pub mock: Option<PathBuf>,
    /// OpenAI-compatible base URL, e.g. http://localhost:8000/v1.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, value_name = "VAR")]
    pub api_key_var: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Completions in flight per query.
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "tooldc")]
    pub strategy: StrategyArg,
    /// Number of anchor groups for tooldc.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of retrieved tools for top_k.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long)]
    pub max_group_size: Option<usize>,
    /// Fall back to one whole-library completion when no group is valid.
    #[arg(long)]
    pub fallback_all_funs: bool,
    /// Directory for summary.json and results.jsonl.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// JSONL file receiving one run trace per instance.
    #[arg(long, value_name = "FILE")]
    pub trace_out: Option<PathBuf>,
    #[command(flatten)]
    pub port: PortArgs,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    /// JSON tool library to draw distractors from.
    #[arg(long, value_name = "FILE")]
    pub pool: PathBuf,
    /// Library size after injection.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSONL; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildCotArgs {
    /// Raw corpus: JSON array or JSONL of {query, tools, answers}.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Only the first N raw samples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub port: PortArgs,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Trace JSONL written by `eval --trace-out`.
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Instance id; the first trace when omitted.
    #[arg(long)]
    pub id: Option<String>,
    /// Print the trace as JSON.
    #[arg(long)]
    pub json: bool,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: Option<String>,
    pub mock: Option<PathBuf>,
    pub model: Option<String>,
    pub api_key_var: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub concurrency: Option<usize>,
    pub k: Option<usize>,
    pub max_group_size: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PortSource {
    Mock(PathBuf),
    Endpoint(HttpConfig),
}

/// Settings after merging flags, config file and environment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub port: PortSource,
    pub chat: ChatDefaults,
    pub concurrency: usize,
    pub grouping: GroupingConfig,
}

impl RunConfig {
    pub fn resolve(
        flags: &PortArgs,
        k: Option<usize>,
        max_group_size: Option<usize>,
        file: &FileConfig,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, CliError> {
        let api_key_var = flags
            .api_key_var
            .clone()
            .or_else(|| file.api_key_var.clone())
            .or_else(|| env(ENV_API_KEY_VAR));
        let endpoint_cfg = |url: String| {
            let mut cfg = HttpConfig::new(url);
            if let Some(var) = &api_key_var {
                cfg.api_key_var = var.clone();
            }
            PortSource::Endpoint(cfg)
        };
        let port = match (&flags.mock, &flags.endpoint, &file.mock, &file.endpoint) {
            (Some(m), _, _, _) => PortSource::Mock(m.clone()),
            (None, Some(e), _, _) => endpoint_cfg(e.clone()),
            (None, None, Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "config file sets both `mock` and `endpoint`; choose one".into(),
                ))
            }
            (None, None, Some(m), None) => PortSource::Mock(m.clone()),
            (None, None, None, Some(e)) => endpoint_cfg(e.clone()),
            (None, None, None, None) => match env(ENV_ENDPOINT) {
                Some(e) => endpoint_cfg(e),
                None => {
                    return Err(CliError::Usage(format!(
                        "no completion port: pass --mock or --endpoint, or set {ENV_ENDPOINT}"
                    )))
                }
            },
        };
        let defaults = ChatDefaults::default();
        let chat = ChatDefaults {
            model: flags
                .model
                .clone()
                .or_else(|| file.model.clone())
                .or_else(|| env(ENV_MODEL))
                .unwrap_or(defaults.model),
            temperature: flags
                .temperature
                .or(file.temperature)
                .unwrap_or(defaults.temperature),
            max_tokens: flags
                .max_tokens
                .or(file.max_tokens)
                .unwrap_or(defaults.max_tokens),
        };
        let concurrency = flags
            .concurrency
            .or(file.concurrency)
            .unwrap_or(PipelineConfig::default().concurrency);
        if concurrency == 0 {
            return Err(CliError::Usage("concurrency must be at least 1".into()));
        }
        let k = k.or(file.k).unwrap_or(DEFAULT_GROUPS);
        if k == 0 {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        let max_group_size = max_group_size.or(file.max_group_size);
        if max_group_size.is_some_and(|m| m < 2) {
            return Err(CliError::Usage("max-group-size must be at least 2".into()));
        }
        Ok(Self {
            port,
            chat,
            concurrency,
            grouping: GroupingConfig { k, max_group_size },
        })
    }

    pub fn build_port(&self) -> Result<Arc<dyn CompletionPort>, CliError> {
        match &self.port {
            PortSource::Mock(path) => Ok(Arc::new(
                ScriptedMock::load(path).map_err(|e| CliError::Data(e.to_string()))?,
            )),
            PortSource::Endpoint(cfg) => {
                let mut cfg = cfg.clone();
                cfg.max_in_flight = self.concurrency;
                Ok(Arc::new(
                    HttpPort::new(cfg).map_err(|e| CliError::Usage(e.to_string()))?,
                ))
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through a `.partial` sibling and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = partial_path(path);
    fs::write(&tmp, contents).map_err(|e| data_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| data_err(path, e))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    out
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Data(format!("cannot start runtime: {e}")))
}

fn read_dataset(path: &Path) -> Result<Vec<EvalInstance>, CliError> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    load_dataset(BufReader::new(file)).map_err(|e| data_err(path, e))
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    strategy: Strategy,
    label: String,
    instances: usize,
    completion_calls: u64,
    metrics: &'a Metrics,
}

fn print_metrics(out: &mut dyn Write, label: &str, m: &Metrics) -> std::io::Result<()> {
    writeln!(out, "strategy: {label}")?;
    writeln!(out, "{:<32} {:>9} {:>9}", "category", "matched", "accuracy")?;
    for (name, c) in &m.categories {
        writeln!(
            out,
            "{:<32} {:>9} {:>8.2}%",
            name,
            format!("{}/{}", c.matched, c.scored),
            c.accuracy * 100.0
        )?;
    }
    for (name, acc) in &m.rollups {
        writeln!(
            out,
            "{:<32} {:>9} {:>8.2}%",
            format!("[{name}]"),
            "",
            acc * 100.0
        )?;
    }
    writeln!(
        out,
        "{:<32} {:>9} {:>8.2}%",
        "overall",
        format!("{}/{}", m.matched, m.scored),
        m.overall * 100.0
    )
}

fn cmd_eval(args: &EvalArgs, file: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&args.port, args.k, args.max_group_size, file, |v| {
        std::env::var(v).ok()
    })?;
    let strategy = match args.strategy {
        StrategyArg::Tooldc => Strategy::ToolDcTf(cfg.grouping),
        StrategyArg::AllFuns => Strategy::AllFuns,
        StrategyArg::TopK if args.top_k == 0 => {
            return Err(CliError::Usage("top-k must be at least 1".into()))
        }
        StrategyArg::TopK => Strategy::TopK { k: args.top_k },
        StrategyArg::GtFuns => Strategy::GtFuns,
    };
    let dataset = read_dataset(&args.dataset)?;
    if dataset.is_empty() {
        return Err(data_err(&args.dataset, "dataset is empty"));
    }
    if strategy == Strategy::GtFuns {
        if let Some(inst) = dataset.iter().find(|i| i.golden.is_empty()) {
            return Err(CliError::Data(format!(
                "gt_funs needs ground-truth tool names; instance `{}` has none",
                inst.id
            )));
        }
    }
    let port = cfg.build_port()?;
    let pipeline = Pipeline::new(port.clone()).with_config(PipelineConfig {
        chat: cfg.chat.clone(),
        concurrency: cfg.concurrency,
        fallback_all_funs: args.fallback_all_funs,
    });
    let eval_cfg = EvalConfig {
        concurrency: cfg.concurrency,
        ..EvalConfig::default()
    };
    let report = runtime()?
        .block_on(evaluate(&dataset, strategy, &pipeline, &eval_cfg))
        .map_err(|e| data_err(&args.dataset, e))?;

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
        let summary = Summary {
            strategy,
            label: strategy.label(),
            instances: dataset.len(),
            completion_calls: port.usage().calls,
            metrics: &report.metrics,
        };
        let mut text = serde_json::to_string_pretty(&summary).expect("serializable");
        text.push('\n');
        write_atomic(&dir.join("summary.json"), text.as_bytes())?;
        write_atomic(
            &dir.join("results.jsonl"),
            jsonl(&report.results).as_bytes(),
        )?;
    }
    if let Some(path) = &args.trace_out {
        write_atomic(path, jsonl(&report.traces).as_bytes())?;
    }
    for r in report.results.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "instance `{}`: {}",
            r.id,
            r.error.as_deref().unwrap_or_default()
        );
    }
    print_metrics(out, &strategy.label(), &report.metrics)
        .map_err(|e| CliError::Data(e.to_string()))
}

fn cmd_inject(args: &InjectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dataset = read_dataset(&args.dataset)?;
    let pool_bytes = fs::read(&args.pool).map_err(|e| data_err(&args.pool, e))?;
    let pool = load_library(&pool_bytes).map_err(|e| data_err(&args.pool, e))?;
    let injected = inject_dataset(&dataset, &pool, args.n, args.seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let text = dataset_to_jsonl(&injected);
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(e.to_string())),
    }
}

fn cmd_build_cot(
    args: &BuildCotArgs,
    file: &FileConfig,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&args.port, None, None, file, |v| std::env::var(v).ok())?;
    let text = fs::read_to_string(&args.corpus).map_err(|e| data_err(&args.corpus, e))?;
    let mut raw = load_raw_corpus(&text);
    if let Some(limit) = args.limit {
        raw.truncate(limit);
    }
    for err in raw.iter().filter_map(|r| r.as_ref().err()) {
        log::warn!("{err}");
    }
    let builder = CotBuilder::new(cfg.build_port()?)
        .with_chat(cfg.chat.clone())
        .with_concurrency(cfg.concurrency);
    let tmp = partial_path(&args.out);
    let file = File::create(&tmp).map_err(|e| data_err(&tmp, e))?;
    let mut sink = BufWriter::new(file);
    let counts = match runtime()?.block_on(builder.build_dataset(raw, &mut sink)) {
        Ok(counts) => counts,
        Err(e @ CotError::Sink { .. }) => {
            return Err(CliError::Data(format!(
                "{e}; partial output left at {}",
                tmp.display()
            )))
        }
    };
    drop(sink);
    fs::rename(&tmp, &args.out).map_err(|e| data_err(&args.out, e))?;
    writeln!(
        out,
        "emitted={} skipped_empty_valid={} skipped_mismatch={} errored={}",
        counts.emitted, counts.skipped_empty_valid, counts.skipped_mismatch, counts.errored
    )
    .map_err(|e| CliError::Data(e.to_string()))
}

fn find_trace(path: &Path, id: Option<&str>) -> Result<RunTrace, CliError> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| data_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: RunTrace = serde_json::from_str(&line)
            .map_err(|e| data_err(path, format!("line {}: {e}", i + 1)))?;
        if id.is_none_or(|id| trace.instance_id == id) {
            return Ok(trace);
        }
    }
    Err(match id {
        Some(id) => data_err(path, format!("no trace for instance `{id}`")),
        None => data_err(path, "no traces"),
    })
}

pub fn render_trace(trace: &RunTrace, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "instance:    {}", trace.instance_id)?;
    writeln!(out, "strategy:    {}", trace.strategy.label())?;
    writeln!(out, "completions: {}", trace.completion_calls)?;
    for g in &trace.groups {
        let anchor = g
            .anchor
            .and_then(|a| g.members.iter().position(|&m| m == a))
            .map_or("-", |i| g.tools[i].as_str());
        let verdict = if g.transport_error.is_some() {
            "error"
        } else if g.report.valid {
            "valid"
        } else {
            "invalid"
        };
        writeln!(
            out,
            "group S{:<3} anchor {:<20} {:<8} tools: {}",
            g.index,
            anchor,
            verdict,
            g.tools.join(", ")
        )?;
        match (&g.transport_error, g.outcome.calls()) {
            (Some(e), _) => writeln!(out, "    transport: {e}")?,
            (None, Some(calls)) => writeln!(out, "    answer: {}", serialize_invocations(calls))?,
            (None, None) => writeln!(out, "    answer: null")?,
        }
        for reason in &g.report.reasons {
            writeln!(out, "    - {reason}")?;
        }
    }
    if let Some(stage) = &trace.final_stage {
        let label = if trace.groups.is_empty() {
            "single"
        } else {
            "retry"
        };
        writeln!(out, "{label:<12} tools: {}", stage.tool_names.join(", "))?;
        writeln!(out, "    raw: {}", stage.raw.trim())?;
    } else if !trace.groups.is_empty() && trace.error.is_none() {
        writeln!(out, "retry        skipped: no valid group")?;
    }
    match &trace.final_answer {
        Some(calls) => writeln!(out, "final:       {}", serialize_invocations(calls))?,
        None => writeln!(out, "final:       null")?,
    }
    if let Some(e) = &trace.error {
        writeln!(out, "error:       {e}")?;
    }
    Ok(())
}

fn cmd_explain(args: &ExplainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let trace = find_trace(&args.trace, args.id.as_deref())?;
    let io = |e: std::io::Error| CliError::Data(e.to_string());
    if args.json {
        let text = serde_json::to_string_pretty(&trace).expect("serializable");
        writeln!(out, "{text}").map_err(io)
    } else {
        render_trace(&trace, out).map_err(io)
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                2
            } else {
                let _ = write!(stdout, "{}", e.render());
                0
            };
            return code;
        }
    };
    let result = cli
        .config
        .as_deref()
        .map(FileConfig::load)
        .transpose()
        .and_then(|file| {
            let file = file.unwrap_or_default();
            match &cli.command {
                Command::Eval(a) => cmd_eval(a, &file, stdout),
                Command::Inject(a) => cmd_inject(a, stdout),
                Command::BuildCot(a) => cmd_build_cot(a, &file, stdout),
                Command::Explain(a) => cmd_explain(a, stdout),
            }
        });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
