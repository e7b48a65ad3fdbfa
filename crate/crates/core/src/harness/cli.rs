//! `cogplan` command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 backend
//! failure (including any failed trace in a `plan` run).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::{
    adhoc_sample, dataset_stats, load_dataset, read_traces, run_pipeline, HarnessError, PipelineMode, Runtime,
    Settings,
};
use crate::evalkit::{
    build_report, compare, ExactMatcher, ExpertExtractor, ExpertMatcher, MetricReport, MetricsConfig,
    SentenceExtractor,
};
use crate::planner::Paradigm;
use crate::state::{ImageRef, MultimodalQuery, PlanTrace};

#[derive(Debug, Parser)]
#[command(name = "cogplan", version, about = "Plan, run and score multimodal retrieval-augmented answering")]
struct Cli {
    /// TOML settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a pipeline over a dataset or a single query and write traces (JSONL).
    Plan(PlanArgs),
    /// Score traces against a dataset.
    Eval(EvalArgs),
    /// Summarize a dataset.
    Stats(StatsArgs),
    /// Put several reports side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Dataset (JSONL) to run over.
    #[arg(long, conflicts_with = "query")]
    dataset: Option<PathBuf>,
    /// A single question instead of a dataset.
    #[arg(long, required_unless_present = "dataset")]
    query: Option<String>,
    /// Image accompanying --query (path, URL or data: URI).
    #[arg(long, requires = "query")]
    image: Option<String>,
    /// Sample id for --query.
    #[arg(long, default_value = "query", requires = "query")]
    id: String,
    /// origin, fixed-text, fixed-image, cogplanner (paradigm from --paradigm),
    /// cogplanner-parallel or cogplanner-sequential.
    #[arg(long, default_value = "cogplanner")]
    mode: String,
    #[arg(long, value_enum)]
    paradigm: Option<ParadigmArg>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Script file or directory of per-sample scripts.
    #[arg(long)]
    expert_script: Option<PathBuf>,
    /// Local corpus directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Persist search results here.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Trace file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ParadigmArg {
    Parallel,
    Sequential,
}

impl From<ParadigmArg> for Paradigm {
    fn from(p: ParadigmArg) -> Paradigm {
        match p {
            ParadigmArg::Parallel => Paradigm::Parallel,
            ParadigmArg::Sequential => Paradigm::Sequential,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
enum JudgeArg {
    /// Sentence claims, exact normalized match.
    #[default]
    Exact,
    /// Claims extracted and matched by the configured expert.
    Expert,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Row label; defaults to the traces' mode.
    #[arg(long)]
    label: Option<String>,
    #[arg(long, value_enum, default_value_t)]
    judge: JudgeArg,
    /// Report JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    dataset: PathBuf,
    /// Also write the statistics as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Report JSON files, one row each.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::Validation(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))
}

fn settings(config: Option<&Path>) -> Result<Settings, HarnessError> {
    let mut s = match config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    s.apply_env(|name| std::env::var(name).ok());
    Ok(s)
}

fn resolve_mode(mode: &str, paradigm: Option<Paradigm>, configured: Paradigm) -> Result<PipelineMode, HarnessError> {
    if mode == "cogplanner" {
        return Ok(PipelineMode::planned(paradigm.unwrap_or(configured)));
    }
    let parsed: PipelineMode = mode.parse().map_err(HarnessError::Validation)?;
    match (parsed.paradigm(), paradigm) {
        (Some(a), Some(b)) if a != b => Err(HarnessError::Validation(format!(
            "--mode {mode} contradicts --paradigm {}",
            if b == Paradigm::Parallel { "parallel" } else { "sequential" }
        ))),
        _ => Ok(parsed),
    }
}

fn plan(args: PlanArgs, config: Option<&Path>) -> Result<(), HarnessError> {
    let mut s = settings(config)?;
    if let Some(t) = args.t_max {
        s.planner.t_max = t;
    }
    if let Some(k) = args.top_k {
        s.planner.text_top_k = k;
    }
    if let Some(script) = args.expert_script {
        s.expert.script = Some(script);
    }
    if let Some(corpus) = args.corpus {
        s.search.corpus = Some(corpus);
    }
    if let Some(dir) = args.cache_dir {
        s.search.cache_dir = Some(dir);
    }
    let mode = resolve_mode(&args.mode, args.paradigm.map(Into::into), s.planner.paradigm)?;
    if let Some(p) = mode.paradigm() {
        s.planner.paradigm = p;
    }
    s.planner.validate().map_err(|e| HarnessError::Validation(e.to_string()))?;

    let samples = match (&args.dataset, args.query) {
        (Some(path), _) => load_dataset(path)?,
        (None, Some(text)) => {
            let image = args
                .image
                .map(|raw| {
                    let image = ImageRef::parse(raw)?;
                    image.check_readable()?;
                    Ok::<_, crate::state::StateError>(image)
                })
                .transpose()
                .map_err(|e| HarnessError::Validation(e.to_string()))?;
            let query = MultimodalQuery::new(args.id, text, image);
            query.validate().map_err(|e| HarnessError::Validation(e.to_string()))?;
            vec![adhoc_sample(query)]
        }
        (None, None) => return Err(HarnessError::Validation("pass --dataset or --query".into())),
    };

    let runtime = Runtime::build(&s, |name| std::env::var(name).ok())?;
    let backends = runtime.backends(mode.paradigm().is_some())?;
    let traces = run_pipeline(&samples, mode, &s.planner, backends);

    let mut lines = String::new();
    for t in &traces {
        lines.push_str(&t.to_json_line());
        lines.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, &lines)?,
        None => {
            std::io::stdout()
                .write_all(lines.as_bytes())
                .map_err(|e| HarnessError::Validation(format!("stdout: {e}")))?;
        }
    }
    let failed: Vec<&PlanTrace> = traces.iter().filter(|t| t.failed()).collect();
    eprintln!("{mode}: {} traces, {} failed", traces.len(), failed.len());
    match failed.first() {
        Some(t) => Err(HarnessError::Backend(format!(
            "{} of {} samples failed; first: {}: {}",
            failed.len(),
            traces.len(),
            t.sample_id,
            t.error.as_deref().unwrap_or("unknown error")
        ))),
        None => Ok(()),
    }
}

fn eval(args: EvalArgs, config: Option<&Path>) -> Result<(), HarnessError> {
    let dataset = load_dataset(&args.dataset)?;
    let traces = read_traces(&args.traces)?;
    let label = args.label.unwrap_or_else(|| {
        let modes: std::collections::BTreeSet<_> = traces.iter().filter_map(|t| t.mode.as_deref()).collect();
        match modes.into_iter().collect::<Vec<_>>().as_slice() {
            [single] => single.to_string(),
            _ => args
                .traces
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        }
    });
    let report = match args.judge {
        JudgeArg::Exact => build_report(
            &traces,
            &dataset,
            &MetricsConfig { extractor: &SentenceExtractor, matcher: &ExactMatcher, label },
        )?,
        JudgeArg::Expert => {
            let runtime = Runtime::build(&settings(config)?, |name| std::env::var(name).ok())?;
            let backends = runtime.backends(true)?;
            let extractor = ExpertExtractor { backend: backends.expert, prompts: backends.prompts };
            let matcher = ExpertMatcher { backend: backends.expert, prompts: backends.prompts };
            build_report(&traces, &dataset, &MetricsConfig { extractor: &extractor, matcher: &matcher, label })?
        }
    };
    print!("{}", report.render_table());
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(path, &json)?;
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<(), HarnessError> {
    let stats = dataset_stats(&load_dataset(&args.dataset)?)?;
    print!("{stats}");
    if let Some(path) = &args.out {
        write_file(path, &serde_json::to_string_pretty(&stats).expect("stats serialize"))?;
    }
    Ok(())
}

fn compare_reports(args: CompareArgs) -> Result<(), HarnessError> {
    let mut reports = Vec::new();
    for path in &args.reports {
        let raw = fs::read_to_string(path).map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
        let mut report: MetricReport = serde_json::from_str(&raw)
            .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
        if report.label.is_empty() {
            report.label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        reports.push(report);
    }
    let table = compare(&reports);
    print!("{table}");
    if let Some(path) = &args.out {
        write_file(path, &table)?;
    }
    Ok(())
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Plan(args) => plan(args, config),
        Command::Eval(args) => eval(args, config),
        Command::Stats(args) => stats(args),
        Command::Compare(args) => compare_reports(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
