mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use adi_core::eval::{render_summary, run_benchmark, AgentConfig, EvalError, PlannerMode};
use adi_core::executor::{execute_plan, parse_point_pair, write_trace, ExecContext, ExecStatus, RequestView};
use adi_core::par::Parallelism;
use adi_core::planner::{generate_plan_for_text, rule_based_plan, PlanOutcome, Registry};
use adi_core::synth::{generate_dataset, SynthError};
use adi_core::toolkit::SummarizerMode;
use adi_core::{load_scene, Category, Request, RequestType};
use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};

use crate::config::{AppConfig, BackendKind, SummarizerChoice};

#[derive(Parser)]
#[command(name = "adi", version, about = "Plan, run and evaluate disaster-scene interpretation requests")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Language-model backend; overrides the config file.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Worker threads (1 runs sequentially, 0 picks a default).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run one request against one scene.
    Run(RunArgs),
    /// Evaluate every request of a dataset and report metrics.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of scenes to generate.
    #[arg(long, value_name = "N")]
    seeds: u32,
    /// Seed of the first scene; overrides the config file.
    #[arg(long, value_name = "SEED")]
    first_seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    #[arg(long, value_name = "ID")]
    scene: String,
    /// Typed request; planned without a language model.
    #[arg(long, value_name = "T", conflicts_with = "request_text")]
    request_type: Option<RequestType>,
    #[arg(long, value_name = "C", requires = "request_type")]
    category: Option<String>,
    /// Route endpoints as "x,y;x,y".
    #[arg(long, value_name = "X,Y;X,Y", requires = "request_type")]
    endpoints: Option<String>,
    /// Free-text request; planned by the language model.
    #[arg(long, value_name = "S", required_unless_present = "request_type")]
    request_text: Option<String>,
    /// Directory for the trace and its artifacts.
    #[arg(long, value_name = "DIR", default_value = "traces")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Directory for per-request traces.
    #[arg(long, value_name = "DIR")]
    traces: Option<PathBuf>,
    /// Report JSON path.
    #[arg(long, value_name = "FILE", default_value = "report.json")]
    out: PathBuf,
    /// Write the report file only; print no table.
    #[arg(long)]
    json_only: bool,
}

/// An error paired with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }
}

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NEEDS_BACKEND: u8 = 3;
const EXIT_NO_PLAN: u8 = 4;

fn load_config(global: &GlobalArgs) -> Result<AppConfig, Failure> {
    let mut config = AppConfig::load(global.config.as_deref()).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    if let Some(b) = global.backend {
        config.backend = b;
    }
    if let Some(j) = global.jobs {
        config.jobs = j;
    }
    config.validate().map_err(|e| Failure::new(EXIT_INVALID, e))?;
    Ok(config)
}

fn parallelism(jobs: usize) -> Parallelism {
    match jobs {
        0 => Parallelism::Auto,
        n => Parallelism::from_jobs(n),
    }
}

fn cmd_synth(global: &GlobalArgs, args: &SynthArgs) -> Result<(), Failure> {
    let config = load_config(global)?;
    if args.seeds == 0 {
        return Err(Failure::new(EXIT_INVALID, anyhow!("--seeds must be at least 1")));
    }
    let mut synth = config.synth.clone();
    if let Some(s) = args.first_seed {
        synth.first_seed = s;
    }
    let summary = generate_dataset(&synth, args.seeds, &args.out, parallelism(config.jobs)).map_err(|e| match e {
        SynthError::InvalidParams(_) | SynthError::PlacementInfeasible { .. } => Failure::new(EXIT_INVALID, e),
        other => Failure::new(EXIT_IO, other),
    })?;
    println!("wrote {} scenes and {} requests to {}", summary.scenes, summary.requests, args.out.display());
    for (t, n) in &summary.per_type {
        println!("  {t:<14} {n}");
    }
    Ok(())
}

fn typed_request(args: &RunArgs, rtype: RequestType) -> Result<Request, Failure> {
    let invalid = |e: anyhow::Error| Failure::new(EXIT_INVALID, e);
    let target_category =
        args.category.as_deref().map(Category::from_name).transpose().map_err(|e| invalid(e.into()))?;
    let endpoints = args
        .endpoints
        .as_deref()
        .map(|s| parse_point_pair(s).ok_or_else(|| invalid(anyhow!("--endpoints must look like \"x,y;x,y\", got {s:?}"))))
        .transpose()?
        .map(|(a, b)| [a, b]);
    let text = match (target_category, endpoints) {
        (_, Some([(x1, y1), (x2, y2)])) => format!("{rtype} from ({x1}, {y1}) to ({x2}, {y2})"),
        (Some(c), None) => format!("{rtype} {}", c.info().display),
        (None, None) => rtype.to_string(),
    };
    let request = Request {
        request_id: format!("{}-{rtype}", args.scene),
        scene_id: args.scene.clone(),
        rtype,
        text,
        target_category,
        endpoints,
    };
    request.check().map_err(|e| invalid(anyhow!(e)))?;
    Ok(request)
}

fn cmd_run(global: &GlobalArgs, args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(global)?;
    if args.request_text.is_some() && config.backend == BackendKind::None {
        return Err(Failure::new(
            EXIT_NEEDS_BACKEND,
            anyhow!(
                "free-text requests are planned by a language model; pass --backend remote or scripted, \
                 or use --request-type with --category/--endpoints for an offline run"
            ),
        ));
    }
    let manifest = args.dataset.join("scenes").join(&args.scene).join("manifest.json");
    let scene = load_scene(&manifest).map_err(|e| Failure::new(EXIT_IO, anyhow!("{}: {e}", manifest.display())))?;
    let backend = config.backend().map_err(|e| Failure::new(EXIT_INVALID, e))?;
    let registry = Registry::standard();

    let typed = args.request_type.map(|t| typed_request(args, t)).transpose()?;
    let (plan, view) = match (&typed, &args.request_text) {
        (Some(req), _) => (rule_based_plan(req), RequestView::from(req)),
        (None, Some(text)) => {
            let generation =
                generate_plan_for_text(text, (scene.width, scene.height), &registry, backend.as_ref(), &config.planner)
                    .map_err(|e| Failure::new(EXIT_IO, e))?;
            match generation.outcome {
                PlanOutcome::Valid { plan, repairs } => {
                    for r in &repairs {
                        println!("repair: {}", serde_json::to_string(r).expect("repair serialize"));
                    }
                    (plan, RequestView { request_id: "free-text", text, rtype: None })
                }
                PlanOutcome::Invalid { reason } => return Err(Failure::new(EXIT_NO_PLAN, anyhow!(reason))),
            }
        }
        (None, None) => unreachable!("clap requires one of the request forms"),
    };

    let summarizer = match config.agent.summarizer {
        SummarizerChoice::Template => SummarizerMode::Template,
        SummarizerChoice::Llm => {
            SummarizerMode::Llm { backend: backend.as_ref(), temperature: config.agent.summary_temperature }
        }
    };
    let ctx = ExecContext { registry: &registry, tools: &config.tools, summarizer };
    let execution = execute_plan(&plan, &scene, view, &ctx);

    println!("plan:\n{}", plan.to_json());
    for (i, rec) in execution.trace.records.iter().enumerate() {
        let outputs: Vec<String> = rec
            .outputs
            .iter()
            .map(|(id, s)| format!("{id} = {}", serde_json::to_string(s).expect("summary serialize")))
            .collect();
        println!("{}. {}({}) -> {}", i + 1, rec.tool, rec.inputs.join(", "), outputs.join("; "));
    }
    if let ExecStatus::FailedAt { index, error } = &execution.trace.status {
        println!("failed at action {index}: {error}");
    }
    println!("answer: {}", execution.trace.final_answer.as_deref().unwrap_or("<none>"));
    write_trace(&execution, &args.out).map_err(|e| Failure::new(EXIT_IO, e))?;
    println!("trace: {}", args.out.join(format!("{}.json", execution.trace.request_id)).display());
    Ok(())
}

fn cmd_eval(global: &GlobalArgs, args: &EvalArgs) -> Result<(), Failure> {
    let config = load_config(global)?;
    if !args.dataset.is_dir() {
        return Err(Failure::new(EXIT_IO, anyhow!("dataset directory {} not found", args.dataset.display())));
    }
    let backend = config.backend().map_err(|e| Failure::new(EXIT_INVALID, e))?;
    let agent = AgentConfig {
        planner: if config.uses_llm_planner() {
            PlannerMode::Llm { backend: backend.as_ref(), config: config.planner.clone() }
        } else {
            PlannerMode::RuleBased
        },
        tools: config.tools.clone(),
        summarizer: (config.agent.summarizer == SummarizerChoice::Llm)
            .then(|| (backend.as_ref(), config.agent.summary_temperature)),
        judge: config.agent.judge.then_some(backend.as_ref()),
        parallelism: parallelism(config.jobs),
    };
    let started = Instant::now();
    let report = run_benchmark(&args.dataset, &agent, args.traces.as_deref()).map_err(|e| match e {
        EvalError::Dataset { .. } => Failure::new(EXIT_IO, e),
        other => Failure::new(EXIT_INVALID, other),
    })?;
    write_report(&args.out, &report.to_json()).map_err(|e| Failure::new(EXIT_IO, e))?;
    if !args.json_only {
        print!("{}", render_summary(&report));
        println!("\nreport: {} ({:.2} s)", args.out.display(), started.elapsed().as_secs_f64());
    }
    if report.summary.harness_errors > 0 {
        return Err(Failure::new(
            EXIT_INVALID,
            anyhow!("{} request(s) crashed the harness; see per_request[].harness_error", report.summary.harness_errors),
        ));
    }
    Ok(())
}

fn write_report(path: &Path, json: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, json)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(&cli.global, a),
        Command::Run(a) => cmd_run(&cli.global, a),
        Command::Eval(a) => cmd_eval(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
