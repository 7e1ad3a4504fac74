use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anchoropt_core::bench::{load_dataset, render_table, run_bench, BenchOptions, JudgeOptions};
use anchoropt_core::config::AppConfig;
use anchoropt_core::engine::RunTrace;
use anchoropt_core::gateway::{Cassette, GatewayMode};
use anchoropt_core::schema::ProblemInstance;
use anchoropt_core::verifier::VerifyMethod;
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "anchoropt", version, about = "Turn optimization problems written in prose into solver programs")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where model calls go.
    #[arg(long, global = true, value_enum)]
    gateway: Option<Mode>,
    /// Cassette file for record and replay.
    #[arg(long, global = true)]
    cassette: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Live,
    Record,
    Replay,
}

impl From<Mode> for GatewayMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Live => GatewayMode::Live,
            Mode::Record => GatewayMode::Record,
            Mode::Replay => GatewayMode::Replay,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Llm,
    #[value(alias = "similarity")]
    Sim,
    Both,
}

#[derive(Args, Default)]
struct EngineFlags {
    /// Maximum number of correction iterations.
    #[arg(long)]
    t_max: Option<u32>,
    /// Similarity threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    debug_attempts: Option<u32>,
    /// Runner command, e.g. "python3 runner.py".
    #[arg(long)]
    runner: Option<String>,
    /// Solver name handed to the runner.
    #[arg(long)]
    solver: Option<String>,
    /// Seconds allowed per program execution.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem.
    Solve {
        /// Problem JSON with `id` and `description`.
        problem: PathBuf,
        /// Data JSON replacing the problem's own `data`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_verifier)]
        verifier: Option<VerifyMethod>,
        #[command(flatten)]
        engine: EngineFlags,
        /// Write the run trace here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write the final program here.
        #[arg(long)]
        program_out: Option<PathBuf>,
    },
    /// Run a dataset and print the summary table.
    Bench {
        /// JSONL file, one problem per line.
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        method: Method,
        #[arg(long)]
        parallel: Option<usize>,
        #[arg(long)]
        repeats: Option<u32>,
        #[arg(long)]
        rel_tol: Option<f64>,
        /// Also compare solutions with the ground truth.
        #[arg(long)]
        check_solution: bool,
        #[command(flatten)]
        engine: EngineFlags,
        /// Write the reports as JSON here.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Show the error-set sizes of a saved trace.
    Trace {
        trace: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Inspect cassette files.
    Cassette {
        #[command(subcommand)]
        command: CassetteCommand,
    },
}

#[derive(Subcommand)]
enum CassetteCommand {
    /// Entry counts per tag.
    Stats { path: PathBuf },
}

fn parse_verifier(s: &str) -> Result<VerifyMethod, String> {
    s.parse::<VerifyMethod>().map_err(|e| e.to_string())
}

enum Failure {
    /// Bad configuration or input; exits with 2 like a usage error.
    Startup(anyhow::Error),
    /// The work itself failed; exits with 1.
    Run(anyhow::Error),
}

use Failure::{Run, Startup};

fn load_config(cli: &Cli, engine: &EngineFlags) -> Result<AppConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path).map_err(|e| Startup(e.into()))?,
        None => AppConfig::default(),
    };
    if let Some(mode) = cli.gateway {
        cfg.gateway.mode = mode.into();
    }
    if let Some(path) = &cli.cassette {
        cfg.gateway.cassette = Some(path.clone());
    }
    if let Some(t) = engine.t_max {
        cfg.engine.t_max = t;
    }
    if let Some(tau) = engine.tau {
        cfg.verifier.tau = tau;
    }
    if let Some(n) = engine.debug_attempts {
        cfg.debug.attempts = n;
    }
    if let Some(cmd) = &engine.runner {
        cfg.sandbox.command = Some(cmd.clone());
    }
    if let Some(solver) = &engine.solver {
        cfg.sandbox.solver = Some(solver.clone());
    }
    if let Some(t) = engine.timeout {
        cfg.debug.timeout_secs = t;
    }
    Ok(cfg)
}

fn read_json(path: &Path) -> anyhow::Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))
}

fn load_problem(path: &Path, data: Option<&Path>) -> anyhow::Result<ProblemInstance> {
    let mut problem: ProblemInstance =
        serde_json::from_value(read_json(path)?).with_context(|| format!("{} is not a problem file", path.display()))?;
    if let Some(data) = data {
        match read_json(data)? {
            serde_json::Value::Object(map) => problem.data = map,
            _ => bail!("{} must hold a JSON object", data.display()),
        }
    }
    problem.validate().with_context(|| format!("invalid problem {}", path.display()))?;
    Ok(problem)
}

fn solve(
    cli: &Cli,
    problem: &Path,
    data: Option<&Path>,
    verifier: Option<VerifyMethod>,
    engine: &EngineFlags,
    trace_out: Option<&Path>,
    program_out: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = load_config(cli, engine)?;
    if let Some(m) = verifier {
        cfg.verifier.method = m;
    }
    let runtime = cfg.build_runtime().map_err(|e| Startup(e.into()))?;
    let problem = load_problem(problem, data).map_err(Startup)?;
    let run = || -> anyhow::Result<()> {
        let out = runtime.solve(Arc::new(problem))?;
        if let Some(path) = trace_out {
            out.trace.save(path).with_context(|| format!("cannot write {}", path.display()))?;
        }
        if let Some(path) = program_out {
            std::fs::write(path, &out.program.source).with_context(|| format!("cannot write {}", path.display()))?;
        }
        let summary = json!({
            "problem_id": out.trace.problem_id,
            "method": cfg.verifier.method.as_str(),
            "status": out.result.status.as_str(),
            "objective": out.result.objective,
            "error_set_sizes": out.trace.error_set_sizes,
            "corrections": out.trace.corrections_total,
            "debug_attempts": out.trace.debug_attempts,
            "residual_errors": out.trace.residual_errors,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
        Ok(())
    };
    run().map_err(Run)
}

/// The error chain on one line. Many errors already quote their cause, so
/// causes contained in the text so far are left out.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let part = cause.to_string();
        if text.contains(&part) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&part);
    }
    text
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve {
            problem,
            data,
            verifier,
            engine,
            trace_out,
            program_out,
        } => solve(
            &cli,
            problem,
            data.as_deref(),
            *verifier,
            engine,
            trace_out.as_deref(),
            program_out.as_deref(),
        ),
        Command::Bench { .. } => bench(&cli),
        Command::Trace { trace, csv } => show_trace(trace, *csv).map_err(Run),
        Command::Cassette {
            command: CassetteCommand::Stats { path },
        } => cassette_stats(path).map_err(Run),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Startup(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(Run(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

fn bench(cli: &Cli) -> Result<(), Failure> {
    let Command::Bench {
        dataset,
        method,
        parallel,
        repeats,
        rel_tol,
        check_solution,
        engine,
        report_out,
    } = &cli.command
    else {
        unreachable!()
    };
    let mut cfg = load_config(cli, engine)?;
    if let Some(p) = parallel {
        cfg.bench.parallel = *p;
    }
    if let Some(r) = repeats {
        cfg.bench.repeats = *r;
    }
    if let Some(t) = rel_tol {
        cfg.bench.rel_tol = *t;
    }
    cfg.bench.check_solution |= *check_solution;
    let runtime = cfg.build_runtime().map_err(|e| Startup(e.into()))?;
    let manifest = load_dataset(dataset).map_err(|e| Startup(e.into()))?;
    let methods = match method {
        Method::Llm => vec![VerifyMethod::Llm],
        Method::Sim => vec![VerifyMethod::Similarity],
        Method::Both => vec![VerifyMethod::Llm, VerifyMethod::Similarity],
    };
    let opts = BenchOptions {
        parallelism: cfg.bench.parallel,
        repeats: cfg.bench.repeats,
        judge: JudgeOptions {
            rel_tol: cfg.bench.rel_tol,
            check_solution: cfg.bench.check_solution,
        },
    };
    let mut reports = Vec::new();
    for m in methods {
        let mut engine_cfg = cfg.engine_config();
        engine_cfg.verifier.method = m;
        reports.push(run_bench(&runtime, &manifest, engine_cfg, opts).map_err(|e| Run(e.into()))?);
    }
    print!("{}", render_table(&reports));
    if let Some(path) = report_out {
        let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
        std::fs::write(path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Run)?;
    }
    Ok(())
}

fn show_trace(path: &Path, csv: bool) -> anyhow::Result<()> {
    let trace = RunTrace::load(path)?;
    if trace.iterations() == 0 {
        println!("no iterations");
        return Ok(());
    }
    if csv {
        print!("{}", trace.to_csv());
        return Ok(());
    }
    println!("{:<10} {}", "iteration", "errors");
    for (i, n) in trace.error_set_sizes.iter().enumerate() {
        println!("{:<10} {n}", i + 1);
    }
    println!(
        "corrections: {}, debugging attempts: {}, {}",
        trace.corrections_total,
        trace.debug_attempts,
        if trace.converged() { "converged" } else { "not converged" }
    );
    Ok(())
}

fn cassette_stats(path: &Path) -> anyhow::Result<()> {
    let cassette = Cassette::load(path)?;
    println!("{} entries", cassette.len());
    for (tag, n) in cassette.tag_counts() {
        println!("{tag:<12} {n}");
    }
    Ok(())
}
