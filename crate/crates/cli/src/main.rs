//! `flxc`: compile MiniJS programs into fluxions, run them, and check them
//! against the sequential reference interpreter.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};

use flxc_core::analyzer::AsyncCalleeList;
use flxc_core::check::{check, CheckError, CheckOptions, CheckReport};
use flxc_core::flx::{parse_flx, FlxProgram};
use flxc_core::frontend::parse_source;
use flxc_core::interp::default_vfs;
use flxc_core::reference::run_sequential;
use flxc_core::runtime::{Metrics, Runtime, RuntimeConfig};
use flxc_core::scope::build_scope_graph;
use flxc_core::workload::{parse_workload, ObservedOutputs, Request};
use flxc_core::{compile, Compilation};

/// Exit status for a program that differs from its reference run.
const EXIT_MISMATCH: u8 = 1;
/// Exit status for unreadable input and compile errors.
const EXIT_INPUT: u8 = 2;
/// Exit status for failures while executing a program.
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "flxc",
    version,
    about = "Compile event-loop MiniJS programs into fluxion pipelines"
)]
struct Cli {
    /// JSON file replacing the built-in list of asynchronous callees.
    #[arg(long, global = true, value_name = "FILE")]
    async_list: Option<PathBuf>,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// Print warnings, notes and timings to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct WorkloadArgs {
    /// JSON array of {path, body} requests; defaults to one request to `/`.
    #[arg(long, value_name = "FILE")]
    requests: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a `.mjs-mini` source into a `.flx` program.
    Compile {
        source: PathBuf,
        /// Write the program here instead of stdout.
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Also write the placement report as JSON.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Show rupture points, stages and edges.
    Analyze { source: PathBuf },
    /// Show scopes, bindings and accesses.
    Scopes { source: PathBuf },
    /// Run a `.flx` program (or compile and run a source) on the runtime.
    Run {
        program: PathBuf,
        /// Worker threads for the fluxion runtime.
        #[arg(long, env = "FLXC_WORKERS", default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Write newline-delimited JSON trace events here.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Run stateless units once per worker.
        #[arg(long)]
        replicate: bool,
    },
    /// Run a source program on the sequential reference interpreter.
    RunRef {
        source: PathBuf,
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Write the observed outputs as JSON here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Compile, run both executors and compare what they observed.
    Check {
        source: PathBuf,
        /// Worker threads for the fluxion runtime.
        #[arg(long, env = "FLXC_WORKERS", default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Run this `.flx` program instead of the compiler's output.
        #[arg(long, value_name = "FILE")]
        flx: Option<PathBuf>,
        /// Run stateless units once per worker.
        #[arg(long)]
        replicate: bool,
        /// Write the report JSON here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            error: error.into(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let list = match &cli.async_list {
        Some(path) => {
            AsyncCalleeList::from_json(&read(path)?).map_err(|e| Failure::input(anyhow!(e)))?
        }
        None => AsyncCalleeList::default(),
    };
    match &cli.command {
        Command::Compile {
            source,
            output,
            report,
        } => cmd_compile(cli, &list, source, output.as_deref(), report.as_deref()),
        Command::Analyze { source } => cmd_analyze(cli, &list, source),
        Command::Scopes { source } => cmd_scopes(cli, source),
        Command::Run {
            program,
            workers,
            workload,
            trace,
            replicate,
        } => cmd_run(
            cli,
            &list,
            program,
            *workers,
            workload,
            trace.as_deref(),
            *replicate,
        ),
        Command::RunRef {
            source,
            workload,
            out,
        } => cmd_run_ref(cli, source, workload, out.as_deref()),
        Command::Check {
            source,
            workers,
            workload,
            flx,
            replicate,
            out,
        } => cmd_check(
            cli,
            &list,
            source,
            *workers,
            workload,
            flx.as_deref(),
            *replicate,
            out.as_deref(),
        ),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::input)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::runtime)
}

fn compile_file(cli: &Cli, list: &AsyncCalleeList, path: &Path) -> Result<Compilation, Failure> {
    let source = read(path)?;
    let c = compile(&source, list)
        .with_context(|| format!("cannot compile {}", path.display()))
        .map_err(Failure::input)?;
    if cli.verbose {
        for w in c.pipeline.warnings.iter().chain(&c.report.warnings) {
            eprintln!("warning: {w}");
        }
        for n in &c.report.notes {
            eprintln!("note: {n}");
        }
    }
    Ok(c)
}

fn load_workload(args: &WorkloadArgs) -> Result<Vec<Request>, Failure> {
    match &args.requests {
        Some(path) => parse_workload(&read(path)?)
            .with_context(|| format!("bad request file {}", path.display()))
            .map_err(Failure::input),
        None => Ok(vec![Request::get("/")]),
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize")
}

fn cmd_compile(
    cli: &Cli,
    list: &AsyncCalleeList,
    source: &Path,
    output: Option<&Path>,
    report: Option<&Path>,
) -> Outcome {
    let c = compile_file(cli, list, source)?;
    let text = c.flx_text();
    let placements = c.report.to_json(&c.pipeline);
    if let Some(path) = report {
        write(path, &(pretty(&placements) + "\n"))?;
    }
    match output {
        Some(path) => write(path, &text)?,
        None if cli.json => println!(
            "{}",
            pretty(&json!({"flx": text, "placements": placements}))
        ),
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_analyze(cli: &Cli, list: &AsyncCalleeList, source: &Path) -> Outcome {
    let c = compile_file(cli, list, source)?;
    if cli.json {
        println!("{}", pretty(&c.pipeline.to_json()));
        return Ok(0);
    }
    println!("{:<4} {:<24} members", "id", "stage");
    for s in &c.pipeline.stages {
        println!("{:<4} {:<24} {}", s.id, s.name, s.members.len());
    }
    println!();
    println!("{:<24} {:<4} {:<24} callee", "from", "kind", "to");
    for e in &c.pipeline.edges {
        println!(
            "{:<24} {:<4} {:<24} {} (line {})",
            c.pipeline.stages[e.from].name,
            e.kind.arrow(),
            c.pipeline.stages[e.to].name,
            e.rupture.callee,
            e.rupture.span.line
        );
    }
    for r in &c.pipeline.ignored {
        println!(
            "ignored: {} (line {}): {:?}",
            r.callee, r.span.line, r.callback
        );
    }
    println!();
    render_placements(&c.report.to_json(&c.pipeline));
    Ok(0)
}

fn render_placements(report: &Json) {
    println!(
        "{:<16} {:<16} {:<8} {:<32} rule",
        "binding", "declared in", "kind", "detail"
    );
    for p in report["placements"].as_array().into_iter().flatten() {
        let pl = &p["placement"];
        let detail = match pl["kind"].as_str() {
            Some("scope") => pl["stage"].as_str().unwrap_or_default().to_string(),
            Some("stream") => join(&pl["edges"], " "),
            Some("share") => format!(
                "{} {{{}}}",
                pl["tag"].as_str().unwrap_or("-"),
                join(&pl["members"], ", ")
            ),
            _ => String::new(),
        };
        println!(
            "{:<16} {:<16} {:<8} {:<32} {}",
            p["binding"].as_str().unwrap_or_default(),
            p["declaredIn"].as_str().unwrap_or_default(),
            pl["kind"].as_str().unwrap_or_default(),
            detail,
            p["rule"].as_str().unwrap_or_default()
        );
    }
    for g in report["groups"].as_array().into_iter().flatten() {
        println!(
            "group {} {{{}}} replicable={}",
            g["tag"].as_str().unwrap_or_default(),
            join(&g["members"], ", "),
            g["replicable"]
        );
    }
}

fn join(list: &Json, sep: &str) -> String {
    list.as_array()
        .into_iter()
        .flatten()
        .filter_map(Json::as_str)
        .collect::<Vec<_>>()
        .join(sep)
}

fn cmd_scopes(cli: &Cli, source: &Path) -> Outcome {
    let text = read(source)?;
    let program = parse_source(&text)
        .with_context(|| format!("cannot parse {}", source.display()))
        .map_err(Failure::input)?;
    let graph = build_scope_graph(&program);
    if cli.json {
        println!("{}", pretty(&graph.to_json()));
        return Ok(0);
    }
    for s in &graph.scopes {
        let parent = s.parent.map_or("-".to_string(), |p| p.to_string());
        let names: Vec<String> = s
            .bindings
            .iter()
            .map(|&b| {
                let b = &graph.bindings[b];
                format!("{}:{:?}", b.name, b.kind)
            })
            .collect();
        println!("scope {} (parent {}): {}", s.id, parent, names.join(" "));
    }
    println!("{} accesses", graph.accesses.len());
    Ok(0)
}

fn load_program(cli: &Cli, list: &AsyncCalleeList, path: &Path) -> Result<FlxProgram, Failure> {
    if path.extension().is_some_and(|e| e == "flx") {
        parse_flx(&read(path)?)
            .with_context(|| format!("cannot load {}", path.display()))
            .map_err(Failure::input)
    } else {
        Ok(compile_file(cli, list, path)?.flx)
    }
}

fn render_outputs(out: &ObservedOutputs) {
    println!("{:<8} response", "origin");
    for r in &out.responses {
        println!("{:<8} {}", r.origin_id, r.value);
    }
    for (name, value) in &out.final_globals {
        println!("global {name} = {value}");
    }
    for e in &out.errors {
        println!("error: {e}");
    }
}

fn cmd_run(
    cli: &Cli,
    list: &AsyncCalleeList,
    program: &Path,
    workers: usize,
    workload: &WorkloadArgs,
    trace: Option<&Path>,
    replicate: bool,
) -> Outcome {
    let program = load_program(cli, list, program)?;
    let requests = load_workload(workload)?;
    let config = RuntimeConfig {
        workers,
        replicate,
        trace: trace.is_some(),
        ..RuntimeConfig::default()
    };
    let mut rt = Runtime::new(program, config).map_err(Failure::runtime)?;
    rt.inject_all(&requests);
    let metrics: Metrics = rt.run_until_idle().map_err(Failure::runtime)?;
    if let Some(path) = trace {
        let mut text = String::new();
        for event in rt.trace() {
            text.push_str(&serde_json::to_string(&event).expect("trace events serialize"));
            text.push('\n');
        }
        write(path, &text)?;
    }
    let out = rt.outputs();
    if cli.json {
        println!("{}", pretty(&json!({"outputs": out, "metrics": metrics})));
    } else {
        render_outputs(&out);
        println!(
            "{} invocations in {:.1} ms on {} worker(s)",
            metrics.invocations.values().sum::<u64>(),
            metrics.elapsed_ms,
            workers
        );
    }
    Ok(0)
}

fn cmd_run_ref(cli: &Cli, source: &Path, workload: &WorkloadArgs, out: Option<&Path>) -> Outcome {
    let text = read(source)?;
    let program = parse_source(&text)
        .with_context(|| format!("cannot parse {}", source.display()))
        .map_err(Failure::input)?;
    let requests = load_workload(workload)?;
    let outputs = run_sequential(&program, &requests, default_vfs()).map_err(Failure::runtime)?;
    match out {
        Some(path) => write(path, &(pretty(&outputs) + "\n"))?,
        None if cli.json => println!("{}", pretty(&outputs)),
        None => render_outputs(&outputs),
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    cli: &Cli,
    list: &AsyncCalleeList,
    source: &Path,
    workers: usize,
    workload: &WorkloadArgs,
    flx: Option<&Path>,
    replicate: bool,
    out: Option<&Path>,
) -> Outcome {
    let text = read(source)?;
    let requests = load_workload(workload)?;
    let flx_override = match flx {
        Some(path) => Some(load_program(cli, list, path)?),
        None => None,
    };
    let options = CheckOptions {
        workers,
        replicate,
        async_list: list.clone(),
        flx_override,
        vfs: default_vfs(),
    };
    let report = check(&text, &requests, &options).map_err(|e| match e {
        CheckError::Compile(_) => Failure::input(e),
        other => Failure::runtime(other),
    })?;
    if cli.verbose {
        eprintln!(
            "compile {:.1} ms, reference {:.1} ms, runtime {:.1} ms",
            report.timings.compile_ms, report.timings.reference_ms, report.timings.runtime_ms
        );
    }
    match out {
        Some(path) => write(path, &(pretty(&report) + "\n"))?,
        None if cli.json => println!("{}", pretty(&report)),
        None => render_check(&report),
    }
    Ok(if report.equivalent { 0 } else { EXIT_MISMATCH })
}

fn render_check(report: &CheckReport) {
    println!("equivalent  {}", report.equivalent);
    println!("workers     {}", report.workers);
    println!("requests    {}", report.requests);
    println!("mismatches  {}", report.mismatches.len());
    for m in &report.mismatches {
        let what = match (m.origin_id, &m.name) {
            (Some(o), _) => format!("origin {o}"),
            (None, Some(n)) => format!("global {n}"),
            _ => "errors".to_string(),
        };
        println!("  {what}: expected {} got {}", m.expected, m.actual);
    }
}
