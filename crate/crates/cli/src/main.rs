//! `metasim`: run experiment sweeps, generate workload traces, and check
//! trace files.
//!
//! Exit codes: 0 success, 2 simulation fault or unusable trace, 3
//! configuration error.

use clap::{Parser, Subcommand};
use metasim_core::config::SimConfig;
use metasim_core::error::TraceError;
use metasim_core::experiments::{build_traces, built_in, write_csv, BUILT_IN_NAMES};
use metasim_core::sim::RunError;
use metasim_core::trace::format::{trace_read, trace_write};
use metasim_core::trace::gen::TraceSpec;
use metasim_core::trace::validate::validate;
use metasim_core::trace::Trace;
use std::path::{Path, PathBuf};

const EXIT_FAULT: i32 = 2;
const EXIT_CONFIG: i32 = 3;

#[derive(Parser)]
#[command(name = "metasim", version, about = "Tagged-memory metadata system simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment sweep and write a CSV of result rows.
    Run {
        /// Built-in experiment name ("single" replays one configuration).
        #[arg(long)]
        experiment: String,
        /// JSON config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trace file or generator spec like "stream" or
        /// "random:region_bytes=4194304,accesses=10000"; overrides the
        /// experiment's built-in traces.
        #[arg(long)]
        trace: Option<String>,
        /// Output CSV path. Trap logs, when any, go to the same path with
        /// a .traps extension.
        #[arg(long)]
        out: PathBuf,
        /// Experiment seed; defaults to the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Repetitions per cell.
        #[arg(long, default_value_t = 5)]
        reps: u64,
        /// Config overrides as key=value; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Generate a workload trace file.
    Gen {
        /// Generator name (stream, random, linked_list, array3d, graph,
        /// safety_bounds, safety_rap).
        #[arg(long)]
        workload: String,
        /// Generator parameters as a comma-separated k=v list.
        #[arg(long)]
        params: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a trace file, verify its checksum, and report problems.
    Validate {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match cli.cmd {
        Cmd::Run {
            experiment,
            config,
            trace,
            out,
            seed,
            reps,
            set,
        } => run(experiment, config, trace, out, seed, reps, set),
        Cmd::Gen {
            workload,
            params,
            seed,
            out,
        } => gen(workload, params, seed, out),
        Cmd::Validate { trace } => validate_cmd(trace),
    };
    std::process::exit(code);
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("metasim: {msg}");
    code
}

fn trace_error_code(e: &TraceError) -> i32 {
    // A bad spec string is a configuration problem; a file that fails to
    // parse or verify is a fault.
    match e {
        TraceError::Invalid(_) => EXIT_CONFIG,
        _ => EXIT_FAULT,
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    experiment: String,
    config: Option<PathBuf>,
    trace: Option<String>,
    out: PathBuf,
    seed: Option<u64>,
    reps: u64,
    set: Vec<String>,
) -> i32 {
    let mut cfg = match config {
        Some(path) => match SimConfig::from_file(&path) {
            Ok(cfg) => cfg,
            Err(e) => return fail(EXIT_CONFIG, e),
        },
        None => SimConfig::default(),
    };
    for kv in &set {
        let Some((k, v)) = kv.split_once('=') else {
            return fail(EXIT_CONFIG, format!("--set needs key=value, got \"{kv}\""));
        };
        if let Err(e) = cfg.set(k, v) {
            return fail(EXIT_CONFIG, e);
        }
    }
    if reps == 0 {
        return fail(EXIT_CONFIG, "--reps must be at least 1");
    }
    let seed = seed.unwrap_or(cfg.seed);

    let Some(def) = built_in(&experiment) else {
        return fail(
            EXIT_CONFIG,
            format!(
                "unknown experiment \"{experiment}\"; built-ins: {}",
                BUILT_IN_NAMES.join(", ")
            ),
        );
    };

    let traces = match &trace {
        Some(arg) => match load_trace_arg(arg, seed) {
            Ok(named) => vec![named],
            Err(e) => return fail(trace_error_code(&e), e),
        },
        None => match build_traces(&def, seed) {
            Ok(traces) => traces,
            Err(e) => return fail(trace_error_code(&e), e),
        },
    };
    if traces.is_empty() {
        return fail(
            EXIT_CONFIG,
            format!("experiment \"{experiment}\" needs --trace"),
        );
    }

    let outcome = match metasim_core::experiments::run_experiment(&def, &cfg, &traces, seed, reps)
    {
        Ok(outcome) => outcome,
        Err(RunError::Config(e)) => return fail(EXIT_CONFIG, e),
        Err(RunError::Fault(e)) => return fail(EXIT_FAULT, e),
    };

    if let Err(e) = std::fs::write(&out, write_csv(&outcome.rows)) {
        return fail(EXIT_FAULT, format!("{}: {e}", out.display()));
    }
    println!("{}: {} rows", out.display(), outcome.rows.len());
    if !outcome.trap_log.is_empty() {
        let trap_path = out.with_extension("traps");
        let body = outcome.trap_log.join("\n") + "\n";
        if let Err(e) = std::fs::write(&trap_path, body) {
            return fail(EXIT_FAULT, format!("{}: {e}", trap_path.display()));
        }
        println!("{}: {} traps", trap_path.display(), outcome.trap_log.len());
    }
    0
}

/// A `--trace` argument is a file path when one exists, otherwise a
/// generator spec "name" or "name:k=v,k=v".
fn load_trace_arg(arg: &str, seed: u64) -> Result<(String, Trace), TraceError> {
    let path = Path::new(arg);
    if path.exists() {
        let t = trace_read(path)?;
        return Ok((t.header.generator.clone(), t));
    }
    let (name, params) = match arg.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (arg, None),
    };
    let mut spec = TraceSpec::new(name, seed);
    if let Some(params) = params {
        for kv in params.split(',') {
            let (k, v) = parse_param(kv)?;
            spec = spec.with(&k, v);
        }
    }
    Ok((spec.generator.clone(), spec.build()?))
}

fn parse_param(kv: &str) -> Result<(String, u64), TraceError> {
    let Some((k, v)) = kv.split_once('=') else {
        return Err(TraceError::Invalid(format!(
            "parameter \"{kv}\" is not key=value"
        )));
    };
    let v: u64 = v
        .parse()
        .map_err(|_| TraceError::Invalid(format!("parameter \"{k}\" needs an integer, got \"{v}\"")))?;
    Ok((k.to_string(), v))
}

fn gen(workload: String, params: Option<String>, seed: u64, out: PathBuf) -> i32 {
    let mut spec = TraceSpec::new(&workload, seed);
    if let Some(params) = params {
        for kv in params.split(',') {
            match parse_param(kv) {
                Ok((k, v)) => spec = spec.with(&k, v),
                Err(e) => return fail(EXIT_CONFIG, e),
            }
        }
    }
    let trace = match spec.build() {
        Ok(t) => t,
        Err(e) => return fail(trace_error_code(&e), e),
    };
    if let Err(e) = trace_write(&trace, &out) {
        return fail(EXIT_FAULT, e);
    }
    println!(
        "{}: {} events, {} image words, {} expected violations",
        out.display(),
        trace.events.len(),
        trace.header.image.len(),
        trace.header.expected.violations.len()
    );
    0
}

fn validate_cmd(path: PathBuf) -> i32 {
    let trace = match trace_read(&path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_FAULT, e),
    };
    let problems = validate(&trace);
    if problems.is_empty() {
        println!(
            "{}: ok ({} events, generator {})",
            path.display(),
            trace.events.len(),
            trace.header.generator
        );
        0
    } else {
        for p in &problems {
            eprintln!("{}: {p}", path.display());
        }
        EXIT_FAULT
    }
}
