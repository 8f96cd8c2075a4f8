//! The `mtc` command line.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::anomaly::screen;
use crate::check::{check, CheckError, Level, Verdict};
use crate::fixtures::{emit_fixtures, fixture_names, fixture_text};
use crate::graph::edges_to_dot;
use crate::history::History;
use crate::lwt::{split_by_object, verify_all, LwtOp};
use crate::oracle::{oracle, oracle_lin, OracleBudget, OracleOutcome, Refusal};
use crate::store::{abort_stats, execute, Fault, Isolation, StoreConfig};
use crate::workload::{generate, KeyDistribution, TxnTemplate, WorkloadConfig, WorkloadMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mtc", version, about = "Mini-transaction workloads and isolation checking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a workload of transaction templates.
    Generate {
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Output file (stdout if omitted).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Generate a workload, execute it on the simulated store, write the history.
    Run {
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Execute templates from this file instead of generating them.
        #[arg(long)]
        workload_file: Option<PathBuf>,
        #[arg(long, default_value = "si", value_parser = parse_from_str::<Isolation>)]
        isolation: Isolation,
        #[arg(long, value_parser = parse_from_str::<Fault>)]
        fault: Option<Fault>,
        #[arg(long, default_value_t = 5)]
        retries: u32,
        #[arg(long, default_value_t = 64)]
        lag: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Report preflight anomalies.
    Screen {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        file: PathBuf,
    },
    /// Check histories at an isolation level (`lin` reads LWT files).
    Check {
        #[arg(long, value_parser = parse_from_str::<Level>)]
        level: Level,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Files checked in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Brute-force reference check for small histories.
    Oracle {
        #[arg(long, value_parser = parse_from_str::<Level>)]
        level: Level,
        #[arg(long, default_value_t = 8)]
        max_txns: usize,
        #[arg(long, default_value_t = 50_000_000)]
        max_nodes: u64,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
        file: PathBuf,
    },
    /// Emit the anomaly and LWT fixture files.
    Fixtures {
        /// Write every fixture into this directory.
        #[arg(long, value_name = "DIR", conflicts_with_all = ["name", "list"])]
        emit_all: Option<PathBuf>,
        /// Print one fixture to stdout.
        #[arg(long, conflicts_with = "list")]
        name: Option<String>,
        /// List fixture names.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Debug, Args)]
struct WorkloadArgs {
    #[arg(long, default_value_t = 8)]
    sessions: u32,
    /// Total transactions across all sessions.
    #[arg(long, default_value_t = 1000)]
    txns: usize,
    #[arg(long, default_value_t = 100)]
    objects: usize,
    #[arg(long, default_value = "uniform", value_parser = parse_from_str::<KeyDistribution>)]
    dist: KeyDistribution,
    #[arg(long, default_value = "mt", value_parser = parse_from_str::<WorkloadMode>)]
    mode: WorkloadMode,
    #[arg(long, default_value_t = 20)]
    gt_ops: usize,
    /// Overridden by the MTC_SEED environment variable.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    Dot,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

/// Failure that ends a command with a specific exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code. Nothing is written outside `stdout`, `stderr` and requested files.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    let seed_override = std::env::var("MTC_SEED").ok();
    match dispatch(cli.command, seed_override.as_deref(), stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, seed_env: Option<&str>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Generate { workload, out } => {
            let cfg = workload.config(seed_env)?;
            let templates: Vec<TxnTemplate> = generate(&cfg).map_err(|e| Failure::input(e.to_string()))?.collect();
            let mut buf = Vec::new();
            TxnTemplate::write_jsonl(&templates, &mut buf)?;
            emit(&buf, out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Run { workload, workload_file, isolation, fault, retries, lag, out } => {
            let cfg = workload.config(seed_env)?;
            let templates: Vec<TxnTemplate> = match workload_file {
                Some(path) => TxnTemplate::from_jsonl(&read(&path)?).map_err(|e| Failure::input(e.to_string()))?,
                None => generate(&cfg).map_err(|e| Failure::input(e.to_string()))?.collect(),
            };
            let store = StoreConfig { isolation, fault, seed: cfg.seed, max_retries: retries, lag, ..StoreConfig::default() };
            let h = execute(templates, &store).map_err(|e| Failure::input(e.to_string()))?;
            emit(h.to_jsonl().as_bytes(), out.as_deref(), stdout)?;
            let stats = abort_stats(&h);
            writeln!(stderr, "committed {} aborted {} abort rate {:.4}", stats.committed, stats.aborted, stats.rate)?;
            Ok(EXIT_OK)
        }
        Command::Screen { format, file } => {
            let h = load_history(&file)?;
            let found = screen(&h);
            match format {
                Format::Json => writeln!(stdout, "{}", serde_json::to_string(&found).expect("anomalies serialize"))?,
                Format::Text => {
                    for a in &found {
                        writeln!(stdout, "{a}")?;
                    }
                }
                Format::Dot => return Err(Failure::input("screen output has no DOT form")),
            }
            Ok(if found.is_empty() { EXIT_OK } else { EXIT_VIOLATION })
        }
        Command::Check { level, format, jobs, files } => check_files(level, format, jobs, &files, stdout, stderr),
        Command::Oracle { level, max_txns, max_nodes, timeout_ms, file } => {
            let budget =
                OracleBudget { max_txns, max_permutations: max_nodes, timeout: Duration::from_millis(timeout_ms) };
            let outcome = if level == Level::Lin {
                let ops = LwtOp::from_jsonl(&read(&file)?).map_err(|e| input_at(&file, e))?;
                lin_oracle(ops, &budget)
            } else {
                oracle(&load_history(&file)?, level, &budget)
            };
            let report = OracleReport::new(level, &outcome);
            writeln!(stdout, "{}", serde_json::to_string(&report).expect("reports serialize"))?;
            Ok(match outcome {
                OracleOutcome::Pass => EXIT_OK,
                OracleOutcome::Fail => EXIT_VIOLATION,
                OracleOutcome::Refused(_) => EXIT_INPUT,
            })
        }
        Command::Fixtures { emit_all, name, list } => {
            if let Some(dir) = emit_all {
                for path in emit_fixtures(&dir)? {
                    writeln!(stdout, "{}", path.display())?;
                }
            } else if let Some(name) = name {
                let text = fixture_text(&name).ok_or_else(|| Failure::input(format!("no fixture named `{name}`")))?;
                stdout.write_all(text.as_bytes())?;
            } else if list {
                for n in fixture_names() {
                    writeln!(stdout, "{n}")?;
                }
            } else {
                return Err(Failure::input("fixtures needs --emit-all DIR, --name NAME or --list"));
            }
            Ok(EXIT_OK)
        }
    }
}

impl WorkloadArgs {
    fn config(&self, seed_env: Option<&str>) -> Result<WorkloadConfig, Failure> {
        let seed = match seed_env {
            Some(s) => s.trim().parse().map_err(|e| Failure::input(format!("MTC_SEED `{s}`: {e}")))?,
            None => self.seed,
        };
        let cfg = WorkloadConfig {
            sessions: self.sessions,
            txns: self.txns,
            objects: self.objects,
            distribution: self.dist,
            mode: self.mode,
            gt_ops_per_txn: self.gt_ops,
            seed,
            ..WorkloadConfig::default()
        };
        cfg.validate().map_err(|e| Failure::input(e.to_string()))?;
        Ok(cfg)
    }
}

fn emit(bytes: &[u8], out: Option<&Path>, stdout: &mut dyn Write) -> io::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes),
        None => stdout.write_all(bytes),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn input_at(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

fn load_history(path: &Path) -> Result<History, Failure> {
    History::from_jsonl(&read(path)?).map_err(|e| input_at(path, e))
}

fn lin_oracle(ops: Vec<LwtOp>, budget: &OracleBudget) -> OracleOutcome {
    let mut refused: Option<Refusal> = None;
    for hx in split_by_object(ops).values() {
        match oracle_lin(hx, budget) {
            OracleOutcome::Pass => {}
            OracleOutcome::Fail => return OracleOutcome::Fail,
            OracleOutcome::Refused(r) => {
                refused.get_or_insert(r);
            }
        }
    }
    refused.map_or(OracleOutcome::Pass, OracleOutcome::Refused)
}

#[derive(Serialize)]
struct OracleReport<'a> {
    level: Level,
    outcome: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    refusal: Option<&'a Refusal>,
}

impl<'a> OracleReport<'a> {
    fn new(level: Level, outcome: &'a OracleOutcome) -> Self {
        let (name, refusal) = match outcome {
            OracleOutcome::Pass => ("pass", None),
            OracleOutcome::Fail => ("fail", None),
            OracleOutcome::Refused(r) => ("refused", Some(r)),
        };
        OracleReport { level, outcome: name, refusal }
    }
}

fn check_one(level: Level, path: &Path) -> Result<Verdict, Failure> {
    let text = read(path)?;
    if level == Level::Lin {
        let ops = LwtOp::from_jsonl(&text).map_err(|e| input_at(path, e))?;
        return Ok(verify_all(ops));
    }
    let h = History::from_jsonl(&text).map_err(|e| input_at(path, e))?;
    check(&h, level).map_err(|e| match e {
        CheckError::NotMiniTransactions(report) => input_at(
            path,
            format!("{} ({})", CheckError::NotMiniTransactions(report.clone()), first_problem(&report)),
        ),
        other => input_at(path, other),
    })
}

fn first_problem(report: &crate::history::ValidationReport) -> String {
    if let Some(v) = report.mt_violations.first() {
        return serde_json::to_string(v).expect("violations serialize");
    }
    if let Some(v) = report.unique_write_violations.first() {
        return serde_json::to_string(v).expect("violations serialize");
    }
    String::new()
}

#[derive(Serialize)]
struct FileVerdict<'a> {
    file: String,
    #[serde(flatten)]
    verdict: &'a Verdict,
}

fn check_files(
    level: Level,
    format: Format,
    jobs: usize,
    files: &[PathBuf],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
    let results: Vec<Result<Verdict, Failure>> =
        pool.install(|| files.par_iter().map(|f| check_one(level, f)).collect());

    let many = files.len() > 1;
    let mut code = EXIT_OK;
    for (path, result) in files.iter().zip(results) {
        let verdict = match result {
            Ok(v) => v,
            Err(f) => {
                writeln!(stderr, "error: {}", f.message)?;
                code = EXIT_INPUT;
                continue;
            }
        };
        if !verdict.ok && code == EXIT_OK {
            code = EXIT_VIOLATION;
        }
        match format {
            Format::Json if many => {
                let fv = FileVerdict { file: path.display().to_string(), verdict: &verdict };
                writeln!(stdout, "{}", serde_json::to_string(&fv).expect("verdicts serialize"))?;
            }
            Format::Json => writeln!(stdout, "{}", verdict.to_json())?,
            Format::Text if many => writeln!(stdout, "{}: {verdict}", path.display())?,
            Format::Text => writeln!(stdout, "{verdict}")?,
            Format::Dot => {
                let edges = verdict.counterexample.as_ref().map(|c| c.edges()).unwrap_or_default();
                stdout.write_all(edges_to_dot(&edges).as_bytes())?;
            }
        }
    }
    Ok(code)
}
