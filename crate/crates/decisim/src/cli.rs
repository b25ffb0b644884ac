//! `decisim` command line.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 validation failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decisim_core::{validate_problem, DecisionProblem, ValidationReport};

use crate::analysis::{analyze, default_workers, replay, report_json, AnalysisError, RunOptions};
use crate::doc::{DocError, ProblemDoc};
use crate::render::{report_text, sensitivity_text};
use crate::service::{serve, Service, ServiceConfig};
use crate::warehouse::Store;

#[derive(Parser, Debug)]
#[command(name = "decisim", version, about = "Compare decision alternatives under uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a problem file and print the comparison report
    Run {
        problem: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Include per-parameter variance contributions
        #[arg(long)]
        sensitivity: bool,
    },
    /// Check a problem file; exit 2 when it has violations
    Validate { problem: PathBuf },
    /// Print first-order variance contributions per alternative
    Sensitivity {
        problem: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Manage the prior/session store
    Warehouse {
        #[command(flatten)]
        store: StoreArgs,
        #[command(subcommand)]
        action: WarehouseAction,
    },
    /// Run the HTTP service
    Serve {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 2_000_000)]
        max_samples: usize,
        #[arg(long, default_value_t = 100_000)]
        default_samples: usize,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
        /// Allowed browser origin (repeatable, `*` for any)
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
        /// Import the bundled vehicle priors into the store first
        #[arg(long)]
        seed_priors: bool,
        #[arg(long)]
        workers: Option<usize>,
        /// Do not log requests
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct StoreArgs {
    /// Store file
    #[arg(long, env = "DECISIM_STORE", default_value = "decisim-store.jsonl")]
    store: PathBuf,
}

#[derive(Subcommand, Debug)]
enum WarehouseAction {
    /// Load priors/sessions from a JSON-lines export
    Import { file: PathBuf },
    /// Write priors and sessions as JSON lines (`-` for stdout)
    Export { file: PathBuf },
    /// Re-simulate every stored session and compare with its stored report
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(f) => {
            if !f.message.is_empty() {
                let _ = writeln!(err, "error: {}", f.message);
            }
            f.code
        }
    }
}

fn load(path: &Path) -> Result<ProblemDoc, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    ProblemDoc::from_json(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_violations(report: &ValidationReport, w: &mut dyn Write) {
    for v in &report.violations {
        let _ = writeln!(w, "{}\t{}\t{}", v.code, v.path, v.message);
    }
}

fn to_problem(doc: &ProblemDoc, sim: &SimArgs, err: &mut dyn Write) -> Result<DecisionProblem, Failure> {
    let mut problem = match doc.to_problem() {
        Ok(p) => p,
        Err(DocError::Objective(e)) => {
            let _ = writeln!(err, "invalid_objective\tobjective\t{e}");
            return Err(Failure {
                code: 2,
                message: String::new(),
            });
        }
        Err(e) => return Err(Failure::io(e.to_string())),
    };
    if let Some(seed) = sim.seed {
        problem.seed = seed;
    }
    if let Some(n) = sim.samples {
        problem.sample_count = n;
    }
    let report = validate_problem(&problem);
    if !report.is_valid() {
        write_violations(&report, err);
        return Err(Failure {
            code: 2,
            message: String::new(),
        });
    }
    Ok(problem)
}

fn run_analysis(problem: &DecisionProblem, sim: &SimArgs, sensitivity: bool) -> Result<crate::analysis::Analysis, Failure> {
    let opts = RunOptions {
        workers: sim.workers.unwrap_or_else(default_workers),
        sensitivity,
    };
    analyze(problem, opts).map_err(|e| match e {
        AnalysisError::Invalid(_) => Failure {
            code: 2,
            message: e.to_string(),
        },
        other => Failure::io(other.to_string()),
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes()).map_err(|e| Failure::io(e.to_string()))?;
    if !text.ends_with('\n') {
        out.write_all(b"\n").map_err(|e| Failure::io(e.to_string()))?;
    }
    Ok(())
}

fn open_store(args: &StoreArgs) -> Result<Store, Failure> {
    Store::open(&args.store).map_err(|e| Failure::io(format!("{}: {e}", args.store.display())))
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cli.command {
        Command::Run {
            problem,
            sim,
            format,
            sensitivity,
        } => {
            let doc = load(&problem)?;
            let problem = to_problem(&doc, &sim, err)?;
            let analysis = run_analysis(&problem, &sim, sensitivity)?;
            match format {
                Format::Text => emit(out, &report_text(&analysis.report)),
                Format::Json => emit(out, &report_json(&analysis.report)),
                Format::Csv => emit(out, &analysis.matrix.to_csv()),
            }
        }
        Command::Validate { problem } => {
            let doc = load(&problem)?;
            let defaults = SimArgs {
                seed: None,
                samples: None,
                workers: None,
            };
            to_problem(&doc, &defaults, out)?;
            emit(out, "ok")
        }
        Command::Sensitivity { problem, sim, format } => {
            let doc = load(&problem)?;
            let problem = to_problem(&doc, &sim, err)?;
            let analysis = run_analysis(&problem, &sim, true)?;
            let table = analysis.report.sensitivity.expect("sensitivity requested");
            match format {
                Format::Json => emit(out, &serde_json::to_string_pretty(&table).expect("serializes")),
                _ => emit(out, &sensitivity_text(&table)),
            }
        }
        Command::Warehouse { store, action } => warehouse(&store, action, out),
        Command::Serve {
            store,
            bind,
            port,
            max_samples,
            default_samples,
            timeout_secs,
            cors_origins,
            seed_priors,
            workers,
            quiet,
        } => {
            let store = open_store(&store)?;
            if seed_priors {
                let summary = store
                    .import(&mut crate::warehouse::builtin_priors_jsonl().as_bytes())
                    .map_err(|e| Failure::io(e.to_string()))?;
                let _ = writeln!(err, "seeded {} prior(s)", summary.priors_added);
            }
            let mut config = ServiceConfig {
                max_samples,
                default_sample_count: default_samples.min(max_samples),
                request_timeout: Duration::from_secs(timeout_secs),
                log_requests: !quiet,
                ..ServiceConfig::default()
            };
            if let Some(w) = workers {
                config.workers = w.max(1);
            }
            if !cors_origins.is_empty() {
                config.cors_origins = cors_origins;
            }
            #[allow(unused_mut)]
            let mut service = Service::new(Arc::new(store), config);
            #[cfg(feature = "llm")]
            if let Some(llm) = crate::dialog::llm::LlmConfig::from_env() {
                service = service.with_backend("llm", Arc::new(crate::dialog::LlmBackend::from_config(llm)));
            }
            let addr = SocketAddr::new(bind, port);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::io(e.to_string()))?;
            let _ = writeln!(err, "listening on http://{addr}");
            runtime
                .block_on(serve(addr, service))
                .map_err(|e| Failure::io(format!("{addr}: {e}")))
        }
    }
}

fn warehouse(args: &StoreArgs, action: WarehouseAction, out: &mut dyn Write) -> Outcome {
    let store = open_store(args)?;
    match action {
        WarehouseAction::Import { file } => {
            let f = File::open(&file).map_err(|e| Failure::io(format!("{}: {e}", file.display())))?;
            let s = store
                .import(&mut BufReader::new(f))
                .map_err(|e| Failure::io(format!("{}: {e}", file.display())))?;
            emit(
                out,
                &format!(
                    "imported {} prior(s), {} session(s); {} unchanged",
                    s.priors_added, s.sessions_added, s.unchanged
                ),
            )
        }
        WarehouseAction::Export { file } => {
            if file.as_os_str() == "-" {
                store.export(out).map_err(|e| Failure::io(e.to_string()))
            } else {
                let mut f = File::create(&file).map_err(|e| Failure::io(format!("{}: {e}", file.display())))?;
                store.export(&mut f).map_err(|e| Failure::io(e.to_string()))
            }
        }
        WarehouseAction::Replay => {
            let mut mismatched = 0;
            let sessions = store.sessions();
            for record in &sessions {
                let same = match replay(record, default_workers()) {
                    Ok(report) => report_json(&report) == report_json(&record.report),
                    Err(_) => false,
                };
                if !same {
                    mismatched += 1;
                }
                emit(out, &format!("{}\t{}", record.id, if same { "identical" } else { "MISMATCH" }))?;
            }
            if mismatched > 0 {
                return Err(Failure {
                    code: 2,
                    message: format!("{mismatched} of {} session(s) did not replay", sessions.len()),
                });
            }
            Ok(())
        }
    }
}
