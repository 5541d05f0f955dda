//! `coplay` command line: run, replay, analyze, serve.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coplay::arena::ArenaError;
use coplay::server::{ServeOptions, Server, ServerError};
use coplay::session::{
    export_augmented_log, replay_log, run_match, write_overlay, LogError, MatchResult, Pacing, Session,
    SessionConfig, SessionError,
};
use coplay::stats::{bh_adjust, goal_differential, wilcoxon_signed_rank, PairedRow, PairedSamples};

/// Relative log paths are resolved against this directory when set.
const LOG_DIR_ENV: &str = "COPLAY_LOG_DIR";

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;

#[derive(Parser)]
#[command(name = "coplay", version, about = "Shared pilot/copilot control of one arena car")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one match.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Step as fast as possible instead of at 120 Hz.
        #[arg(long)]
        headless: bool,
        /// Tick log output, overriding the config.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write the per-tick pilot/copilot overlay as NDJSON.
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Re-run the arena from a tick log and compare against its result.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Paired statistics over a CSV of label,condition_a,condition_b.
    Analyze {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Serve one match to protocol clients (NDJSON or WebSocket).
    Serve {
        #[arg(long)]
        port: u16,
        /// Session to serve. Without it a pilot named `pilot` joins
        /// remotely and the heuristic agent copilots.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Start without waiting for remote players.
        #[arg(long)]
        no_wait: bool,
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

const DEFAULT_SERVE_CONFIG: &str = r#"
[session]
mode = "hybrid"
preset = "P4"

[[players]]
name = "pilot"
role = "pilot"
source = "remote"

[[players]]
name = "copilot"
role = "copilot"
source = "agent:heuristic"
"#;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Config(_) | SessionError::Source(_) => EXIT_CONFIG,
            SessionError::Arena(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        };
        Failure::new(code, e)
    }
}

impl From<ArenaError> for Failure {
    fn from(e: ArenaError) -> Self {
        let code = match e {
            ArenaError::Log(_) => EXIT_PROTOCOL,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, e)
    }
}

impl From<LogError> for Failure {
    fn from(e: LogError) -> Self {
        let code = match e {
            LogError::Io(_) => EXIT_FAILURE,
            _ => EXIT_PROTOCOL,
        };
        Failure::new(code, e)
    }
}

fn resolve_log(path: &Path) -> PathBuf {
    match std::env::var_os(LOG_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_config(path: &Path) -> Result<SessionConfig, Failure> {
    SessionConfig::load(path).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn print_result(r: &MatchResult) {
    println!(
        "score {}-{}  differential {:+}  ticks {}  {:.2} s",
        r.scores[0], r.scores[1], r.goal_differential, r.ticks, r.duration_seconds
    );
    println!("trace {}", r.trace_hash);
}

fn run(config: &Path, headless: bool, log: Option<PathBuf>, overlay: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(l) = log {
        cfg.log = Some(l);
    }
    cfg.log = cfg.log.map(|l| resolve_log(&l));
    let pacing = if headless { Pacing::Unpaced } else { Pacing::RealTime };
    let (result, log) = if headless {
        run_match(cfg)?
    } else {
        Session::new(cfg)?.run(pacing)?
    };
    if let Some(path) = overlay {
        let file = std::fs::File::create(resolve_log(&path)).map_err(|e| Failure::new(EXIT_FAILURE, e))?;
        write_overlay(&export_augmented_log(&log), std::io::BufWriter::new(file))
            .map_err(|e| Failure::new(EXIT_FAILURE, e))?;
    }
    print_result(&result);
    Ok(())
}

fn replay(log: &Path, config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let tick_log = coplay::session::TickLog::load(&resolve_log(log))?;
    let result = replay_log(&tick_log, &cfg.arena)?;
    print_result(&result);
    match tick_log.result() {
        Some(recorded) if *recorded != result => Err(Failure::new(
            EXIT_FAILURE,
            format!("replay diverged from the recorded result (trace {})", recorded.trace_hash),
        )),
        Some(_) => {
            println!("matches recorded result");
            Ok(())
        }
        None => Ok(()),
    }
}

fn read_pairs(path: &Path) -> Result<PairedSamples, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Failure::new(EXIT_CONFIG, e))?.clone();
    let expected = ["label", "condition_a", "condition_b"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!("expected columns {}, got {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::new(EXIT_CONFIG, e))?;
        let num = |j: usize| -> Result<f64, Failure> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| Failure::new(EXIT_CONFIG, format!("row {}: `{}` is not a number", i + 1, &rec[j])))
        };
        rows.push(PairedRow {
            label: rec[0].to_string(),
            a: num(1)?,
            b: num(2)?,
        });
    }
    Ok(PairedSamples { rows })
}

fn analyze(pairs: &Path, alpha: f64) -> Result<(), Failure> {
    let samples = read_pairs(pairs)?;
    let summary = goal_differential(&samples).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let w = wilcoxon_signed_rank(&samples).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let bh = bh_adjust(&[w.p], alpha).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    println!("pairs {}", summary.n);
    println!("condition_a mean {:.4} std {:.4} population std {:.4}", summary.a.mean, summary.a.std, summary.a.population_std);
    println!("condition_b mean {:.4} std {:.4} population std {:.4}", summary.b.mean, summary.b.std, summary.b.population_std);
    if !summary.std_defined {
        println!("std undefined for a single pair");
    }
    println!("wilcoxon n {} W+ {} W- {} p {:.6}", w.n, w.w_plus, w.w_minus, w.p);
    if w.degenerate {
        println!("all differences are zero");
    }
    println!(
        "bh alpha {} adjusted {:.6} {}",
        alpha,
        bh.adjusted[0],
        if bh.rejected[0] { "rejected" } else { "not rejected" }
    );
    Ok(())
}

fn serve(port: u16, host: &str, config: Option<PathBuf>, no_wait: bool, log: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = match &config {
        Some(p) => load_config(p)?,
        None => SessionConfig::from_toml_str(DEFAULT_SERVE_CONFIG).map_err(|e| Failure::new(EXIT_CONFIG, e))?,
    };
    if let Some(l) = log {
        cfg.log = Some(l);
    }
    cfg.log = cfg.log.map(|l| resolve_log(&l));
    let server = Server::bind((host, port)).map_err(|e| Failure::new(EXIT_PROTOCOL, e))?;
    let addr = server.local_addr().map_err(|e| Failure::new(EXIT_PROTOCOL, e))?;
    eprintln!("listening on {addr}");
    let opts = ServeOptions {
        wait_for_players: !no_wait,
        ..ServeOptions::default()
    };
    match server.run(cfg, opts) {
        Ok((result, _)) => {
            print_result(&result);
            Ok(())
        }
        Err(ServerError::Session(e)) => Err(e.into()),
        Err(e) => Err(Failure::new(EXIT_PROTOCOL, e)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Run {
            config,
            headless,
            log,
            overlay,
        } => run(&config, headless, log, overlay),
        Command::Replay { log, config } => replay(&log, &config),
        Command::Analyze { pairs, alpha } => analyze(&pairs, alpha),
        Command::Serve {
            port,
            config,
            host,
            no_wait,
            log,
        } => serve(port, &host, config, no_wait, log),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
