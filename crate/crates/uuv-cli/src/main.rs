//! `uuv-sim`: run bundled or custom scenarios, emit plot data, compare
//! runs and validate configs.

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use uuv_sil::bus::TransportKind;
use uuv_sil::reasoner::endpoint::EndpointConfig;
use uuv_sil::scenario::compare::compare;
use uuv_sil::scenario::config::{KfMode, ReasonerMode};
use uuv_sil::scenario::plot::emit_plot_data;
use uuv_sil::scenario::{bundled, decode_transcript, predicate, run_to_dir, RunSummary, ScenarioConfig};

#[derive(Parser)]
#[command(name = "uuv-sim", version, about = "UUV software-in-the-loop scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario; exits 0 only when its pass conditions hold.
    Run(RunArgs),
    /// Write plot-ready CSVs from a run's transcript.
    PlotData {
        /// Run directory or transcript file.
        input: PathBuf,
        /// Output directory; defaults to `<run dir>/plot`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two runs' metrics side by side.
    Compare {
        /// Run directory or metrics.json of the baseline.
        a: PathBuf,
        /// Run directory or metrics.json of the candidate.
        b: PathBuf,
    },
    /// Check configs; with no --scenario, checks every bundled one.
    Validate {
        #[arg(long)]
        scenario: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Bundled scenario name or path to a TOML config.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `runs/<scenario>-<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// scripted or endpoint.
    #[arg(long)]
    reasoner: Option<ReasonerMode>,
    /// Completion endpoint for the endpoint reasoner.
    #[arg(long)]
    endpoint_url: Option<String>,
    /// Sim-time cap, s.
    #[arg(long)]
    duration_cap: Option<f64>,
    /// Keep filter covariances fixed even when a rescale is admitted.
    #[arg(long)]
    kf_only: bool,
    /// direct, channel or tcp.
    #[arg(long)]
    transport: Option<TransportKind>,
}

/// Print a line; a closed pipe (`| head`) is not an error worth a panic.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn load_config(spec: &str) -> Result<ScenarioConfig, String> {
    if bundled::text(spec).is_some() {
        return bundled::load(spec).map_err(|e| e.to_string());
    }
    let p = Path::new(spec);
    if p.exists() {
        return ScenarioConfig::load(p).map_err(|e| e.to_string());
    }
    Err(format!(
        "{spec:?} is neither a file nor a bundled scenario ({})",
        bundled::names().collect::<Vec<_>>().join(", ")
    ))
}

fn run(args: RunArgs) -> Result<bool, String> {
    let mut cfg = load_config(&args.scenario)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.reasoner {
        cfg.reasoner.mode = r;
    }
    if let Some(url) = args.endpoint_url {
        match &mut cfg.reasoner.endpoint {
            Some(ep) => ep.url = url,
            None => {
                cfg.reasoner.endpoint = Some(EndpointConfig {
                    url,
                    timeout_s: uuv_sil::reasoner::endpoint::DEFAULT_TIMEOUT_S,
                    model: None,
                })
            }
        }
    }
    if let Some(d) = args.duration_cap {
        cfg.duration_cap_s = d;
    }
    if args.kf_only {
        cfg.estimator.mode = KfMode::KfOnly;
    }
    if let Some(t) = args.transport {
        cfg.transport.kind = t;
    }
    cfg.resolve().map_err(|e| e.to_string())?;
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", cfg.name, cfg.seed)));
    let result =
        run_to_dir(&cfg, &out).map_err(|e| format!("run aborted: {e} (partial transcript in {})", out.display()))?;
    let m = result.metrics();
    say!(
        "{} seed {} [{}]: completed={} fault={} e_p_max={:.2} m peak_lateral={:.2} m",
        cfg.name,
        cfg.seed,
        cfg.estimator.mode.label(),
        m.mission_completed,
        m.fault_raised,
        m.e_p_max,
        m.peak_lateral_err
    );
    let checks = predicate::checks(&cfg, m);
    for c in &checks {
        say!("  {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    say!("outputs in {}", out.display());
    Ok(checks.iter().all(|c| c.passed))
}

fn file_in(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn plot_data(input: PathBuf, out: Option<PathBuf>) -> Result<bool, String> {
    let transcript = file_in(&input, "transcript.jsonl");
    let msgs = decode_transcript(&read(&transcript)?).map_err(|e| e.to_string())?;
    let out = out.unwrap_or_else(|| transcript.parent().unwrap_or(Path::new(".")).join("plot"));
    for p in emit_plot_data(&msgs, &out).map_err(|e| e.to_string())? {
        say!("{}", p.display());
    }
    Ok(true)
}

fn load_summary(path: &Path) -> Result<RunSummary, String> {
    let p = file_in(path, "metrics.json");
    serde_json::from_str(&read(&p)?).map_err(|e| format!("{}: {e}", p.display()))
}

fn compare_runs(a: PathBuf, b: PathBuf) -> Result<bool, String> {
    let c = compare(&load_summary(&a)?, &load_summary(&b)?).map_err(|e| e.to_string())?;
    let _ = write!(std::io::stdout(), "{}", c.render());
    Ok(true)
}

fn validate(names: Vec<String>) -> Result<bool, String> {
    let names: Vec<String> = if names.is_empty() {
        bundled::names().map(String::from).collect()
    } else {
        names
    };
    let mut ok = true;
    for n in names {
        match load_config(&n) {
            Ok(cfg) => say!("ok   {n} ({})", cfg.kind.label()),
            Err(e) => {
                ok = false;
                say!("FAIL {n}: {e}");
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::PlotData { input, out } => plot_data(input, out),
        Command::Compare { a, b } => compare_runs(a, b),
        Command::Validate { scenario } => validate(scenario),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
