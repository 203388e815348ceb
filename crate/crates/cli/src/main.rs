//! `pdmpc` — run, compare and sweep receding-horizon flood-control runs.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input or I/O failure,
//! 3 finished but at least one step used a fallback plan or a clamped release.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pdmpc_core::config::{ConfigFile, Resolved};
use pdmpc_core::engine::{compare_modes, compute_metrics, run_event, sweep, Mode};
use pdmpc_core::events::{self, Event};
use pdmpc_core::io::{self as pio, RunRecord};
use pdmpc_core::search::GENE_NAMES;

#[derive(Parser)]
#[command(name = "pdmpc", version, about = "Receding-horizon reservoir flood control with searched objective weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; falls back to $PDMPC_CONFIG, then built-in defaults.
    #[arg(long, env = "PDMPC_CONFIG")]
    config: Option<PathBuf>,
    /// Event CSV (`step,inflow_m3s[,demand_m3s]`) or `bundled:<name>`.
    #[arg(long)]
    event: String,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `run.horizon`.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one event and write the trace and its sidecar.
    Run {
        #[command(flatten)]
        common: Common,
        /// Override `run.mode` (pdmpc, fixed1, fixed2).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Run several modes over several seeds and tabulate the metrics.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "pdmpc,fixed1,fixed2")]
        modes: Vec<String>,
        /// Number of seeds, starting at the configured seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Re-score each step of a searched run with one gene varied.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of w1, w2, w3i, w3d, w4i, w4d, w5, sh.
        #[arg(long, default_value = "w5")]
        gene: String,
        /// Inclusive gene value range, e.g. `1..20`.
        #[arg(long, default_value = "1..20")]
        range: String,
        /// Inclusive step range, e.g. `84..99`.
        #[arg(long)]
        steps: String,
    },
    /// Write the bundled synthetic events as CSV files.
    Events {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Invalid(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Invalid(e.into())
    }
}

/// Parses `a..b` or `a..=b`, both inclusive.
fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once("..").ok_or_else(|| anyhow!("expected a range like 1..20, got {s:?}"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
    if a > b {
        bail!("empty range {s:?}");
    }
    Ok((a, b))
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ConfigFile::default()),
    }
}

fn resolve(common: &Common) -> Result<(Resolved, Event, PathBuf)> {
    let mut file = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        file.run.seed = s;
    }
    if let Some(h) = common.horizon {
        file.run.horizon = h;
    }
    let base = common
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let resolved = file.resolve(&base)?;
    let event = match common.event.strip_prefix("bundled:") {
        Some(name) => events::bundled(name)?,
        None => pio::load_event(Path::new(&common.event))?,
    };
    let out = common
        .out
        .clone()
        .or_else(|| resolved.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((resolved, event, out))
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Run { common, mode } => {
            let (mut r, event, out) = resolve(&common)?;
            if let Some(m) = mode {
                r.run.mode = Mode::parse(&m).ok_or_else(|| Failure::Usage(anyhow!("unknown mode {m:?}")))?;
            }
            let trace = run_event(&event, &r.spec, &r.run)?;
            let metrics = compute_metrics(&trace, r.run.change_tol)?;
            let record = RunRecord { reservoir: r.spec, run: r.run };
            let path = out.join("trace.csv");
            pio::write_trace(&trace, &metrics, &record, &path)?;
            println!("{}", serde_json::to_string(&metrics)?);
            Ok(trace.flagged_steps().is_empty())
        }
        Command::Compare { common, modes, seeds } => {
            let (r, event, out) = resolve(&common)?;
            let modes = modes
                .iter()
                .map(|m| Mode::parse(m).ok_or_else(|| Failure::Usage(anyhow!("unknown mode {m:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if seeds == 0 {
                return Err(Failure::Usage(anyhow!("--seeds must be at least 1")));
            }
            let seed_list: Vec<u64> = (0..seeds).map(|i| r.run.seed.wrapping_add(i)).collect();
            let rows = compare_modes(&event, &r.spec, &r.run, &modes, &seed_list)?;
            let record = RunRecord { reservoir: r.spec, run: r.run };
            let hash = record.hash();
            let path = out.join("comparison.csv");
            pio::write_file(&path, |w| pio::write_comparison_csv(&rows, &hash, w))?;
            let side = serde_json::json!({ "config_hash": hash, "seeds": seed_list, "rows": rows, "config": record });
            pio::write_file(&pio::sidecar_path(&path), |w| {
                serde_json::to_writer_pretty(&mut *w, &side).map_err(std::io::Error::other)
            })?;
            println!("wrote {} rows to {}", rows.len(), path.display());
            Ok(rows.iter().all(|r| r.metrics.fallback_steps == 0 && r.metrics.clamped_steps == 0))
        }
        Command::Sweep { common, gene, range, steps } => {
            let gene_idx = GENE_NAMES
                .iter()
                .position(|g| *g == gene)
                .ok_or_else(|| Failure::Usage(anyhow!("unknown gene {gene:?}; expected one of {GENE_NAMES:?}")))?;
            let (v0, v1) = parse_range(&range).map_err(Failure::Usage)?;
            let (k0, k1) = parse_range(&steps).map_err(Failure::Usage)?;
            if v1 > u8::MAX as usize {
                return Err(Failure::Usage(anyhow!("gene values must fit in 0..=255")));
            }
            let (mut r, event, out) = resolve(&common)?;
            r.run.mode = Mode::Pdmpc;
            let values: Vec<u8> = (v0..=v1).map(|v| v as u8).collect();
            let grid = sweep(&event, &r.spec, &r.run, gene_idx, &values, k0..k1 + 1)?;
            let cap = r.run.evaluator.large_value;
            let seed = r.run.seed;
            let record = RunRecord { reservoir: r.spec, run: r.run };
            let hash = record.hash();
            let path = out.join(format!("sweep_{gene}.csv"));
            pio::write_file(&path, |w| pio::write_sweep_csv(&grid, Some(cap), &hash, seed, w))?;
            let raw = out.join(format!("sweep_{gene}_raw.csv"));
            pio::write_file(&raw, |w| pio::write_sweep_csv(&grid, None, &hash, seed, w))?;
            println!("wrote {}x{} grid to {}", grid.steps.len(), grid.values.len(), path.display());
            Ok(true)
        }
        Command::Events { out } => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for name in events::BUNDLED {
                let ev = events::bundled(name)?;
                let path = out.join(format!("{name}.csv"));
                pio::write_file(&path, |w| pio::write_event(&ev, w))?;
            }
            Ok(true)
        }
    }
}

/// Error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: some steps used a fallback plan or a clamped release");
            ExitCode::from(3)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
