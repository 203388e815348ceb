//! File formats: event CSVs, trace CSVs with a JSON sidecar, comparison
//! tables and sweep grids.
//!
//! Every output CSV starts with a `# config_hash=<hex> seed=<n>` comment line.
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! runs produce identical bytes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{ComparisonRow, Metrics, RunConfig, SweepGrid, Trace};
use crate::events::Event;
use crate::hydro::ReservoirSpec;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}:{line}: {msg}")]
    Validation { path: PathBuf, line: usize, msg: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

pub const EVENT_HEADER: &str = "step,inflow_m3s";
pub const EVENT_HEADER_DEMAND: &str = "step,inflow_m3s,demand_m3s";

/// Reads an event CSV: `step,inflow_m3s[,demand_m3s]`, steps 0, 1, 2, ...
/// `#` comment lines are skipped.
pub fn load_event(path: &Path) -> Result<Event, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let name = path.file_stem().map_or_else(|| "event".into(), |s| s.to_string_lossy().into_owned());
    parse_event(&text, &name, path)
}

pub fn parse_event(text: &str, name: &str, path: &Path) -> Result<Event, IoError> {
    let parse = |line: usize, msg: String| IoError::Parse { path: path.to_path_buf(), line, msg };
    let invalid = |line: usize, msg: String| IoError::Validation { path: path.to_path_buf(), line, msg };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let line_of = |r: &csv::StringRecord| r.position().map_or(0, |p| p.line() as usize);
    let header = match records.next() {
        Some(Ok(r)) => r,
        Some(Err(e)) => return Err(parse(e.position().map_or(1, |p| p.line() as usize), e.to_string())),
        None => return Err(parse(1, "missing header".into())),
    };
    let hline = line_of(&header);
    let cols: Vec<&str> = header.iter().collect();
    let has_demand = match cols.as_slice() {
        ["step", "inflow_m3s"] => false,
        ["step", "inflow_m3s", "demand_m3s"] => true,
        _ => {
            return Err(parse(
                hline,
                format!("expected header `{EVENT_HEADER_DEMAND}` (demand optional), got `{}`", cols.join(",")),
            ))
        }
    };
    let (mut inflow, mut demand) = (Vec::new(), Vec::new());
    for rec in records {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = line_of(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != cols.len() {
            return Err(parse(line, format!("expected {} fields, got {}", cols.len(), rec.len())));
        }
        let step: usize = rec[0].parse().map_err(|_| parse(line, format!("bad step `{}`", &rec[0])))?;
        if step != inflow.len() {
            return Err(invalid(line, format!("step {step} out of sequence, expected {}", inflow.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64, IoError> {
            let v: f64 = s.parse().map_err(|_| parse(line, format!("bad {what} `{s}`")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(line, format!("{what} must be finite and >= 0, got {v}")));
            }
            Ok(v)
        };
        inflow.push(num(&rec[1], "inflow")?);
        if has_demand {
            demand.push(num(&rec[2], "demand")?);
        }
    }
    Event::new(name, inflow, has_demand.then_some(demand)).map_err(|e| invalid(hline, e.to_string()))
}

pub fn write_event<W: Write>(event: &Event, mut w: W) -> io::Result<()> {
    let with_demand = event.demand.iter().any(|&d| d != 0.0);
    writeln!(w, "{}", if with_demand { EVENT_HEADER_DEMAND } else { EVENT_HEADER })?;
    for (k, q) in event.inflow.iter().enumerate() {
        if with_demand {
            writeln!(w, "{k},{q},{}", event.demand[k])?;
        } else {
            writeln!(w, "{k},{q}")?;
        }
    }
    Ok(())
}

/// Fully resolved inputs of a run, as recorded next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub reservoir: ReservoirSpec,
    pub run: RunConfig,
}

impl RunRecord {
    /// First 16 hex digits of the SHA-256 of the record's JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}

pub const TRACE_HEADER: &str = "step,inflow,forecast0,total,spill,turb,storage,level,penalty_total,\
j1,j2,j3,j4,j5,j6,j7,j8,w1,w2,w3i,w3d,w4i,w4d,w5,sh_level,lp_status,fallback";

pub fn write_trace_csv<W: Write>(trace: &Trace, spec: &ReservoirSpec, hash: &str, mut w: W) -> io::Result<()> {
    writeln!(w, "# config_hash={hash} seed={}", trace.seed)?;
    writeln!(w, "{TRACE_HEADER}")?;
    for s in &trace.steps {
        let z = &s.weights;
        let p = &s.penalty;
        write!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            s.step, s.inflow, s.forecast[0], s.total, s.spill, s.turb, s.storage, s.level, p.total
        )?;
        for t in p.terms {
            write!(w, ",{t}")?;
        }
        writeln!(
            w,
            ",{},{},{},{},{},{},{},{},{},{}",
            z.w1,
            z.w2,
            z.w3_i,
            z.w3_d,
            z.w4_i,
            z.w4_d,
            z.w5_1,
            spec.curve.level_saturating(z.s_h),
            s.lp_status,
            s.fallback as u8
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub config_hash: String,
    pub seed: u64,
    pub event: String,
    pub metrics: Metrics,
    pub flagged_steps: Vec<usize>,
    pub config: RunRecord,
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Path of the JSON sidecar for a CSV path.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes the trace CSV and its JSON sidecar.
pub fn write_trace(trace: &Trace, metrics: &Metrics, record: &RunRecord, path: &Path) -> Result<(), IoError> {
    let hash = record.hash();
    let mut w = create(path)?;
    write_trace_csv(trace, &record.reservoir, &hash, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    let side = TraceSidecar {
        config_hash: hash,
        seed: trace.seed,
        event: trace.event.clone(),
        metrics: metrics.clone(),
        flagged_steps: trace.flagged_steps(),
        config: record.clone(),
    };
    let sp = sidecar_path(path);
    let mut w = create(&sp)?;
    serde_json::to_writer_pretty(&mut w, &side)?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&sp))?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<TraceSidecar, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub const COMPARISON_HEADER: &str = "mode,seed,horizon,peak_outflow,peak_rwl,lowest_rwl,schedule_changes,\
total_penalty,max_penalty,fallback_steps,clamped_steps";

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], hash: &str, mut w: W) -> io::Result<()> {
    let seeds: Vec<String> = rows.iter().map(|r| r.seed.to_string()).collect();
    let mut seeds_dedup = seeds.clone();
    seeds_dedup.dedup();
    writeln!(w, "# config_hash={hash} seed={}", seeds_dedup.join(";"))?;
    writeln!(w, "{COMPARISON_HEADER}")?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.mode,
            r.seed,
            r.horizon,
            m.peak_outflow,
            m.peak_rwl,
            m.lowest_rwl,
            m.schedule_changes,
            m.total_penalty,
            m.max_penalty,
            m.fallback_steps,
            m.clamped_steps
        )?;
    }
    Ok(())
}

/// Marker written in place of penalties at or above the cap.
pub const SATURATION_MARKER: f64 = 99.0;

/// Grid with one row per step and one column per gene value. With `cap`,
/// penalties at or above it are written as [`SATURATION_MARKER`].
pub fn write_sweep_csv<W: Write>(
    grid: &SweepGrid,
    cap: Option<f64>,
    hash: &str,
    seed: u64,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "# config_hash={hash} seed={seed}")?;
    let header: Vec<String> = grid.values.iter().map(|v| v.to_string()).collect();
    writeln!(w, "step,{}", header.join(","))?;
    for (k, line) in grid.steps.iter().zip(&grid.penalties) {
        let cells: Vec<String> = line
            .iter()
            .map(|&p| match cap {
                Some(c) if p >= c => SATURATION_MARKER.to_string(),
                _ => p.to_string(),
            })
            .collect();
        writeln!(w, "{k},{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), IoError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}
