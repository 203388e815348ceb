//! Reservoir physics: stage-storage conversion, the hourly mass balance and
//! validation of the operating constraints on a committed series.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack used when validating committed series.
const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HydroError {
    #[error("value {value} outside curve range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("storage update would go negative ({0} m3)")]
    NegativeStorage(f64),
    #[error("series lengths differ: {0}")]
    LengthMismatch(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid reservoir spec: {0}")]
    InvalidSpec(String),
    #[error("curve file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Piecewise-linear level/storage relation with strictly increasing anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct StageStorageCurve {
    points: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for StageStorageCurve {
    type Error = HydroError;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(points)
    }
}

impl From<StageStorageCurve> for Vec<(f64, f64)> {
    fn from(c: StageStorageCurve) -> Self {
        c.points
    }
}

impl StageStorageCurve {
    /// Builds a curve from `(level_m, storage_m3)` anchors.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, HydroError> {
        if points.len() < 2 {
            return Err(HydroError::InvalidCurve("need at least 2 points".into()));
        }
        if points.iter().any(|(l, s)| !l.is_finite() || !s.is_finite()) {
            return Err(HydroError::InvalidCurve("non-finite value".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(HydroError::InvalidCurve(format!(
                    "levels not strictly increasing at {}",
                    w[1].0
                )));
            }
            if w[1].1 <= w[0].1 {
                return Err(HydroError::InvalidCurve(format!(
                    "storages not strictly increasing at {}",
                    w[1].1
                )));
            }
        }
        Ok(Self { points })
    }

    /// Synthetic default anchored at LWL, spillway crest, NHWL and FWL.
    pub fn default_curve() -> Self {
        Self::new(vec![
            (60.0, 0.30e9),
            (64.5, 0.55e9),
            (76.5, 1.24e9),
            (80.0, 1.49e9),
        ])
        .expect("default curve is valid")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn level_range(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    pub fn storage_range(&self) -> (f64, f64) {
        (self.points[0].1, self.points[self.points.len() - 1].1)
    }

    /// Water level for a storage volume.
    pub fn level_from_storage(&self, storage: f64) -> Result<f64, HydroError> {
        let (min, max) = self.storage_range();
        if !(min..=max).contains(&storage) {
            return Err(HydroError::OutOfRange { value: storage, min, max });
        }
        Ok(interpolate(&self.points, storage, |p| p.1, |p| p.0))
    }

    /// Storage volume for a water level; inverse of [`Self::level_from_storage`].
    pub fn storage_from_level(&self, level: f64) -> Result<f64, HydroError> {
        let (min, max) = self.level_range();
        if !(min..=max).contains(&level) {
            return Err(HydroError::OutOfRange { value: level, min, max });
        }
        Ok(interpolate(&self.points, level, |p| p.0, |p| p.1))
    }

    /// Level with the storage clamped into the curve range. Used for reporting
    /// simulated trajectories that may leave the tabulated domain.
    pub fn level_saturating(&self, storage: f64) -> f64 {
        let (min, max) = self.storage_range();
        self.level_from_storage(storage.clamp(min, max))
            .expect("clamped storage is in range")
    }

    /// Reads a two-column `level_m, storage_m3` table. The first non-empty
    /// line is a header; columns may be separated by commas or whitespace.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, HydroError> {
        let mut points = Vec::new();
        let mut header_seen = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = trimmed
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(HydroError::Parse {
                    line: i + 1,
                    msg: format!("expected 2 columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| HydroError::Parse {
                    line: i + 1,
                    msg: format!("{s:?}: {e}"),
                })
            };
            points.push((parse(fields[0])?, parse(fields[1])?));
        }
        if !header_seen {
            return Err(HydroError::Parse { line: 1, msg: "missing header".into() });
        }
        Self::new(points)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HydroError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}

fn interpolate(
    points: &[(f64, f64)],
    x: f64,
    key: impl Fn(&(f64, f64)) -> f64,
    val: impl Fn(&(f64, f64)) -> f64,
) -> f64 {
    // first segment whose right end is >= x
    let idx = points
        .partition_point(|p| key(p) < x)
        .clamp(1, points.len() - 1);
    let (a, b) = (&points[idx - 1], &points[idx]);
    if x == key(b) {
        return val(b);
    }
    if x == key(a) {
        return val(a);
    }
    let frac = (x - key(a)) / (key(b) - key(a));
    val(a) + frac * (val(b) - val(a))
}

/// Physical constants of the reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    /// Flood water level, m.
    pub fwl: f64,
    /// Normal high water level, m.
    pub nhwl: f64,
    /// Low water level, m.
    pub lwl: f64,
    pub spillway_crest: f64,
    /// Turbine capacity, m3/s.
    pub mo_turb: f64,
    /// Spillway capacity, m3/s.
    pub mo_spill: f64,
    pub curve: StageStorageCurve,
    /// Seconds per step.
    pub dt: f64,
}

impl Default for ReservoirSpec {
    fn default() -> Self {
        Self {
            fwl: 80.0,
            nhwl: 76.5,
            lwl: 60.0,
            spillway_crest: 64.5,
            mo_turb: 264.0,
            mo_spill: 11_680.0,
            curve: StageStorageCurve::default_curve(),
            dt: 3600.0,
        }
    }
}

impl ReservoirSpec {
    pub fn validate(&self) -> Result<(), HydroError> {
        if !(self.lwl < self.spillway_crest
            && self.spillway_crest < self.nhwl
            && self.nhwl < self.fwl)
        {
            return Err(HydroError::InvalidSpec(
                "expected lwl < spillway_crest < nhwl < fwl".into(),
            ));
        }
        if !(self.mo_turb > 0.0 && self.mo_spill > 0.0 && self.dt > 0.0) {
            return Err(HydroError::InvalidSpec(
                "capacities and dt must be positive".into(),
            ));
        }
        let (lo, hi) = self.curve.level_range();
        if self.lwl < lo || self.fwl > hi {
            return Err(HydroError::InvalidSpec(format!(
                "curve levels [{lo}, {hi}] do not cover [{}, {}]",
                self.lwl, self.fwl
            )));
        }
        Ok(())
    }

    /// Storage at the low water level.
    pub fn lws(&self) -> f64 {
        self.curve.storage_from_level(self.lwl).expect("validated spec")
    }

    /// Storage at the flood water level.
    pub fn fws(&self) -> f64 {
        self.curve.storage_from_level(self.fwl).expect("validated spec")
    }

    pub fn storage_at(&self, level: f64) -> Result<f64, HydroError> {
        self.curve.storage_from_level(level)
    }

    pub fn level_at(&self, storage: f64) -> Result<f64, HydroError> {
        self.curve.level_from_storage(storage)
    }

    pub fn max_total_outflow(&self) -> f64 {
        self.mo_turb + self.mo_spill
    }
}

/// Observable reservoir state at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirState {
    pub storage: f64,
    /// Total outflow already committed for the current step.
    pub committed_total_outflow: f64,
    pub committed_spill_outflow: f64,
    /// Spillway outflow implemented during the previous step.
    pub last_spill: f64,
    pub step_index: usize,
}

impl ReservoirState {
    pub fn committed_turb_outflow(&self) -> f64 {
        self.committed_total_outflow - self.committed_spill_outflow
    }
}

/// Mass balance over one step: `storage + (inflow - outflow) * dt`.
pub fn step_storage(storage: f64, inflow: f64, outflow_total: f64, dt: f64) -> Result<f64, HydroError> {
    let next = storage + (inflow - outflow_total) * dt;
    if next < 0.0 {
        return Err(HydroError::NegativeStorage(next));
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Total outflow below downstream demand.
    Demand,
    StorageBelowLws,
    StorageAboveFws,
    TurbineCapacity,
    SpillCapacity,
    /// Spill released while the level is below the spillway crest.
    SpillBelowCrest,
    SpillExceedsTotal,
    NegativeFlow,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub kind: ViolationKind,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.violations.iter().map(|v| v.step).collect();
        s.dedup();
        s
    }

    pub fn at_step(&self, step: usize) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.step == step)
    }
}

/// Checks demand, storage band, capacities and spill consistency per step.
///
/// `storages` is either aligned with the flow series (storage at the start of
/// each step) or one longer (including the storage after the last step).
pub fn check_constraints(
    spec: &ReservoirSpec,
    totals: &[f64],
    spills: &[f64],
    storages: &[f64],
    demand: &[f64],
) -> Result<ViolationReport, HydroError> {
    let n = totals.len();
    if spills.len() != n || demand.len() != n {
        return Err(HydroError::LengthMismatch(format!(
            "totals {n}, spills {}, demand {}",
            spills.len(),
            demand.len()
        )));
    }
    if storages.len() != n && storages.len() != n + 1 {
        return Err(HydroError::LengthMismatch(format!(
            "storages {} for {n} flow steps",
            storages.len()
        )));
    }
    let lws = spec.lws();
    let fws = spec.fws();
    let crest_storage = spec.storage_at(spec.spillway_crest)?;
    let flow_tol = |x: f64| CHECK_TOL * x.abs().max(1.0);
    let vol_tol = CHECK_TOL * fws;

    let mut out = Vec::new();
    let mut push = |step, kind, value, limit| out.push(Violation { step, kind, value, limit });

    for t in 0..n {
        let (total, spill) = (totals[t], spills[t]);
        let turb = total - spill;
        if total < -flow_tol(total) || spill < -flow_tol(spill) {
            push(t, ViolationKind::NegativeFlow, total.min(spill), 0.0);
        }
        if total + flow_tol(demand[t]) < demand[t] {
            push(t, ViolationKind::Demand, total, demand[t]);
        }
        if spill > total + flow_tol(total) {
            push(t, ViolationKind::SpillExceedsTotal, spill, total);
        }
        if turb > spec.mo_turb + flow_tol(spec.mo_turb) {
            push(t, ViolationKind::TurbineCapacity, turb, spec.mo_turb);
        }
        if spill > spec.mo_spill + flow_tol(spec.mo_spill) {
            push(t, ViolationKind::SpillCapacity, spill, spec.mo_spill);
        }
        if t < storages.len() && spill > CHECK_TOL && storages[t] < crest_storage {
            push(t, ViolationKind::SpillBelowCrest, storages[t], crest_storage);
        }
    }
    for (t, &s) in storages.iter().enumerate() {
        if s < lws - vol_tol {
            push(t, ViolationKind::StorageBelowLws, s, lws);
        }
        if s > fws + vol_tol {
            push(t, ViolationKind::StorageAboveFws, s, fws);
        }
    }
    out.sort_by_key(|v| v.step);
    Ok(ViolationReport { violations: out })
}
