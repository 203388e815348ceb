//! Nonlinear scoring of candidate schedules.
//!
//! Storages are simulated under the forecast and the candidate totals, then
//! eight practical objectives are computed and combined into one weighted,
//! normalised penalty. Reaching the flood water level (or draining below the
//! bottom of the stage–storage curve) adds a flat `large_value` on top.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::{HydroError, ReservoirSpec, ReservoirState};
use crate::mpc::{time_weights, Schedule};

/// Spills below this are treated as closed gates.
pub const SPILL_EPS: f64 = 1e-6;

/// Levels within this distance of FWL count as having reached it.
const FWL_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorConfig {
    /// Weight of each objective, j1 through j8.
    pub weights: [f64; 8],
    pub large_value: f64,
    /// Upper target storage, m3.
    pub s_u: f64,
    /// Lower target storage, m3.
    pub s_l: f64,
    pub w_su: f64,
    pub w_sl: f64,
    pub w_sh: f64,
}

pub const DEFAULT_WEIGHTS: [f64; 8] = [5.0, 1.0, 2.0, 2.0, 5.0, 3.0, 1.0, 1.0];
pub const DEFAULT_S_U_LEVEL: f64 = 76.5;
pub const DEFAULT_S_L_LEVEL: f64 = 76.0;

impl EvaluatorConfig {
    /// Defaults with the target storages taken at 76.5 m and 76.0 m.
    pub fn for_spec(spec: &ReservoirSpec) -> Result<Self, HydroError> {
        Self::with_levels(spec, DEFAULT_S_U_LEVEL, DEFAULT_S_L_LEVEL)
    }

    pub fn with_levels(spec: &ReservoirSpec, s_u_level: f64, s_l_level: f64) -> Result<Self, HydroError> {
        Ok(Self {
            weights: DEFAULT_WEIGHTS,
            large_value: 1000.0,
            s_u: spec.storage_at(s_u_level)?,
            s_l: spec.storage_at(s_l_level)?,
            w_su: 1.0,
            w_sl: 2.0,
            w_sh: 20.0,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.large_value > 0.0) {
            return Err("large_value must be positive".into());
        }
        let ws = self.weights.iter().chain([&self.w_su, &self.w_sl, &self.w_sh]);
        if ws.into_iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("evaluator weights must be finite and >= 0".into());
        }
        if !(self.s_l < self.s_u) {
            return Err("s_l must be below s_u".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyReport {
    /// Raw objective values j1..j8 (before normalisation and weighting).
    pub terms: [f64; 8],
    /// `large_value` when the simulated storage left the safe range, else 0.
    pub breach: f64,
    pub total: f64,
    pub j7_triggered: bool,
    pub j8_triggered: bool,
    pub fwl_reached: bool,
    pub floor_breached: bool,
}

/// Inputs shared by every candidate scored at one step.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub spec: &'a ReservoirSpec,
    pub state: &'a ReservoirState,
    pub forecast: &'a [f64],
    pub prev_schedule: &'a Schedule,
    /// Largest observed inflow before the current step; `None` at the first
    /// step, where the peak-retention check is skipped.
    pub hist_peak_inflow: Option<f64>,
}

fn is_open(spill: f64) -> bool {
    spill >= SPILL_EPS
}

/// Number of gate state changes along `spills`, starting from `prev_spill`.
pub fn gate_continuity_penalty(prev_spill: f64, spills: &[f64]) -> usize {
    let mut prev = is_open(prev_spill);
    let mut n = 0;
    for &s in spills {
        let cur = is_open(s);
        if cur != prev {
            n += 1;
        }
        prev = cur;
    }
    n
}

pub fn peak_retention_penalty(totals: &[f64], hist_peak_inflow: f64, large_value: f64) -> f64 {
    let peak = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak > hist_peak_inflow {
        large_value
    } else {
        0.0
    }
}

pub fn turbine_first_penalty(totals: &[f64], spills: &[f64], mo_turb: f64, large_value: f64) -> f64 {
    let hit = totals.iter().zip(spills).any(|(&tot, &sp)| is_open(sp) && tot <= mo_turb);
    if hit {
        large_value
    } else {
        0.0
    }
}

/// Normalisers for j1..j8.
pub fn mave(spec: &ReservoirSpec, h: usize) -> [f64; 8] {
    let q = spec.mo_spill;
    [q, q, q, q, spec.fws() * h as f64, 1.0, 1.0, 1.0]
}

pub fn evaluate(
    cfg: &EvaluatorConfig,
    ctx: &EvalContext,
    schedule: &Schedule,
    s_h: f64,
) -> Result<PenaltyReport, EvalError> {
    let h = ctx.forecast.len();
    if schedule.totals.len() != h || schedule.spills.len() != h {
        return Err(EvalError::LengthMismatch(format!(
            "schedule {} vs forecast {h}",
            schedule.totals.len()
        )));
    }
    if h == 0 {
        return Err(EvalError::LengthMismatch("empty horizon".into()));
    }
    let spec = ctx.spec;
    let k = ctx.state.step_index;
    let totals = &schedule.totals;
    let spills = &schedule.spills;
    let (w_in, w_between) = time_weights(h);

    let j1 = spills.iter().copied().fold(0.0, f64::max);
    let j2: f64 = spills.iter().sum();
    let j3: f64 = (1..h).map(|t| (totals[t] - totals[t - 1]).abs() * w_in[t - 1]).sum();
    let j4: f64 = (0..h)
        .map(|t| (totals[t] - ctx.prev_schedule.total_at(k + t)).abs() * w_between[t])
        .sum();

    // Storage simulation; plain mass balance so out-of-curve values are
    // still well defined and can be penalised.
    let (curve_lo, _) = spec.curve.storage_range();
    let fws = spec.fws();
    let mut s = ctx.state.storage;
    let mut j5 = 0.0;
    let mut fwl_reached = false;
    let mut floor_breached = false;
    for t in 0..h {
        s += (ctx.forecast[t] - totals[t]) * spec.dt;
        j5 += cfg.w_su * (s - cfg.s_u).max(0.0)
            + cfg.w_sl * (cfg.s_l - s).max(0.0)
            + cfg.w_sh * (s - s_h).max(0.0);
        if s >= fws || spec.curve.level_saturating(s) >= spec.fwl - FWL_TOL {
            fwl_reached = true;
        }
        if s < curve_lo {
            floor_breached = true;
        }
    }

    let j6 = gate_continuity_penalty(ctx.state.last_spill, spills) as f64;
    let j7 = match ctx.hist_peak_inflow {
        Some(p) => peak_retention_penalty(totals, p, cfg.large_value),
        None => 0.0,
    };
    let j8 = turbine_first_penalty(totals, spills, spec.mo_turb, cfg.large_value);

    let terms = [j1, j2, j3, j4, j5, j6, j7, j8];
    let norm = mave(spec, h);
    let breach = if fwl_reached || floor_breached { cfg.large_value } else { 0.0 };
    let total = terms
        .iter()
        .zip(&norm)
        .zip(&cfg.weights)
        .map(|((v, n), e)| e * v / n)
        .sum::<f64>()
        + breach;
    Ok(PenaltyReport {
        terms,
        breach,
        total,
        j7_triggered: j7 > 0.0,
        j8_triggered: j8 > 0.0,
        fwl_reached,
        floor_breached,
    })
}
