//! Receding-horizon loop: implement the committed outflow, observe inflow,
//! forecast, choose weights (by genetic search or fixed), solve the MPC
//! subproblem and commit the next outflow. Also summary metrics, multi-mode
//! comparisons and per-step weight sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{evaluate, EvalContext, EvaluatorConfig, PenaltyReport};
use crate::events::{Event, EventError};
use crate::forecast::{generate_forecast, ForecastConfig, ForecastError};
use crate::hydro::{check_constraints, HydroError, ReservoirSpec, ReservoirState, ViolationReport};
use crate::linprog::{LpStatus, SolverOptions};
use crate::mpc::{plan, BuildError, MpcInstance, Plan, Schedule, WeightVector};
use crate::search::{
    decode, decode_weights, optimize, Chromosome, GaConfig, GeneRanges, SearchError, ShTable, FIXED1_GENES,
    FIXED2_GENES, FIXED_SH_LEVEL, NUM_GENES, SH_GENE,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("trace is empty")]
    EmptyTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pdmpc,
    Fixed1,
    Fixed2,
    FixedCustom(WeightVector),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Pdmpc => "pdmpc",
            Mode::Fixed1 => "fixed1",
            Mode::Fixed2 => "fixed2",
            Mode::FixedCustom(_) => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pdmpc" | "pd-mpc" => Some(Mode::Pdmpc),
            "fixed1" | "fixed-1" => Some(Mode::Fixed1),
            "fixed2" | "fixed-2" => Some(Mode::Fixed2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: usize,
    pub mode: Mode,
    pub forecast: ForecastConfig,
    pub ga: GaConfig,
    pub evaluator: EvaluatorConfig,
    pub solver: SolverOptions,
    pub initial_level: f64,
    pub initial_turb: f64,
    pub initial_spill: f64,
    pub seed: u64,
    /// Divisor in the storage-weight multiplier; `None` means the horizon.
    pub f: Option<f64>,
    pub sh_levels: Vec<f64>,
    /// Gene search ranges; `None` means the defaults for `sh_levels`.
    pub gene_ranges: Option<GeneRanges>,
    /// Revisions larger than this (m3/s) count as schedule changes.
    pub change_tol: f64,
}

impl RunConfig {
    pub fn new(spec: &ReservoirSpec) -> Result<Self, EngineError> {
        Ok(Self {
            horizon: 6,
            mode: Mode::Pdmpc,
            forecast: ForecastConfig::default(),
            ga: GaConfig::default(),
            evaluator: EvaluatorConfig::for_spec(spec)?,
            solver: SolverOptions::default(),
            initial_level: spec.nhwl,
            initial_turb: 150.0,
            initial_spill: 0.0,
            seed: 0,
            f: None,
            sh_levels: crate::search::DEFAULT_SH_LEVELS.to_vec(),
            gene_ranges: None,
            change_tol: 1.0,
        })
    }

    pub fn f_value(&self) -> f64 {
        self.f.unwrap_or(self.horizon as f64)
    }

    pub fn sh_table(&self, spec: &ReservoirSpec) -> Result<ShTable, EngineError> {
        Ok(ShTable::new(spec, &self.sh_levels)?)
    }

    pub fn ranges(&self, table: &ShTable) -> GeneRanges {
        self.gene_ranges.unwrap_or_else(|| GeneRanges::for_table(table))
    }

    pub fn validate(&self, spec: &ReservoirSpec) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        spec.validate()?;
        if self.horizon < 2 {
            return bad(format!("horizon must be >= 2, got {}", self.horizon));
        }
        self.forecast.validate()?;
        self.ga.validate()?;
        self.evaluator.validate().map_err(EngineError::InvalidConfig)?;
        if !(self.evaluator.s_u < spec.fws() && self.evaluator.s_l > spec.lws()) {
            return bad("targets must lie strictly between LWS and FWS".into());
        }
        spec.storage_at(self.initial_level)?;
        let (t, s) = (self.initial_turb, self.initial_spill);
        if !(t >= 0.0 && t <= spec.mo_turb && s >= 0.0 && s <= spec.mo_spill) {
            return bad(format!("initial outflows turb={t} spill={s} out of capacity"));
        }
        if let Some(f) = self.f {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("f must be positive, got {f}"));
            }
        }
        if !(self.change_tol >= 0.0) {
            return bad("change_tol must be >= 0".into());
        }
        let table = self.sh_table(spec)?;
        let ranges = self.ranges(&table);
        ranges.validate()?;
        if ranges.hi[SH_GENE] as usize >= table.len() {
            return bad("sh gene range exceeds the S_H table".into());
        }
        if let Mode::FixedCustom(z) = &self.mode {
            z.validate()?;
        }
        Ok(())
    }
}

/// Everything recorded for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub inflow: f64,
    pub forecast: Vec<f64>,
    /// Outflows implemented during this step.
    pub total: f64,
    pub spill: f64,
    pub turb: f64,
    /// Storage and level at the start of the step.
    pub storage: f64,
    pub level: f64,
    /// State handed to the planner.
    pub state: ReservoirState,
    pub hist_peak_inflow: Option<f64>,
    pub weights: WeightVector,
    pub genes: Option<Chromosome>,
    pub penalty: PenaltyReport,
    pub schedule: Schedule,
    pub lp_status: LpStatus,
    /// Storage bounds relaxed or the plan could not be solved.
    pub fallback: bool,
    /// Implemented outflow reduced to keep storage above LWS.
    pub clamped: bool,
    pub ga_evaluations: usize,
    pub ga_generations: usize,
    pub ga_best_penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub event: String,
    pub mode: String,
    pub horizon: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Storage after the last step.
    pub final_storage: f64,
    pub final_level: f64,
}

impl Trace {
    pub fn totals(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.total).collect()
    }

    pub fn spills(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.spill).collect()
    }

    /// Storages at the start of every step plus the final storage.
    pub fn storages(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.steps.iter().map(|s| s.storage).collect();
        v.push(self.final_storage);
        v
    }

    pub fn levels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.steps.iter().map(|s| s.level).collect();
        v.push(self.final_level);
        v
    }

    pub fn flagged_steps(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.fallback || s.clamped).map(|s| s.step).collect()
    }
}

/// Operational-constraint check over the implemented series.
pub fn trace_violations(spec: &ReservoirSpec, trace: &Trace, demand: &[f64]) -> Result<ViolationReport, EngineError> {
    Ok(check_constraints(spec, &trace.totals(), &trace.spills(), &trace.storages(), demand)?)
}

/// Per-step inputs shared by every candidate weight vector.
struct StepInputs<'a> {
    spec: &'a ReservoirSpec,
    cfg: &'a RunConfig,
    state: &'a ReservoirState,
    forecast: &'a [f64],
    demand: &'a [f64],
    prev: &'a Schedule,
    hist_peak: Option<f64>,
}

impl StepInputs<'_> {
    fn plan_and_score(&self, z: &WeightVector) -> Result<(Plan, PenaltyReport), String> {
        let inst = MpcInstance {
            spec: self.spec,
            state: self.state,
            forecast: self.forecast,
            prev_schedule: self.prev,
            weights: z,
            s_u: self.cfg.evaluator.s_u,
            s_l: self.cfg.evaluator.s_l,
            demand: self.demand,
        };
        let p = plan(&inst, &self.cfg.solver).map_err(|e| e.to_string())?;
        let ctx = EvalContext {
            spec: self.spec,
            state: self.state,
            forecast: self.forecast,
            prev_schedule: self.prev,
            hist_peak_inflow: self.hist_peak,
        };
        let r = evaluate(&self.cfg.evaluator, &ctx, &p.schedule, z.s_h).map_err(|e| e.to_string())?;
        Ok((p, r))
    }

    /// Holds the committed outflow over the whole horizon; used only when no
    /// plan can be produced.
    fn hold(&self) -> Schedule {
        let h = self.forecast.len();
        let s = self.state;
        Schedule {
            start_step: s.step_index,
            totals: vec![s.committed_total_outflow; h],
            spills: vec![s.committed_spill_outflow; h],
            turbs: vec![s.committed_turb_outflow(); h],
        }
    }
}

fn step_seed(seed: u64, k: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k as u64 + 1)
}

fn fixed_weights(mode: &Mode, spec: &ReservoirSpec, f: f64) -> Result<Option<WeightVector>, EngineError> {
    let sh = || spec.storage_at(FIXED_SH_LEVEL);
    Ok(match mode {
        Mode::Pdmpc => None,
        Mode::Fixed1 => Some(decode_weights(&FIXED1_GENES, spec, f, sh()?)),
        Mode::Fixed2 => Some(decode_weights(&FIXED2_GENES, spec, f, sh()?)),
        Mode::FixedCustom(z) => Some(*z),
    })
}

pub fn run_event(event: &Event, spec: &ReservoirSpec, cfg: &RunConfig) -> Result<Trace, EngineError> {
    event.validate()?;
    cfg.validate(spec)?;
    let n = event.len();
    let f = cfg.f_value();
    let table = cfg.sh_table(spec)?;
    let ranges = cfg.ranges(&table);
    let fixed = fixed_weights(&cfg.mode, spec, f)?;
    let lws = spec.lws();
    let (_, curve_hi) = spec.curve.storage_range();
    let mut forecast_rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut storage = spec.storage_at(cfg.initial_level)?;
    let mut committed_total = cfg.initial_turb + cfg.initial_spill;
    let mut committed_spill = cfg.initial_spill;
    let mut last_spill = cfg.initial_spill;
    let mut prev = Schedule::constant(0, cfg.horizon, cfg.initial_turb, cfg.initial_spill);
    let mut warm: Option<Chromosome> = None;
    let mut hist_peak: Option<f64> = None;
    let mut steps = Vec::with_capacity(n);

    for k in 0..n {
        let inflow = event.inflow[k];
        // Over-release guard: never let storage fall below LWS.
        let (mut total, mut spill) = (committed_total, committed_spill);
        let max_total = (inflow + (storage - lws) / spec.dt).max(0.0);
        let clamped = total > max_total;
        if clamped {
            let excess = total - max_total;
            let cut_spill = excess.min(spill);
            spill -= cut_spill;
            total = max_total;
            log::warn!("step {k}: outflow clamped by {excess:.3} m3/s to protect LWS");
        }
        let start_storage = storage;
        let mut fallback = false;
        let plan_storage = if storage > curve_hi {
            fallback = true;
            curve_hi
        } else {
            storage
        };
        let state = ReservoirState {
            storage: plan_storage,
            committed_total_outflow: total,
            committed_spill_outflow: spill,
            last_spill,
            step_index: k,
        };

        let h = cfg.horizon.min(n - k);
        let forecast = generate_forecast(&cfg.forecast, &event.inflow, k, h, &mut forecast_rng)?;
        let inputs = StepInputs {
            spec,
            cfg,
            state: &state,
            forecast: &forecast,
            demand: &event.demand[k..k + h],
            prev: &prev,
            hist_peak,
        };

        let (z, genes, ga) = match fixed {
            Some(z) => (z, None, None),
            None => {
                let fitness = |ch: &Chromosome| {
                    decode(ch, &ranges, spec, &table, f)
                        .ok()
                        .and_then(|z| inputs.plan_and_score(&z).ok())
                        .map_or(f64::INFINITY, |(_, r)| r.total)
                };
                let ga_cfg = GaConfig { seed: step_seed(cfg.seed, k), ..cfg.ga };
                let res = optimize(fitness, &ranges, warm, &ga_cfg)?;
                warm = Some(res.best);
                (decode(&res.best, &ranges, spec, &table, f)?, Some(res.best), Some(res))
            }
        };
        let (schedule, penalty, lp_status, plan_fallback) = match inputs.plan_and_score(&z) {
            Ok((p, r)) => (p.schedule, r, p.status, p.fallback),
            Err(msg) => {
                log::warn!("step {k}: no plan ({msg}); holding committed outflow");
                let s = inputs.hold();
                let ctx = EvalContext {
                    spec,
                    state: &state,
                    forecast: &forecast,
                    prev_schedule: &prev,
                    hist_peak_inflow: hist_peak,
                };
                let r = evaluate(&cfg.evaluator, &ctx, &s, z.s_h).map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
                (s, r, LpStatus::Infeasible, true)
            }
        };
        fallback |= plan_fallback;
        if fallback {
            log::warn!("step {k}: fallback plan used");
        }

        storage = start_storage + (inflow - total) * spec.dt;
        steps.push(StepRecord {
            step: k,
            inflow,
            forecast: forecast.clone(),
            total,
            spill,
            turb: total - spill,
            storage: start_storage,
            level: spec.curve.level_saturating(start_storage),
            state,
            hist_peak_inflow: hist_peak,
            weights: z,
            genes,
            penalty,
            schedule: schedule.clone(),
            lp_status,
            fallback,
            clamped,
            ga_evaluations: ga.as_ref().map_or(0, |r| r.evaluations),
            ga_generations: ga.as_ref().map_or(0, |r| r.generations_run),
            ga_best_penalty: ga.as_ref().map(|r| r.best_penalty),
        });

        if h >= 2 {
            committed_total = schedule.totals[1];
            committed_spill = schedule.spills[1];
        }
        last_spill = spill;
        hist_peak = Some(hist_peak.map_or(inflow, |p| p.max(inflow)));
        prev = schedule;
    }

    Ok(Trace {
        event: event.name.clone(),
        mode: cfg.mode.name().to_string(),
        horizon: cfg.horizon,
        seed: cfg.seed,
        steps,
        final_storage: storage,
        final_level: spec.curve.level_saturating(storage),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub peak_outflow: f64,
    pub peak_rwl: f64,
    pub lowest_rwl: f64,
    pub schedule_changes: usize,
    pub total_penalty: f64,
    pub max_penalty: f64,
    pub fallback_steps: usize,
    pub clamped_steps: usize,
}

/// Whether `cur` revises `prev` by more than `tol` at any shared time.
pub fn schedules_differ(prev: &Schedule, cur: &Schedule, tol: f64) -> bool {
    let lo = prev.start_step.max(cur.start_step);
    let hi = prev.end_step().min(cur.end_step());
    (lo..hi).any(|t| {
        let a = prev.totals[t - prev.start_step];
        let b = cur.totals[t - cur.start_step];
        (a - b).abs() > tol
    })
}

pub fn compute_metrics(trace: &Trace, change_tol: f64) -> Result<Metrics, EngineError> {
    if trace.steps.is_empty() {
        return Err(EngineError::EmptyTrace);
    }
    let levels = trace.levels();
    let penalties = trace.steps.iter().map(|s| s.penalty.total);
    Ok(Metrics {
        peak_outflow: trace.totals().into_iter().fold(f64::NEG_INFINITY, f64::max),
        peak_rwl: levels.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lowest_rwl: levels.iter().copied().fold(f64::INFINITY, f64::min),
        schedule_changes: trace
            .steps
            .windows(2)
            .filter(|w| schedules_differ(&w[0].schedule, &w[1].schedule, change_tol))
            .count(),
        total_penalty: penalties.clone().sum(),
        max_penalty: penalties.fold(f64::NEG_INFINITY, f64::max),
        fallback_steps: trace.steps.iter().filter(|s| s.fallback).count(),
        clamped_steps: trace.steps.iter().filter(|s| s.clamped).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: String,
    pub seed: u64,
    pub horizon: usize,
    pub metrics: Metrics,
}

/// Runs every (mode, seed) pair on `event`; rows are mode-major.
pub fn compare_modes(
    event: &Event,
    spec: &ReservoirSpec,
    base: &RunConfig,
    modes: &[Mode],
    seeds: &[u64],
) -> Result<Vec<ComparisonRow>, EngineError> {
    if modes.is_empty() || seeds.is_empty() {
        return Err(EngineError::InvalidConfig("need at least one mode and one seed".into()));
    }
    let cells: Vec<(Mode, u64)> =
        modes.iter().flat_map(|m| seeds.iter().map(move |&s| (m.clone(), s))).collect();
    cells
        .par_iter()
        .map(|(mode, seed)| {
            let cfg = RunConfig { mode: mode.clone(), seed: *seed, ..base.clone() };
            let trace = run_event(event, spec, &cfg)?;
            Ok(ComparisonRow {
                mode: mode.name().to_string(),
                seed: *seed,
                horizon: cfg.horizon,
                metrics: compute_metrics(&trace, cfg.change_tol)?,
            })
        })
        .collect()
}

/// Penalties of re-planned steps with one gene varied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub gene: usize,
    pub steps: Vec<usize>,
    pub values: Vec<u8>,
    /// `penalties[i][j]`: step `steps[i]`, gene value `values[j]`.
    pub penalties: Vec<Vec<f64>>,
}

/// Replays a genetic-search run and, at each of `steps`, re-scores the chosen
/// chromosome with `gene` set to each of `values`.
pub fn sweep(
    event: &Event,
    spec: &ReservoirSpec,
    cfg: &RunConfig,
    gene: usize,
    values: &[u8],
    steps: std::ops::Range<usize>,
) -> Result<SweepGrid, EngineError> {
    if cfg.mode != Mode::Pdmpc {
        return Err(EngineError::InvalidConfig("sweep needs the genetic-search mode".into()));
    }
    if gene >= NUM_GENES || values.is_empty() || steps.is_empty() || steps.end > event.len() {
        return Err(EngineError::InvalidConfig(format!(
            "bad sweep: gene {gene}, {} values, steps {steps:?} of {}",
            values.len(),
            event.len()
        )));
    }
    let trace = run_event(event, spec, cfg)?;
    let table = cfg.sh_table(spec)?;
    if gene == SH_GENE && values.iter().any(|&v| v as usize >= table.len()) {
        return Err(EngineError::InvalidConfig("sh values exceed the S_H table".into()));
    }
    let f = cfg.f_value();
    let initial_prev = Schedule::constant(0, cfg.horizon, cfg.initial_turb, cfg.initial_spill);
    let mut penalties = Vec::with_capacity(steps.len());
    for k in steps.clone() {
        let row = &trace.steps[k];
        let prev = if k == 0 { &initial_prev } else { &trace.steps[k - 1].schedule };
        let h = row.forecast.len();
        let inputs = StepInputs {
            spec,
            cfg,
            state: &row.state,
            forecast: &row.forecast,
            demand: &event.demand[k..k + h],
            prev,
            hist_peak: row.hist_peak_inflow,
        };
        let base = row.genes.expect("genetic-search rows carry genes");
        let line = values
            .iter()
            .map(|&v| {
                let mut ch = base;
                ch[gene] = v;
                let z = decode_weights(&ch, spec, f, table.storages[ch[SH_GENE] as usize]);
                inputs.plan_and_score(&z).map_or(f64::INFINITY, |(_, r)| r.total)
            })
            .collect();
        penalties.push(line);
    }
    Ok(SweepGrid { gene, steps: steps.collect(), values: values.to_vec(), penalties })
}
