//! Linear MPC subproblem: turns the reservoir state, an inflow forecast, the
//! previously committed schedule and a weight vector into a
//! [`StandardFormLp`], and maps optimal solutions back to a [`Schedule`].
//!
//! Storage-like variables are carried in units of [`STORAGE_UNIT`] inside the
//! LP so that flows and volumes have comparable magnitudes. Objective
//! coefficients are rescaled to match, so objective values are unchanged.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::{ReservoirSpec, ReservoirState};
use crate::linprog::{self, LpError, LpSolution, LpStatus, SolverOptions, StandardFormLp};

/// Cubic metres per LP storage unit.
pub const STORAGE_UNIT: f64 = 1e6;

/// Values smaller than this are reported as exact zeros.
const ZERO_CLAMP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("inconsistent lengths: {0}")]
    InconsistentLengths(String),
    #[error("state out of range: {0}")]
    StateOutOfRange(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("solution is not optimal ({0})")]
    NotOptimal(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Planned outflows for times `start_step .. start_step + len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start_step: usize,
    pub totals: Vec<f64>,
    pub spills: Vec<f64>,
    pub turbs: Vec<f64>,
}

impl Schedule {
    pub fn constant(start_step: usize, len: usize, turb: f64, spill: f64) -> Self {
        Self {
            start_step,
            totals: vec![turb + spill; len],
            spills: vec![spill; len],
            turbs: vec![turb; len],
        }
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    /// Last time covered (exclusive).
    pub fn end_step(&self) -> usize {
        self.start_step + self.len()
    }

    /// Total outflow planned for time `t`. Times past the end repeat the last
    /// entry; times before the start repeat the first.
    pub fn total_at(&self, t: usize) -> f64 {
        if t < self.start_step {
            self.totals[0]
        } else {
            let i = (t - self.start_step).min(self.len() - 1);
            self.totals[i]
        }
    }

    /// Total outflow at `t` only if the schedule covers it.
    pub fn total_if_covered(&self, t: usize) -> Option<f64> {
        t.checked_sub(self.start_step).and_then(|i| self.totals.get(i).copied())
    }
}

/// Storage targets; `s_h` is the operator's highest tolerated storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetLevels {
    pub s_u: f64,
    pub s_l: f64,
    pub s_h: f64,
}

impl TargetLevels {
    pub fn validate(&self, fws: f64) -> Result<(), BuildError> {
        if self.s_l < self.s_u && self.s_u <= self.s_h && self.s_h < fws {
            Ok(())
        } else {
            Err(BuildError::InvalidWeights(format!(
                "targets must satisfy s_l < s_u <= s_h < FWS, got {self:?}"
            )))
        }
    }
}

/// Objective weights (already multiplied by their normalising multipliers)
/// plus the highest tolerated storage `s_h` in m3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w1: f64,
    pub w2: f64,
    pub w3_i: f64,
    pub w3_d: f64,
    pub w4_i: f64,
    pub w4_d: f64,
    pub w5_1: f64,
    pub w5_2: f64,
    pub w5_3: f64,
    pub s_h: f64,
}

impl WeightVector {
    fn as_array(&self) -> [f64; 9] {
        [
            self.w1, self.w2, self.w3_i, self.w3_d, self.w4_i, self.w4_d, self.w5_1, self.w5_2,
            self.w5_3,
        ]
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        if self.as_array().iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(BuildError::InvalidWeights(format!("negative or non-finite weight in {self:?}")));
        }
        if self.w5_1 <= 0.0 {
            return Err(BuildError::InvalidWeights("w5_1 must be positive".into()));
        }
        if !self.s_h.is_finite() {
            return Err(BuildError::InvalidWeights("s_h must be finite".into()));
        }
        Ok(())
    }
}

/// Time-varying change weights for a horizon of `h` steps.
///
/// Returns `(w_in, w_between)`: `w_in[i]` applies to the in-horizon change at
/// offset `i + 1` and equals `1 / (3 (i + 2))`; `w_between[o]` applies to the
/// revision at offset `o` and equals `1 / (o + 1)` for `o <= 3`, otherwise
/// `1 / (2 (o + 1))`.
pub fn time_weights(h: usize) -> (Vec<f64>, Vec<f64>) {
    let w_in = (1..h).map(|o| 1.0 / ((o + 1) as f64 * 3.0)).collect();
    let w_between = (0..h)
        .map(|o| {
            if o <= 3 {
                1.0 / (o + 1) as f64
            } else {
                1.0 / ((o + 1) as f64 * 2.0)
            }
        })
        .collect();
    (w_in, w_between)
}

/// Column ranges of every variable family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarMap {
    pub horizon: usize,
    pub totals: Range<usize>,
    pub spills: Range<usize>,
    pub turbs: Range<usize>,
    /// Storages at the end of each horizon step, in [`STORAGE_UNIT`]s.
    pub storages: Range<usize>,
    pub in_inc: Range<usize>,
    pub in_dec: Range<usize>,
    pub between_inc: Range<usize>,
    pub between_dec: Range<usize>,
    pub above_upper: Range<usize>,
    pub below_lower: Range<usize>,
    pub above_highest: Range<usize>,
    pub peak: usize,
    /// Storage-bound relaxation columns (above FWS, then below LWS), present
    /// only in softened programs.
    pub soft_above: Option<Range<usize>>,
    pub soft_below: Option<Range<usize>>,
    pub n: usize,
}

impl VarMap {
    pub fn new(h: usize) -> Self {
        let mut next = 0;
        let mut take = |len: usize| {
            let r = next..next + len;
            next += len;
            r
        };
        let totals = take(h);
        let spills = take(h);
        let turbs = take(h);
        let storages = take(h);
        let in_inc = take(h.saturating_sub(1));
        let in_dec = take(h.saturating_sub(1));
        let between_inc = take(h);
        let between_dec = take(h);
        let above_upper = take(h);
        let below_lower = take(h);
        let above_highest = take(h);
        let peak = take(1).start;
        Self {
            horizon: h,
            totals,
            spills,
            turbs,
            storages,
            in_inc,
            in_dec,
            between_inc,
            between_dec,
            above_upper,
            below_lower,
            above_highest,
            peak,
            soft_above: None,
            soft_below: None,
            n: next,
        }
    }

    fn with_soft_bounds(mut self) -> Self {
        let h = self.horizon;
        self.soft_above = Some(self.n..self.n + h);
        self.soft_below = Some(self.n + h..self.n + 2 * h);
        self.n += 2 * h;
        self
    }

    pub fn families(&self) -> Vec<Range<usize>> {
        let mut v = vec![
            self.totals.clone(),
            self.spills.clone(),
            self.turbs.clone(),
            self.storages.clone(),
            self.in_inc.clone(),
            self.in_dec.clone(),
            self.between_inc.clone(),
            self.between_dec.clone(),
            self.above_upper.clone(),
            self.below_lower.clone(),
            self.above_highest.clone(),
            self.peak..self.peak + 1,
        ];
        v.extend(self.soft_above.clone());
        v.extend(self.soft_below.clone());
        v
    }
}

/// Everything the builder needs for one receding-horizon step.
#[derive(Debug, Clone, Copy)]
pub struct MpcInstance<'a> {
    pub spec: &'a ReservoirSpec,
    pub state: &'a ReservoirState,
    pub forecast: &'a [f64],
    pub prev_schedule: &'a Schedule,
    pub weights: &'a WeightVector,
    pub s_u: f64,
    pub s_l: f64,
    pub demand: &'a [f64],
}

impl MpcInstance<'_> {
    pub fn horizon(&self) -> usize {
        self.forecast.len()
    }

    fn validate(&self) -> Result<(), BuildError> {
        let h = self.forecast.len();
        if h == 0 {
            return Err(BuildError::InconsistentLengths("empty forecast".into()));
        }
        if self.demand.len() != h {
            return Err(BuildError::InconsistentLengths(format!(
                "forecast {h}, demand {}",
                self.demand.len()
            )));
        }
        if self.prev_schedule.is_empty() {
            return Err(BuildError::InconsistentLengths("empty previous schedule".into()));
        }
        if self.forecast.iter().chain(self.demand).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BuildError::InconsistentLengths("negative or non-finite flow".into()));
        }
        let (lo, hi) = self.spec.curve.storage_range();
        let s = self.state.storage;
        if !(lo..=hi).contains(&s) {
            return Err(BuildError::StateOutOfRange(format!("storage {s} outside [{lo}, {hi}]")));
        }
        let c = self.state.committed_total_outflow;
        if !(0.0..=self.spec.max_total_outflow()).contains(&c) {
            return Err(BuildError::StateOutOfRange(format!("committed outflow {c}")));
        }
        let cs = self.state.committed_spill_outflow;
        if !(cs >= 0.0 && cs <= c && cs <= self.spec.mo_spill && c - cs <= self.spec.mo_turb + 1e-9) {
            return Err(BuildError::StateOutOfRange(format!("committed spill {cs} of total {c}")));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Copy)]
enum StorageBounds {
    Hard,
    /// Relaxed bounds; objective is either the total relaxation or the
    /// regular objective with the relaxation capped.
    Soft { cap: Option<f64> },
}

/// Builds the hard-constrained program.
pub fn build(inst: &MpcInstance) -> Result<(StandardFormLp, VarMap), BuildError> {
    inst.validate()?;
    Ok(assemble(inst, StorageBounds::Hard))
}

fn assemble(inst: &MpcInstance, bounds: StorageBounds) -> (StandardFormLp, VarMap) {
    let h = inst.horizon();
    let spec = inst.spec;
    let k = inst.state.step_index;
    let z = inst.weights;
    let mut map = VarMap::new(h);
    if matches!(bounds, StorageBounds::Soft { .. }) {
        map = map.with_soft_bounds();
    }
    let mut lp = StandardFormLp::new(map.n);
    let (w_in, w_between) = time_weights(h);
    let unit = STORAGE_UNIT;
    let flow_to_storage = spec.dt / unit;
    let committed = inst.state.committed_total_outflow;

    // objective
    let c = &mut lp.objective;
    c[map.peak] = z.w1;
    for j in map.spills.clone() {
        c[j] = z.w2;
    }
    for j in map.in_inc.clone() {
        c[j] = z.w3_i;
    }
    for j in map.in_dec.clone() {
        c[j] = z.w3_d;
    }
    for j in map.between_inc.clone() {
        c[j] = z.w4_i;
    }
    for j in map.between_dec.clone() {
        c[j] = z.w4_d;
    }
    for t in 0..h {
        c[map.above_upper.start + t] = z.w5_1 * unit;
        c[map.below_lower.start + t] = z.w5_2 * unit;
        c[map.above_highest.start + t] = z.w5_3 * unit;
    }

    // bounds
    for t in 0..h {
        let lo = if t == 0 && matches!(bounds, StorageBounds::Soft { .. }) {
            inst.demand[0].min(committed)
        } else {
            inst.demand[t]
        };
        lp.bounds[map.totals.start + t] = (lo, spec.max_total_outflow());
        lp.bounds[map.spills.start + t] = if t == 0 {
            // the split of the committed outflow is fixed as well
            let s = inst.state.committed_spill_outflow;
            (s, s)
        } else {
            (0.0, spec.mo_spill)
        };
        lp.bounds[map.turbs.start + t] = (0.0, spec.mo_turb);
        lp.bounds[map.storages.start + t] = match bounds {
            StorageBounds::Hard => (spec.lws() / unit, spec.fws() / unit),
            StorageBounds::Soft { .. } => (0.0, f64::INFINITY),
        };
    }

    let tot = |t: usize| map.totals.start + t;
    let sto = |t: usize| map.storages.start + t;
    for t in 0..h {
        // flow split
        lp.add_eq(
            &[(map.spills.start + t, 1.0), (map.turbs.start + t, 1.0), (tot(t), -1.0)],
            0.0,
        );
    }
    // first outflow is already committed
    lp.add_eq(&[(tot(0), 1.0)], committed);
    for t in 1..h {
        let w = w_in[t - 1];
        lp.add_eq(
            &[
                (map.in_inc.start + t - 1, 1.0),
                (map.in_dec.start + t - 1, -1.0),
                (tot(t), w),
                (tot(t - 1), -w),
            ],
            0.0,
        );
    }
    for t in 0..h {
        let w = w_between[t];
        lp.add_eq(
            &[(map.between_inc.start + t, 1.0), (map.between_dec.start + t, -1.0), (tot(t), w)],
            w * inst.prev_schedule.total_at(k + t),
        );
    }
    // storage dynamics
    let s0 = inst.state.storage / unit;
    for t in 0..h {
        let inflow_term = flow_to_storage * inst.forecast[t];
        if t == 0 {
            lp.add_eq(&[(sto(0), 1.0), (tot(0), flow_to_storage)], s0 + inflow_term);
        } else {
            lp.add_eq(
                &[(sto(t), 1.0), (sto(t - 1), -1.0), (tot(t), flow_to_storage)],
                inflow_term,
            );
        }
    }
    for t in 0..h {
        lp.add_ge(&[(map.above_upper.start + t, 1.0), (sto(t), -1.0)], -inst.s_u / unit);
        lp.add_ge(&[(map.below_lower.start + t, 1.0), (sto(t), 1.0)], inst.s_l / unit);
        lp.add_ge(&[(map.above_highest.start + t, 1.0), (sto(t), -1.0)], -z.s_h / unit);
        lp.add_ge(&[(map.peak, 1.0), (map.spills.start + t, -1.0)], 0.0);
    }

    if let StorageBounds::Soft { cap } = bounds {
        let above = map.soft_above.clone().expect("soft columns");
        let below = map.soft_below.clone().expect("soft columns");
        for t in 0..h {
            lp.add_ge(&[(above.start + t, 1.0), (sto(t), -1.0)], -spec.fws() / unit);
            lp.add_ge(&[(below.start + t, 1.0), (sto(t), 1.0)], spec.lws() / unit);
        }
        let relax: Vec<(usize, f64)> = above.chain(below).map(|j| (j, 1.0)).collect();
        match cap {
            None => {
                lp.objective.iter_mut().for_each(|c| *c = 0.0);
                for &(j, _) in &relax {
                    lp.objective[j] = 1.0;
                }
            }
            Some(cap) => {
                let neg: Vec<(usize, f64)> = relax.iter().map(|&(j, _)| (j, -1.0)).collect();
                lp.add_ge(&neg, -cap);
            }
        }
    }
    (lp, map)
}

/// Reads the schedule out of an optimal solution.
pub fn extract_schedule(sol: &LpSolution, map: &VarMap, k: usize) -> Result<Schedule, BuildError> {
    if sol.status != LpStatus::Optimal {
        return Err(BuildError::NotOptimal(sol.status.to_string()));
    }
    if sol.values.len() != map.n {
        return Err(BuildError::NotOptimal(format!(
            "solution has {} values, map expects {}",
            sol.values.len(),
            map.n
        )));
    }
    let read = |r: &Range<usize>| -> Vec<f64> {
        sol.values[r.clone()]
            .iter()
            .map(|&v| if v.abs() < ZERO_CLAMP { 0.0 } else { v })
            .collect()
    };
    Ok(Schedule {
        start_step: k,
        totals: read(&map.totals),
        spills: read(&map.spills),
        turbs: read(&map.turbs),
    })
}

/// LP storages of a solution converted back to m3.
pub fn solution_storages(sol: &LpSolution, map: &VarMap) -> Vec<f64> {
    sol.values[map.storages.clone()].iter().map(|s| s * STORAGE_UNIT).collect()
}

/// Replaces round-off in the locked first entry by the committed values.
fn pin_first(mut schedule: Schedule, state: &ReservoirState) -> Schedule {
    let (total, spill) = (state.committed_total_outflow, state.committed_spill_outflow);
    debug_assert!((schedule.totals[0] - total).abs() <= 1e-6 * total.max(1.0));
    schedule.totals[0] = total;
    schedule.spills[0] = spill;
    schedule.turbs[0] = total - spill;
    schedule
}

/// Result of planning one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub schedule: Schedule,
    /// Status of the hard-constrained program.
    pub status: LpStatus,
    /// Whether the storage bounds had to be relaxed.
    pub fallback: bool,
    pub numerical_failure: bool,
    pub objective_value: f64,
}

/// Solves the hard program; if it is infeasible or fails numerically,
/// relaxes the storage bounds and solves lexicographically: first minimise
/// the total relaxation, then the regular objective with the relaxation
/// capped at that minimum.
pub fn plan(inst: &MpcInstance, opts: &SolverOptions) -> Result<Plan, BuildError> {
    let (lp, map) = build(inst)?;
    let k = inst.state.step_index;
    let (status, numerical_failure) = match linprog::solve(&lp, opts) {
        Ok(sol) if sol.is_optimal() => {
            return Ok(Plan {
                schedule: pin_first(extract_schedule(&sol, &map, k)?, inst.state),
                status: sol.status,
                fallback: false,
                numerical_failure: false,
                objective_value: sol.objective_value,
            });
        }
        Ok(sol) => (sol.status, false),
        Err(LpError::NumericalFailure(msg)) => {
            log::warn!("step {k}: LP numerical failure ({msg}); relaxing storage bounds");
            (LpStatus::Infeasible, true)
        }
        Err(e) => return Err(e.into()),
    };

    let (relax_lp, relax_map) = assemble(inst, StorageBounds::Soft { cap: None });
    let relax = linprog::solve(&relax_lp, opts)?;
    if !relax.is_optimal() {
        return Err(BuildError::NotOptimal(format!("relaxation {}", relax.status)));
    }
    let cap = relax.objective_value.max(0.0) * (1.0 + 1e-9) + 1e-9;
    let (soft_lp, soft_map) = assemble(inst, StorageBounds::Soft { cap: Some(cap) });
    debug_assert_eq!(soft_map, relax_map);
    let sol = linprog::solve(&soft_lp, opts)?;
    Ok(Plan {
        schedule: pin_first(extract_schedule(&sol, &soft_map, k)?, inst.state),
        status,
        fallback: true,
        numerical_failure,
        objective_value: sol.objective_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mid_state(storage: f64) -> ReservoirState {
        ReservoirState {
            storage,
            committed_total_outflow: 150.0,
            committed_spill_outflow: 0.0,
            last_spill: 0.0,
            step_index: 0,
        }
    }

    fn weights(spec: &ReservoirSpec) -> WeightVector {
        let m = 20.0 / spec.mo_spill;
        let f = 20.0 / (spec.fws() * 6.0);
        WeightVector {
            w1: 3.0 * m,
            w2: 1.0 * 2.0 / spec.mo_spill,
            w3_i: 3.0 * m,
            w3_d: 3.0 * m,
            w4_i: 10.0 * m,
            w4_d: 10.0 * m,
            w5_1: 15.0 * f,
            w5_2: 30.0 * f,
            w5_3: 300.0 * f,
            s_h: spec.storage_at(79.0).unwrap(),
        }
    }

    #[test]
    fn time_weight_values() {
        let (w_in, w_bw) = time_weights(6);
        assert_eq!(w_in.len(), 5);
        assert_eq!(w_bw.len(), 6);
        assert_eq!(w_in[0], 1.0 / 6.0);
        assert_eq!(w_bw[0], 1.0);
        assert_eq!(w_bw[3], 0.25);
        assert_eq!(w_bw[4], 0.1);
        assert_eq!(w_bw[5], 1.0 / 12.0);
    }

    #[test]
    fn var_map_covers_all_columns() {
        for h in 1..=24 {
            let m = VarMap::new(h);
            assert_eq!(m.n, 11 * h - 1);
            let mut seen = vec![false; m.n];
            for r in m.families() {
                for j in r {
                    assert!(!seen[j]);
                    seen[j] = true;
                }
            }
            assert!(seen.into_iter().all(|b| b));
        }
    }

    #[test]
    fn lock_holds_on_zero_forecast() {
        let spec = ReservoirSpec::default();
        let state = mid_state(1.0e9);
        let prev = Schedule::constant(0, 6, 150.0, 0.0);
        let z = weights(&spec);
        let inst = MpcInstance {
            spec: &spec,
            state: &state,
            forecast: &[0.0; 6],
            prev_schedule: &prev,
            weights: &z,
            s_u: spec.storage_at(76.5).unwrap(),
            s_l: spec.storage_at(60.5).unwrap(),
            demand: &[0.0; 6],
        };
        let (lp, map) = build(&inst).unwrap();
        assert_eq!(lp.num_vars(), 65);
        let sol = linprog::solve(&lp, &SolverOptions::default()).unwrap();
        let sched = extract_schedule(&sol, &map, 0).unwrap();
        assert_eq!(sched.totals[0], 150.0);
        assert!(sched.spills.iter().all(|&s| s == 0.0));
        for t in 0..6 {
            assert!((sched.totals[t] - sched.spills[t] - sched.turbs[t]).abs() < 1e-6);
        }
    }

    #[test]
    fn extract_rejects_non_optimal_or_mismatched() {
        let map = VarMap::new(3);
        let bad = LpSolution {
            status: LpStatus::Infeasible,
            values: vec![],
            objective_value: f64::INFINITY,
            iterations: 0,
        };
        assert!(matches!(extract_schedule(&bad, &map, 0), Err(BuildError::NotOptimal(_))));
        let short = LpSolution { status: LpStatus::Optimal, values: vec![0.0; 5], objective_value: 0.0, iterations: 0 };
        assert!(matches!(extract_schedule(&short, &map, 0), Err(BuildError::NotOptimal(_))));
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let spec = ReservoirSpec::default();
        let prev = Schedule::constant(0, 3, 150.0, 0.0);
        let z = weights(&spec);
        let state = mid_state(1.0e9);
        let mut inst = MpcInstance {
            spec: &spec,
            state: &state,
            forecast: &[0.0; 3],
            prev_schedule: &prev,
            weights: &z,
            s_u: 1.24e9,
            s_l: 1.2e9,
            demand: &[0.0; 2],
        };
        assert!(matches!(build(&inst), Err(BuildError::InconsistentLengths(_))));
        let far = mid_state(2.0e9);
        inst.demand = &[0.0; 3];
        inst.state = &far;
        assert!(matches!(build(&inst), Err(BuildError::StateOutOfRange(_))));
    }

    #[test]
    fn infeasible_step_falls_back_to_relaxed_bounds() {
        // Full reservoir, huge forecast: the hard FWS bound cannot hold after
        // the locked first step.
        let spec = ReservoirSpec::default();
        let mut state = mid_state(spec.fws() - 1e5);
        state.committed_total_outflow = 150.0;
        let prev = Schedule::constant(0, 4, 150.0, 0.0);
        let z = weights(&spec);
        let inst = MpcInstance {
            spec: &spec,
            state: &state,
            forecast: &[9000.0; 4],
            prev_schedule: &prev,
            weights: &z,
            s_u: 1.24e9,
            s_l: 1.2e9,
            demand: &[0.0; 4],
        };
        let p = plan(&inst, &SolverOptions::default()).unwrap();
        assert!(p.fallback);
        assert_eq!(p.status, LpStatus::Infeasible);
        assert_eq!(p.schedule.totals[0], 150.0);
        // after the locked step the plan releases at least the inflow
        assert!(p.schedule.totals[1] >= 9000.0 - 1e-6);
    }
}
