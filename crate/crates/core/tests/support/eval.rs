//! Random evaluator inputs and a straight-line penalty oracle.

use pdmpc_core::evaluator::{evaluate, EvalContext, EvaluatorConfig, PenaltyReport};
use pdmpc_core::hydro::{ReservoirSpec, ReservoirState};
use pdmpc_core::mpc::Schedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub spec: ReservoirSpec,
    pub cfg: EvaluatorConfig,
    pub state: ReservoirState,
    pub forecast: Vec<f64>,
    pub prev: Schedule,
    pub hist: Option<f64>,
    pub schedule: Schedule,
    pub s_h: f64,
}

impl Case {
    pub fn ctx(&self) -> EvalContext<'_> {
        EvalContext {
            spec: &self.spec,
            state: &self.state,
            forecast: &self.forecast,
            prev_schedule: &self.prev,
            hist_peak_inflow: self.hist,
        }
    }

    pub fn run(&self) -> PenaltyReport {
        evaluate(&self.cfg, &self.ctx(), &self.schedule, self.s_h).unwrap()
    }
}

pub fn random_schedule(rng: &mut ChaCha8Rng, spec: &ReservoirSpec, start: usize, h: usize) -> Schedule {
    let mut s = Schedule { start_step: start, totals: vec![], spills: vec![], turbs: vec![] };
    for _ in 0..h {
        let turb = rng.random_range(0.0..=spec.mo_turb);
        let spill = if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.0..3000.0) };
        s.turbs.push(turb);
        s.spills.push(spill);
        s.totals.push(turb + spill);
    }
    s
}

pub fn random_case(seed: u64, h: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ReservoirSpec::default();
    let mut cfg = EvaluatorConfig::for_spec(&spec).unwrap();
    for e in cfg.weights.iter_mut() {
        *e = rng.random_range(0.0..6.0);
    }
    let k = rng.random_range(0..30);
    let state = ReservoirState {
        storage: spec.storage_at(rng.random_range(75.0..79.95)).unwrap(),
        committed_total_outflow: 0.0,
        committed_spill_outflow: 0.0,
        last_spill: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..500.0) },
        step_index: k,
    };
    let forecast = (0..h).map(|_| rng.random_range(0.0..4000.0)).collect();
    let prev_len = rng.random_range(1..=h);
    let prev = random_schedule(&mut rng, &spec, k.saturating_sub(1), prev_len);
    let hist = rng.random_bool(0.8).then(|| rng.random_range(500.0..4000.0));
    let schedule = random_schedule(&mut rng, &spec, k, h);
    let s_h = spec.storage_at(rng.random_range(78.0..79.9)).unwrap();
    Case { spec, cfg, state, forecast, prev, hist, schedule, s_h }
}

/// Straight-line penalty from the objective definitions.
pub fn oracle(c: &Case) -> f64 {
    let spec = &c.spec;
    let cfg = &c.cfg;
    let tot = &c.schedule.totals;
    let sp = &c.schedule.spills;
    let h = tot.len();
    let big = cfg.large_value;
    let open = |x: f64| x >= 1e-6;

    let mut j1: f64 = 0.0;
    let mut j2 = 0.0;
    for &s in sp {
        j1 = j1.max(s);
        j2 += s;
    }
    let mut j3 = 0.0;
    for t in 1..h {
        j3 += (tot[t] - tot[t - 1]).abs() / (3.0 * (t as f64 + 1.0));
    }
    let mut j4 = 0.0;
    for t in 0..h {
        let time = c.state.step_index + t;
        let i = if time < c.prev.start_step { 0 } else { time - c.prev.start_step };
        let prev = c.prev.totals[i.min(c.prev.totals.len() - 1)];
        let w = if t <= 3 { 1.0 / (t as f64 + 1.0) } else { 1.0 / (2.0 * (t as f64 + 1.0)) };
        j4 += (tot[t] - prev).abs() * w;
    }
    let mut j5 = 0.0;
    let mut breach = false;
    let mut s = c.state.storage;
    let pts = spec.curve.points();
    let top = pts[pts.len() - 1].1;
    for t in 0..h {
        s = s + c.forecast[t] * spec.dt - tot[t] * spec.dt;
        if s > cfg.s_u {
            j5 += cfg.w_su * (s - cfg.s_u);
        }
        if s < cfg.s_l {
            j5 += cfg.w_sl * (cfg.s_l - s);
        }
        if s > c.s_h {
            j5 += cfg.w_sh * (s - c.s_h);
        }
        // level by linear interpolation between anchors
        let q = s.clamp(pts[0].1, top);
        let seg = pts.windows(2).find(|w| q <= w[1].1).unwrap();
        let level = seg[0].0 + (q - seg[0].1) * (seg[1].0 - seg[0].0) / (seg[1].1 - seg[0].1);
        if s >= top || level >= spec.fwl - 1e-6 || s < pts[0].1 {
            breach = true;
        }
    }
    let mut j6 = 0.0;
    let mut was = open(c.state.last_spill);
    for &x in sp {
        if open(x) != was {
            j6 += 1.0;
        }
        was = open(x);
    }
    let j7 = match c.hist {
        Some(p) if tot.iter().any(|&x| x > p) => big,
        _ => 0.0,
    };
    let j8 = if (0..h).any(|t| open(sp[t]) && tot[t] <= spec.mo_turb) { big } else { 0.0 };

    let q = spec.mo_spill;
    let e = cfg.weights;
    e[0] * j1 / q
        + e[1] * j2 / q
        + e[2] * j3 / q
        + e[3] * j4 / q
        + e[4] * j5 / (top * h as f64)
        + e[5] * j6
        + e[6] * j7
        + e[7] * j8
        + if breach { big } else { 0.0 }
}
