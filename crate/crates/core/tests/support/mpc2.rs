//! Random MPC instances and an independent brute-force optimum for H = 2.
//!
//! With the first outflow and its split locked, an H = 2 program has two free
//! decisions: the second total `T1` and second spill `S1`. Every term of the
//! objective is piecewise linear in them with breakpoints on lines of the
//! form `T1 = c`, `S1 = c` or `T1 - S1 = c`, and every constraint is a
//! half-plane bounded by such a line. A minimum of a convex piecewise-linear
//! function over a polygon is attained at a vertex of that line arrangement,
//! so enumerating all pairwise intersections finds it.

use pdmpc_core::hydro::{ReservoirSpec, ReservoirState};
use pdmpc_core::mpc::{MpcInstance, Schedule, WeightVector};
use pdmpc_core::search::{decode_weights, ShTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Owned inputs of one planning step.
#[derive(Debug, Clone)]
pub struct Owned {
    pub spec: ReservoirSpec,
    pub state: ReservoirState,
    pub forecast: Vec<f64>,
    pub prev: Schedule,
    pub weights: WeightVector,
    pub s_u: f64,
    pub s_l: f64,
    pub demand: Vec<f64>,
}

impl Owned {
    pub fn inst(&self) -> MpcInstance<'_> {
        MpcInstance {
            spec: &self.spec,
            state: &self.state,
            forecast: &self.forecast,
            prev_schedule: &self.prev,
            weights: &self.weights,
            s_u: self.s_u,
            s_l: self.s_l,
            demand: &self.demand,
        }
    }
}

/// Random but valid inputs; the program itself may be infeasible.
pub fn random_instance(seed: u64, h: usize) -> Owned {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ReservoirSpec::default();
    let level = rng.random_range(70.0..79.5);
    let committed: f64 = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..900.0) };
    let spill_lo = (committed - spec.mo_turb).max(0.0);
    let spill = if rng.random_bool(0.5) { spill_lo } else { rng.random_range(spill_lo..=committed) };
    let k = rng.random_range(1..40);
    let state = ReservoirState {
        storage: spec.storage_at(level).unwrap(),
        committed_total_outflow: committed,
        committed_spill_outflow: spill,
        last_spill: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..300.0) },
        step_index: k,
    };
    let forecast = (0..h).map(|_| rng.random_range(0.0..3000.0)).collect();
    let prev_totals: Vec<f64> = (0..h).map(|_| rng.random_range(0.0..900.0)).collect();
    let prev = Schedule {
        start_step: k - 1,
        spills: prev_totals.iter().map(|t| (t - spec.mo_turb).max(0.0)).collect(),
        turbs: prev_totals.iter().map(|t| t.min(spec.mo_turb)).collect(),
        totals: prev_totals,
    };
    let mut genes = [0u8; 7];
    for (i, g) in genes.iter_mut().enumerate() {
        *g = match i {
            1 => rng.random_range(0..=2),
            6 => rng.random_range(1..=20),
            _ => rng.random_range(0..=19),
        };
    }
    let table = ShTable::default_for(&spec).unwrap();
    let s_h = table.storages[rng.random_range(0..table.len())];
    let weights = decode_weights(&genes, &spec, h as f64, s_h);
    let demand = (0..h)
        .map(|_| if rng.random_bool(0.8) { 0.0 } else { rng.random_range(0.0..200.0) })
        .collect();
    Owned {
        s_u: spec.storage_at(76.5).unwrap(),
        s_l: spec.storage_at(76.0).unwrap(),
        spec,
        state,
        forecast,
        prev,
        weights,
        demand,
    }
}

/// Planning objective written out term by term for a full schedule and the
/// end-of-step storages it implies.
pub fn objective(o: &Owned, totals: &[f64], spills: &[f64]) -> f64 {
    let z = &o.weights;
    let h = totals.len();
    let k = o.state.step_index;
    let pos = |x: f64| x.max(0.0);
    let mut j = 0.0;
    j += z.w1 * spills.iter().copied().fold(0.0, f64::max);
    j += z.w2 * spills.iter().sum::<f64>();
    for t in 1..h {
        // in-horizon change, weight 1/(3 (t + 1)) at offset t
        let d = (totals[t] - totals[t - 1]) / (3.0 * (t as f64 + 1.0));
        j += z.w3_i * pos(-d) + z.w3_d * pos(d);
    }
    for t in 0..h {
        let w = if t <= 3 { 1.0 / (t as f64 + 1.0) } else { 1.0 / (2.0 * (t as f64 + 1.0)) };
        let p = o.prev.totals[(k + t - o.prev.start_step).min(o.prev.totals.len() - 1)];
        let d = (totals[t] - p) * w;
        j += z.w4_i * pos(-d) + z.w4_d * pos(d);
    }
    let mut s = o.state.storage;
    for t in 0..h {
        s += (o.forecast[t] - totals[t]) * o.spec.dt;
        j += z.w5_1 * pos(s - o.s_u) + z.w5_2 * pos(o.s_l - s) + z.w5_3 * pos(s - z.s_h);
    }
    j
}

/// Brute-force optimum of an H = 2 instance: `(objective, T1, S1)`, or
/// `None` when no point satisfies the hard constraints.
pub fn solve_h2(o: &Owned) -> Option<(f64, f64, f64)> {
    assert_eq!(o.forecast.len(), 2);
    let spec = &o.spec;
    let dt = spec.dt;
    let (t0, s0) = (o.state.committed_total_outflow, o.state.committed_spill_outflow);
    let st0 = o.state.storage + (o.forecast[0] - t0) * dt;
    let tol = 1e-7;
    if t0 < o.demand[0] - tol || st0 < spec.lws() - 1.0 || st0 > spec.fws() + 1.0 {
        return None;
    }
    // T1 at which the second storage hits a given value
    let t_for = |target: f64| (st0 + o.forecast[1] * dt - target) / dt;
    let p1 = o.prev.totals[(o.state.step_index + 1 - o.prev.start_step).min(o.prev.totals.len() - 1)];
    let t_lines = [
        t0,
        p1,
        o.demand[1],
        spec.max_total_outflow(),
        t_for(o.s_u),
        t_for(o.s_l),
        t_for(o.weights.s_h),
        t_for(spec.fws()),
        t_for(spec.lws()),
    ];
    let s_lines = [s0, 0.0, spec.mo_spill];
    let d_lines = [0.0, spec.mo_turb];

    let mut points = Vec::new();
    for &t in &t_lines {
        for &s in &s_lines {
            points.push((t, s));
        }
        for &d in &d_lines {
            points.push((t, t - d));
        }
    }
    for &s in &s_lines {
        for &d in &d_lines {
            points.push((s + d, s));
        }
    }

    let feasible = |t1: f64, s1: f64| {
        let st1 = st0 + (o.forecast[1] - t1) * dt;
        t1 >= o.demand[1] - tol
            && t1 <= spec.max_total_outflow() + tol
            && s1 >= -tol
            && s1 <= spec.mo_spill + tol
            && t1 - s1 >= -tol
            && t1 - s1 <= spec.mo_turb + tol
            && st1 >= spec.lws() - 1e-3
            && st1 <= spec.fws() + 1e-3
    };
    points
        .into_iter()
        .filter(|&(t, s)| feasible(t, s))
        .map(|(t, s)| (objective(o, &[t0, t], &[s0, s]), t, s))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}
