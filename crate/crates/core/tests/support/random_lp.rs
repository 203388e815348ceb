use pdmpc_core::linprog::StandardFormLp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random program with at most 6 variables, at most 8 rows and finite bounds.
/// Right-hand sides are built around a random interior point, with some rows
/// shifted so that a share of instances is infeasible.
pub fn random_bounded_lp(seed: u64) -> StandardFormLp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = rng.random_range(1..=6);
    let me = rng.random_range(0..=n.saturating_sub(1).min(2));
    let mi = rng.random_range(0..=(8 - me));
    let mut lp = StandardFormLp::new(n);
    for j in 0..n {
        let lo = rng.random_range(-3..=0) as f64;
        let hi = lo + rng.random_range(1..=8) as f64;
        lp.bounds[j] = (lo, hi);
        lp.objective[j] = rng.random_range(-5.0..5.0);
    }
    let x0: Vec<f64> = lp.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
    let row = |rng: &mut ChaCha8Rng| -> Vec<(usize, f64)> {
        let mut terms = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.8) {
                terms.push((j, rng.random_range(-5..=5) as f64));
            }
        }
        if terms.iter().all(|t| t.1 == 0.0) {
            terms.push((rng.random_range(0..n), 1.0));
        }
        terms
    };
    for _ in 0..me {
        let terms = row(&mut rng);
        let rhs: f64 = terms.iter().map(|&(j, a)| a * x0[j]).sum();
        lp.add_eq(&terms, rhs);
    }
    for _ in 0..mi {
        let terms = row(&mut rng);
        let act: f64 = terms.iter().map(|&(j, a)| a * x0[j]).sum();
        let shift = if rng.random_bool(0.15) {
            rng.random_range(0.5..20.0)
        } else {
            -rng.random_range(0.0..3.0)
        };
        lp.add_ge(&terms, act + shift);
    }
    lp
}
