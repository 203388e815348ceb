//! Checks on the genetic search shared by the property tests and the
//! acceptance suite. Each returns a description of the first violation.

use std::collections::HashSet;
use std::sync::Mutex;

use pdmpc_core::search::{optimize, Chromosome, GaConfig, GeneRanges};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_chromosome(ranges: &GeneRanges, seed: u64) -> Chromosome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ch = [0; 8];
    for i in 0..8 {
        ch[i] = rng.random_range(ranges.lo[i]..=ranges.hi[i]);
    }
    ch
}

pub fn distance(a: &Chromosome, b: &Chromosome) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum()
}

fn cfg(seed: u64) -> GaConfig {
    GaConfig { seed, ..GaConfig::default() }
}

pub fn warm_start_dominance(seed: u64) -> Result<(), String> {
    let ranges = GeneRanges::default();
    let target = random_chromosome(&ranges, seed);
    let warm = random_chromosome(&ranges, seed ^ 0xABCD);
    let f = |c: &Chromosome| distance(c, &target);
    let r = optimize(f, &ranges, Some(warm), &cfg(seed)).map_err(|e| e.to_string())?;
    if r.best_penalty > f(&warm) {
        return Err(format!("best {} worse than warm start {}", r.best_penalty, f(&warm)));
    }
    // a warm start at the optimum is never lost
    let r = optimize(f, &ranges, Some(target), &cfg(seed)).map_err(|e| e.to_string())?;
    if r.best != target || r.best_penalty != 0.0 {
        return Err(format!("optimal warm start lost: {:?} ({})", r.best, r.best_penalty));
    }
    Ok(())
}

pub fn incumbent_monotone(seed: u64) -> Result<(), String> {
    let ranges = GeneRanges::default();
    let target = random_chromosome(&ranges, seed);
    // a rugged fitness so progress is not trivially monotone in the population
    let f = |c: &Chromosome| distance(c, &target) + ((c[0] as u32 * 7 + c[2] as u32 * 3) % 5) as f64;
    let r = optimize(f, &ranges, None, &cfg(seed)).map_err(|e| e.to_string())?;
    if r.best_history.len() != r.generations_run {
        return Err("history length differs from generations run".into());
    }
    if let Some(w) = r.best_history.windows(2).find(|w| w[1] > w[0]) {
        return Err(format!("incumbent rose from {} to {}", w[0], w[1]));
    }
    if r.best_history.last() != Some(&r.best_penalty) || f(&r.best) != r.best_penalty {
        return Err("best penalty is not the last incumbent".into());
    }
    Ok(())
}

pub fn range_safety(seed: u64) -> Result<(), String> {
    let mut ranges = GeneRanges::default();
    // narrow some genes so clamping is exercised
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..8 {
        let a = rng.random_range(ranges.lo[i]..=ranges.hi[i]);
        let b = rng.random_range(ranges.lo[i]..=ranges.hi[i]);
        ranges.lo[i] = a.min(b);
        ranges.hi[i] = a.max(b);
    }
    let seen = Mutex::new(Vec::new());
    let f = |c: &Chromosome| {
        seen.lock().unwrap().push(*c);
        c.iter().map(|&g| g as f64).sum::<f64>()
    };
    // an out-of-range warm start must be pulled back into range
    let warm = [255; 8];
    let r = optimize(f, &ranges, Some(warm), &cfg(seed)).map_err(|e| e.to_string())?;
    let seen = seen.into_inner().unwrap();
    if let Some(c) = seen.iter().find(|c| !ranges.contains(c)) {
        return Err(format!("evaluated out-of-range chromosome {c:?}"));
    }
    if !ranges.contains(&r.best) {
        return Err(format!("best {:?} out of range", r.best));
    }
    let distinct: HashSet<_> = seen.iter().collect();
    if distinct.len() != seen.len() || r.evaluations != seen.len() {
        return Err(format!("{} calls, {} distinct, {} reported", seen.len(), distinct.len(), r.evaluations));
    }
    let c = cfg(seed);
    if r.evaluations > c.population * c.generations {
        return Err("more evaluations than population x generations".into());
    }
    Ok(())
}

pub fn single_gene_oracle(seed: u64) -> Result<(), String> {
    let base = random_chromosome(&GeneRanges::default(), seed);
    let mut ranges = GeneRanges::default();
    for i in 1..8 {
        ranges = ranges.pin(i, base[i]);
    }
    let f = |c: &Chromosome| (c[0] as f64 - 7.0).abs();
    // exhaustive minimum over the 20 admissible values
    let want = (0..=19u8).min_by(|&a, &b| f(&[a, 0, 0, 0, 0, 0, 0, 0]).total_cmp(&f(&[b, 0, 0, 0, 0, 0, 0, 0]))).unwrap();
    let r = optimize(f, &ranges, None, &cfg(seed)).map_err(|e| e.to_string())?;
    if r.best[0] != want || r.best_penalty != 0.0 || r.best[1..] != base[1..] {
        return Err(format!("best {:?} (penalty {}), want w1 gene {want}", r.best, r.best_penalty));
    }
    Ok(())
}

pub fn reproducible(seed: u64) -> Result<(), String> {
    let ranges = GeneRanges::default();
    let target = random_chromosome(&ranges, seed);
    let f = |c: &Chromosome| distance(c, &target);
    let warm = Some(random_chromosome(&ranges, !seed));
    let a = optimize(f, &ranges, warm, &cfg(seed)).map_err(|e| e.to_string())?;
    let b = optimize(f, &ranges, warm, &cfg(seed)).map_err(|e| e.to_string())?;
    if a != b {
        return Err(format!("{:?} vs {:?}", a.best, b.best));
    }
    Ok(())
}

pub const ALL: [(&str, fn(u64) -> Result<(), String>); 5] = [
    ("warm-start dominance", warm_start_dominance),
    ("incumbent monotonicity", incumbent_monotone),
    ("range safety", range_safety),
    ("single-gene oracle", single_gene_oracle),
    ("reproducibility", reproducible),
];
