//! Integer-coded genetic search over objective weights and the highest
//! tolerated storage.
//!
//! Gene order: `w1, w2, w3_i, w3_d, w4_i, w4_d, w5, sh`. The `w5` gene drives
//! all three storage weights in the fixed ratio 1:2:20; `sh` indexes an
//! [`ShTable`].

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::{HydroError, ReservoirSpec};
use crate::mpc::WeightVector;

pub const NUM_GENES: usize = 8;
pub const GENE_NAMES: [&str; NUM_GENES] = ["w1", "w2", "w3i", "w3d", "w4i", "w4d", "w5", "sh"];
pub const SH_GENE: usize = 7;
pub const W5_GENE: usize = 6;

pub type Chromosome = [u8; NUM_GENES];

pub const FIXED1_GENES: [u8; 7] = [3, 1, 3, 3, 20, 20, 15];
pub const FIXED2_GENES: [u8; 7] = [20, 5, 3, 3, 3, 3, 15];
pub const FIXED_SH_LEVEL: f64 = 79.0;
pub const DEFAULT_SH_LEVELS: [f64; 3] = [78.5, 79.0, 79.5];

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("gene {gene} = {value} outside [{lo}, {hi}]")]
    GeneOutOfRange { gene: &'static str, value: u8, lo: u8, hi: u8 },
    #[error("invalid S_H table: {0}")]
    InvalidTable(String),
    #[error("invalid GA config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Hydro(#[from] HydroError),
}

/// Candidate levels for the highest tolerated storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShTable {
    pub levels: Vec<f64>,
    pub storages: Vec<f64>,
}

impl ShTable {
    pub fn new(spec: &ReservoirSpec, levels: &[f64]) -> Result<Self, SearchError> {
        if levels.is_empty() || levels.len() > u8::MAX as usize {
            return Err(SearchError::InvalidTable(format!("{} entries", levels.len())));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SearchError::InvalidTable("levels must increase strictly".into()));
        }
        if levels.iter().any(|&l| l >= spec.fwl) {
            return Err(SearchError::InvalidTable("levels must lie below FWL".into()));
        }
        let storages = levels.iter().map(|&l| spec.storage_at(l)).collect::<Result<_, _>>()?;
        Ok(Self { levels: levels.to_vec(), storages })
    }

    pub fn default_for(spec: &ReservoirSpec) -> Result<Self, SearchError> {
        Self::new(spec, &DEFAULT_SH_LEVELS)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Closed per-gene search ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneRanges {
    pub lo: Chromosome,
    pub hi: Chromosome,
}

impl Default for GeneRanges {
    fn default() -> Self {
        Self { lo: [0, 0, 0, 0, 0, 0, 1, 0], hi: [19, 2, 19, 19, 19, 19, 20, 2] }
    }
}

impl GeneRanges {
    /// Default ranges with the `sh` gene spanning `table`.
    pub fn for_table(table: &ShTable) -> Self {
        let mut r = Self::default();
        r.hi[SH_GENE] = (table.len() - 1) as u8;
        r
    }

    /// Fixes `gene` to `value`.
    pub fn pin(mut self, gene: usize, value: u8) -> Self {
        self.lo[gene] = value;
        self.hi[gene] = value;
        self
    }

    pub fn contains(&self, ch: &Chromosome) -> bool {
        (0..NUM_GENES).all(|i| self.lo[i] <= ch[i] && ch[i] <= self.hi[i])
    }

    pub fn check(&self, ch: &Chromosome) -> Result<(), SearchError> {
        for i in 0..NUM_GENES {
            if ch[i] < self.lo[i] || ch[i] > self.hi[i] {
                return Err(SearchError::GeneOutOfRange {
                    gene: GENE_NAMES[i],
                    value: ch[i],
                    lo: self.lo[i],
                    hi: self.hi[i],
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if (0..NUM_GENES).any(|i| self.lo[i] > self.hi[i]) {
            return Err(SearchError::InvalidConfig("gene range with lo > hi".into()));
        }
        if self.lo[W5_GENE] == 0 {
            return Err(SearchError::InvalidConfig("w5 gene must start at 1".into()));
        }
        Ok(())
    }

    fn clamp(&self, mut ch: Chromosome) -> Chromosome {
        for i in 0..NUM_GENES {
            ch[i] = ch[i].clamp(self.lo[i], self.hi[i]);
        }
        ch
    }

    fn random<R: Rng>(&self, rng: &mut R) -> Chromosome {
        let mut ch = [0; NUM_GENES];
        for (i, g) in ch.iter_mut().enumerate() {
            *g = rng.random_range(self.lo[i]..=self.hi[i]);
        }
        ch
    }
}

/// Weights from the first seven genes with an explicit `s_h`; no range checks.
pub fn decode_weights(genes: &[u8], spec: &ReservoirSpec, f: f64, s_h: f64) -> WeightVector {
    let flow = 20.0 / spec.mo_spill;
    let store = 1.0 / (spec.fws() * f);
    let g = |i: usize| genes[i] as f64;
    WeightVector {
        w1: g(0) * flow,
        w2: g(1) * 2.0 / spec.mo_spill,
        w3_i: g(2) * flow,
        w3_d: g(3) * flow,
        w4_i: g(4) * flow,
        w4_d: g(5) * flow,
        w5_1: g(6) * 20.0 * store,
        w5_2: g(6) * 40.0 * store,
        w5_3: g(6) * 400.0 * store,
        s_h,
    }
}

/// Decodes a chromosome after checking it against `ranges`.
pub fn decode(
    ch: &Chromosome,
    ranges: &GeneRanges,
    spec: &ReservoirSpec,
    table: &ShTable,
    f: f64,
) -> Result<WeightVector, SearchError> {
    ranges.check(ch)?;
    let s_h = *table.storages.get(ch[SH_GENE] as usize).ok_or(SearchError::GeneOutOfRange {
        gene: "sh",
        value: ch[SH_GENE],
        lo: 0,
        hi: (table.len() - 1) as u8,
    })?;
    Ok(decode_weights(ch, spec, f, s_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob_per_gene: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 24,
            generations: 30,
            tournament_size: 3,
            crossover_prob: 0.9,
            mutation_prob_per_gene: 0.1,
            elitism: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.into()));
        if self.population < 4 {
            return bad("population must be >= 4");
        }
        if self.elitism >= self.population {
            return bad("elitism must be below population");
        }
        if self.generations == 0 || self.tournament_size == 0 {
            return bad("generations and tournament_size must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) || !(0.0..=1.0).contains(&self.mutation_prob_per_gene) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Chromosome,
    pub best_penalty: f64,
    /// Distinct chromosomes evaluated.
    pub evaluations: usize,
    pub generations_run: usize,
    /// Best penalty seen so far, after each generation.
    pub best_history: Vec<f64>,
}

/// Minimises `fitness` over chromosomes within `ranges`.
///
/// Each distinct chromosome is evaluated once; NaN penalties count as +inf.
/// Evaluations within a generation run in parallel.
pub fn optimize<F>(
    fitness: F,
    ranges: &GeneRanges,
    warm_start: Option<Chromosome>,
    cfg: &GaConfig,
) -> Result<GaResult, SearchError>
where
    F: Fn(&Chromosome) -> f64 + Sync,
{
    cfg.validate()?;
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache: HashMap<Chromosome, f64> = HashMap::new();

    let mut pop: Vec<Chromosome> = Vec::with_capacity(cfg.population);
    if let Some(w) = warm_start {
        pop.push(ranges.clamp(w));
    }
    while pop.len() < cfg.population {
        pop.push(ranges.random(&mut rng));
    }

    let mut best: Option<(Chromosome, f64)> = None;
    let mut history = Vec::with_capacity(cfg.generations);
    for gen in 0..cfg.generations {
        if gen > 0 {
            pop = next_generation(&pop, &cache, ranges, cfg, &mut rng);
        }
        let mut fresh: Vec<Chromosome> = Vec::new();
        for ch in &pop {
            if !cache.contains_key(ch) && !fresh.contains(ch) {
                fresh.push(*ch);
            }
        }
        let scores: Vec<f64> = fresh
            .par_iter()
            .map(|ch| {
                let v = fitness(ch);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            })
            .collect();
        cache.extend(fresh.into_iter().zip(scores));
        for ch in &pop {
            let p = cache[ch];
            if best.is_none_or(|(_, b)| p < b) {
                best = Some((*ch, p));
            }
        }
        history.push(best.map(|b| b.1).unwrap_or(f64::INFINITY));
    }
    let (best, best_penalty) = best.expect("population is non-empty");
    Ok(GaResult {
        best,
        best_penalty,
        evaluations: cache.len(),
        generations_run: cfg.generations,
        best_history: history,
    })
}

fn next_generation(
    pop: &[Chromosome],
    cache: &HashMap<Chromosome, f64>,
    ranges: &GeneRanges,
    cfg: &GaConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Chromosome> {
    let score = |ch: &Chromosome| cache[ch];
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| score(&pop[a]).total_cmp(&score(&pop[b])));

    let mut next: Vec<Chromosome> = order.iter().take(cfg.elitism).map(|&i| pop[i]).collect();
    let tournament = |rng: &mut ChaCha8Rng| -> Chromosome {
        let mut winner = pop[rng.random_range(0..pop.len())];
        for _ in 1..cfg.tournament_size {
            let c = pop[rng.random_range(0..pop.len())];
            if score(&c) < score(&winner) {
                winner = c;
            }
        }
        winner
    };
    while next.len() < cfg.population {
        let (mut a, mut b) = (tournament(rng), tournament(rng));
        if rng.random_bool(cfg.crossover_prob) {
            let cut = rng.random_range(1..NUM_GENES);
            for i in cut..NUM_GENES {
                std::mem::swap(&mut a[i], &mut b[i]);
            }
        }
        for child in [&mut a, &mut b] {
            for (i, g) in child.iter_mut().enumerate() {
                let (lo, hi) = (ranges.lo[i], ranges.hi[i]);
                if lo == hi || !rng.random_bool(cfg.mutation_prob_per_gene) {
                    continue;
                }
                // half the mutations step to a neighbour, the rest redraw uniformly
                *g = if rng.random_bool(0.5) {
                    match (*g == lo, *g == hi, rng.random_bool(0.5)) {
                        (true, _, _) => lo + 1,
                        (_, true, _) => hi - 1,
                        (_, _, up) => if up { *g + 1 } else { *g - 1 },
                    }
                } else {
                    rng.random_range(lo..=hi)
                };
            }
        }
        next.push(a);
        if next.len() < cfg.population {
            next.push(b);
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_multipliers() {
        let spec = ReservoirSpec::default();
        let table = ShTable::default_for(&spec).unwrap();
        let ranges = GeneRanges::for_table(&table);
        let z = decode(&[3, 0, 0, 0, 0, 0, 15, 1], &ranges, &spec, &table, 6.0).unwrap();
        assert!((z.w1 - 5.137e-3).abs() < 1e-6);
        assert_eq!(z.w1, 3.0 * 20.0 / 11_680.0);
        assert_eq!(z.w5_2 / z.w5_1, 2.0);
        assert!((z.w5_3 / z.w5_1 - 20.0).abs() < 1e-12);
        assert_eq!(z.s_h, spec.storage_at(79.0).unwrap());
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let spec = ReservoirSpec::default();
        let table = ShTable::default_for(&spec).unwrap();
        let ranges = GeneRanges::for_table(&table);
        let err = decode(&[20, 0, 0, 0, 0, 0, 1, 0], &ranges, &spec, &table, 6.0).unwrap_err();
        assert!(matches!(err, SearchError::GeneOutOfRange { gene: "w1", .. }));
        assert!(decode(&[0, 0, 0, 0, 0, 0, 0, 0], &ranges, &spec, &table, 6.0).is_err());
        assert!(decode(&[0, 0, 0, 0, 0, 0, 1, 3], &ranges, &spec, &table, 6.0).is_err());
    }

    #[test]
    fn sh_table_levels() {
        let spec = ReservoirSpec::default();
        let t = ShTable::default_for(&spec).unwrap();
        assert!(t.storages.windows(2).all(|w| w[0] < w[1]));
        assert!(ShTable::new(&spec, &[79.0, 78.5]).is_err());
        assert!(ShTable::new(&spec, &[80.0]).is_err());
    }

    #[test]
    fn constant_fitness() {
        let r = optimize(|_| 4.5, &GeneRanges::default(), None, &GaConfig::default()).unwrap();
        assert_eq!(r.best_penalty, 4.5);
    }

    #[test]
    fn config_validation() {
        let cfg = GaConfig { population: 3, ..Default::default() };
        assert!(optimize(|_| 0.0, &GeneRanges::default(), None, &cfg).is_err());
        let cfg = GaConfig { elitism: 24, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
