//! TOML run configuration. Every key is optional; unknown keys are errors.
//!
//! ```toml
//! [reservoir]          # levels in m, flows in m3/s
//! fwl = 80.0
//! nhwl = 76.5
//! lwl = 60.0
//! spillway_crest = 64.5
//! mo_turb = 264.0
//! mo_spill = 11680.0
//! dt = 3600.0
//! # curve = "curve.csv"   (level_m,storage_m3 table; default built-in curve)
//!
//! [run]
//! horizon = 6
//! mode = "pdmpc"        # pdmpc | fixed1 | fixed2 | custom
//! seed = 0
//! initial_level = 76.5  # default: nhwl
//! initial_turb = 150.0
//! initial_spill = 0.0
//! change_tol = 1.0
//! # custom_genes = [3, 1, 3, 3, 20, 20, 15]   (mode = "custom")
//! # custom_sh_level = 79.0
//!
//! [forecast]
//! certain = false       # true: perfect foresight
//! a = 0.05
//! b = 0.03
//! c = 0.1
//! window = 3
//!
//! [ga]
//! population = 24
//! generations = 30
//! tournament_size = 3
//! crossover_prob = 0.9
//! mutation_prob_per_gene = 0.1
//! elitism = 2
//!
//! [evaluator]
//! e1 = 5.0   # ... through e8; defaults 5, 1, 2, 2, 5, 3, 1, 1
//! large_value = 1000.0
//! s_u_level = 76.5
//! s_l_level = 76.0
//! w_su = 1.0
//! w_sl = 2.0
//! w_sh = 20.0
//!
//! [search]
//! # f = 6.0            (default: the horizon)
//! sh_levels = [78.5, 79.0, 79.5]
//! # gene_lo = [0, 0, 0, 0, 0, 0, 1, 0]
//! # gene_hi = [19, 2, 19, 19, 19, 19, 20, 2]
//! # pin_sh = 1         (fix the S_H gene to this table index)
//!
//! [solver]
//! feas_tol = 1e-7
//! opt_tol = 1e-8
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Mode, RunConfig};
use crate::evaluator::{DEFAULT_S_L_LEVEL, DEFAULT_S_U_LEVEL, DEFAULT_WEIGHTS};
use crate::forecast::ForecastConfig;
use crate::hydro::{HydroError, ReservoirSpec, StageStorageCurve};
use crate::linprog::SolverOptions;
use crate::search::{decode_weights, GaConfig, GeneRanges, DEFAULT_SH_LEVELS, SH_GENE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirSection {
    pub fwl: f64,
    pub nhwl: f64,
    pub lwl: f64,
    pub spillway_crest: f64,
    pub mo_turb: f64,
    pub mo_spill: f64,
    pub dt: f64,
    pub curve: Option<PathBuf>,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        let s = ReservoirSpec::default();
        Self {
            fwl: s.fwl,
            nhwl: s.nhwl,
            lwl: s.lwl,
            spillway_crest: s.spillway_crest,
            mo_turb: s.mo_turb,
            mo_spill: s.mo_spill,
            dt: s.dt,
            curve: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub horizon: usize,
    pub mode: String,
    pub seed: u64,
    pub initial_level: Option<f64>,
    pub initial_turb: f64,
    pub initial_spill: f64,
    pub change_tol: f64,
    pub custom_genes: Option<[u8; 7]>,
    pub custom_sh_level: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: 6,
            mode: "pdmpc".into(),
            seed: 0,
            initial_level: None,
            initial_turb: 150.0,
            initial_spill: 0.0,
            change_tol: 1.0,
            custom_genes: None,
            custom_sh_level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub certain: bool,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub window: usize,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let f = ForecastConfig::default();
        Self { certain: false, a: f.a, b: f.b, c: f.c, window: f.window }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSection {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob_per_gene: f64,
    pub elitism: usize,
}

impl Default for GaSection {
    fn default() -> Self {
        let g = GaConfig::default();
        Self {
            population: g.population,
            generations: g.generations,
            tournament_size: g.tournament_size,
            crossover_prob: g.crossover_prob,
            mutation_prob_per_gene: g.mutation_prob_per_gene,
            elitism: g.elitism,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorSection {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub e5: f64,
    pub e6: f64,
    pub e7: f64,
    pub e8: f64,
    pub large_value: f64,
    pub s_u_level: f64,
    pub s_l_level: f64,
    pub w_su: f64,
    pub w_sl: f64,
    pub w_sh: f64,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        let [e1, e2, e3, e4, e5, e6, e7, e8] = DEFAULT_WEIGHTS;
        Self {
            e1,
            e2,
            e3,
            e4,
            e5,
            e6,
            e7,
            e8,
            large_value: 1000.0,
            s_u_level: DEFAULT_S_U_LEVEL,
            s_l_level: DEFAULT_S_L_LEVEL,
            w_su: 1.0,
            w_sl: 2.0,
            w_sh: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub f: Option<f64>,
    pub sh_levels: Vec<f64>,
    pub gene_lo: Option<[u8; 8]>,
    pub gene_hi: Option<[u8; 8]>,
    pub pin_sh: Option<u8>,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self { f: None, sh_levels: DEFAULT_SH_LEVELS.to_vec(), gene_lo: None, gene_hi: None, pin_sh: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub reservoir: ReservoirSection,
    pub run: RunSection,
    pub forecast: ForecastSection,
    pub ga: GaSection,
    pub evaluator: EvaluatorSection,
    pub search: SearchSection,
    pub solver: SolverOptions,
    pub output: OutputSection,
}

/// A config file turned into engine inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub spec: ReservoirSpec,
    pub run: RunConfig,
    pub output_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    /// Builds validated engine inputs; relative paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Resolved, ConfigError> {
        let r = &self.reservoir;
        let curve = match &r.curve {
            Some(p) => StageStorageCurve::from_path(base.join(p))?,
            None => StageStorageCurve::default_curve(),
        };
        let spec = ReservoirSpec {
            fwl: r.fwl,
            nhwl: r.nhwl,
            lwl: r.lwl,
            spillway_crest: r.spillway_crest,
            mo_turb: r.mo_turb,
            mo_spill: r.mo_spill,
            curve,
            dt: r.dt,
        };
        spec.validate()?;

        let mut run = RunConfig::new(&spec)?;
        let rs = &self.run;
        run.horizon = rs.horizon;
        run.seed = rs.seed;
        run.initial_level = rs.initial_level.unwrap_or(spec.nhwl);
        run.initial_turb = rs.initial_turb;
        run.initial_spill = rs.initial_spill;
        run.change_tol = rs.change_tol;

        let fc = &self.forecast;
        run.forecast = if fc.certain {
            ForecastConfig::certain()
        } else {
            ForecastConfig { a: fc.a, b: fc.b, c: fc.c, window: fc.window }
        };

        let g = &self.ga;
        run.ga = GaConfig {
            population: g.population,
            generations: g.generations,
            tournament_size: g.tournament_size,
            crossover_prob: g.crossover_prob,
            mutation_prob_per_gene: g.mutation_prob_per_gene,
            elitism: g.elitism,
            seed: 0,
        };

        let e = &self.evaluator;
        run.evaluator.weights = [e.e1, e.e2, e.e3, e.e4, e.e5, e.e6, e.e7, e.e8];
        run.evaluator.large_value = e.large_value;
        run.evaluator.s_u = spec.storage_at(e.s_u_level)?;
        run.evaluator.s_l = spec.storage_at(e.s_l_level)?;
        run.evaluator.w_su = e.w_su;
        run.evaluator.w_sl = e.w_sl;
        run.evaluator.w_sh = e.w_sh;

        let s = &self.search;
        run.f = s.f;
        run.sh_levels = s.sh_levels.clone();
        let table = run.sh_table(&spec)?;
        let mut ranges = GeneRanges::for_table(&table);
        if let Some(lo) = s.gene_lo {
            ranges.lo = lo;
        }
        if let Some(hi) = s.gene_hi {
            ranges.hi = hi;
        }
        if let Some(i) = s.pin_sh {
            ranges = ranges.pin(SH_GENE, i);
        }
        if ranges != GeneRanges::for_table(&table) {
            run.gene_ranges = Some(ranges);
        }
        run.solver = self.solver;

        run.mode = match rs.mode.as_str() {
            "custom" => {
                let genes = rs
                    .custom_genes
                    .ok_or_else(|| ConfigError::Invalid("mode \"custom\" needs run.custom_genes".into()))?;
                let sh_level = rs
                    .custom_sh_level
                    .ok_or_else(|| ConfigError::Invalid("mode \"custom\" needs run.custom_sh_level".into()))?;
                Mode::FixedCustom(decode_weights(&genes, &spec, run.f_value(), spec.storage_at(sh_level)?))
            }
            other => Mode::parse(other).ok_or_else(|| ConfigError::Invalid(format!("unknown mode {other:?}")))?,
        };
        run.validate(&spec)?;
        Ok(Resolved { spec, run, output_dir: self.output.dir.as_ref().map(|d| base.join(d)) })
    }
}
