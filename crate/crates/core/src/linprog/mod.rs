//! Small dense linear programs and a bounded-variable simplex solver.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    c . v
//! subject to  row . v  = rhs      (equalities)
//!             row . v >= rhs      (inequalities)
//!             lower <= v <= upper (bounds; lower finite, upper may be +inf)
//! ```

mod simplex;

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormLp {
    pub objective: Vec<f64>,
    pub equalities: Vec<Constraint>,
    /// Rows meaning `coeffs . v >= rhs`.
    pub inequalities: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl StandardFormLp {
    /// An empty program over `n` variables bounded to `[0, +inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            equalities: Vec::new(),
            inequalities: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.equalities.len() + self.inequalities.len()
    }

    /// Adds `sum(coef * v[idx]) = rhs` from sparse terms.
    pub fn add_eq(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let coeffs = self.dense_row(terms);
        self.equalities.push(Constraint { coeffs, rhs });
    }

    /// Adds `sum(coef * v[idx]) >= rhs` from sparse terms.
    pub fn add_ge(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let coeffs = self.dense_row(terms);
        self.inequalities.push(Constraint { coeffs, rhs });
    }

    fn dense_row(&self, terms: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            row[j] += a;
        }
        row
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::Malformed(format!(
                "{} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for (kind, rows) in [("equality", &self.equalities), ("inequality", &self.inequalities)] {
            for (i, r) in rows.iter().enumerate() {
                if r.coeffs.len() != n {
                    return Err(LpError::Malformed(format!(
                        "{kind} row {i} has length {}, expected {n}",
                        r.coeffs.len()
                    )));
                }
                if !r.rhs.is_finite() || r.coeffs.iter().any(|a| !a.is_finite()) {
                    return Err(LpError::Malformed(format!("{kind} row {i} is not finite")));
                }
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || lo > hi || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("bad bounds ({lo}, {hi}) on v{j}")));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, v: &[f64]) -> f64 {
        dot(&self.objective, v)
    }

    /// Largest constraint or bound violation at `v`, each residual divided
    /// by `1 + |rhs|` (or `1 + |bound|`).
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.equalities {
            worst = worst.max((dot(&r.coeffs, v) - r.rhs).abs() / (1.0 + r.rhs.abs()));
        }
        for r in &self.inequalities {
            worst = worst.max((r.rhs - dot(&r.coeffs, v)).max(0.0) / (1.0 + r.rhs.abs()));
        }
        for (&x, &(lo, hi)) in v.iter().zip(&self.bounds) {
            worst = worst.max((lo - x).max(0.0) / (1.0 + lo.abs()));
            if hi.is_finite() {
                worst = worst.max((x - hi).max(0.0) / (1.0 + hi.abs()));
            }
        }
        worst
    }

    /// Plain-text dump: objective row, then constraint rows, then bounds.
    pub fn write_debug<W: Write>(&self, mut w: W) -> io::Result<()> {
        let fmt_row = |r: &[f64]| r.iter().map(|a| format!("{a:e}")).collect::<Vec<_>>().join(" ");
        writeln!(
            w,
            "# lp vars={} eq={} ge={}",
            self.num_vars(),
            self.equalities.len(),
            self.inequalities.len()
        )?;
        writeln!(w, "min {}", fmt_row(&self.objective))?;
        for r in &self.equalities {
            writeln!(w, "eq {} = {:e}", fmt_row(&r.coeffs), r.rhs)?;
        }
        for r in &self.inequalities {
            writeln!(w, "ge {} >= {:e}", fmt_row(&r.coeffs), r.rhs)?;
        }
        for (j, (lo, hi)) in self.bounds.iter().enumerate() {
            writeln!(w, "bound {j} {lo:e} {hi:e}")?;
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values; empty unless `status` is `Optimal`.
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { feas_tol: 1e-7, opt_tol: 1e-8 }
    }
}

/// Solves `lp` to optimality or classifies it as infeasible or unbounded.
pub fn solve(lp: &StandardFormLp, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    simplex::solve(lp, opts)
}
