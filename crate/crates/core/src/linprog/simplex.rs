//! Dense two-phase bounded-variable primal simplex on a full tableau.
//!
//! Inequality rows receive a surplus column. Rows whose surplus cannot start
//! basic get an artificial column; phase one drives the artificials to zero
//! and they are then fixed at zero for phase two. Pricing is Dantzig's rule
//! until the objective stalls for `2n` consecutive iterations, after which
//! Bland's rule takes over for the rest of the phase.

use nalgebra::{DMatrix, DVector};

use super::{LpError, LpSolution, LpStatus, SolverOptions, StandardFormLp};

const PIVOT_TOL: f64 = 1e-9;

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major `B^-1 A`.
    t: Vec<f64>,
    /// The row-signed constraint matrix before any pivot, kept for refinement.
    a0: Vec<f64>,
    b0: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

pub(super) fn solve(lp: &StandardFormLp, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    let mut tab = Tableau::build(lp);

    let artificial: Vec<usize> = (0..tab.ncols)
        .filter(|&j| j >= n + lp.inequalities.len())
        .collect();
    if !artificial.is_empty() {
        let mut cost = vec![0.0; tab.ncols];
        for &j in &artificial {
            cost[j] = 1.0;
        }
        match tab.run(&cost, opts)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => {
                return Err(LpError::NumericalFailure("phase one reported unbounded".into()))
            }
        }
        let infeasibility: f64 = artificial.iter().map(|&j| tab.x[j].max(0.0)).sum();
        let scale = tab.b0.iter().fold(1.0_f64, |acc, b| acc.max(b.abs()));
        if infeasibility > opts.feas_tol * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: Vec::new(),
                objective_value: f64::INFINITY,
                iterations: tab.iterations,
            });
        }
        for &j in &artificial {
            tab.upper[j] = 0.0;
            if !tab.is_basic[j] {
                tab.x[j] = 0.0;
                tab.at_upper[j] = false;
            }
        }
    }

    let mut cost = vec![0.0; tab.ncols];
    cost[..n].copy_from_slice(&lp.objective);
    if let PhaseEnd::Unbounded = tab.run(&cost, opts)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: Vec::new(),
            objective_value: f64::NEG_INFINITY,
            iterations: tab.iterations,
        });
    }

    let mut values = tab.x[..n].to_vec();
    if lp.max_violation(&values) > opts.feas_tol {
        tab.refine()?;
        values = tab.x[..n].to_vec();
        let viol = lp.max_violation(&values);
        if viol > opts.feas_tol {
            return Err(LpError::NumericalFailure(format!(
                "final residual {viol:e} exceeds feasibility tolerance"
            )));
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.objective_at(&values),
        values,
        iterations: tab.iterations,
    })
}

impl Tableau {
    fn build(lp: &StandardFormLp) -> Self {
        let n = lp.num_vars();
        let me = lp.equalities.len();
        let mi = lp.inequalities.len();
        let m = me + mi;

        let mut lower: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
        let mut upper: Vec<f64> = lp.bounds.iter().map(|b| b.1).collect();
        lower.extend(std::iter::repeat_n(0.0, mi));
        upper.extend(std::iter::repeat_n(f64::INFINITY, mi));
        let x0: Vec<f64> = lower.clone();

        // Decide per row whether an artificial is needed and the row sign.
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m);
        let mut basic_col: Vec<Option<usize>> = Vec::with_capacity(m);
        let mut needs_art = Vec::with_capacity(m);
        for r in &lp.equalities {
            let mut row = r.coeffs.clone();
            row.extend(std::iter::repeat_n(0.0, mi));
            rows.push((row, r.rhs));
            basic_col.push(None);
            needs_art.push(true);
        }
        for (k, r) in lp.inequalities.iter().enumerate() {
            let mut row = r.coeffs.clone();
            row.extend(std::iter::repeat_n(0.0, mi));
            row[n + k] = -1.0;
            let activity = super::dot(&r.coeffs, &x0[..n]);
            if activity >= r.rhs {
                // surplus starts basic at activity - rhs; flip the row so its
                // coefficient is +1
                for a in row.iter_mut() {
                    *a = -*a;
                }
                rows.push((row, -r.rhs));
                basic_col.push(Some(n + k));
                needs_art.push(false);
            } else {
                rows.push((row, r.rhs));
                basic_col.push(None);
                needs_art.push(true);
            }
        }

        let n_art = needs_art.iter().filter(|&&b| b).count();
        let ncols = n + mi + n_art;
        lower.extend(std::iter::repeat_n(0.0, n_art));
        upper.extend(std::iter::repeat_n(f64::INFINITY, n_art));
        let mut x = lower.clone();

        let mut t = vec![0.0; m * ncols];
        let mut b0 = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut next_art = n + mi;
        for (i, (mut row, mut rhs)) in rows.into_iter().enumerate() {
            let activity = super::dot(&row[..n + mi], &x[..n + mi]);
            if needs_art[i] {
                if rhs - activity < 0.0 {
                    for a in row.iter_mut() {
                        *a = -*a;
                    }
                    rhs = -rhs;
                }
                row.resize(ncols, 0.0);
                row[next_art] = 1.0;
                basis[i] = next_art;
                x[next_art] = rhs - super::dot(&row[..n + mi], &x[..n + mi]);
                next_art += 1;
            } else {
                row.resize(ncols, 0.0);
                let col = basic_col[i].expect("surplus column");
                basis[i] = col;
                x[col] = 0.0;
                x[col] = rhs - super::dot(&row[..n + mi], &x[..n + mi]);
            }
            t[i * ncols..(i + 1) * ncols].copy_from_slice(&row);
            b0[i] = rhs;
        }
        let mut is_basic = vec![false; ncols];
        for &j in &basis {
            is_basic[j] = true;
        }
        let max_iterations = 50 * (m + ncols) + 1000;
        Self {
            m,
            ncols,
            a0: t.clone(),
            t,
            b0,
            basis,
            is_basic,
            at_upper: vec![false; ncols],
            x,
            lower,
            upper,
            iterations: 0,
            max_iterations,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.ncols..(i + 1) * self.ncols]
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(self.row(i)) {
                    *dj -= cb * a;
                }
            }
        }
        for &j in &self.basis {
            d[j] = 0.0;
        }
        d
    }

    fn run(&mut self, cost: &[f64], opts: &SolverOptions) -> Result<PhaseEnd, LpError> {
        let mut d = self.reduced_costs(cost);
        let mut bland = false;
        let mut stall = 0usize;
        let stall_limit = 2 * self.ncols;
        // Refresh reduced costs periodically to bound drift.
        let refresh = 50;
        let mut since_refresh = 0;

        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::NumericalFailure(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }
            if since_refresh >= refresh {
                d = self.reduced_costs(cost);
                since_refresh = 0;
            }
            let Some((j, sigma)) = self.price(&d, opts.opt_tol, bland) else {
                return Ok(PhaseEnd::Optimal);
            };
            let (theta, leave) = self.ratio_test(j, sigma, bland);
            if theta.is_infinite() {
                return Ok(PhaseEnd::Unbounded);
            }
            self.iterations += 1;
            since_refresh += 1;

            if theta * d[j].abs() > 1e-12 {
                stall = 0;
            } else {
                stall += 1;
                if stall > stall_limit {
                    bland = true;
                }
            }

            // Move along the edge.
            if theta > 0.0 {
                let ncols = self.ncols;
                for i in 0..self.m {
                    let a = self.t[i * ncols + j];
                    if a != 0.0 {
                        self.x[self.basis[i]] -= sigma * a * theta;
                    }
                }
                self.x[j] += sigma * theta;
            }

            match leave {
                None => {
                    // bound flip
                    self.at_upper[j] = sigma > 0.0;
                    self.x[j] = if self.at_upper[j] { self.upper[j] } else { self.lower[j] };
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.x[out] = if to_upper { self.upper[out] } else { self.lower[out] };
                    self.is_basic[out] = false;
                    self.at_upper[out] = to_upper;
                    self.is_basic[j] = true;
                    self.at_upper[j] = false;
                    self.basis[r] = j;
                    self.pivot(r, j, &mut d);
                }
            }
        }
    }

    /// Entering column and its direction (+1 increase, -1 decrease).
    fn price(&self, d: &[f64], tol: f64, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            if self.is_basic[j] || self.lower[j] == self.upper[j] {
                continue;
            }
            let dj = d[j];
            let (score, sigma) = if !self.at_upper[j] && dj < -tol {
                (-dj, 1.0)
            } else if self.at_upper[j] && dj > tol {
                (dj, -1.0)
            } else {
                continue;
            };
            if bland {
                return Some((j, sigma));
            }
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((j, score, sigma));
            }
        }
        best.map(|(j, _, sigma)| (j, sigma))
    }

    /// Step length and the leaving row (with the bound it leaves at), or
    /// `None` for a bound flip of the entering variable.
    fn ratio_test(&self, j: usize, sigma: f64, bland: bool) -> (f64, Option<(usize, bool)>) {
        let mut theta = self.upper[j] - self.lower[j];
        let mut leave: Option<(usize, bool)> = None;
        let mut best_alpha = 0.0;
        for i in 0..self.m {
            let alpha = sigma * self.t[i * self.ncols + j];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let (ti, to_upper) = if alpha > 0.0 {
                ((self.x[b] - self.lower[b]) / alpha, false)
            } else {
                if self.upper[b].is_infinite() {
                    continue;
                }
                ((self.upper[b] - self.x[b]) / -alpha, true)
            };
            let ti = ti.max(0.0);
            let eps = if theta.is_finite() { 1e-12 * (1.0 + theta) } else { 0.0 };
            let take = if ti < theta - eps {
                true
            } else if ti <= theta + eps {
                // tie: prefer the larger pivot, or the lowest index under Bland
                match leave {
                    None => false,
                    Some((r, _)) if bland => b < self.basis[r],
                    Some(_) => alpha.abs() > best_alpha,
                }
            } else {
                false
            };
            if take {
                theta = ti;
                leave = Some((i, to_upper));
                best_alpha = alpha.abs();
            }
        }
        (theta, leave)
    }

    fn pivot(&mut self, r: usize, j: usize, d: &mut [f64]) {
        let ncols = self.ncols;
        let piv = self.t[r * ncols + j];
        {
            let row = &mut self.t[r * ncols..(r + 1) * ncols];
            let inv = 1.0 / piv;
            for a in row.iter_mut() {
                *a *= inv;
            }
            row[j] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * ncols);
        let (prow, after) = rest.split_at_mut(ncols);
        for row in before.chunks_exact_mut(ncols).chain(after.chunks_exact_mut(ncols)) {
            let f = row[j];
            if f != 0.0 {
                for (a, p) in row.iter_mut().zip(prow.iter()) {
                    *a -= f * p;
                }
                row[j] = 0.0;
            }
        }
        let f = d[j];
        if f != 0.0 {
            for (dk, p) in d.iter_mut().zip(prow.iter()) {
                *dk -= f * p;
            }
            d[j] = 0.0;
        }
    }

    /// Recomputes basic values from the original rows with an LU solve.
    fn refine(&mut self) -> Result<(), LpError> {
        let (m, ncols) = (self.m, self.ncols);
        let mut rhs = DVector::from_column_slice(&self.b0);
        for k in 0..ncols {
            if self.is_basic[k] || self.x[k] == 0.0 {
                continue;
            }
            for i in 0..m {
                rhs[i] -= self.a0[i * ncols + k] * self.x[k];
            }
        }
        let bmat = DMatrix::from_fn(m, m, |i, c| self.a0[i * ncols + self.basis[c]]);
        let xb = bmat
            .lu()
            .solve(&rhs)
            .ok_or_else(|| LpError::NumericalFailure("singular basis".into()))?;
        for (c, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[c];
        }
        Ok(())
    }
}
