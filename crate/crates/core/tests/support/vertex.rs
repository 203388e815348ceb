//! Brute-force LP oracle: enumerate every basic solution of a small bounded
//! program and keep the cheapest feasible one.

use pdmpc_core::linprog::StandardFormLp;

#[derive(Clone)]
struct Plane {
    a: Vec<f64>,
    b: f64,
}

/// Minimum objective over all vertices, or `None` when no vertex is feasible.
/// Requires every variable to have a finite upper bound.
pub fn enumerate_min(lp: &StandardFormLp) -> Option<(f64, Vec<f64>)> {
    let n = lp.num_vars();
    let unit = |j: usize| {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        a
    };
    let eqs: Vec<Plane> = lp
        .equalities
        .iter()
        .map(|c| Plane { a: c.coeffs.clone(), b: c.rhs })
        .collect();
    let mut candidates: Vec<Plane> = lp
        .inequalities
        .iter()
        .map(|c| Plane { a: c.coeffs.clone(), b: c.rhs })
        .collect();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        assert!(hi.is_finite(), "oracle needs bounded variables");
        candidates.push(Plane { a: unit(j), b: lo });
        candidates.push(Plane { a: unit(j), b: hi });
    }
    if eqs.len() > n {
        return None;
    }
    let need = n - eqs.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut subset: Vec<usize> = (0..need).collect();
    loop {
        if need <= candidates.len() {
            let mut planes = eqs.clone();
            planes.extend(subset.iter().map(|&i| candidates[i].clone()));
            if let Some(x) = solve_square(&planes) {
                if feasible(lp, &x) {
                    let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                    if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                        best = Some((obj, x));
                    }
                }
            }
        } else {
            break;
        }
        if !next_combination(&mut subset, candidates.len()) {
            break;
        }
    }
    best
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < total - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn solve_square(planes: &[Plane]) -> Option<Vec<f64>> {
    let n = planes.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let mut m: Vec<Vec<f64>> = planes
        .iter()
        .map(|p| {
            let mut r = p.a.clone();
            r.push(p.b);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

fn feasible(lp: &StandardFormLp, x: &[f64]) -> bool {
    let tol = 1e-9;
    let dot = |a: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    lp.equalities.iter().all(|c| (dot(&c.coeffs) - c.rhs).abs() <= tol * (1.0 + c.rhs.abs()))
        && lp.inequalities.iter().all(|c| dot(&c.coeffs) >= c.rhs - tol * (1.0 + c.rhs.abs()))
        && x.iter().zip(&lp.bounds).all(|(&v, &(lo, hi))| v >= lo - tol && v <= hi + tol)
}
