//! Infeasibility analysis: elastic phase-1 LP, dual support, deletion filter.

use super::ipm::{solve_ipm, IpmSettings};
use super::QpProblem;
use crate::linalg::{norm_inf, SparseMatrix};

/// Outcome of a phase-1 solve over a subset of rows.
struct Phase1 {
    violation: f64,
    /// Rows carrying a nonzero elastic dual, same encoding as the input subset.
    support: Vec<(bool, usize)>,
}

fn phase1(prob: &QpProblem, rows: &[(bool, usize)]) -> Option<Phase1> {
    let n = prob.n();
    let eq: Vec<usize> = rows.iter().filter(|r| r.0).map(|r| r.1).collect();
    let ineq: Vec<usize> = rows.iter().filter(|r| !r.0).map(|r| r.1).collect();
    let ne = eq.len();
    let ni = ineq.len();
    let nv = n + 2 * ne + ni;
    let mut at = Vec::new();
    let mut b = Vec::with_capacity(ne);
    for (k, &r) in eq.iter().enumerate() {
        at.extend(prob.a.row(r).map(|(c, v)| (k, c, v)));
        at.push((k, n + 2 * k, 1.0));
        at.push((k, n + 2 * k + 1, -1.0));
        b.push(prob.b[r]);
    }
    let mut ct = Vec::new();
    let mut d = Vec::with_capacity(ni);
    for (k, &r) in ineq.iter().enumerate() {
        ct.extend(prob.c.row(r).map(|(c, v)| (k, c, v)));
        ct.push((k, n + 2 * ne + k, -1.0));
        d.push(prob.d[r]);
    }
    let mut q = vec![0.0; nv];
    q[n..].iter_mut().for_each(|v| *v = 1.0);
    let mut lb = prob.lb.clone();
    lb.resize(lb.len() + 2 * ne + ni, 0.0);
    let mut ub = prob.ub.clone();
    ub.resize(ub.len() + 2 * ne + ni, f64::INFINITY);
    let lp = QpProblem {
        p: SparseMatrix::zeros(nv, nv),
        q,
        a: SparseMatrix::from_triplets(ne, nv, &at),
        b,
        c: SparseMatrix::from_triplets(ni, nv, &ct),
        d,
        lb,
        ub,
    };
    let settings = IpmSettings {
        tol: 1e-10,
        diagnose: false,
        ..IpmSettings::default()
    };
    let sol = solve_ipm(&lp, &settings).ok()?;
    let mut support = Vec::new();
    for (k, &r) in eq.iter().enumerate() {
        if sol.y_eq[k].abs() > 1e-6 {
            support.push((true, r));
        }
    }
    for (k, &r) in ineq.iter().enumerate() {
        if sol.y_in[k] > 1e-6 {
            support.push((false, r));
        }
    }
    Some(Phase1 {
        violation: sol.objective,
        support,
    })
}

fn threshold(prob: &QpProblem) -> f64 {
    1e-7 * (1.0 + norm_inf(&prob.b).max(norm_inf(&prob.d)))
}

/// Returns an irreducible infeasible row set if the rows are inconsistent with
/// the variable bounds, `None` if the problem is feasible or undecidable.
pub(crate) fn diagnose(prob: &QpProblem) -> Option<Vec<(bool, usize)>> {
    irreducible_infeasible_set(prob)
}

/// Irreducible infeasible set of rows (`true` = equality row), bounds always kept.
pub fn irreducible_infeasible_set(prob: &QpProblem) -> Option<Vec<(bool, usize)>> {
    let tol = threshold(prob);
    let all: Vec<(bool, usize)> = (0..prob.a.nrows())
        .map(|r| (true, r))
        .chain((0..prob.c.nrows()).map(|r| (false, r)))
        .collect();
    let first = phase1(prob, &all)?;
    if first.violation <= tol {
        return None;
    }
    let mut set = first.support;
    // The dual support alone must already be infeasible; otherwise fall back to all rows.
    match phase1(prob, &set) {
        Some(p) if p.violation > tol => {}
        _ => set = all,
    }
    let mut k = 0;
    while k < set.len() {
        let mut trial = set.clone();
        trial.remove(k);
        match phase1(prob, &trial) {
            Some(p) if p.violation > tol => set = trial,
            _ => k += 1,
        }
    }
    set.sort();
    Some(set)
}
