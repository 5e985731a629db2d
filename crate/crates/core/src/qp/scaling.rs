//! Ruiz equilibration of the KKT matrix [P Aᵀ Cᵀ; A 0 0; C 0 0] plus a cost scale.

use super::QpProblem;
use crate::linalg::{norm_inf, SparseMatrix};

#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    /// x = col ∘ x̄
    pub col: Vec<f64>,
    pub row_eq: Vec<f64>,
    pub row_in: Vec<f64>,
    pub cost: f64,
}

impl Scaling {
    pub fn identity(prob: &QpProblem) -> Self {
        Scaling {
            col: vec![1.0; prob.n()],
            row_eq: vec![1.0; prob.b.len()],
            row_in: vec![1.0; prob.d.len()],
            cost: 1.0,
        }
    }

    pub fn unscale_x(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().zip(&self.col).map(|(x, c)| x * c).collect()
    }

    pub fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.col).map(|(x, c)| x / c).collect()
    }

    pub fn unscale_y_eq(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().zip(&self.row_eq).map(|(y, e)| y * e / self.cost).collect()
    }

    pub fn unscale_y_in(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().zip(&self.row_in).map(|(y, e)| y * e / self.cost).collect()
    }

    /// Scales a linear cost term given in original units.
    pub fn scale_q(&self, q: &[f64]) -> Vec<f64> {
        q.iter().zip(&self.col).map(|(q, c)| q * c * self.cost).collect()
    }
}

fn scale_matrix(m: &SparseMatrix, row: &[f64], col: &[f64]) -> SparseMatrix {
    let t: Vec<_> = m.triplets().map(|(r, c, v)| (r, c, v * row[r] * col[c])).collect();
    SparseMatrix::from_triplets(m.nrows(), m.ncols(), &t)
}

fn clamp_scale(v: f64) -> f64 {
    if v < 1e-8 {
        1.0
    } else {
        (1.0 / v.sqrt()).clamp(1e-4, 1e4)
    }
}

/// Returns the scaled problem and the scaling. `iters = 0` gives the identity.
pub(crate) fn equilibrate(prob: &QpProblem, iters: usize) -> (QpProblem, Scaling) {
    let n = prob.n();
    let mut sc = Scaling::identity(prob);
    let mut p = prob.p.clone();
    let mut a = prob.a.clone();
    let mut c = prob.c.clone();
    for _ in 0..iters {
        let mut colmax = vec![0.0f64; n];
        for m in [&p, &a, &c] {
            for (_, j, v) in m.triplets() {
                colmax[j] = colmax[j].max(v.abs());
            }
        }
        let dc: Vec<f64> = colmax.into_iter().map(clamp_scale).collect();
        let da: Vec<f64> = (0..a.nrows()).map(|r| clamp_scale(a.row_abs_max(r))).collect();
        let dd: Vec<f64> = (0..c.nrows()).map(|r| clamp_scale(c.row_abs_max(r))).collect();
        p = scale_matrix(&p, &dc, &dc);
        a = scale_matrix(&a, &da, &dc);
        c = scale_matrix(&c, &dd, &dc);
        for j in 0..n {
            sc.col[j] *= dc[j];
        }
        for (e, f) in sc.row_eq.iter_mut().zip(&da) {
            *e *= f;
        }
        for (e, f) in sc.row_in.iter_mut().zip(&dd) {
            *e *= f;
        }
    }
    let qs: Vec<f64> = prob.q.iter().zip(&sc.col).map(|(q, c)| q * c).collect();
    if iters > 0 {
        let mut pmean = 0.0;
        if n > 0 {
            let mut colmax = vec![0.0f64; n];
            for (_, j, v) in p.triplets() {
                colmax[j] = colmax[j].max(v.abs());
            }
            pmean = colmax.iter().sum::<f64>() / n as f64;
        }
        let s = pmean.max(norm_inf(&qs));
        sc.cost = if s < 1e-8 { 1.0 } else { (1.0 / s).clamp(1e-4, 1e4) };
    }
    let cost = sc.cost;
    let t: Vec<_> = p.triplets().map(|(r, cc, v)| (r, cc, v * cost)).collect();
    let scaled = QpProblem {
        p: SparseMatrix::from_triplets(n, n, &t),
        q: qs.iter().map(|v| v * cost).collect(),
        b: prob.b.iter().zip(&sc.row_eq).map(|(b, e)| b * e).collect(),
        d: prob.d.iter().zip(&sc.row_in).map(|(d, e)| d * e).collect(),
        lb: prob.lb.iter().zip(&sc.col).map(|(l, c)| l / c).collect(),
        ub: prob.ub.iter().zip(&sc.col).map(|(u, c)| u / c).collect(),
        a,
        c,
    };
    (scaled, sc)
}
