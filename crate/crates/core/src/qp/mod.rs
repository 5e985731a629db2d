//! Convex QP solvers: a primal-dual interior-point method used as the reference
//! solver, an operator-splitting ADMM solver for repeated warm-started solves, and
//! an irreducible-infeasible-set search.

mod admm;
mod iis;
mod ipm;
mod scaling;

pub use admm::{AdmmReport, AdmmSettings, AdmmSolver, AdmmStatus};
pub use iis::irreducible_infeasible_set;
pub use ipm::{solve_ipm, IpmFailure, IpmSettings};

use crate::linalg::{dot, SparseMatrix};

/// minimize ½xᵀPx + qᵀx  s.t.  A x = b,  C x ≤ d,  lb ≤ x ≤ ub.
///
/// `p` is stored with both triangles. Bounds may be infinite.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: SparseMatrix,
    pub q: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub c: SparseMatrix,
    pub d: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of `A x = b`.
    pub y_eq: Vec<f64>,
    /// Multipliers of `C x ≤ d`, non-negative.
    pub y_in: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// LP / QP with no rows, only bounds.
    pub fn unconstrained(p: SparseMatrix, q: Vec<f64>, lb: Vec<f64>, ub: Vec<f64>) -> Self {
        let n = q.len();
        QpProblem {
            p,
            q,
            a: SparseMatrix::zeros(0, n),
            b: Vec::new(),
            c: SparseMatrix::zeros(0, n),
            d: Vec::new(),
            lb,
            ub,
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.p.mul_vec(x)) + dot(&self.q, x)
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v = 0.0f64;
        for (r, bi) in self.a.mul_vec(x).iter().zip(&self.b) {
            v = v.max((r - bi).abs());
        }
        for (r, di) in self.c.mul_vec(x).iter().zip(&self.d) {
            v = v.max(r - di);
        }
        for i in 0..x.len() {
            v = v.max(self.lb[i] - x[i]).max(x[i] - self.ub[i]);
        }
        v
    }

    pub(crate) fn check_dims(&self) {
        let n = self.n();
        assert_eq!(self.p.nrows(), n);
        assert_eq!(self.p.ncols(), n);
        assert_eq!(self.a.ncols(), n);
        assert_eq!(self.c.ncols(), n);
        assert_eq!(self.a.nrows(), self.b.len());
        assert_eq!(self.c.nrows(), self.d.len());
        assert_eq!(self.lb.len(), n);
        assert_eq!(self.ub.len(), n);
    }
}
