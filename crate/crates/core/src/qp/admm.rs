//! Operator-splitting QP solver for repeated solves with a fixed quadratic term.
//!
//! The constraint set is written as `l ≤ M x ≤ u` with `M = [A; C; E]`, where `E`
//! selects bounded variables. The reduced matrix `P + σI + Mᵀ diag(ρ) M` is
//! factored once and reused until ρ is adapted; only the linear term changes
//! between solves, and the iterates carry over as a warm start.

use super::scaling::{equilibrate, Scaling};
use super::{QpProblem, QpSolution};
use crate::linalg::{norm_inf, EnvelopeLdl, SparseMatrix};

#[derive(Debug, Clone)]
pub struct AdmmSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub check_every: usize,
    pub adaptive_rho: bool,
    pub ruiz_iters: usize,
    pub polish: bool,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            max_iter: 20_000,
            check_every: 5,
            adaptive_rho: true,
            ruiz_iters: 10,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmmStatus {
    Solved,
    Polished,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct AdmmReport {
    pub status: AdmmStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct AdmmSolver {
    settings: AdmmSettings,
    scaling: Scaling,
    n: usize,
    me: usize,
    mi: usize,
    p: SparseMatrix,
    q: Vec<f64>,
    m: SparseMatrix,
    mt: SparseMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    /// Factor converting a scaled row residual to original units.
    row_unscale: Vec<f64>,
    rho_base: f64,
    rho: Vec<f64>,
    ldl: EnvelopeLdl,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    factorizations: usize,
}

impl AdmmSolver {
    pub fn new(prob: &QpProblem, settings: AdmmSettings) -> Self {
        prob.check_dims();
        let (sp, scaling) = equilibrate(prob, settings.ruiz_iters);
        let n = sp.n();
        let me = sp.a.nrows();
        let mi = sp.c.nrows();
        let bounded: Vec<usize> = (0..n)
            .filter(|&i| sp.lb[i].is_finite() || sp.ub[i].is_finite())
            .collect();
        let e_rows: Vec<Vec<(usize, f64)>> = bounded.iter().map(|&i| vec![(i, 1.0)]).collect();
        let e = SparseMatrix::from_rows(n, &e_rows);
        let m = SparseMatrix::vstack(&[&sp.a, &sp.c, &e]);
        let mut l = sp.b.clone();
        let mut u = sp.b.clone();
        l.resize(l.len() + mi, f64::NEG_INFINITY);
        u.extend(sp.d.iter().copied());
        l.extend(bounded.iter().map(|&i| sp.lb[i]));
        u.extend(bounded.iter().map(|&i| sp.ub[i]));
        let mut row_unscale: Vec<f64> = scaling.row_eq.iter().map(|e| 1.0 / e).collect();
        row_unscale.extend(scaling.row_in.iter().map(|e| 1.0 / e));
        row_unscale.extend(bounded.iter().map(|&i| scaling.col[i]));
        let mt = m.transpose();
        let rows = m.nrows();
        let mut pattern: Vec<_> = sp.p.triplets().collect();
        m.gram_triplets(&vec![1.0; rows], &mut pattern);
        for i in 0..n {
            pattern.push((i, i, 1.0));
        }
        let ldl = EnvelopeLdl::analyze(&SparseMatrix::from_triplets(n, n, &pattern), &vec![1.0; n]);
        let x = vec![0.0; n];
        let z = vec![0.0; rows];
        let y = vec![0.0; rows];
        let mut solver = AdmmSolver {
            rho_base: settings.rho,
            settings,
            scaling,
            n,
            me,
            mi,
            p: sp.p,
            q: sp.q,
            m,
            mt,
            l,
            u,
            row_unscale,
            rho: Vec::new(),
            ldl,
            x,
            z,
            y,
            factorizations: 0,
        };
        solver.set_rho(solver.rho_base);
        solver
    }

    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    fn set_rho(&mut self, rho: f64) {
        self.rho_base = rho.clamp(RHO_MIN, RHO_MAX);
        let rows = self.m.nrows();
        self.rho = (0..rows)
            .map(|r| {
                if self.l[r] == self.u[r] {
                    RHO_EQ_FACTOR * self.rho_base
                } else if self.l[r].is_infinite() && self.u[r].is_infinite() {
                    RHO_MIN
                } else {
                    self.rho_base
                }
            })
            .collect();
        let mut t: Vec<_> = self.p.triplets().collect();
        self.m.gram_triplets(&self.rho, &mut t);
        for i in 0..self.n {
            t.push((i, i, self.settings.sigma));
        }
        let k = SparseMatrix::from_triplets(self.n, self.n, &t);
        self.ldl.factor(&k, 0.0);
        self.factorizations += 1;
    }

    /// Changes the stopping tolerance for subsequent solves.
    pub fn set_tolerance(&mut self, eps_abs: f64, eps_rel: f64) {
        self.settings.eps_abs = eps_abs;
        self.settings.eps_rel = eps_rel;
    }

    /// Replaces the linear cost (original units).
    pub fn set_q(&mut self, q: &[f64]) {
        assert_eq!(q.len(), self.n);
        self.q = self.scaling.scale_q(q);
    }

    /// Sets the primal warm start (original units).
    pub fn warm_start_x(&mut self, x: &[f64]) {
        self.x = self.scaling.scale_x(x);
        self.z = self.m.mul_vec(&self.x);
        for r in 0..self.z.len() {
            self.z[r] = self.z[r].clamp(self.l[r], self.u[r]);
        }
    }

    pub fn solve(&mut self) -> (QpSolution, AdmmReport) {
        let s = self.settings.clone();
        let rows = self.m.nrows();
        let n = self.n;
        let mut rhs = vec![0.0; n];
        let mut tmp = vec![0.0; rows];
        let mut zt = vec![0.0; rows];
        let mut report = AdmmReport {
            status: AdmmStatus::MaxIterations,
            iterations: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
        };
        // Relative residual at which the next active-set polish is tried.
        let mut polish_at = 1e-3;
        let mut polished = false;
        for iter in 1..=s.max_iter {
            for r in 0..rows {
                tmp[r] = self.rho[r] * self.z[r] - self.y[r];
            }
            for i in 0..n {
                rhs[i] = s.sigma * self.x[i] - self.q[i];
            }
            self.m.tmul_vec_add(&tmp, &mut rhs);
            self.ldl.solve_in_place(&mut rhs);
            let xt = &rhs;
            self.m.mul_vec_into(xt, &mut zt);
            for i in 0..n {
                self.x[i] = s.alpha * xt[i] + (1.0 - s.alpha) * self.x[i];
            }
            for r in 0..rows {
                let zr = s.alpha * zt[r] + (1.0 - s.alpha) * self.z[r];
                let zn = (zr + self.y[r] / self.rho[r]).clamp(self.l[r], self.u[r]);
                self.y[r] += self.rho[r] * (zr - zn);
                self.z[r] = zn;
            }
            if iter % s.check_every == 0 || iter == s.max_iter {
                let (rp, rd, pn, dn) = self.residuals();
                report.iterations = iter;
                report.primal_residual = rp;
                report.dual_residual = rd;
                let ep = s.eps_abs + s.eps_rel * pn;
                let ed = s.eps_abs + s.eps_rel * dn;
                if rp <= ep && rd <= ed {
                    report.status = AdmmStatus::Solved;
                    break;
                }
                if s.polish && rp <= polish_at * (1.0 + pn) && rd <= polish_at * (1.0 + dn) {
                    if self.try_polish() {
                        polished = true;
                        break;
                    }
                    polish_at *= 0.1;
                }
                if s.adaptive_rho && iter % (s.check_every * 10) == 0 {
                    let ratio = ((rp / pn.max(1e-12)) / (rd / dn.max(1e-12)).max(1e-30)).sqrt();
                    let new_rho = self.rho_base * ratio;
                    if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                        self.rescale_y_for(new_rho);
                    }
                }
            }
        }
        if !polished && s.polish && report.status != AdmmStatus::MaxIterations {
            polished = self.try_polish();
        }
        if polished {
            let (rp, rd, _, _) = self.residuals();
            report.primal_residual = rp;
            report.dual_residual = rd;
            report.status = AdmmStatus::Polished;
        }
        (self.solution(), report)
    }

    /// Replaces the iterate by the active-set solution when it is consistent.
    fn try_polish(&mut self) -> bool {
        match self.polish() {
            Some((x, y)) => {
                self.x = x;
                self.y = y;
                self.z = self.m.mul_vec(&self.x);
                for r in 0..self.z.len() {
                    self.z[r] = self.z[r].clamp(self.l[r], self.u[r]);
                }
                true
            }
            None => false,
        }
    }

    /// Changing ρ keeps y and z; only the factorization changes.
    fn rescale_y_for(&mut self, rho: f64) {
        self.set_rho(rho);
    }

    /// Residuals in original units: (primal, dual, primal scale, dual scale).
    fn residuals(&self) -> (f64, f64, f64, f64) {
        let mx = self.m.mul_vec(&self.x);
        let mut rp = 0.0f64;
        let mut pn = 0.0f64;
        for r in 0..mx.len() {
            let k = self.row_unscale[r];
            rp = rp.max(((mx[r] - self.z[r]) * k).abs());
            pn = pn.max((mx[r] * k).abs()).max((self.z[r] * k).abs());
        }
        let px = self.p.mul_vec(&self.x);
        let mty = self.mt.mul_vec(&self.y);
        let c = self.scaling.cost;
        let mut rd = 0.0f64;
        let mut dn = 0.0f64;
        for i in 0..self.n {
            let k = 1.0 / (self.scaling.col[i] * c);
            rd = rd.max(((px[i] + self.q[i] + mty[i]) * k).abs());
            dn = dn
                .max((px[i] * k).abs())
                .max((mty[i] * k).abs())
                .max((self.q[i] * k).abs());
        }
        (rp, rd, pn, dn)
    }

    /// Solves the equality-constrained QP on the active set guessed from
    /// (z, y). Returns a point only when it satisfies the KKT conditions.
    fn polish(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let side: Vec<i8> = (0..self.m.nrows())
            .map(|r| {
                if self.l[r] == self.u[r] || self.z[r] - self.l[r] < -self.y[r] {
                    -1
                } else if self.u[r] - self.z[r] < self.y[r] {
                    1
                } else {
                    0
                }
            })
            .collect();
        let (x, y) = self.solve_active(&side)?;
        let mx = self.m.mul_vec(&x);
        self.is_kkt(&y, &mx).then_some((x, y))
    }

    fn solve_active(&self, side: &[i8]) -> Option<(Vec<f64>, Vec<f64>)> {
        let rows = self.m.nrows();
        let n = self.n;
        let mut active = Vec::new();
        let mut target = Vec::new();
        for r in 0..rows {
            match side[r] {
                -1 => {
                    active.push(r);
                    target.push(self.l[r]);
                }
                1 => {
                    active.push(r);
                    target.push(self.u[r]);
                }
                _ => {}
            }
        }
        let na = active.len();
        let dim = n + na;
        let mut exact: Vec<_> = self.p.triplets().collect();
        for (k, &r) in active.iter().enumerate() {
            for (c, v) in self.m.row(r) {
                exact.push((n + k, c, v));
                exact.push((c, n + k, v));
            }
        }
        let delta = 1e-9;
        let mut reg = exact.clone();
        for i in 0..dim {
            reg.push((i, i, if i < n { delta } else { -delta }));
            exact.push((i, i, 0.0));
        }
        let kreg = SparseMatrix::from_triplets(dim, dim, &reg);
        let kex = SparseMatrix::from_triplets(dim, dim, &exact);
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let mut ldl = EnvelopeLdl::analyze(&kreg, &signs);
        ldl.factor(&kreg, 1e-14);
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            rhs[i] = -self.q[i];
        }
        rhs[n..].copy_from_slice(&target);
        let mut sol = ldl.solve(&rhs);
        for _ in 0..20 {
            let r: Vec<f64> = kex.mul_vec(&sol).iter().zip(&rhs).map(|(a, b)| b - a).collect();
            if norm_inf(&r) < 1e-13 * (1.0 + norm_inf(&rhs)) {
                break;
            }
            let d = ldl.solve(&r);
            for (s, di) in sol.iter_mut().zip(&d) {
                *s += di;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x = sol[..n].to_vec();
        let mut y = vec![0.0; rows];
        for (k, &r) in active.iter().enumerate() {
            y[r] = sol[n + k];
        }
        Some((x, y))
    }

    /// Primal feasibility and dual sign consistency, in original units.
    fn is_kkt(&self, y: &[f64], mx: &[f64]) -> bool {
        let tol = 1e-9;
        for r in 0..self.m.nrows() {
            let k = self.row_unscale[r];
            if (mx[r] - self.u[r]) * k > tol || (self.l[r] - mx[r]) * k > tol {
                return false;
            }
            if self.l[r] != self.u[r] {
                let ys = y[r] / self.row_unscale[r];
                let at_lower = self.l[r].is_finite() && (mx[r] - self.l[r]).abs() * k <= tol;
                let at_upper = self.u[r].is_finite() && (self.u[r] - mx[r]).abs() * k <= tol;
                if (ys < -tol && !at_lower) || (ys > tol && !at_upper) {
                    return false;
                }
            }
        }
        true
    }

    fn solution(&self) -> QpSolution {
        let x = self.scaling.unscale_x(&self.x);
        let y_eq = self.scaling.unscale_y_eq(&self.y[..self.me]);
        let y_in = self.scaling.unscale_y_in(&self.y[self.me..self.me + self.mi]);
        let px = self.p.mul_vec(&self.x);
        let obj = (0..self.n)
            .map(|i| 0.5 * self.x[i] * px[i] + self.q[i] * self.x[i])
            .sum::<f64>()
            / self.scaling.cost;
        QpSolution {
            x,
            y_eq,
            y_in,
            objective: obj,
            iterations: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{solve_ipm, IpmSettings};
    use super::*;

    fn random_qp(seed: u64, n: usize, me: usize, mi: usize) -> QpProblem {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pt = Vec::new();
        for i in 0..n {
            pt.push((i, i, rng.gen_range(0.1..2.0)));
        }
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let a: Vec<Vec<(usize, f64)>> = (0..me)
            .map(|_| {
                (0..3)
                    .map(|_| (rng.gen_range(0..n), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let c: Vec<Vec<(usize, f64)>> = (0..mi)
            .map(|_| {
                (0..3)
                    .map(|_| (rng.gen_range(0..n), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let a = SparseMatrix::from_rows(n, &a);
        let c = SparseMatrix::from_rows(n, &c);
        let b = a.mul_vec(&x0);
        let d: Vec<f64> = c.mul_vec(&x0).iter().map(|v| v + rng.gen_range(0.0..0.2)).collect();
        QpProblem {
            p: SparseMatrix::from_triplets(n, n, &pt),
            q: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            a,
            b,
            c,
            d,
            lb: vec![-1.0; n],
            ub: vec![1.0; n],
        }
    }

    #[test]
    fn matches_interior_point_on_random_qps() {
        for seed in 0..5 {
            let prob = random_qp(seed, 30, 5, 20);
            let reference = solve_ipm(&prob, &IpmSettings::default()).unwrap();
            let mut admm = AdmmSolver::new(&prob, AdmmSettings::default());
            let (sol, rep) = admm.solve();
            assert_ne!(rep.status, AdmmStatus::MaxIterations, "seed {seed}");
            let err = sol
                .x
                .iter()
                .zip(&reference.x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn warm_start_reuses_factorization() {
        let prob = random_qp(11, 20, 3, 10);
        let mut admm = AdmmSolver::new(&prob, AdmmSettings::default());
        let (_, first) = admm.solve();
        let f0 = admm.factorizations();
        let mut q = prob.q.clone();
        q[0] += 1e-3;
        admm.set_q(&q);
        let (_, second) = admm.solve();
        assert!(
            second.iterations <= first.iterations,
            "{} > {}",
            second.iterations,
            first.iterations
        );
        assert!(admm.factorizations() - f0 <= 2);
    }

    #[test]
    fn box_projection() {
        // min ½x² − 5x with x in [−1, 2] → 2
        let p = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        let prob = QpProblem::unconstrained(p, vec![-5.0], vec![-1.0], vec![2.0]);
        let mut admm = AdmmSolver::new(&prob, AdmmSettings::default());
        let (sol, _) = admm.solve();
        assert!((sol.x[0] - 2.0).abs() < 1e-8, "{:?}", sol.x);
    }
}
