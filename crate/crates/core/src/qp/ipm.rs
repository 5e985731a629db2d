//! Mehrotra predictor-corrector interior-point method.
//!
//! Each Newton system is the quasidefinite augmented KKT matrix
//!
//! ```text
//! [ P + D_x + δ   Aᵀ    Cᵀ   ]
//! [ A             -δ    0    ]
//! [ C             0    -S/Z  ]
//! ```
//!
//! factored with the envelope LDLᵀ and polished by iterative refinement.

use super::scaling::equilibrate;
use super::{iis, QpProblem, QpSolution};
use crate::linalg::{dot, norm_inf, EnvelopeLdl, SparseMatrix};

#[derive(Debug, Clone)]
pub struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub ruiz_iters: usize,
    /// Run the infeasibility analysis on failure.
    pub diagnose: bool,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            tol: 1e-9,
            max_iter: 200,
            ruiz_iters: 10,
            diagnose: true,
        }
    }
}

/// Failure of the interior-point solve.
#[derive(Debug, Clone, PartialEq)]
pub enum IpmFailure {
    /// Irreducible infeasible set: (is_equality, row index).
    Infeasible(Vec<(bool, usize)>),
    IterationLimit {
        iterations: usize,
        residual: f64,
    },
}

const REG_PRIMAL: f64 = 1e-8;
const REG_DUAL: f64 = 1e-8;

struct Kkt {
    n: usize,
    me: usize,
    mi: usize,
    base: Vec<(usize, usize, f64)>,
    ldl: EnvelopeLdl,
    matrix: SparseMatrix,
}

impl Kkt {
    fn new(p: &SparseMatrix, a: &SparseMatrix, c: &SparseMatrix) -> Self {
        let n = p.nrows();
        let me = a.nrows();
        let mi = c.nrows();
        let mut base = Vec::new();
        base.extend(p.triplets());
        for (r, col, v) in a.triplets() {
            base.push((n + r, col, v));
            base.push((col, n + r, v));
        }
        for (r, col, v) in c.triplets() {
            base.push((n + me + r, col, v));
            base.push((col, n + me + r, v));
        }
        let dim = n + me + mi;
        let mut pattern = base.clone();
        for i in 0..dim {
            pattern.push((i, i, 1.0));
        }
        let matrix = SparseMatrix::from_triplets(dim, dim, &pattern);
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let ldl = EnvelopeLdl::analyze(&matrix, &signs);
        Kkt {
            n,
            me,
            mi,
            base,
            ldl,
            matrix,
        }
    }

    /// Factors with the given primal diagonal and inequality block diagonal (−S/Z).
    fn factor(&mut self, dx: &[f64], dz: &[f64]) {
        let mut t = self.base.clone();
        for (i, v) in dx.iter().enumerate() {
            t.push((i, i, v + REG_PRIMAL));
        }
        for r in 0..self.me {
            t.push((self.n + r, self.n + r, -REG_DUAL));
        }
        for (r, v) in dz.iter().enumerate() {
            t.push((self.n + self.me + r, self.n + self.me + r, -v - REG_DUAL));
        }
        let m = SparseMatrix::from_triplets(self.matrix.nrows(), self.matrix.ncols(), &t);
        self.ldl.factor(&m, 1e-14);
        let mut exact = self.base.clone();
        for (i, v) in dx.iter().enumerate() {
            exact.push((i, i, *v));
        }
        for (r, v) in dz.iter().enumerate() {
            exact.push((self.n + self.me + r, self.n + self.me + r, -v));
        }
        self.matrix = SparseMatrix::from_triplets(m.nrows(), m.ncols(), &exact);
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.ldl.solve(rhs);
        for _ in 0..10 {
            let r: Vec<f64> = self.matrix.mul_vec(&x).iter().zip(rhs).map(|(kx, b)| b - kx).collect();
            if norm_inf(&r) <= 1e-14 * (1.0 + norm_inf(rhs)) {
                break;
            }
            let dx = self.ldl.solve(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        x
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.me, self.mi)
    }
}

/// Converts fixed variables (lb == ub) into equality rows.
fn fix_equalities(prob: &QpProblem) -> QpProblem {
    let n = prob.n();
    let fixed: Vec<usize> = (0..n)
        .filter(|&i| prob.lb[i].is_finite() && (prob.ub[i] - prob.lb[i]).abs() <= 1e-12 * (1.0 + prob.lb[i].abs()))
        .collect();
    if fixed.is_empty() {
        return prob.clone();
    }
    let m = prob.a.nrows();
    let mut t: Vec<_> = prob.a.triplets().collect();
    let mut b = prob.b.clone();
    let mut lb = prob.lb.clone();
    let mut ub = prob.ub.clone();
    for (k, &i) in fixed.iter().enumerate() {
        t.push((m + k, i, 1.0));
        b.push(0.5 * (prob.lb[i] + prob.ub[i]));
        lb[i] = f64::NEG_INFINITY;
        ub[i] = f64::INFINITY;
    }
    QpProblem {
        a: SparseMatrix::from_triplets(m + fixed.len(), n, &t),
        b,
        lb,
        ub,
        ..prob.clone()
    }
}

/// Solves the QP to relative tolerance `settings.tol`.
pub fn solve_ipm(prob: &QpProblem, settings: &IpmSettings) -> Result<QpSolution, IpmFailure> {
    prob.check_dims();
    for i in 0..prob.n() {
        if prob.lb[i] > prob.ub[i] {
            return Err(IpmFailure::Infeasible(Vec::new()));
        }
    }
    let me_orig = prob.a.nrows();
    let work = fix_equalities(prob);
    let (sp, sc) = equilibrate(&work, settings.ruiz_iters);
    match interior_point(&sp, settings) {
        Ok(raw) => {
            let x = sc.unscale_x(&raw.x);
            let mut y_eq = sc.unscale_y_eq(&raw.y_eq);
            y_eq.truncate(me_orig);
            let y_in = sc.unscale_y_in(&raw.y_in);
            Ok(QpSolution {
                objective: prob.objective(&x),
                x,
                y_eq,
                y_in,
                iterations: raw.iterations,
            })
        }
        Err((iterations, residual)) => {
            if settings.diagnose {
                if let Some(rows) = iis::diagnose(prob) {
                    return Err(IpmFailure::Infeasible(rows));
                }
            }
            Err(IpmFailure::IterationLimit { iterations, residual })
        }
    }
}

/// Core iteration on an already scaled problem without fixed variables.
/// On failure returns (iterations, final residual).
pub(crate) fn interior_point(prob: &QpProblem, settings: &IpmSettings) -> Result<QpSolution, (usize, f64)> {
    let n = prob.n();
    let (p, a, c) = (&prob.p, &prob.a, &prob.c);
    let me = a.nrows();
    let mi = c.nrows();
    let lo: Vec<usize> = (0..n).filter(|&i| prob.lb[i].is_finite()).collect();
    let up: Vec<usize> = (0..n).filter(|&i| prob.ub[i].is_finite()).collect();
    let ml = lo.len();
    let mu_n = up.len();
    let m_tot = mi + ml + mu_n;

    let mut kkt = Kkt::new(p, a, c);
    debug_assert_eq!(kkt.dims(), (n, me, mi));

    // Starting point: regularized least-squares solve, then push slacks inside.
    kkt.factor(&vec![1.0; n], &vec![1.0; mi]);
    let mut rhs = vec![0.0; n + me + mi];
    for i in 0..n {
        rhs[i] = -prob.q[i];
    }
    rhs[n..n + me].copy_from_slice(&prob.b);
    rhs[n + me..].copy_from_slice(&prob.d);
    let sol = kkt.solve(&rhs);
    let mut x = sol[..n].to_vec();
    for i in 0..n {
        let (l, u) = (prob.lb[i], prob.ub[i]);
        if l.is_finite() && u.is_finite() {
            let w = u - l;
            x[i] = x[i].clamp(l + 0.1 * w, u - 0.1 * w);
        } else if l.is_finite() {
            x[i] = x[i].max(l + 1.0);
        } else if u.is_finite() {
            x[i] = x[i].min(u - 1.0);
        }
    }
    let mut y = vec![0.0; me];
    let cx = c.mul_vec(&x);
    let mut s: Vec<f64> = (0..mi).map(|r| (prob.d[r] - cx[r]).max(1.0)).collect();
    let mut z = vec![1.0; mi];
    let mut tl: Vec<f64> = lo.iter().map(|&i| (x[i] - prob.lb[i]).max(1.0)).collect();
    let mut wl = vec![1.0; ml];
    let mut tu: Vec<f64> = up.iter().map(|&i| (prob.ub[i] - x[i]).max(1.0)).collect();
    let mut wu = vec![1.0; mu_n];

    let bnorm = 1.0 + norm_inf(&prob.b).max(norm_inf(&prob.d));
    let qnorm = 1.0 + norm_inf(&prob.q);
    let mut last_res = f64::INFINITY;

    for iter in 0..settings.max_iter {
        // Residuals.
        let px = p.mul_vec(&x);
        let mut rd: Vec<f64> = px.iter().zip(&prob.q).map(|(a, b)| a + b).collect();
        a.tmul_vec_add(&y, &mut rd);
        c.tmul_vec_add(&z, &mut rd);
        for (k, &i) in lo.iter().enumerate() {
            rd[i] -= wl[k];
        }
        for (k, &i) in up.iter().enumerate() {
            rd[i] += wu[k];
        }
        let rp: Vec<f64> = a.mul_vec(&x).iter().zip(&prob.b).map(|(v, b)| v - b).collect();
        let cx = c.mul_vec(&x);
        let ri: Vec<f64> = (0..mi).map(|r| cx[r] + s[r] - prob.d[r]).collect();
        let rl: Vec<f64> = lo.iter().enumerate().map(|(k, &i)| x[i] - tl[k] - prob.lb[i]).collect();
        let ru: Vec<f64> = up.iter().enumerate().map(|(k, &i)| x[i] + tu[k] - prob.ub[i]).collect();

        let mu = if m_tot > 0 {
            (dot(&s, &z) + dot(&tl, &wl) + dot(&tu, &wu)) / m_tot as f64
        } else {
            0.0
        };
        let pres = norm_inf(&rp).max(norm_inf(&ri)).max(norm_inf(&rl)).max(norm_inf(&ru));
        let dres = norm_inf(&rd);
        let pobj = 0.5 * dot(&x, &px) + dot(&prob.q, &x);
        let dobj = -0.5 * dot(&x, &px) - dot(&prob.b, &y) - dot(&prob.d, &z)
            + lo.iter().enumerate().map(|(k, &i)| prob.lb[i] * wl[k]).sum::<f64>()
            - up.iter().enumerate().map(|(k, &i)| prob.ub[i] * wu[k]).sum::<f64>();
        let gap = (pobj - dobj).abs();
        last_res = (pres / bnorm).max(dres / qnorm).max(mu);
        if pres <= settings.tol * bnorm
            && dres <= settings.tol * qnorm
            && mu <= settings.tol
            && gap <= settings.tol * (1.0 + pobj.abs()).max(1.0) * 10.0
        {
            return Ok(QpSolution {
                objective: pobj,
                x,
                y_eq: y,
                y_in: z,
                iterations: iter,
            });
        }
        let dual_norm = norm_inf(&y).max(norm_inf(&z)).max(norm_inf(&wl)).max(norm_inf(&wu));
        if !dual_norm.is_finite() || dual_norm > 1e14 || !pres.is_finite() {
            return Err((iter, last_res));
        }

        // Newton matrix.
        let mut dxd = vec![0.0; n];
        for (k, &i) in lo.iter().enumerate() {
            dxd[i] += wl[k] / tl[k];
        }
        for (k, &i) in up.iter().enumerate() {
            dxd[i] += wu[k] / tu[k];
        }
        let dzd: Vec<f64> = (0..mi).map(|r| s[r] / z[r]).collect();
        kkt.factor(&dxd, &dzd);

        let newton = |rsz: &[f64], rlw: &[f64], ruw: &[f64]| {
            let mut rhs = vec![0.0; n + me + mi];
            for i in 0..n {
                rhs[i] = -rd[i];
            }
            for (k, &i) in lo.iter().enumerate() {
                rhs[i] -= (rlw[k] + wl[k] * rl[k]) / tl[k];
            }
            for (k, &i) in up.iter().enumerate() {
                rhs[i] += (ruw[k] - wu[k] * ru[k]) / tu[k];
            }
            for r in 0..me {
                rhs[n + r] = -rp[r];
            }
            for r in 0..mi {
                rhs[n + me + r] = rsz[r] / z[r] - ri[r];
            }
            let sol = kkt.solve(&rhs);
            let dx = sol[..n].to_vec();
            let dy = sol[n..n + me].to_vec();
            let dz = sol[n + me..].to_vec();
            let cdx = c.mul_vec(&dx);
            let ds: Vec<f64> = (0..mi).map(|r| -ri[r] - cdx[r]).collect();
            let dtl: Vec<f64> = lo.iter().enumerate().map(|(k, &i)| dx[i] + rl[k]).collect();
            let dwl: Vec<f64> = (0..ml).map(|k| (-rlw[k] - wl[k] * dtl[k]) / tl[k]).collect();
            let dtu: Vec<f64> = up.iter().enumerate().map(|(k, &i)| -ru[k] - dx[i]).collect();
            let dwu: Vec<f64> = (0..mu_n).map(|k| (-ruw[k] - wu[k] * dtu[k]) / tu[k]).collect();
            Step {
                dx,
                dy,
                dz,
                ds,
                dtl,
                dwl,
                dtu,
                dwu,
            }
        };

        let sz: Vec<f64> = (0..mi).map(|r| s[r] * z[r]).collect();
        let tw_l: Vec<f64> = (0..ml).map(|k| tl[k] * wl[k]).collect();
        let tw_u: Vec<f64> = (0..mu_n).map(|k| tu[k] * wu[k]).collect();
        let aff = newton(&sz, &tw_l, &tw_u);
        let alpha_aff = aff.max_step(&s, &z, &tl, &wl, &tu, &wu);

        let step = if m_tot > 0 {
            let mu_aff = (0..mi)
                .map(|r| (s[r] + alpha_aff * aff.ds[r]) * (z[r] + alpha_aff * aff.dz[r]))
                .chain((0..ml).map(|k| (tl[k] + alpha_aff * aff.dtl[k]) * (wl[k] + alpha_aff * aff.dwl[k])))
                .chain((0..mu_n).map(|k| (tu[k] + alpha_aff * aff.dtu[k]) * (wu[k] + alpha_aff * aff.dwu[k])))
                .sum::<f64>()
                / m_tot as f64;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            let target = sigma * mu;
            let rsz: Vec<f64> = (0..mi).map(|r| sz[r] + aff.ds[r] * aff.dz[r] - target).collect();
            let rlw: Vec<f64> = (0..ml).map(|k| tw_l[k] + aff.dtl[k] * aff.dwl[k] - target).collect();
            let ruw: Vec<f64> = (0..mu_n).map(|k| tw_u[k] + aff.dtu[k] * aff.dwu[k] - target).collect();
            newton(&rsz, &rlw, &ruw)
        } else {
            aff
        };
        let alpha = if m_tot > 0 {
            (0.99 * step.max_step(&s, &z, &tl, &wl, &tu, &wu)).min(1.0)
        } else {
            1.0
        };
        axpy(alpha, &step.dx, &mut x);
        axpy(alpha, &step.dy, &mut y);
        axpy(alpha, &step.dz, &mut z);
        axpy(alpha, &step.ds, &mut s);
        axpy(alpha, &step.dtl, &mut tl);
        axpy(alpha, &step.dwl, &mut wl);
        axpy(alpha, &step.dtu, &mut tu);
        axpy(alpha, &step.dwu, &mut wu);
    }
    Err((settings.max_iter, last_res))
}

struct Step {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtl: Vec<f64>,
    dwl: Vec<f64>,
    dtu: Vec<f64>,
    dwu: Vec<f64>,
}

impl Step {
    fn max_step(&self, s: &[f64], z: &[f64], tl: &[f64], wl: &[f64], tu: &[f64], wu: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for (v, d) in [
            (s, &self.ds),
            (z, &self.dz),
            (tl, &self.dtl),
            (wl, &self.dwl),
            (tu, &self.dtu),
            (wu, &self.dwu),
        ] {
            for (vi, di) in v.iter().zip(d.iter()) {
                if *di < 0.0 {
                    alpha = alpha.min(-vi / di);
                }
            }
        }
        alpha.min(1.0)
    }
}

fn axpy(alpha: f64, d: &[f64], v: &mut [f64]) {
    for (vi, di) in v.iter_mut().zip(d) {
        *vi += alpha * di;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(q: Vec<f64>, lb: Vec<f64>, ub: Vec<f64>) -> QpProblem {
        let n = q.len();
        QpProblem::unconstrained(SparseMatrix::zeros(n, n), q, lb, ub)
    }

    #[test]
    fn one_dimensional_lp() {
        // min x s.t. x >= 3
        let prob = lp(vec![1.0], vec![3.0], vec![f64::INFINITY]);
        let sol = solve_ipm(&prob, &IpmSettings::default()).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-8, "{:?}", sol.x);
        assert!((sol.objective - 3.0).abs() < 1e-8);
    }

    #[test]
    fn epigraph_of_absolute_difference() {
        // x = [a, b, r]; min r s.t. r >= a-b, r >= b-a, a = 5, b in [0, 4]
        let mut prob = lp(
            vec![0.0, 0.0, 1.0],
            vec![5.0, 0.0, f64::NEG_INFINITY],
            vec![5.0, 4.0, f64::INFINITY],
        );
        prob.c = SparseMatrix::from_rows(
            3,
            &[
                vec![(0, 1.0), (1, -1.0), (2, -1.0)],
                vec![(0, -1.0), (1, 1.0), (2, -1.0)],
            ],
        );
        prob.d = vec![0.0, 0.0];
        let sol = solve_ipm(&prob, &IpmSettings::default()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-7, "{}", sol.objective);
        assert!((sol.x[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn equality_constrained_qp() {
        // min ½(x0² + x1²) s.t. x0 + x1 = 2 → (1, 1), multiplier −1
        let p = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let mut prob = QpProblem::unconstrained(p, vec![0.0, 0.0], vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2]);
        prob.a = SparseMatrix::from_rows(2, &[vec![(0, 1.0), (1, 1.0)]]);
        prob.b = vec![2.0];
        let sol = solve_ipm(&prob, &IpmSettings::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
        assert!((sol.y_eq[0] + 1.0).abs() < 1e-8, "{:?}", sol.y_eq);
    }

    #[test]
    fn box_constrained_qp_projects() {
        // min ½(x−5)² with x ≤ 2
        let p = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        let prob = QpProblem::unconstrained(p, vec![-5.0], vec![-1.0], vec![2.0]);
        let sol = solve_ipm(&prob, &IpmSettings::default()).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn small_lp_with_mixed_rows() {
        // max x0 + x1 s.t. x0 + 2x1 <= 4, 3x0 + x1 <= 6, x >= 0 → (1.6, 1.2), obj −2.8
        let mut prob = lp(vec![-1.0, -1.0], vec![0.0, 0.0], vec![f64::INFINITY; 2]);
        prob.c = SparseMatrix::from_rows(2, &[vec![(0, 1.0), (1, 2.0)], vec![(0, 3.0), (1, 1.0)]]);
        prob.d = vec![4.0, 6.0];
        let sol = solve_ipm(&prob, &IpmSettings::default()).unwrap();
        assert!((sol.objective + 2.8).abs() < 1e-7, "{}", sol.objective);
        assert!(sol.y_in.iter().all(|&z| z >= -1e-9));
    }

    #[test]
    fn infeasible_rows_are_reported() {
        // x0 + x1 >= 3 (as -x0 - x1 <= -3), x0 <= 1 row, x1 <= 1 row, x2 free row ok
        let mut prob = lp(vec![0.0; 3], vec![0.0; 3], vec![10.0; 3]);
        prob.c = SparseMatrix::from_rows(
            3,
            &[
                vec![(0, -1.0), (1, -1.0)],
                vec![(0, 1.0)],
                vec![(1, 1.0)],
                vec![(2, 1.0)],
            ],
        );
        prob.d = vec![-3.0, 1.0, 1.0, 5.0];
        match solve_ipm(&prob, &IpmSettings::default()) {
            Err(IpmFailure::Infeasible(rows)) => {
                assert_eq!(rows, vec![(false, 0), (false, 1), (false, 2)]);
            }
            other => panic!("{other:?}"),
        }
    }
}
