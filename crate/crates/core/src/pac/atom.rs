//! Per-atom algebra: the atomic Lagrangian, the proximal primal step and the
//! extrapolated dual ascent steps.

use super::config::{AtomGains, EqualityMode};
use crate::decomposition::{Atom, Decomposition};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::qp::{solve_ipm, AdmmSettings, AdmmSolver, AdmmStatus, IpmFailure, IpmSettings, QpProblem};

/// Iterates held by one atom.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomState {
    pub tau: usize,
    /// Rounds since the extrapolation sequence last restarted.
    pub momentum: usize,
    /// Squared step lengths of this round: (primal, μ, ν).
    pub step: [f64; 3],
    merit: f64,
    pub a: Vec<f64>,
    pub a_prev: Vec<f64>,
    pub a_hat: Vec<f64>,
    /// One entry per equality row of the atom.
    pub mu: Vec<f64>,
    pub mu_prev: Vec<f64>,
    pub mu_hat: Vec<f64>,
    /// Duals of the coordination rows of the copies this atom holds.
    pub nu: Vec<f64>,
    pub nu_prev: Vec<f64>,
    pub nu_hat: Vec<f64>,
    /// Mirror of the holders' ν̂ for this atom's outgoing edges.
    pub nu_hat_out: Vec<f64>,
    /// Latest â of the owners of this atom's copies.
    pub owner_hat: Vec<f64>,
    /// Latest â of the copies of this atom's owned columns, per outgoing edge.
    pub holder_hat: Vec<f64>,
}

impl AtomState {
    /// Starts from `a0` with all duals zero.
    pub fn new(atom: &Atom, a0: Vec<f64>, owner0: Vec<f64>, holder0: Vec<f64>) -> Self {
        assert_eq!(a0.len(), atom.n());
        assert_eq!(owner0.len(), atom.incoming.len());
        assert_eq!(holder0.len(), atom.outgoing.len());
        let m = atom.eq_rows.len();
        let k = atom.incoming.len();
        AtomState {
            tau: 0,
            momentum: 0,
            step: [0.0; 3],
            merit: f64::INFINITY,
            a_prev: a0.clone(),
            a_hat: a0.clone(),
            a: a0,
            mu: vec![0.0; m],
            mu_prev: vec![0.0; m],
            mu_hat: vec![0.0; m],
            nu: vec![0.0; k],
            nu_prev: vec![0.0; k],
            nu_hat: vec![0.0; k],
            nu_hat_out: vec![0.0; atom.outgoing.len()],
            owner_hat: owner0,
            holder_hat: holder0,
        }
    }
}

const RESTART_RATIO: f64 = 0.999;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `current + coefficient (current − previous)`.
pub fn extrapolate(current: &[f64], previous: &[f64], coefficient: f64) -> Vec<f64> {
    assert_eq!(current.len(), previous.len());
    current
        .iter()
        .zip(previous)
        .map(|(c, p)| c + coefficient * (c - p))
        .collect()
}

/// `f_j(a_j) + μ_jᵀ(G_j a_j − b_j) + νᵀ Bʲ a_j` with ν indexed by edge.
pub fn atomic_lagrangian(dec: &Decomposition, j: usize, a: &[f64], mu: &[f64], nu: &[f64]) -> Result<f64> {
    let atom = &dec.atoms[j];
    if a.len() != atom.n() || mu.len() != atom.eq_rows.len() || nu.len() != dec.edges.len() {
        return Err(Error::Dimension(format!(
            "atom {j}: a {} (want {}), mu {} (want {}), nu {} (want {})",
            a.len(),
            atom.n(),
            mu.len(),
            atom.eq_rows.len(),
            nu.len(),
            dec.edges.len()
        )));
    }
    let mut v = atom.objective(a);
    let ga = atom.g.mul_vec(a);
    for r in 0..mu.len() {
        v += mu[r] * (ga[r] - atom.b[r]);
    }
    for &e in &atom.incoming {
        v += nu[e] * a[dec.edges[e].holder_local];
    }
    for &e in &atom.outgoing {
        v -= nu[e] * a[dec.edges[e].owner_local];
    }
    Ok(v)
}

/// The strongly convex QP solved by one atom each round, with its quadratic
/// term fixed and its linear term rebuilt from the current iterates.
#[derive(Debug, Clone)]
pub struct Subproblem {
    gains: AtomGains,
    /// Atom equality rows priced by μ.
    soft: Vec<usize>,
    g_soft: SparseMatrix,
    b_soft: Vec<f64>,
    cost: Vec<f64>,
    /// Local column of each held copy, in `atom.incoming` order.
    copy_cols: Vec<usize>,
    /// Local column of each owned column with a copy, in `atom.outgoing` order.
    owned_cols: Vec<usize>,
    qp: QpProblem,
    solver: AdmmSolver,
    tol: f64,
    /// Inner tolerance as a fraction of the local residual; 0 keeps `tol`.
    forcing: f64,
    last_q: Vec<f64>,
    pub inner_iterations: usize,
    pub fallbacks: usize,
}

impl Subproblem {
    pub fn new(dec: &Decomposition, j: usize, gains: AtomGains, mode: EqualityMode, tol: f64) -> Self {
        let atom = &dec.atoms[j];
        let n = atom.n();
        let mut shared = vec![false; n];
        for &e in &atom.incoming {
            shared[dec.edges[e].holder_local] = true;
        }
        for &e in &atom.outgoing {
            shared[dec.edges[e].owner_local] = true;
        }
        let (soft, hard): (Vec<usize>, Vec<usize>) = (0..atom.eq_rows.len()).partition(|&r| match mode {
            EqualityMode::Priced => true,
            EqualityMode::PriceShared => atom.g.row(r).any(|(c, v)| v != 0.0 && shared[c]),
            EqualityMode::Enforced => false,
        });
        let all: Vec<Option<usize>> = (0..n).map(Some).collect();
        let g_soft = atom.g.select(&soft, &all, n);
        let g_hard = atom.g.select(&hard, &all, n);
        let copy_cols: Vec<usize> = atom.incoming.iter().map(|&e| dec.edges[e].holder_local).collect();
        let owned_cols: Vec<usize> = atom.outgoing.iter().map(|&e| dec.edges[e].owner_local).collect();

        let pg = gains.rho * gains.gamma;
        let mut p = Vec::new();
        g_soft.gram_triplets(&vec![pg; soft.len()], &mut p);
        // Every coordination row touching the atom is penalized, with the
        // far end held at its last communicated value.
        for &c in copy_cols.iter().chain(&owned_cols) {
            p.push((c, c, pg));
        }
        for i in 0..n {
            p.push((i, i, 1.0 / gains.rho));
        }
        let qp = QpProblem {
            p: SparseMatrix::from_triplets(n, n, &p),
            q: vec![0.0; n],
            a: g_hard,
            b: hard.iter().map(|&r| atom.b[r]).collect(),
            c: atom.h.clone(),
            d: atom.d.clone(),
            lb: atom.lower.clone(),
            ub: atom.upper.clone(),
        };
        let settings = AdmmSettings {
            eps_abs: tol,
            eps_rel: tol,
            ..AdmmSettings::default()
        };
        let solver = AdmmSolver::new(&qp, settings);
        Subproblem {
            gains,
            b_soft: soft.iter().map(|&r| atom.b[r]).collect(),
            soft,
            g_soft,
            cost: atom.cost.clone(),
            copy_cols,
            owned_cols,
            qp,
            solver,
            tol,
            forcing: 0.0,
            last_q: vec![0.0; n],
            inner_iterations: 0,
            fallbacks: 0,
        }
    }

    /// Solves early steps only to `forcing` times the local residual,
    /// never looser than 1e-3 nor tighter than the inner tolerance.
    pub fn with_forcing(mut self, forcing: f64) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn gains(&self) -> &AtomGains {
        &self.gains
    }

    /// Indices (into the atom's equality rows) of the rows priced by μ.
    pub fn soft_rows(&self) -> &[usize] {
        &self.soft
    }

    fn linear_term(&self, st: &AtomState) -> Vec<f64> {
        let pg = self.gains.rho * self.gains.gamma;
        let mut q: Vec<f64> = self
            .cost
            .iter()
            .zip(&st.a)
            .map(|(c, a)| c - a / self.gains.rho)
            .collect();
        let w: Vec<f64> = self
            .soft
            .iter()
            .zip(&self.b_soft)
            .map(|(&r, b)| st.mu_hat[r] - pg * b)
            .collect();
        self.g_soft.tmul_vec_add(&w, &mut q);
        for (k, &c) in self.copy_cols.iter().enumerate() {
            q[c] += st.nu_hat[k] - pg * st.owner_hat[k];
        }
        for (k, &c) in self.owned_cols.iter().enumerate() {
            q[c] -= st.nu_hat_out[k] + pg * st.holder_hat[k];
        }
        q
    }

    /// Largest local disagreement: copies against their owners, owned
    /// columns against their copies, and the last primal step.
    fn local_residual(&self, st: &AtomState) -> f64 {
        let copies = self
            .copy_cols
            .iter()
            .zip(&st.owner_hat)
            .map(|(&c, o)| (st.a[c] - o).abs());
        let owned = self
            .owned_cols
            .iter()
            .zip(&st.holder_hat)
            .map(|(&c, h)| (st.a[c] - h).abs());
        let step = st.a.iter().zip(&st.a_prev).map(|(a, b)| (a - b).abs());
        copies.chain(owned).chain(step).fold(0.0, f64::max)
    }

    /// Minimizer of the proximal augmented Lagrangian at the current state.
    pub fn primal_update(&mut self, st: &AtomState) -> Result<Vec<f64>> {
        let q = self.linear_term(st);
        self.solver.set_q(&q);
        self.last_q = q;
        self.solver.warm_start_x(&st.a);
        if self.forcing > 0.0 {
            let eps = (self.forcing * self.local_residual(st)).clamp(self.tol, 1e-3);
            self.solver.set_tolerance(eps, eps);
        }
        let (sol, report) = self.solver.solve();
        self.inner_iterations += report.iterations;
        if report.status != AdmmStatus::MaxIterations {
            return Ok(sol.x);
        }
        self.fallbacks += 1;
        self.exact_update(st)
    }

    /// Same step solved by the interior-point method.
    pub fn exact_update(&mut self, st: &AtomState) -> Result<Vec<f64>> {
        self.qp.q = self.linear_term(st);
        self.solve_exact()
    }

    /// Re-solves the most recent primal step with the interior-point method.
    pub fn polish_last(&mut self) -> Result<Vec<f64>> {
        self.qp.q = self.last_q.clone();
        self.solve_exact()
    }

    fn solve_exact(&mut self) -> Result<Vec<f64>> {
        let settings = IpmSettings {
            tol: self.tol,
            ..IpmSettings::default()
        };
        match solve_ipm(&self.qp, &settings) {
            Ok(sol) => Ok(sol.x),
            Err(IpmFailure::IterationLimit { iterations, residual }) => {
                Err(Error::IterationLimit { iterations, residual })
            }
            Err(IpmFailure::Infeasible(_)) => Err(Error::Infeasible {
                rows: vec!["local constraints of an atom".into()],
            }),
        }
    }

    /// Accepts a new primal iterate: shifts history and extrapolates.
    pub fn accept_primal(&self, st: &mut AtomState, a_new: Vec<f64>) {
        let alpha = self.gains.alpha.at(st.momentum + 1);
        st.a_prev = std::mem::replace(&mut st.a, a_new);
        st.step[0] = sq_dist(&st.a, &st.a_prev);
        st.a_hat = extrapolate(&st.a, &st.a_prev, alpha);
    }

    /// μ ascent on the priced rows at â, then extrapolation.
    pub fn mu_update(&self, atom: &Atom, st: &mut AtomState) {
        let pg = self.gains.rho * self.gains.gamma;
        let phi = self.gains.phi.at(st.momentum + 1);
        let ga = self.g_soft.mul_vec(&st.a_hat);
        let mut mu = st.mu.clone();
        for (k, &r) in self.soft.iter().enumerate() {
            mu[r] = st.mu_hat[r] + pg * (ga[k] - self.b_soft[k]);
        }
        debug_assert_eq!(mu.len(), atom.eq_rows.len());
        st.step[1] = sq_dist(&mu, &st.mu_hat);
        st.mu_prev = std::mem::replace(&mut st.mu, mu);
        st.mu_hat = extrapolate(&st.mu, &st.mu_prev, phi);
    }

    /// ν ascent on the held copies once the owners' â has arrived, then
    /// extrapolation. Advances the round counter.
    pub fn nu_update(&self, st: &mut AtomState) {
        let pg = self.gains.rho * self.gains.gamma;
        let theta = self.gains.theta.at(st.momentum + 1);
        let nu: Vec<f64> = self
            .copy_cols
            .iter()
            .enumerate()
            .map(|(k, &c)| st.nu_hat[k] + pg * (st.a_hat[c] - st.owner_hat[k]))
            .collect();
        st.step[2] = sq_dist(&nu, &st.nu_hat);
        st.nu_prev = std::mem::replace(&mut st.nu, nu);
        st.nu_hat = extrapolate(&st.nu, &st.nu_prev, theta);
        st.tau += 1;
    }

    /// Advances the extrapolation counter, or resets it when the combined
    /// primal-dual step grew (adaptive restart). Uses local data only.
    pub fn advance_momentum(&self, st: &mut AtomState, restart: bool) {
        let pg = self.gains.rho * self.gains.gamma;
        let merit = st.step[0] / self.gains.rho + (st.step[1] + st.step[2]) / pg;
        if restart && merit > RESTART_RATIO * st.merit {
            st.momentum = 0;
            // Drop the extrapolated duals so the next round starts from the
            // plain iterate.
            st.mu_hat.clone_from(&st.mu);
            st.nu_hat.clone_from(&st.nu);
        } else {
            st.momentum += 1;
        }
        st.merit = merit;
    }
}
