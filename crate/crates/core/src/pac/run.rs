use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::atom::{AtomState, Subproblem};
use super::config::PacConfig;
use super::transport::{Message, Payload, Transport};
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub round: usize,
    pub max_eq_residual: f64,
    pub max_coord_residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct PacResult {
    /// Global vector read from the owners.
    pub x: Vec<f64>,
    pub atoms: Vec<Vec<f64>>,
    pub rounds: usize,
    pub converged: bool,
    pub objective: f64,
    pub eq_residual: f64,
    pub coord_residual: f64,
    pub trace: Vec<TraceRow>,
    /// Wall time spent in each atom's local computations (timing only).
    pub atom_seconds: Vec<f64>,
    pub inner_iterations: usize,
    pub inner_fallbacks: usize,
    pub messages: usize,
}

impl PacResult {
    pub fn mean_atom_seconds(&self) -> f64 {
        self.atom_seconds.iter().sum::<f64>() / self.atom_seconds.len().max(1) as f64
    }

    /// First round whose residuals are both at or below `eps`.
    pub fn rounds_to(&self, eps: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|r| r.max_eq_residual <= eps && r.max_coord_residual <= eps)
            .map(|r| r.round)
    }
}

pub fn write_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for row in trace {
        w.serialize(row).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Worker {
    sub: Subproblem,
    st: AtomState,
    seconds: f64,
}

/// Midpoint of each box, zero when unbounded on both sides, the finite end
/// when bounded on one.
fn midpoint(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

/// Runs the accelerated proximal atomic coordination iteration.
pub fn run(dec: &Decomposition, cfg: &PacConfig) -> Result<PacResult> {
    cfg.validate()?;
    match cfg.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(dec, cfg))
        }
        None => run_inner(dec, cfg),
    }
}

fn run_inner(dec: &Decomposition, cfg: &PacConfig) -> Result<PacResult> {
    let k = dec.atoms.len();
    let tol = cfg.inner_tolerance();
    let mut x0 = vec![0.0; dec.n_global];
    for atom in &dec.atoms {
        for (i, &c) in atom.owned().iter().enumerate() {
            x0[c] = midpoint(atom.lower[i], atom.upper[i]);
        }
    }
    let a0 = dec.lift(&x0);
    // Position of each edge within its holder's and owner's lists.
    let mut pos_in_holder = vec![0; dec.edges.len()];
    let mut pos_in_owner = vec![0; dec.edges.len()];
    for atom in &dec.atoms {
        for (k, &e) in atom.incoming.iter().enumerate() {
            pos_in_holder[e] = k;
        }
        for (k, &e) in atom.outgoing.iter().enumerate() {
            pos_in_owner[e] = k;
        }
    }

    let mut workers: Vec<Worker> = (0..k)
        .into_par_iter()
        .map(|j| {
            let atom = &dec.atoms[j];
            let gains = cfg.gains(j, atom.neighbors.len());
            let owner0 = atom.incoming.iter().map(|&e| x0[dec.edges[e].column]).collect();
            let holder0 = atom.outgoing.iter().map(|&e| x0[dec.edges[e].column]).collect();
            Worker {
                sub: Subproblem::new(dec, j, gains, cfg.equalities, tol).with_forcing(cfg.inner_forcing),
                st: AtomState::new(atom, a0[j].clone(), owner0, holder0),
                seconds: 0.0,
            }
        })
        .collect();

    let mut transport = Transport::new(dec.atoms.iter().map(|a| a.neighbors.clone()).collect());
    let mut trace = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut rounds = 0;

    for round in 1..=cfg.max_iter {
        rounds = round;
        // Primal step, primal and μ extrapolation.
        let outboxes: Vec<Result<Vec<Message>>> = workers
            .par_iter_mut()
            .enumerate()
            .map(|(j, w)| {
                let t0 = Instant::now();
                let atom = &dec.atoms[j];
                let a_new = w.sub.primal_update(&w.st)?;
                w.sub.accept_primal(&mut w.st, a_new);
                w.sub.mu_update(atom, &mut w.st);
                let mut msgs: Vec<Message> = Vec::new();
                let owned = atom
                    .outgoing
                    .iter()
                    .map(|&e| (e, dec.edges[e].holder, dec.edges[e].owner_local));
                let held = atom
                    .incoming
                    .iter()
                    .map(|&e| (e, dec.edges[e].owner, dec.edges[e].holder_local));
                for (e, to, col) in owned.chain(held) {
                    let v = (e, w.st.a_hat[col]);
                    match msgs.iter_mut().find(|m| m.receiver == to) {
                        Some(m) => m.values.push(v),
                        None => msgs.push(Message {
                            sender: j,
                            receiver: to,
                            kind: Payload::PrimalHat,
                            round,
                            values: vec![v],
                        }),
                    }
                }
                w.seconds += t0.elapsed().as_secs_f64();
                Ok(msgs)
            })
            .collect();
        for out in outboxes {
            for m in out? {
                transport.send(m)?;
            }
        }
        let inboxes = (0..k)
            .map(|j| transport.receive(j, Payload::PrimalHat, round))
            .collect::<Result<Vec<_>>>()?;

        // ν step at the copy holders.
        let outboxes: Vec<Vec<Message>> = workers
            .par_iter_mut()
            .zip(inboxes)
            .enumerate()
            .map(|(j, (w, inbox))| {
                let t0 = Instant::now();
                for m in inbox {
                    for (e, v) in m.values {
                        if dec.edges[e].holder == j {
                            w.st.owner_hat[pos_in_holder[e]] = v;
                        } else {
                            w.st.holder_hat[pos_in_owner[e]] = v;
                        }
                    }
                }
                w.sub.nu_update(&mut w.st);
                w.sub.advance_momentum(&mut w.st, cfg.restart);
                let atom = &dec.atoms[j];
                let mut msgs: Vec<Message> = Vec::new();
                for (kk, &e) in atom.incoming.iter().enumerate() {
                    let edge = dec.edges[e];
                    let v = (e, w.st.nu_hat[kk]);
                    match msgs.iter_mut().find(|m| m.receiver == edge.owner) {
                        Some(m) => m.values.push(v),
                        None => msgs.push(Message {
                            sender: j,
                            receiver: edge.owner,
                            kind: Payload::NuHat,
                            round,
                            values: vec![v],
                        }),
                    }
                }
                w.seconds += t0.elapsed().as_secs_f64();
                msgs
            })
            .collect();
        for out in outboxes {
            for m in out {
                transport.send(m)?;
            }
        }
        for (j, w) in workers.iter_mut().enumerate() {
            for m in transport.receive(j, Payload::NuHat, round)? {
                for (e, v) in m.values {
                    w.st.nu_hat_out[pos_in_owner[e]] = v;
                }
            }
        }

        let row = monitor(dec, &workers, round);
        trace.push(row);
        let r = row.max_eq_residual.max(row.max_coord_residual);
        if !r.is_finite() {
            return Err(Error::Divergence { round, residual: r });
        }
        history.push(r);
        if cfg.detect_divergence && round > 100 {
            let floor = cfg.eps_primal.min(cfg.eps_coord);
            if r > 10.0 * history[round - 101].max(floor) {
                return Err(Error::Divergence { round, residual: r });
            }
        }
        if row.max_eq_residual <= cfg.eps_primal && row.max_coord_residual <= cfg.eps_coord {
            converged = true;
            break;
        }
    }

    if cfg.polish {
        // Re-solve the last primal step with the interior-point method so the
        // local equalities hold to its accuracy rather than the inner tolerance.
        let before: Vec<Vec<f64>> = workers.iter().map(|w| w.st.a.clone()).collect();
        let polished: Vec<Result<()>> = workers
            .par_iter_mut()
            .map(|w| {
                let t0 = Instant::now();
                let exact = w.sub.polish_last();
                w.seconds += t0.elapsed().as_secs_f64();
                w.st.a = exact?;
                Ok(())
            })
            .collect();
        polished.into_iter().collect::<Result<Vec<()>>>()?;
        let row = monitor(dec, &workers, rounds);
        let ok = row.max_eq_residual <= cfg.eps_primal && row.max_coord_residual <= cfg.eps_coord;
        // Keep the unpolished iterate only when polishing would undo convergence.
        if ok || !converged {
            *trace.last_mut().expect("at least one round") = row;
            converged = ok;
        } else {
            for (w, a) in workers.iter_mut().zip(before) {
                w.st.a = a;
            }
        }
    }

    let atoms: Vec<Vec<f64>> = workers.iter().map(|w| w.st.a.clone()).collect();
    let last = *trace.last().expect("at least one round");
    Ok(PacResult {
        x: dec.assemble(&atoms),
        atoms,
        rounds,
        converged,
        objective: last.objective,
        eq_residual: last.max_eq_residual,
        coord_residual: last.max_coord_residual,
        trace,
        atom_seconds: workers.iter().map(|w| w.seconds).collect(),
        inner_iterations: workers.iter().map(|w| w.sub.inner_iterations).sum(),
        inner_fallbacks: workers.iter().map(|w| w.sub.fallbacks).sum(),
        messages: transport.messages_sent(),
    })
}

fn monitor(dec: &Decomposition, workers: &[Worker], round: usize) -> TraceRow {
    let mut eq = 0.0f64;
    let mut obj = 0.0;
    for (atom, w) in dec.atoms.iter().zip(workers) {
        let ga = atom.g.mul_vec(&w.st.a);
        for (v, b) in ga.iter().zip(&atom.b) {
            eq = eq.max((v - b).abs());
        }
        obj += atom.objective(&w.st.a);
    }
    let a: Vec<&[f64]> = workers.iter().map(|w| w.st.a.as_slice()).collect();
    let coord = dec
        .edges
        .iter()
        .map(|e| (a[e.holder][e.holder_local] - a[e.owner][e.owner_local]).abs())
        .fold(0.0, f64::max);
    TraceRow {
        round,
        max_eq_residual: eq,
        max_coord_residual: coord,
        objective: obj,
    }
}
