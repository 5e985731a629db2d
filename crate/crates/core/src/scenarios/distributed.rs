use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{BatteryTrace, ScenarioResult, ScenarioTag, SolverSummary};
use crate::decomposition::{decompose, Strategy};
use crate::error::Result;
use crate::grid::{Network, Profiles};
use crate::opf::{build_ci_opf, preprocess_bounds, solve_centralized, CanonicalProblem, Objective, Quantity};
use crate::pac::{self, PacConfig};

/// How buses are grouped into solver atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomGrouping {
    PerBus,
    /// The network's clusters become single atoms.
    #[default]
    Clusters,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistributedConfig {
    pub atoms: AtomGrouping,
    pub pac: PacConfig,
}

/// Coordinated dispatch: relaxed OPF with the PCC ramp objective, split into
/// atoms and solved by accelerated proximal atomic coordination.
pub fn run_distributed(net: &Network, profiles: &Profiles, cfg: &DistributedConfig) -> Result<ScenarioResult> {
    let bounds = preprocess_bounds(net, profiles)?;
    let prob = build_ci_opf(net, profiles, &bounds, Objective::PccRamp)?;
    let strategy = match cfg.atoms {
        AtomGrouping::PerBus => Strategy::PerBus,
        AtomGrouping::Clusters => Strategy::clusters_of(net)?,
    };
    let dec = decompose(&prob, &strategy)?;
    let sol = pac::run(&dec, &cfg.pac)?;
    let mut result = extract(net, &prob, &sol.x);
    result.agents = dec.atoms.len();
    result.mean_agent_seconds = sol.mean_atom_seconds();
    result.solver = Some(SolverSummary {
        atoms: dec.atoms.len(),
        rounds: sol.rounds,
        converged: sol.converged,
        eq_residual: sol.eq_residual,
        coord_residual: sol.coord_residual,
        objective_kw: sol.objective * net.base_kva,
        inner_iterations: sol.inner_iterations,
        messages: sol.messages,
    });
    result.trace = sol.trace;
    Ok(result)
}

/// The coordinated scenario solved in one piece by the interior-point method;
/// the reference the distributed run is measured against.
pub fn run_central(net: &Network, profiles: &Profiles) -> Result<ScenarioResult> {
    let bounds = preprocess_bounds(net, profiles)?;
    let prob = build_ci_opf(net, profiles, &bounds, Objective::PccRamp)?;
    let t0 = Instant::now();
    let sol = solve_centralized(&prob, 1e-9)?;
    let mut result = extract(net, &prob, &sol.x);
    result.agents = 1;
    result.mean_agent_seconds = t0.elapsed().as_secs_f64();
    Ok(result)
}

/// Reads the hourly series of a solution of the network problem.
pub(crate) fn extract(net: &Network, prob: &CanonicalProblem, x: &[f64]) -> ScenarioResult {
    let base = net.base_kva;
    let horizon = prob.horizon;
    let pcc = net.pcc_index();
    let get = |q, j, ph, t| prob.value(x, q, j, ph, t).unwrap_or(0.0) * base;
    let mut pcc_with_losses = vec![0.0; horizon];
    let mut losses = vec![0.0; horizon];
    let mut load = vec![0.0; horizon];
    let mut pv = vec![0.0; horizon];
    let mut battery = vec![0.0; horizon];
    for t in 0..horizon {
        for (j, bus) in net.buses.iter().enumerate() {
            for ph in bus.phases.iter() {
                let p = get(Quantity::P, j, Some(ph), t);
                // Injections sum to the power dissipated in the lines.
                losses[t] += p;
                if j == pcc {
                    pcc_with_losses[t] += p;
                } else {
                    load[t] += get(Quantity::Pl, j, Some(ph), t);
                    pv[t] += get(Quantity::Pg, j, Some(ph), t);
                }
            }
            battery[t] += get(Quantity::Psc, j, None, t) - get(Quantity::Psd, j, None, t);
        }
    }
    let batteries = net
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.battery().is_some())
        .map(|(j, b)| BatteryTrace {
            bus: b.id,
            soc_kwh: (0..horizon).map(|t| get(Quantity::Soc, j, None, t)).collect(),
            charge_kw: (0..horizon).map(|t| get(Quantity::Psc, j, None, t)).collect(),
            discharge_kw: (0..horizon).map(|t| get(Quantity::Psd, j, None, t)).collect(),
        })
        .collect();
    ScenarioResult {
        tag: ScenarioTag::C,
        pcc_kw: pcc_with_losses.iter().zip(&losses).map(|(p, l)| p - l).collect(),
        pcc_with_losses_kw: pcc_with_losses,
        load_kw: load,
        pv_kw: pv,
        battery_kw: battery,
        losses_kw: losses,
        batteries,
        agents: 0,
        mean_agent_seconds: 0.0,
        solver: None,
        trace: Vec::new(),
    }
}
