use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use super::{BatteryTrace, ScenarioResult, ScenarioTag};
use crate::error::{Error, Result};
use crate::grid::{BusId, Network, Profiles};
use crate::opf::{key, solve_centralized, tag, Builder, CanonicalProblem, Quantity, RowKind};

const INF: f64 = f64::INFINITY;

/// Groups of bus indices that act as one agent: each cluster, and every other
/// non-PCC bus that has a load or a device, ordered by their first bus. Buses
/// with nothing to dispatch are not agents.
pub fn local_agents(net: &Network) -> Vec<Vec<usize>> {
    clusters_to_agents(net, &net.clusters).expect("network clusters are validated on load")
}

fn clusters_to_agents(net: &Network, clusters: &[Vec<BusId>]) -> Result<Vec<Vec<usize>>> {
    let pcc = net.pcc_index();
    let mut taken = BTreeSet::new();
    let mut agents = Vec::new();
    for c in clusters {
        let mut group = Vec::new();
        for &id in c {
            let j = net
                .bus_idx(id)
                .ok_or_else(|| Error::Validation(format!("cluster names unknown bus {id}")))?;
            if j == pcc || !taken.insert(j) {
                return Err(Error::Validation(format!("bus {id} cannot join cluster {c:?}")));
            }
            group.push(j);
        }
        group.sort_unstable();
        agents.push(group);
    }
    for (j, bus) in net.buses.iter().enumerate() {
        if j != pcc && !taken.contains(&j) && (bus.load.is_some() || !bus.devices.is_empty()) {
            agents.push(vec![j]);
        }
    }
    agents.sort_by_key(|g| g[0]);
    Ok(agents)
}

/// Peak-shaving LP of one agent, in per unit: minimize `s` subject to
/// `s ≥ −P(t)`, where `P` is the agent's net injection from PV, served load
/// and battery discharge minus charge. No network rows.
pub fn agent_problem(net: &Network, profiles: &Profiles, buses: &[usize]) -> Result<CanonicalProblem> {
    let base = net.base_kva;
    let horizon = profiles.horizon;
    if horizon != net.horizon {
        return Err(Error::Dimension(format!(
            "profiles cover {horizon} hours, network horizon is {}",
            net.horizon
        )));
    }
    let home = buses[0];
    let mut bld = Builder::default();
    let s = bld.var(key(Quantity::Peak, home, None, 0), home, -INF, INF);
    bld.cost[s] = 1.0;

    for t in 0..horizon {
        let p = bld.var(key(Quantity::P, home, None, t), home, -INF, INF);
        let q = bld.var(key(Quantity::Q, home, None, t), home, -INF, INF);
        let mut prow = vec![(p, 1.0)];
        let mut qrow = vec![(q, 1.0)];
        for &j in buses {
            let bus = &net.buses[j];
            for ph in bus.phases.iter() {
                let ph_ = Some(ph);
                if let Some(&(pl, ql)) = profiles.loads.get(&(bus.id, ph)).and_then(|s| s.get(t)) {
                    let alpha = if bus.flex().is_some() {
                        profiles.alpha(bus.id, t)
                    } else {
                        0.0
                    };
                    let pc = bld.var(key(Quantity::Pl, j, ph_, t), j, (1.0 - alpha) * pl / base, pl / base);
                    let qc = bld.var(key(Quantity::Ql, j, ph_, t), j, ql / base, ql / base);
                    prow.push((pc, 1.0));
                    qrow.push((qc, 1.0));
                }
                if let Some(pv) = bus.pv().filter(|pv| pv.capacity_kw.contains_key(&ph)) {
                    let avail = profiles.pv(bus.id, ph, t) / base;
                    let pg = bld.var(key(Quantity::Pg, j, ph_, t), j, avail, avail);
                    let qg = bld.var(key(Quantity::Qg, j, ph_, t), j, -INF, INF);
                    prow.push((pg, -1.0));
                    qrow.push((qg, -1.0));
                    let tan = (1.0 / (pv.pf_min * pv.pf_min) - 1.0).max(0.0).sqrt();
                    bld.le(
                        vec![(qg, 1.0), (pg, -tan)],
                        0.0,
                        tag(RowKind::PvConeUpper, j, ph_, t, home),
                    );
                    bld.le(
                        vec![(qg, -1.0), (pg, -tan)],
                        0.0,
                        tag(RowKind::PvConeLower, j, ph_, t, home),
                    );
                }
            }
            if let Some(bat) = bus.battery() {
                let sc = bld.var(key(Quantity::Psc, j, None, t), j, 0.0, bat.p_sc_max_kw / base);
                let sd = bld.var(key(Quantity::Psd, j, None, t), j, 0.0, bat.p_sd_max_kw / base);
                let soc = bld.var(
                    key(Quantity::Soc, j, None, t),
                    j,
                    bat.b_min_kwh / base,
                    bat.b_max_kwh / base,
                );
                prow.push((sc, 1.0));
                prow.push((sd, -1.0));
                let keep = 1.0 - bat.eta_self;
                let mut row = vec![(soc, 1.0), (sc, -bat.eta_c), (sd, 1.0 / bat.eta_d)];
                let rhs = if t == 0 {
                    keep * bat.b0_kwh / base
                } else {
                    let prev = bld
                        .index
                        .find(Quantity::Soc, j, None, t - 1)
                        .expect("previous hour built");
                    row.push((prev, -keep));
                    0.0
                };
                bld.eq(row, rhs, tag(RowKind::Soc, j, None, t, home));
            }
        }
        // P − Σ(P^G − P^L) − Σ(P^sd − P^sc) = 0
        bld.eq(prow, 0.0, tag(RowKind::PSplit, home, None, t, home));
        bld.eq(qrow, 0.0, tag(RowKind::QSplit, home, None, t, home));
        bld.le(vec![(p, -1.0), (s, -1.0)], 0.0, tag(RowKind::Peak, home, None, t, home));
    }
    Ok(bld.finish(horizon, base))
}

struct AgentOutcome {
    pcc: Vec<f64>,
    load: Vec<f64>,
    pv: Vec<f64>,
    battery: Vec<f64>,
    traces: Vec<BatteryTrace>,
    seconds: f64,
}

fn solve_agent(net: &Network, profiles: &Profiles, buses: &[usize]) -> Result<AgentOutcome> {
    let t0 = Instant::now();
    let prob = agent_problem(net, profiles, buses)?;
    let name = || {
        buses
            .iter()
            .map(|&j| net.buses[j].id.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let sol = solve_centralized(&prob, 1e-9).map_err(|e| match e {
        Error::Infeasible { rows } => Error::Infeasible {
            rows: rows.into_iter().map(|r| format!("agent [{}]: {r}", name())).collect(),
        },
        other => other,
    })?;
    let seconds = t0.elapsed().as_secs_f64();
    let base = net.base_kva;
    let x = &sol.x;
    let horizon = profiles.horizon;
    let home = buses[0];
    let mut out = AgentOutcome {
        pcc: vec![0.0; horizon],
        load: vec![0.0; horizon],
        pv: vec![0.0; horizon],
        battery: vec![0.0; horizon],
        traces: Vec::new(),
        seconds,
    };
    let get = |q, j, ph, t| prob.value(x, q, j, ph, t).unwrap_or(0.0) * base;
    for t in 0..horizon {
        out.pcc[t] = -get(Quantity::P, home, None, t);
        for &j in buses {
            for ph in net.buses[j].phases.iter() {
                out.load[t] += get(Quantity::Pl, j, Some(ph), t);
                out.pv[t] += get(Quantity::Pg, j, Some(ph), t);
            }
            out.battery[t] += get(Quantity::Psc, j, None, t) - get(Quantity::Psd, j, None, t);
        }
    }
    for &j in buses {
        if net.buses[j].battery().is_some() {
            out.traces.push(BatteryTrace {
                bus: net.buses[j].id,
                soc_kwh: (0..horizon).map(|t| get(Quantity::Soc, j, None, t)).collect(),
                charge_kw: (0..horizon).map(|t| get(Quantity::Psc, j, None, t)).collect(),
                discharge_kw: (0..horizon).map(|t| get(Quantity::Psd, j, None, t)).collect(),
            });
        }
    }
    Ok(out)
}

/// Every agent minimizes its own peak net consumption; the PCC series is the
/// sum of the agents' residual demand.
pub fn run_local(net: &Network, profiles: &Profiles, clusters: &[Vec<BusId>]) -> Result<ScenarioResult> {
    let agents = clusters_to_agents(net, clusters)?;
    let outcomes = agents
        .par_iter()
        .map(|buses| solve_agent(net, profiles, buses))
        .collect::<Result<Vec<_>>>()?;
    let horizon = profiles.horizon;
    let mut pcc = vec![0.0; horizon];
    let mut load = vec![0.0; horizon];
    let mut pv = vec![0.0; horizon];
    let mut battery = vec![0.0; horizon];
    let mut batteries = Vec::new();
    let mut seconds = 0.0;
    for o in outcomes {
        for t in 0..horizon {
            pcc[t] += o.pcc[t];
            load[t] += o.load[t];
            pv[t] += o.pv[t];
            battery[t] += o.battery[t];
        }
        batteries.extend(o.traces);
        seconds += o.seconds;
    }
    batteries.sort_by_key(|b| b.bus);
    Ok(ScenarioResult {
        tag: ScenarioTag::B,
        pcc_with_losses_kw: pcc.clone(),
        pcc_kw: pcc,
        load_kw: load,
        pv_kw: pv,
        battery_kw: battery,
        losses_kw: vec![0.0; horizon],
        batteries,
        agents: agents.len(),
        mean_agent_seconds: seconds / agents.len().max(1) as f64,
        solver: None,
        trace: Vec::new(),
    })
}
