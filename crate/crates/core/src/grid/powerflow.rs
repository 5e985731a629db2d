//! Backward-forward sweep power flow for radial multi-phase feeders (per unit).

use std::collections::HashMap;

use num_complex::Complex64;

use super::{Network, Phase};
use crate::error::{Error, Result};

/// Exact AC operating point for one hour.
#[derive(Debug, Clone)]
pub struct PowerFlowState {
    pub voltage: HashMap<(usize, Phase), Complex64>,
    /// Injection current per (bus, phase), `conj(S / V)`.
    pub current: HashMap<(usize, Phase), Complex64>,
    /// Line current from → to per (line, phase).
    pub flow: HashMap<(usize, Phase), Complex64>,
    pub iterations: usize,
}

impl PowerFlowState {
    /// Complex power injected at the PCC, per phase.
    pub fn pcc_power(&self, net: &Network, phase: Phase) -> Complex64 {
        let k = (net.pcc_index(), phase);
        self.voltage[&k] * self.current[&k].conj()
    }
}

/// Solves for voltages given per-unit complex injections at non-PCC buses.
/// The PCC is held at 1.0 pu with nominal phase angles.
pub fn sweep(
    net: &Network,
    injection: impl Fn(usize, Phase) -> Complex64,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowState> {
    let topo = net.topology();
    let pcc = net.pcc_index();
    let zb = net.base_ohm();
    let mut voltage = HashMap::new();
    for (b, bus) in net.buses.iter().enumerate() {
        for ph in bus.phases.iter() {
            voltage.insert((b, ph), Complex64::from_polar(1.0, ph.nominal_angle_deg().to_radians()));
        }
    }
    let mut current = HashMap::new();
    let mut flow = HashMap::new();
    for iter in 1..=max_iter {
        current.clear();
        for (b, bus) in net.buses.iter().enumerate() {
            if b == pcc {
                continue;
            }
            for ph in bus.phases.iter() {
                let s = injection(b, ph);
                current.insert((b, ph), (s / voltage[&(b, ph)]).conj());
            }
        }
        // Backward: current drawn by each subtree, leaves first.
        let mut drawn: HashMap<(usize, Phase), Complex64> = HashMap::new();
        for &b in topo.order.iter().rev() {
            for ph in net.buses[b].phases.iter() {
                let mut acc = if b == pcc {
                    Complex64::new(0.0, 0.0)
                } else {
                    -current[&(b, ph)]
                };
                for &l in &topo.child_lines[b] {
                    let c = net.other_end(l, b);
                    if let Some(d) = drawn.get(&(c, ph)) {
                        acc += d;
                    }
                }
                drawn.insert((b, ph), acc);
            }
        }
        flow.clear();
        for (l, line) in net.lines.iter().enumerate() {
            let (from, to) = net.line_ends(l);
            let down = topo.parent_line[to] == Some(l);
            for ph in line.phases.iter() {
                let child = if down { to } else { from };
                let f = drawn[&(child, ph)];
                flow.insert((l, ph), if down { f } else { -f });
            }
        }
        for ph in net.buses[pcc].phases.iter() {
            current.insert((pcc, ph), drawn[&(pcc, ph)]);
        }
        // Forward: voltage drops from the PCC outwards.
        let mut change = 0.0f64;
        for &b in &topo.order {
            if b == pcc {
                continue;
            }
            let l = topo.parent_line[b].expect("non-root bus has a parent line");
            let line = &net.lines[l];
            let parent = topo.parent[b].expect("non-root bus has a parent");
            let (from, _) = net.line_ends(l);
            let phases: Vec<Phase> = line.phases.iter().collect();
            for (r, &ph) in phases.iter().enumerate() {
                let mut drop = Complex64::new(0.0, 0.0);
                for (c, &ps) in phases.iter().enumerate() {
                    drop += line.impedance[r][c] / zb * flow[&(l, ps)];
                }
                // V_from − V_to = Z I_flow
                let vp = voltage[&(parent, ph)];
                let v = if from == parent { vp - drop } else { vp + drop };
                change = change.max((v - voltage[&(b, ph)]).norm());
                voltage.insert((b, ph), v);
            }
        }
        if change <= tol {
            for (b, bus) in net.buses.iter().enumerate() {
                if b == pcc {
                    continue;
                }
                for ph in bus.phases.iter() {
                    let s = injection(b, ph);
                    current.insert((b, ph), (s / voltage[&(b, ph)]).conj());
                }
            }
            return Ok(PowerFlowState {
                voltage,
                current,
                flow,
                iterations: iter,
            });
        }
        if !change.is_finite() {
            break;
        }
    }
    Err(Error::IterationLimit {
        iterations: max_iter,
        residual: f64::NAN,
    })
}
