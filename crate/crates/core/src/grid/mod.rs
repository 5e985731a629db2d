//! Multi-phase radial feeder model.
//!
//! A [`Network`] is validated once on construction and is immutable afterwards.
//! All quantities are kept in the physical units of the input file (kW, kVAr,
//! kWh, Ω); per-unit conversion happens when the optimization problem is
//! assembled.

mod io;
mod matrices;
mod powerflow;
mod profiles;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_network, parse_network};
pub use matrices::{impedance_blockmatrix, incidence_matrix, BlockMatrix, PhaseSlot};
pub use powerflow::{sweep, PowerFlowState};
pub use profiles::{
    generate_profiles, read_profile_csv, write_profile_csv, LoadSeries, LoadShapes, ProfileParams, Profiles,
};

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Nominal angle of the phase voltage, in degrees.
    pub fn nominal_angle_deg(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -120.0,
            Phase::C => 120.0,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }

    pub fn from_char(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Non-empty subset of {a, b, c}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn new(phases: &[Phase]) -> Result<Self> {
        let mut bits = 0u8;
        for p in phases {
            bits |= 1 << p.index();
        }
        if bits == 0 {
            return Err(Error::Validation("phase set must not be empty".into()));
        }
        Ok(PhaseSet(bits))
    }

    pub fn single(phase: Phase) -> Self {
        PhaseSet(1 << phase.index())
    }

    pub fn contains(self, phase: Phase) -> bool {
        self.0 & (1 << phase.index()) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `phase` within this set, counting in a, b, c order.
    pub fn position(self, phase: Phase) -> Option<usize> {
        self.iter().position(|p| p == phase)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PhaseSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut phases = Vec::new();
        for c in s.chars() {
            let p = Phase::from_char(c).ok_or_else(|| Error::Parse(format!("invalid phase '{c}' in \"{s}\"")))?;
            if phases.contains(&p) {
                return Err(Error::Parse(format!("repeated phase '{c}' in \"{s}\"")));
            }
            phases.push(p);
        }
        PhaseSet::new(&phases)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Residential,
    Commercial,
    Pcc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvSpec {
    pub capacity_kw: BTreeMap<Phase, f64>,
    pub pf_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexLoadSpec {
    /// Fraction of the forecast real load that may be shed, per hour.
    pub alpha_dr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatterySpec {
    pub p_sc_max_kw: f64,
    pub p_sd_max_kw: f64,
    pub b_max_kwh: f64,
    pub b_min_kwh: f64,
    pub b0_kwh: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub eta_self: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceSpec {
    Pv(PvSpec),
    FlexLoad(FlexLoadSpec),
    Battery(BatterySpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub phases: PhaseSet,
    pub kind: BusKind,
    pub load: Option<String>,
    pub devices: Vec<DeviceSpec>,
}

impl Bus {
    pub fn pv(&self) -> Option<&PvSpec> {
        self.devices.iter().find_map(|d| match d {
            DeviceSpec::Pv(pv) => Some(pv),
            _ => None,
        })
    }

    pub fn flex(&self) -> Option<&FlexLoadSpec> {
        self.devices.iter().find_map(|d| match d {
            DeviceSpec::FlexLoad(f) => Some(f),
            _ => None,
        })
    }

    pub fn battery(&self) -> Option<&BatterySpec> {
        self.devices.iter().find_map(|d| match d {
            DeviceSpec::Battery(b) => Some(b),
            _ => None,
        })
    }

    pub fn battery_mut(&mut self) -> Option<&mut BatterySpec> {
        self.devices.iter_mut().find_map(|d| match d {
            DeviceSpec::Battery(b) => Some(b),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub phases: PhaseSet,
    /// Square block over `phases` (a, b, c order), in ohms.
    pub impedance: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub id: String,
    pub pf: f64,
    pub p_kw: BTreeMap<Phase, Vec<f64>>,
}

/// Operating envelope used by bound pre-processing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub angle_window_deg: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        VoltageLimits {
            v_min: 0.9,
            v_max: 1.1,
            angle_window_deg: 30.0,
        }
    }
}

/// Parent/child relations of the radial tree rooted at the PCC.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// Bus indices in breadth-first order from the PCC.
    pub order: Vec<usize>,
    /// Line index connecting each bus to its parent (None for the PCC).
    pub parent_line: Vec<Option<usize>>,
    pub parent: Vec<Option<usize>>,
    pub child_lines: Vec<Vec<usize>>,
    pub depth: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    /// Per-phase power base, kVA.
    pub base_kva: f64,
    /// Line-to-neutral voltage base, kV.
    pub base_kv_ln: f64,
    pub horizon: usize,
    pub voltage: VoltageLimits,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub profiles: BTreeMap<String, LoadProfile>,
    pub clusters: Vec<Vec<BusId>>,
    bus_index: HashMap<BusId, usize>,
    topology: Topology,
}

impl Network {
    /// Validates all structural invariants and builds the tree topology.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        base_kva: f64,
        base_kv_ln: f64,
        horizon: usize,
        voltage: VoltageLimits,
        buses: Vec<Bus>,
        lines: Vec<Line>,
        profiles: BTreeMap<String, LoadProfile>,
        clusters: Vec<Vec<BusId>>,
    ) -> Result<Self> {
        if !(base_kva > 0.0 && base_kva.is_finite()) {
            return Err(Error::Validation("base_kva must be positive".into()));
        }
        if !(base_kv_ln > 0.0 && base_kv_ln.is_finite()) {
            return Err(Error::Validation("base_kv_ln must be positive".into()));
        }
        if horizon == 0 {
            return Err(Error::Validation("horizon must be at least one hour".into()));
        }
        if !(voltage.v_min >= 0.0 && voltage.v_max >= voltage.v_min && voltage.v_max.is_finite()) {
            return Err(Error::Validation(format!(
                "voltage band [{}, {}] is not ordered",
                voltage.v_min, voltage.v_max
            )));
        }
        if !(0.0..90.0).contains(&voltage.angle_window_deg) {
            return Err(Error::Validation(format!(
                "angle window {} deg outside [0, 90)",
                voltage.angle_window_deg
            )));
        }

        let mut bus_index = HashMap::new();
        for (i, b) in buses.iter().enumerate() {
            if bus_index.insert(b.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        let pcc: Vec<_> = buses.iter().filter(|b| b.kind == BusKind::Pcc).collect();
        if pcc.len() != 1 {
            return Err(Error::Validation(format!(
                "exactly one pcc bus required, found {}",
                pcc.len()
            )));
        }

        for (k, line) in lines.iter().enumerate() {
            let tag = format!("line {k} ({}->{})", line.from, line.to);
            for end in [line.from, line.to] {
                let Some(&bi) = bus_index.get(&end) else {
                    return Err(Error::Validation(format!("{tag}: unknown bus {end}")));
                };
                if !line.phases.is_subset_of(buses[bi].phases) {
                    let missing: String = line
                        .phases
                        .iter()
                        .filter(|p| !buses[bi].phases.contains(*p))
                        .map(|p| p.as_char())
                        .collect();
                    return Err(Error::Validation(format!(
                        "{tag}: phase mismatch, phase(s) {missing} not present at bus {end}"
                    )));
                }
            }
            if line.from == line.to {
                return Err(Error::Validation(format!("{tag}: self loop")));
            }
            validate_impedance(&tag, line)?;
        }

        if lines.len() + 1 != buses.len() {
            return Err(Error::Validation(format!(
                "network is not radial: {} buses but {} lines",
                buses.len(),
                lines.len()
            )));
        }

        let topology = build_topology(&buses, &lines, &bus_index)?;

        for (i, bus) in buses.iter().enumerate() {
            if let Some(pl) = topology.parent_line[i] {
                if lines[pl].phases != bus.phases {
                    return Err(Error::Validation(format!(
                        "bus {}: phases {} not all served by its parent line ({})",
                        bus.id, bus.phases, lines[pl].phases
                    )));
                }
            }
        }

        for p in profiles.values() {
            if !(p.pf > 0.0 && p.pf <= 1.0) {
                return Err(Error::Validation(format!(
                    "profile {}: power factor {} outside (0, 1]",
                    p.id, p.pf
                )));
            }
            for (ph, series) in &p.p_kw {
                if series.len() != horizon {
                    return Err(Error::Validation(format!(
                        "profile {} phase {ph}: {} entries, expected {horizon}",
                        p.id,
                        series.len()
                    )));
                }
                if series.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Validation(format!(
                        "profile {} phase {ph}: loads must be finite and non-negative",
                        p.id
                    )));
                }
            }
        }

        for bus in &buses {
            validate_bus_devices(bus, horizon, &profiles)?;
        }

        let mut seen = HashMap::new();
        for (c, cluster) in clusters.iter().enumerate() {
            if cluster.is_empty() {
                return Err(Error::Validation(format!("cluster {c} is empty")));
            }
            for id in cluster {
                if !bus_index.contains_key(id) {
                    return Err(Error::Validation(format!("cluster {c}: unknown bus {id}")));
                }
                if let Some(prev) = seen.insert(*id, c) {
                    return Err(Error::Validation(format!("bus {id} listed in clusters {prev} and {c}")));
                }
            }
        }

        Ok(Network {
            name,
            base_kva,
            base_kv_ln,
            horizon,
            voltage,
            buses,
            lines,
            profiles,
            clusters,
            bus_index,
            topology,
        })
    }

    pub fn bus_idx(&self, id: BusId) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.bus_idx(id).map(|i| &self.buses[i])
    }

    pub fn pcc_index(&self) -> usize {
        self.topology.order[0]
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Base impedance in ohms.
    pub fn base_ohm(&self) -> f64 {
        let v = self.base_kv_ln * 1e3;
        v * v / (self.base_kva * 1e3)
    }

    /// Buses in the subtree rooted at `bus_idx` (inclusive).
    pub fn subtree(&self, bus_idx: usize) -> Vec<usize> {
        let mut out = vec![bus_idx];
        let mut k = 0;
        while k < out.len() {
            let b = out[k];
            for &l in &self.topology.child_lines[b] {
                out.push(self.other_end(l, b));
            }
            k += 1;
        }
        out
    }

    /// Bus index at the opposite end of line `line` from `bus_idx`.
    pub fn other_end(&self, line: usize, bus_idx: usize) -> usize {
        let l = &self.lines[line];
        let f = self.bus_index[&l.from];
        if f == bus_idx {
            self.bus_index[&l.to]
        } else {
            f
        }
    }

    pub fn line_ends(&self, line: usize) -> (usize, usize) {
        let l = &self.lines[line];
        (self.bus_index[&l.from], self.bus_index[&l.to])
    }

    /// Number of lines incident to each bus.
    pub fn bus_degree(&self, bus_idx: usize) -> usize {
        self.topology.child_lines[bus_idx].len() + usize::from(self.topology.parent_line[bus_idx].is_some())
    }

    /// Returns a copy with battery initial state of charge overridden per bus id.
    pub fn with_battery_b0(&self, b0: &[(BusId, f64)]) -> Result<Network> {
        let mut net = self.clone();
        for &(id, value) in b0 {
            let idx = net
                .bus_idx(id)
                .ok_or_else(|| Error::Validation(format!("unknown bus {id}")))?;
            let bat = net.buses[idx]
                .battery_mut()
                .ok_or_else(|| Error::Validation(format!("bus {id} has no battery")))?;
            if value < bat.b_min_kwh || value > bat.b_max_kwh {
                return Err(Error::Validation(format!(
                    "bus {id}: initial charge {value} kWh outside [{}, {}]",
                    bat.b_min_kwh, bat.b_max_kwh
                )));
            }
            bat.b0_kwh = value;
        }
        Ok(net)
    }

    pub fn battery_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| b.battery().is_some())
            .map(|b| b.id)
            .collect()
    }
}

fn validate_impedance(tag: &str, line: &Line) -> Result<()> {
    let n = line.phases.len();
    if line.impedance.len() != n || line.impedance.iter().any(|r| r.len() != n) {
        return Err(Error::Validation(format!(
            "{tag}: impedance block must be {n}x{n} for phases {}",
            line.phases
        )));
    }
    let scale = line
        .impedance
        .iter()
        .flatten()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(1e-12);
    for i in 0..n {
        if !(line.impedance[i][i].re > 0.0) {
            return Err(Error::Validation(format!(
                "{tag}: diagonal resistance must be positive"
            )));
        }
        for j in 0..n {
            let z = line.impedance[i][j];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Validation(format!("{tag}: non-finite impedance")));
            }
            if (z - line.impedance[j][i]).norm() > 1e-9 * scale {
                return Err(Error::Validation(format!("{tag}: impedance block is not symmetric")));
            }
        }
    }
    Ok(())
}

fn validate_bus_devices(bus: &Bus, horizon: usize, profiles: &BTreeMap<String, LoadProfile>) -> Result<()> {
    let tag = format!("bus {}", bus.id);
    if let Some(load) = &bus.load {
        let p = profiles
            .get(load)
            .ok_or_else(|| Error::Validation(format!("{tag}: unknown load profile {load}")))?;
        for ph in p.p_kw.keys() {
            if !bus.phases.contains(*ph) {
                return Err(Error::Validation(format!(
                    "{tag}: profile {load} has phase {ph} not present at the bus"
                )));
            }
        }
    }
    let (mut npv, mut nflex, mut nbat) = (0, 0, 0);
    for d in &bus.devices {
        match d {
            DeviceSpec::Pv(pv) => {
                npv += 1;
                if !(0.8..=1.0).contains(&pv.pf_min) {
                    return Err(Error::Validation(format!(
                        "{tag}: pv pf_min {} outside [0.8, 1]",
                        pv.pf_min
                    )));
                }
                for (ph, cap) in &pv.capacity_kw {
                    if !bus.phases.contains(*ph) {
                        return Err(Error::Validation(format!(
                            "{tag}: pv capacity on phase {ph} not present at the bus"
                        )));
                    }
                    if !(*cap >= 0.0 && cap.is_finite()) {
                        return Err(Error::Validation(format!("{tag}: pv capacity must be non-negative")));
                    }
                }
            }
            DeviceSpec::FlexLoad(f) => {
                nflex += 1;
                if bus.load.is_none() {
                    return Err(Error::Validation(format!(
                        "{tag}: flexible load declared without a load profile"
                    )));
                }
                if f.alpha_dr.len() != horizon {
                    return Err(Error::Validation(format!(
                        "{tag}: alpha_dr has {} entries, expected {horizon}",
                        f.alpha_dr.len()
                    )));
                }
                if f.alpha_dr.iter().any(|a| !(0.0..=1.0).contains(a)) {
                    return Err(Error::Validation(format!("{tag}: alpha_dr values must lie in [0, 1]")));
                }
            }
            DeviceSpec::Battery(b) => {
                nbat += 1;
                let rates = [b.p_sc_max_kw, b.p_sd_max_kw, b.b_max_kwh, b.b_min_kwh];
                if rates.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::Validation(format!(
                        "{tag}: battery ratings must be finite and non-negative"
                    )));
                }
                if !(b.b_min_kwh <= b.b0_kwh && b.b0_kwh <= b.b_max_kwh) {
                    return Err(Error::Validation(format!(
                        "{tag}: battery requires b_min <= b0 <= b_max, got {} <= {} <= {}",
                        b.b_min_kwh, b.b0_kwh, b.b_max_kwh
                    )));
                }
                if !(b.eta_c > 0.0 && b.eta_c <= 1.0 && b.eta_d > 0.0 && b.eta_d <= 1.0) {
                    return Err(Error::Validation(format!(
                        "{tag}: battery efficiencies must lie in (0, 1]"
                    )));
                }
                if !(0.0..1.0).contains(&b.eta_self) {
                    return Err(Error::Validation(format!(
                        "{tag}: self-discharge rate must lie in [0, 1)"
                    )));
                }
            }
        }
    }
    if npv > 1 || nflex > 1 || nbat > 1 {
        return Err(Error::Validation(format!(
            "{tag}: at most one device of each type per bus"
        )));
    }
    Ok(())
}

fn build_topology(buses: &[Bus], lines: &[Line], bus_index: &HashMap<BusId, usize>) -> Result<Topology> {
    let n = buses.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, l) in lines.iter().enumerate() {
        adj[bus_index[&l.from]].push(k);
        adj[bus_index[&l.to]].push(k);
    }
    let root = buses
        .iter()
        .position(|b| b.kind == BusKind::Pcc)
        .expect("pcc checked by caller");
    let mut parent_line = vec![None; n];
    let mut parent = vec![None; n];
    let mut child_lines = vec![Vec::new(); n];
    let mut depth = vec![0; n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([root]);
    visited[root] = true;
    while let Some(b) = queue.pop_front() {
        order.push(b);
        for &k in &adj[b] {
            let l = &lines[k];
            let (f, t) = (bus_index[&l.from], bus_index[&l.to]);
            let other = if f == b { t } else { f };
            if Some(k) == parent_line[b] {
                continue;
            }
            if visited[other] {
                return Err(Error::Validation(format!(
                    "network contains a cycle through line {k} ({}->{})",
                    l.from, l.to
                )));
            }
            visited[other] = true;
            parent_line[other] = Some(k);
            parent[other] = Some(b);
            depth[other] = depth[b] + 1;
            child_lines[b].push(k);
            queue.push_back(other);
        }
    }
    if let Some(i) = visited.iter().position(|v| !v) {
        return Err(Error::Validation(format!(
            "network is not connected: bus {} unreachable from the pcc",
            buses[i].id
        )));
    }
    Ok(Topology {
        order,
        parent_line,
        parent,
        child_lines,
        depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_set_parsing() {
        let s: PhaseSet = "ac".parse().unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.contains(Phase::A) && !s.contains(Phase::B));
        assert_eq!(s.to_string(), "ac");
        assert_eq!(s.position(Phase::C), Some(1));
        assert!("".parse::<PhaseSet>().is_err());
        assert!("abd".parse::<PhaseSet>().is_err());
        assert!("aa".parse::<PhaseSet>().is_err());
        assert!(PhaseSet::single(Phase::B).is_subset_of(PhaseSet::ABC));
    }
}
