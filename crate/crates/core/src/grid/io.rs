//! JSON network file reader.
//!
//! Layout:
//!
//! ```text
//! {
//!   "name": "...", "base_kva": 1000.0, "base_kv_ln": 14.376, "horizon": 24,
//!   "voltage": {"v_min": 0.95, "v_max": 1.05, "angle_window_deg": 5.0},   (optional)
//!   "buses":    [{"id": 1, "phases": "abc", "kind": "pcc", "load": null}],
//!   "lines":    [{"from": 1, "to": 2, "phases": "abc",
//!                 "impedance": [[{"re": 0.1, "im": 0.2}, ...], ...]}],
//!   "devices":  [{"bus": 3, "type": "pv", "capacity_kw": {"a": 10.0}, "pf_min": 0.8},
//!                {"bus": 3, "type": "flex_load", "alpha_dr": [...]},
//!                {"bus": 6, "type": "battery", "p_sc_max_kw": ..., ...}],
//!   "profiles": [{"id": "res-3", "pf": 0.95, "p_kw": {"a": [...], "b": [...]}}],
//!   "clusters": [[3, 4, 5, 6], ...]                                         (optional)
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use super::{
    BatterySpec, Bus, BusId, BusKind, DeviceSpec, FlexLoadSpec, Line, LoadProfile, Network, Phase, PvSpec,
    VoltageLimits,
};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    name: String,
    base_kva: f64,
    base_kv_ln: f64,
    horizon: usize,
    #[serde(default)]
    voltage: Option<VoltageLimits>,
    buses: Vec<BusRecord>,
    lines: Vec<LineRecord>,
    #[serde(default)]
    devices: Vec<DeviceRecord>,
    #[serde(default)]
    profiles: Vec<ProfileRecord>,
    #[serde(default)]
    clusters: Vec<Vec<BusId>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: BusId,
    phases: String,
    kind: BusKind,
    #[serde(default)]
    load: Option<String>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct ComplexRecord {
    re: f64,
    im: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    from: BusId,
    to: BusId,
    phases: String,
    impedance: Vec<Vec<ComplexRecord>>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum DeviceRecord {
    Pv {
        bus: BusId,
        capacity_kw: BTreeMap<Phase, f64>,
        #[serde(default = "default_pf_min")]
        pf_min: f64,
    },
    FlexLoad {
        bus: BusId,
        alpha_dr: Vec<f64>,
    },
    Battery {
        bus: BusId,
        p_sc_max_kw: f64,
        p_sd_max_kw: f64,
        b_max_kwh: f64,
        b_min_kwh: f64,
        b0_kwh: f64,
        eta_c: f64,
        eta_d: f64,
        eta_self: f64,
    },
}

fn default_pf_min() -> f64 {
    0.8
}

fn default_pf() -> f64 {
    0.95
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRecord {
    id: String,
    #[serde(default = "default_pf")]
    pf: f64,
    p_kw: BTreeMap<Phase, Vec<f64>>,
}

/// Reads and validates a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text)
}

pub fn parse_network(text: &str) -> Result<Network> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

    let mut buses = Vec::with_capacity(file.buses.len());
    for b in file.buses {
        let phases = b
            .phases
            .parse()
            .map_err(|e| Error::Parse(format!("bus {}: {e}", b.id)))?;
        buses.push(Bus {
            id: b.id,
            phases,
            kind: b.kind,
            load: b.load,
            devices: Vec::new(),
        });
    }

    let mut lines = Vec::with_capacity(file.lines.len());
    for (k, l) in file.lines.into_iter().enumerate() {
        let phases = l
            .phases
            .parse()
            .map_err(|e| Error::Parse(format!("line {k} ({}->{}): {e}", l.from, l.to)))?;
        let impedance = l
            .impedance
            .iter()
            .map(|row| row.iter().map(|z| Complex64::new(z.re, z.im)).collect())
            .collect();
        lines.push(Line {
            from: l.from,
            to: l.to,
            phases,
            impedance,
        });
    }

    for d in file.devices {
        let (bus, spec) = match d {
            DeviceRecord::Pv {
                bus,
                capacity_kw,
                pf_min,
            } => (bus, DeviceSpec::Pv(PvSpec { capacity_kw, pf_min })),
            DeviceRecord::FlexLoad { bus, alpha_dr } => (bus, DeviceSpec::FlexLoad(FlexLoadSpec { alpha_dr })),
            DeviceRecord::Battery {
                bus,
                p_sc_max_kw,
                p_sd_max_kw,
                b_max_kwh,
                b_min_kwh,
                b0_kwh,
                eta_c,
                eta_d,
                eta_self,
            } => (
                bus,
                DeviceSpec::Battery(BatterySpec {
                    p_sc_max_kw,
                    p_sd_max_kw,
                    b_max_kwh,
                    b_min_kwh,
                    b0_kwh,
                    eta_c,
                    eta_d,
                    eta_self,
                }),
            ),
        };
        let target = buses
            .iter_mut()
            .find(|b| b.id == bus)
            .ok_or_else(|| Error::Validation(format!("device attached to unknown bus {bus}")))?;
        target.devices.push(spec);
    }

    let mut profiles = BTreeMap::new();
    for p in file.profiles {
        let id = p.id.clone();
        let profile = LoadProfile {
            id: p.id,
            pf: p.pf,
            p_kw: p.p_kw,
        };
        if profiles.insert(id.clone(), profile).is_some() {
            return Err(Error::Validation(format!("duplicate profile id {id}")));
        }
    }

    Network::new(
        file.name,
        file.base_kva,
        file.base_kv_ln,
        file.horizon,
        file.voltage.unwrap_or_default(),
        buses,
        lines,
        profiles,
        file.clusters,
    )
}
