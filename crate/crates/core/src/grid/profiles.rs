//! Hourly scenario data: loads, PV availability and demand-response limits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BusId, BusKind, Network, Phase};
use crate::error::{Error, Result};

/// Hourly (p_kw, q_kvar) per (bus, phase).
pub type LoadSeries = BTreeMap<(BusId, Phase), Vec<(f64, f64)>>;

/// Per-bus hourly inputs for one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub horizon: usize,
    /// Forecast load per (bus, phase): (p_kw, q_kvar) for every hour, both ≥ 0.
    pub loads: LoadSeries,
    /// Installed PV nameplate per (bus, phase), after penetration scaling.
    pub pv_nameplate_kw: BTreeMap<(BusId, Phase), f64>,
    /// Available PV output per (bus, phase) and hour.
    pub pv_available_kw: BTreeMap<(BusId, Phase), Vec<f64>>,
    /// Demand-response fraction per flexible bus and hour.
    pub alpha_dr: BTreeMap<BusId, Vec<f64>>,
}

impl Profiles {
    pub fn load(&self, bus: BusId, phase: Phase, t: usize) -> (f64, f64) {
        self.loads.get(&(bus, phase)).map_or((0.0, 0.0), |s| s[t])
    }

    pub fn pv(&self, bus: BusId, phase: Phase, t: usize) -> f64 {
        self.pv_available_kw.get(&(bus, phase)).map_or(0.0, |s| s[t])
    }

    pub fn alpha(&self, bus: BusId, t: usize) -> f64 {
        self.alpha_dr.get(&bus).map_or(0.0, |s| s[t])
    }

    /// Total real load per hour, kW.
    pub fn total_load_kw(&self) -> Vec<f64> {
        let mut tot = vec![0.0; self.horizon];
        for series in self.loads.values() {
            for (t, (p, _)) in series.iter().enumerate() {
                tot[t] += p;
            }
        }
        tot
    }

    /// Total available PV per hour, kW.
    pub fn total_pv_kw(&self) -> Vec<f64> {
        let mut tot = vec![0.0; self.horizon];
        for series in self.pv_available_kw.values() {
            for (t, p) in series.iter().enumerate() {
                tot[t] += p;
            }
        }
        tot
    }

    /// Ratio of PV nameplate to mean total load.
    pub fn pv_penetration(&self) -> f64 {
        let load = self.total_load_kw();
        let mean = load.iter().sum::<f64>() / load.len().max(1) as f64;
        self.pv_nameplate_kw.values().sum::<f64>() / mean
    }

    /// Replaces the load section, keeping PV and demand response.
    pub fn with_loads(mut self, loads: LoadSeries) -> Result<Self> {
        for ((bus, ph), s) in &loads {
            if s.len() != self.horizon {
                return Err(Error::Validation(format!(
                    "load for bus {bus} phase {ph}: {} hours, expected {}",
                    s.len(),
                    self.horizon
                )));
            }
        }
        self.loads = loads;
        Ok(self)
    }
}

/// Optional daily load shapes; when given, each load keeps its daily mean
/// but follows the shape of its bus class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadShapes {
    pub residential: Vec<f64>,
    pub commercial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    /// PV output per unit of nameplate, per hour.
    pub solar_shape: Vec<f64>,
    /// Target ratio of PV nameplate to mean system load.
    pub pv_penetration: f64,
    /// Variance of the demand-response time shift, hours².
    pub dr_shift_variance: f64,
    /// Variance of the relative demand-response magnitude perturbation.
    pub dr_scale_variance: f64,
    #[serde(default)]
    pub load_shapes: Option<LoadShapes>,
}

impl ProfileParams {
    pub fn for_horizon(horizon: usize) -> Self {
        ProfileParams {
            solar_shape: solar_bell(horizon),
            pv_penetration: 0.38,
            dr_shift_variance: 0.075,
            dr_scale_variance: 0.1,
            load_shapes: None,
        }
    }
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self::for_horizon(24)
    }
}

/// Clear-sky bell centred at 12:30 with sunrise near 06:00 and sunset near 19:00,
/// peak 0.85 per unit of nameplate. Hour `t` covers [t, t+1).
pub fn solar_bell(horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            let h = (t % 24) as f64 + 0.5;
            let x = (h - 12.5) / 6.5;
            if x.abs() >= 1.0 {
                0.0
            } else {
                0.85 * (std::f64::consts::FRAC_PI_2 * x).cos().powf(1.5)
            }
        })
        .collect()
}

/// Builds scenario profiles. Pure function of `(seed, net, params)`.
pub fn generate_profiles(seed: u64, net: &Network, params: &ProfileParams) -> Result<Profiles> {
    let horizon = net.horizon;
    if params.solar_shape.len() != horizon {
        return Err(Error::Validation(format!(
            "solar shape has {} entries, expected {horizon}",
            params.solar_shape.len()
        )));
    }
    if !(params.dr_shift_variance >= 0.0 && params.dr_scale_variance >= 0.0) {
        return Err(Error::Validation("perturbation variances must be non-negative".into()));
    }

    let mut loads: BTreeMap<(BusId, Phase), Vec<(f64, f64)>> = BTreeMap::new();
    for bus in &net.buses {
        let Some(pid) = &bus.load else { continue };
        let profile = &net.profiles[pid];
        let tan = (1.0 / (profile.pf * profile.pf) - 1.0).max(0.0).sqrt();
        for (&ph, series) in &profile.p_kw {
            let p: Vec<f64> = match (&params.load_shapes, bus.kind) {
                (Some(shapes), kind) => {
                    let shape = if kind == BusKind::Commercial {
                        &shapes.commercial
                    } else {
                        &shapes.residential
                    };
                    if shape.len() != horizon {
                        return Err(Error::Validation("load shape length mismatch".into()));
                    }
                    let mean = series.iter().sum::<f64>() / horizon as f64;
                    let smean = shape.iter().sum::<f64>() / horizon as f64;
                    shape.iter().map(|s| mean * s / smean).collect()
                }
                (None, _) => series.clone(),
            };
            loads.insert((bus.id, ph), p.iter().map(|&p| (p, p * tan)).collect());
        }
    }

    let declared: f64 = net
        .buses
        .iter()
        .filter_map(|b| b.pv())
        .flat_map(|pv| pv.capacity_kw.values())
        .sum();
    let mut pv_nameplate_kw = BTreeMap::new();
    let mut pv_available_kw = BTreeMap::new();
    if params.pv_penetration > 0.0 {
        if declared <= 0.0 {
            return Err(Error::Validation(
                "infeasible penetration target: no PV capacity declared".into(),
            ));
        }
        let mut total = vec![0.0; horizon];
        for s in loads.values() {
            for (t, (p, _)) in s.iter().enumerate() {
                total[t] += p;
            }
        }
        let mean = total.iter().sum::<f64>() / horizon as f64;
        let scale = params.pv_penetration * mean / declared;
        for bus in &net.buses {
            let Some(pv) = bus.pv() else { continue };
            for (&ph, &cap) in &pv.capacity_kw {
                let plate = cap * scale;
                pv_nameplate_kw.insert((bus.id, ph), plate);
                pv_available_kw.insert((bus.id, ph), params.solar_shape.iter().map(|s| plate * s).collect());
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift_dist = Normal::new(0.0, params.dr_shift_variance.sqrt()).map_err(|e| Error::Validation(e.to_string()))?;
    let scale_dist = Normal::new(0.0, params.dr_scale_variance.sqrt()).map_err(|e| Error::Validation(e.to_string()))?;
    let mut alpha_dr = BTreeMap::new();
    for bus in &net.buses {
        let Some(flex) = bus.flex() else { continue };
        let shift: f64 = shift_dist.sample(&mut rng);
        let scale: f64 = 1.0 + scale_dist.sample(&mut rng);
        let alpha = (0..horizon)
            .map(|t| (scale * shifted(&flex.alpha_dr, t as f64 - shift)).clamp(0.0, 1.0))
            .collect();
        alpha_dr.insert(bus.id, alpha);
    }

    Ok(Profiles {
        horizon,
        loads,
        pv_nameplate_kw,
        pv_available_kw,
        alpha_dr,
    })
}

/// Linear interpolation of `series` at fractional hour `x`, held constant past the ends.
fn shifted(series: &[f64], x: f64) -> f64 {
    let last = series.len() - 1;
    if x <= 0.0 {
        return series[0];
    }
    if x >= last as f64 {
        return series[last];
    }
    let i = x.floor() as usize;
    let f = x - i as f64;
    if f == 0.0 {
        series[i]
    } else {
        series[i] * (1.0 - f) + series[i + 1] * f
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    bus: BusId,
    phase: Phase,
    hour: usize,
    p_kw: f64,
    q_kvar: f64,
}

/// Reads a load CSV with columns `bus,phase,hour,p_kw,q_kvar`.
pub fn read_profile_csv(path: impl AsRef<Path>, net: &Network) -> Result<LoadSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profile_rows(file, net)
}

pub(crate) fn read_profile_rows(reader: impl std::io::Read, net: &Network) -> Result<LoadSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut acc: BTreeMap<(BusId, Phase), Vec<Option<(f64, f64)>>> = BTreeMap::new();
    for (line, row) in rdr.deserialize::<ProfileRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("profile csv row {}: {e}", line + 2)))?;
        let bus = net
            .bus(row.bus)
            .ok_or_else(|| Error::Validation(format!("profile csv: unknown bus {}", row.bus)))?;
        if !bus.phases.contains(row.phase) {
            return Err(Error::Validation(format!(
                "profile csv: bus {} has no phase {}",
                row.bus, row.phase
            )));
        }
        if row.hour >= net.horizon {
            return Err(Error::Validation(format!(
                "profile csv: hour {} beyond horizon {}",
                row.hour, net.horizon
            )));
        }
        let slot = &mut acc
            .entry((row.bus, row.phase))
            .or_insert_with(|| vec![None; net.horizon])[row.hour];
        if slot.is_some() {
            return Err(Error::Validation(format!(
                "profile csv: duplicate entry for bus {} phase {} hour {}",
                row.bus, row.phase, row.hour
            )));
        }
        *slot = Some((row.p_kw, row.q_kvar));
    }
    acc.into_iter()
        .map(|(key, hours)| {
            let series: Option<Vec<_>> = hours.into_iter().collect();
            series.map(|s| (key, s)).ok_or_else(|| {
                Error::Validation(format!("profile csv: bus {} phase {} is missing hours", key.0, key.1))
            })
        })
        .collect()
}

pub fn write_profile_csv(path: impl AsRef<Path>, profiles: &Profiles) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    for (&(bus, phase), series) in &profiles.loads {
        for (hour, &(p_kw, q_kvar)) in series.iter().enumerate() {
            w.serialize(ProfileRow {
                bus,
                phase,
                hour,
                p_kw,
                q_kvar,
            })
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_network;

    fn net(pv: bool) -> Network {
        let devices = if pv {
            r#"{"bus": 2, "type": "pv", "capacity_kw": {"a": 3.0}},
               {"bus": 3, "type": "pv", "capacity_kw": {"a": 1.0}},"#
        } else {
            ""
        };
        let alpha: Vec<String> = (0..24)
            .map(|t| format!("{:.2}", if (14..20).contains(&t) { 0.2 } else { 0.05 }))
            .collect();
        let load: Vec<String> = (0..24).map(|t| format!("{}", 10.0 + t as f64)).collect();
        parse_network(&format!(
            r#"{{"name": "g", "base_kva": 100, "base_kv_ln": 2.4, "horizon": 24,
              "buses": [{{"id": 1, "phases": "a", "kind": "pcc"}},
                        {{"id": 2, "phases": "a", "kind": "residential", "load": "l"}},
                        {{"id": 3, "phases": "a", "kind": "residential", "load": "l"}}],
              "lines": [{{"from": 1, "to": 2, "phases": "a", "impedance": [[{{"re": 0.1, "im": 0.1}}]]}},
                        {{"from": 2, "to": 3, "phases": "a", "impedance": [[{{"re": 0.1, "im": 0.1}}]]}}],
              "devices": [{devices}
                          {{"bus": 2, "type": "flex_load", "alpha_dr": [{a}]}},
                          {{"bus": 3, "type": "flex_load", "alpha_dr": [{a}]}}],
              "profiles": [{{"id": "l", "p_kw": {{"a": [{l}]}}}}]}}"#,
            a = alpha.join(","),
            l = load.join(",")
        ))
        .unwrap()
    }

    #[test]
    fn deterministic_for_a_seed() {
        let n = net(true);
        let p = ProfileParams::default();
        let a = generate_profiles(7, &n, &p).unwrap();
        let b = generate_profiles(7, &n, &p).unwrap();
        assert_eq!(a, b);
        let c = generate_profiles(8, &n, &p).unwrap();
        assert_ne!(a.alpha_dr, c.alpha_dr);
    }

    #[test]
    fn penetration_hits_target() {
        let p = generate_profiles(1, &net(true), &ProfileParams::default()).unwrap();
        let r = p.pv_penetration();
        assert!((0.376..=0.384).contains(&r), "{r}");
        // Relative split between PV units is preserved.
        assert!((p.pv_nameplate_kw[&(2, Phase::A)] / p.pv_nameplate_kw[&(3, Phase::A)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_keeps_baseline_dr() {
        let n = net(true);
        let params = ProfileParams {
            dr_shift_variance: 0.0,
            dr_scale_variance: 0.0,
            ..ProfileParams::default()
        };
        let p = generate_profiles(3, &n, &params).unwrap();
        for bus in [2, 3] {
            assert_eq!(p.alpha_dr[&bus], n.bus(bus).unwrap().flex().unwrap().alpha_dr);
        }
    }

    #[test]
    fn load_power_factor_is_applied() {
        let p = generate_profiles(3, &net(true), &ProfileParams::default()).unwrap();
        let (pk, qk) = p.load(2, Phase::A, 5);
        assert!((pk / (pk * pk + qk * qk).sqrt() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn missing_pv_is_an_error() {
        let err = generate_profiles(3, &net(false), &ProfileParams::default()).unwrap_err();
        assert!(err.to_string().contains("no PV capacity"));
    }

    #[test]
    fn csv_roundtrip() {
        let n = net(true);
        let p = generate_profiles(3, &n, &ProfileParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        write_profile_csv(&path, &p).unwrap();
        let back = read_profile_csv(&path, &n).unwrap();
        assert_eq!(back, p.loads);
    }

    #[test]
    fn csv_with_gaps_is_rejected() {
        let n = net(true);
        let text = "bus,phase,hour,p_kw,q_kvar\n2,a,0,1.0,0.3\n";
        let err = read_profile_rows(text.as_bytes(), &n).unwrap_err();
        assert!(err.to_string().contains("missing hours"), "{err}");
    }
}
