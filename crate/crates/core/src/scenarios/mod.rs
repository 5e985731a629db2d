//! Baseline, local and coordinated dispatch of a feeder over one day, and the
//! ramping metrics used to compare them.

mod distributed;
mod local;
mod output;
mod sweep;

pub use distributed::{run_central, run_distributed, AtomGrouping, DistributedConfig};
pub use local::{agent_problem, local_agents, run_local};
pub use output::{write_pcc_csv, write_ramp_csv, write_soc_csv, write_sweep_csv};
pub use sweep::{soc_sweep, SocCase, SocCaseResult};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BusId, Network, Profiles};
use crate::pac::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioTag {
    /// No decisions: unity-pf PV, no storage, no demand response.
    A,
    /// Each agent shaves its own peak.
    B,
    /// Network-wide ramp minimization with the distributed solver.
    C,
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioTag::A => "A",
            ScenarioTag::B => "B",
            ScenarioTag::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for ScenarioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ScenarioTag::A),
            "B" | "b" => Ok(ScenarioTag::B),
            "C" | "c" => Ok(ScenarioTag::C),
            other => Err(Error::Validation(format!(
                "unknown scenario {other:?}, expected A, B or C"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryTrace {
    pub bus: BusId,
    /// State of charge at the end of each hour.
    pub soc_kwh: Vec<f64>,
    pub charge_kw: Vec<f64>,
    pub discharge_kw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub atoms: usize,
    pub rounds: usize,
    pub converged: bool,
    pub eq_residual: f64,
    pub coord_residual: f64,
    /// Total PCC ramping seen by the solver, loss-inclusive, kW.
    pub objective_kw: f64,
    pub inner_iterations: usize,
    pub messages: usize,
}

/// One scenario's day. Every series has one entry per hour; power in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub tag: ScenarioTag,
    /// Power drawn from the bulk grid, summed over phases, without line losses.
    pub pcc_kw: Vec<f64>,
    /// Power drawn at the PCC including the modelled losses.
    pub pcc_with_losses_kw: Vec<f64>,
    /// Load actually served, after demand response.
    pub load_kw: Vec<f64>,
    pub pv_kw: Vec<f64>,
    /// Net battery charging (charge − discharge).
    pub battery_kw: Vec<f64>,
    /// Zero where the network is not modelled.
    pub losses_kw: Vec<f64>,
    pub batteries: Vec<BatteryTrace>,
    pub agents: usize,
    /// Wall-clock timing, the only non-deterministic field.
    pub mean_agent_seconds: f64,
    pub solver: Option<SolverSummary>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl ScenarioResult {
    pub fn horizon(&self) -> usize {
        self.pcc_kw.len()
    }

    /// Signed hour-to-hour changes of the PCC series, T − 1 entries.
    pub fn deltas_kw(&self) -> Vec<f64> {
        deltas(&self.pcc_kw)
    }

    pub fn ramps_kw(&self) -> Vec<f64> {
        self.deltas_kw().iter().map(|d| d.abs()).collect()
    }

    pub fn total_ramping_kw(&self) -> f64 {
        self.ramps_kw().iter().sum()
    }

    /// Largest hourly mismatch of PCC + PV − load − battery − losses.
    pub fn energy_residual_kw(&self) -> f64 {
        (0..self.horizon())
            .map(|t| {
                (self.pcc_with_losses_kw[t] + self.pv_kw[t] - self.load_kw[t] - self.battery_kw[t] - self.losses_kw[t])
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn deltas(series: &[f64]) -> Vec<f64> {
    series.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Percent reduction of `x` relative to `base`.
pub fn reduction_pct(base: f64, x: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (base - x) / base
    }
}

/// Net load with no decisions taken: every load in full, PV at unity power
/// factor, batteries and demand response idle.
pub fn run_baseline(net: &Network, profiles: &Profiles) -> ScenarioResult {
    let load = profiles.total_load_kw();
    let pv = profiles.total_pv_kw();
    let pcc: Vec<f64> = load.iter().zip(&pv).map(|(l, g)| l - g).collect();
    let t = profiles.horizon;
    let agents = local_agents(net).len();
    ScenarioResult {
        tag: ScenarioTag::A,
        pcc_with_losses_kw: pcc.clone(),
        pcc_kw: pcc,
        load_kw: load,
        pv_kw: pv,
        battery_kw: vec![0.0; t],
        losses_kw: vec![0.0; t],
        batteries: Vec::new(),
        agents,
        mean_agent_seconds: 0.0,
        solver: None,
        trace: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub tag: ScenarioTag,
    pub total_ramping_kw: f64,
    pub reduction_pct: f64,
    pub peak_hour_ramp_kw: f64,
    pub peak_hour_reduction_pct: f64,
    pub agents: usize,
    pub mean_agent_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: ScenarioTag,
    /// Hour that ends the baseline's steepest up-ramp.
    pub peak_hour: usize,
    pub rows: Vec<ComparisonRow>,
}

/// Ramping of each result against the baseline. Everything is recomputed from
/// the PCC series.
pub fn compare(results: &[ScenarioResult], baseline: ScenarioTag) -> Result<Comparison> {
    if results.len() < 2 {
        return Err(Error::Validation("comparison needs at least two results".into()));
    }
    let base = results
        .iter()
        .find(|r| r.tag == baseline)
        .ok_or_else(|| Error::Validation(format!("baseline scenario {baseline} not among the results")))?;
    let horizon = base.horizon();
    if horizon < 2 {
        return Err(Error::Validation("ramping needs at least two hours".into()));
    }
    if let Some(r) = results.iter().find(|r| r.horizon() != horizon) {
        return Err(Error::Dimension(format!(
            "scenario {} covers {} hours, baseline {horizon}",
            r.tag,
            r.horizon()
        )));
    }
    let base_deltas = base.deltas_kw();
    let mut k = 0;
    for (i, d) in base_deltas.iter().enumerate() {
        if *d > base_deltas[k] {
            k = i;
        }
    }
    let base_total = base.total_ramping_kw();
    let base_peak = base_deltas[k].abs();
    let rows = results
        .iter()
        .map(|r| {
            let total = r.total_ramping_kw();
            let peak = r.deltas_kw()[k].abs();
            ComparisonRow {
                tag: r.tag,
                total_ramping_kw: total,
                reduction_pct: reduction_pct(base_total, total),
                peak_hour_ramp_kw: peak,
                peak_hour_reduction_pct: reduction_pct(base_peak, peak),
                agents: r.agents,
                mean_agent_seconds: r.mean_agent_seconds,
            }
        })
        .collect();
    Ok(Comparison {
        baseline,
        peak_hour: k + 1,
        rows,
    })
}

/// Replays the storage recursion from each battery's initial charge with the
/// stored charge and discharge series; returns the largest gap to the stored
/// state of charge, kWh.
pub fn soc_replay_error_kwh(net: &Network, result: &ScenarioResult) -> Result<f64> {
    let mut worst = 0.0f64;
    for trace in &result.batteries {
        let bat = net
            .bus(trace.bus)
            .and_then(|b| b.battery())
            .ok_or_else(|| Error::Validation(format!("bus {} has no battery", trace.bus)))?;
        let mut b = bat.b0_kwh;
        for t in 0..trace.soc_kwh.len() {
            b = (1.0 - bat.eta_self) * b + bat.eta_c * trace.charge_kw[t] - trace.discharge_kw[t] / bat.eta_d;
            worst = worst.max((b - trace.soc_kwh[t]).abs());
        }
    }
    Ok(worst)
}

/// Largest excursion of any stored state of charge outside its box, kWh.
pub fn soc_box_violation_kwh(net: &Network, result: &ScenarioResult) -> Result<f64> {
    let mut worst = 0.0f64;
    for trace in &result.batteries {
        let bat = net
            .bus(trace.bus)
            .and_then(|b| b.battery())
            .ok_or_else(|| Error::Validation(format!("bus {} has no battery", trace.bus)))?;
        for &s in &trace.soc_kwh {
            worst = worst.max(bat.b_min_kwh - s).max(s - bat.b_max_kwh);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(tag: ScenarioTag, pcc: &[f64]) -> ScenarioResult {
        let t = pcc.len();
        ScenarioResult {
            tag,
            pcc_kw: pcc.to_vec(),
            pcc_with_losses_kw: pcc.to_vec(),
            load_kw: pcc.to_vec(),
            pv_kw: vec![0.0; t],
            battery_kw: vec![0.0; t],
            losses_kw: vec![0.0; t],
            batteries: Vec::new(),
            agents: 1,
            mean_agent_seconds: 0.0,
            solver: None,
            trace: Vec::new(),
        }
    }

    #[test]
    fn total_ramping_sums_magnitudes() {
        let r = result(ScenarioTag::A, &[100.0, 150.0, 90.0]);
        assert_eq!(r.ramps_kw(), vec![50.0, 60.0]);
        assert_eq!(r.total_ramping_kw(), 110.0);
        assert_eq!(r.energy_residual_kw(), 0.0);
    }

    #[test]
    fn reductions_match_reported_figures() {
        assert!((reduction_pct(3923.7, 2839.4) - 27.63).abs() < 0.005);
        assert!((reduction_pct(3923.7, 3941.0) + 0.44).abs() < 0.005);
    }

    #[test]
    fn identical_results_give_no_reduction() {
        let a = result(ScenarioTag::A, &[1.0, 4.0, 2.0, 7.0]);
        let mut c = a.clone();
        c.tag = ScenarioTag::C;
        let cmp = compare(&[a, c], ScenarioTag::A).unwrap();
        assert_eq!(cmp.peak_hour, 3);
        for row in &cmp.rows {
            assert_eq!(row.reduction_pct, 0.0);
            assert_eq!(row.peak_hour_reduction_pct, 0.0);
        }
    }

    #[test]
    fn peak_hour_is_the_steepest_baseline_up_ramp() {
        let a = result(ScenarioTag::A, &[10.0, 2.0, 5.0, 25.0, 20.0]);
        let c = result(ScenarioTag::C, &[10.0, 9.0, 8.0, 18.0, 19.0]);
        let cmp = compare(&[a, c], ScenarioTag::A).unwrap();
        assert_eq!(cmp.peak_hour, 3);
        let row = &cmp.rows[1];
        assert!((row.peak_hour_reduction_pct - 50.0).abs() < 1e-12);
        assert!((row.reduction_pct - reduction_pct(36.0, 13.0)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_horizons_are_rejected() {
        let a = result(ScenarioTag::A, &[1.0, 2.0, 3.0]);
        let b = result(ScenarioTag::B, &[1.0, 2.0]);
        assert!(matches!(
            compare(&[a.clone(), b], ScenarioTag::A),
            Err(Error::Dimension(_))
        ));
        assert!(compare(std::slice::from_ref(&a), ScenarioTag::A).is_err());
        assert!(compare(&[a.clone(), a], ScenarioTag::C).is_err());
    }

    #[test]
    fn tags_parse() {
        assert_eq!("b".parse::<ScenarioTag>().unwrap(), ScenarioTag::B);
        assert!("D".parse::<ScenarioTag>().is_err());
    }
}
