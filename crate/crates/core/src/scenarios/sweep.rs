use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{run_distributed, DistributedConfig, ScenarioResult};
use crate::error::{Error, Result};
use crate::grid::{BusId, Network, Profiles};

/// Initial charge of the three batteries, in ascending bus order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocCase {
    Min,
    Mid,
    Full,
}

impl SocCase {
    pub const ALL: [SocCase; 3] = [SocCase::Min, SocCase::Mid, SocCase::Full];

    pub fn b0_kwh(self) -> [f64; 3] {
        match self {
            SocCase::Min => [45.0, 0.0, 160.0],
            SocCase::Mid => [120.0, 400.0, 400.0],
            SocCase::Full => [450.0, 540.0, 800.0],
        }
    }
}

impl fmt::Display for SocCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SocCase::Min => "min",
            SocCase::Mid => "mid",
            SocCase::Full => "full",
        })
    }
}

impl FromStr for SocCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "min" => Ok(SocCase::Min),
            "mid" => Ok(SocCase::Mid),
            "full" => Ok(SocCase::Full),
            other => Err(Error::Validation(format!(
                "unknown SOC case {other:?}, expected min, mid or full"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocCaseResult {
    pub case: SocCase,
    pub b0_kwh: Vec<(BusId, f64)>,
    pub final_soc_kwh: Vec<(BusId, f64)>,
    pub result: ScenarioResult,
}

/// Runs the coordinated scenario once per initial-charge case.
pub fn soc_sweep(
    net: &Network,
    profiles: &Profiles,
    cases: &[SocCase],
    cfg: &DistributedConfig,
) -> Result<Vec<SocCaseResult>> {
    let buses = net.battery_buses();
    if buses.len() != 3 {
        return Err(Error::Validation(format!(
            "SOC cases need exactly three batteries, network has {}",
            buses.len()
        )));
    }
    cases
        .iter()
        .map(|&case| {
            let b0: Vec<(BusId, f64)> = buses.iter().copied().zip(case.b0_kwh()).collect();
            let net = net
                .with_battery_b0(&b0)
                .map_err(|e| Error::Validation(format!("SOC case {case} rejected: {e}")))?;
            let result = run_distributed(&net, profiles, cfg)?;
            let final_soc_kwh = result
                .batteries
                .iter()
                .map(|b| (b.bus, *b.soc_kwh.last().expect("non-empty horizon")))
                .collect();
            Ok(SocCaseResult {
                case,
                b0_kwh: b0,
                final_soc_kwh,
                result,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_parse_and_print() {
        for case in SocCase::ALL {
            assert_eq!(case.to_string().parse::<SocCase>().unwrap(), case);
        }
        assert!(" mid ".parse::<SocCase>().is_ok());
        assert!("empty".parse::<SocCase>().is_err());
    }

    #[test]
    fn charge_grows_from_min_to_full() {
        let [min, mid, full] = SocCase::ALL.map(SocCase::b0_kwh);
        for i in 0..3 {
            assert!(min[i] <= mid[i] && mid[i] <= full[i]);
        }
    }
}
