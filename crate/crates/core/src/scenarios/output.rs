use std::path::Path;

use super::{ScenarioResult, SocCaseResult};
use crate::error::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))
}

fn write_columns(
    path: &Path,
    prefix: &str,
    results: &[ScenarioResult],
    series: impl Fn(&ScenarioResult) -> Vec<f64>,
) -> Result<()> {
    let mut w = writer(path)?;
    let cols: Vec<Vec<f64>> = results.iter().map(&series).collect();
    let mut header = vec!["hour".to_string()];
    header.extend(results.iter().map(|r| format!("{prefix}_{}", r.tag)));
    w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
    let rows = cols.iter().map(Vec::len).max().unwrap_or(0);
    for t in 0..rows {
        let mut rec = vec![t.to_string()];
        rec.extend(cols.iter().map(|c| c.get(t).map_or(String::new(), |v| v.to_string())));
        w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `hour,pcc_kw_<tag>...`
pub fn write_pcc_csv(path: &Path, results: &[ScenarioResult]) -> Result<()> {
    write_columns(path, "pcc_kw", results, |r| r.pcc_kw.clone())
}

/// `hour,ramp_kw_<tag>...`; hour t holds |P(t) − P(t−1)|, starting at 1.
pub fn write_ramp_csv(path: &Path, results: &[ScenarioResult]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["hour".to_string()];
    header.extend(results.iter().map(|r| format!("ramp_kw_{}", r.tag)));
    w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
    let ramps: Vec<Vec<f64>> = results.iter().map(ScenarioResult::ramps_kw).collect();
    let rows = ramps.iter().map(Vec::len).max().unwrap_or(0);
    for t in 0..rows {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(ramps.iter().map(|c| c.get(t).map_or(String::new(), |v| v.to_string())));
        w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `scenario,battery,hour,soc_kwh,charge_kw,discharge_kw`
pub fn write_soc_csv(path: &Path, results: &[ScenarioResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["scenario", "battery", "hour", "soc_kwh", "charge_kw", "discharge_kw"])
        .map_err(|e| Error::io(path, e.into()))?;
    for r in results {
        for b in &r.batteries {
            for t in 0..b.soc_kwh.len() {
                w.write_record([
                    r.tag.to_string(),
                    b.bus.to_string(),
                    t.to_string(),
                    b.soc_kwh[t].to_string(),
                    b.charge_kw[t].to_string(),
                    b.discharge_kw[t].to_string(),
                ])
                .map_err(|e| Error::io(path, e.into()))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `case,battery,hour,soc_kwh,pcc_kw`
pub fn write_sweep_csv(path: &Path, cases: &[SocCaseResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["case", "battery", "hour", "soc_kwh", "pcc_kw"])
        .map_err(|e| Error::io(path, e.into()))?;
    for c in cases {
        for b in &c.result.batteries {
            for (t, soc) in b.soc_kwh.iter().enumerate() {
                w.write_record([
                    c.case.to_string(),
                    b.bus.to_string(),
                    t.to_string(),
                    soc.to_string(),
                    c.result.pcc_kw[t].to_string(),
                ])
                .map_err(|e| Error::io(path, e.into()))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{BatteryTrace, ScenarioTag};

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
            batteries: vec![BatteryTrace {
                bus: 6,
                soc_kwh: vec![1.0; t],
                charge_kw: vec![0.0; t],
                discharge_kw: vec![0.0; t],
            }],
            agents: 1,
            mean_agent_seconds: 0.0,
            solver: None,
            trace: Vec::new(),
        }
    }

    #[test]
    fn csv_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let rs = [
            result(ScenarioTag::A, &[1.0, 3.0, 2.0]),
            result(ScenarioTag::C, &[1.0, 2.0, 2.0]),
        ];
        let pcc = dir.path().join("pcc.csv");
        write_pcc_csv(&pcc, &rs).unwrap();
        assert_eq!(
            std::fs::read_to_string(&pcc).unwrap(),
            "hour,pcc_kw_A,pcc_kw_C\n0,1,1\n1,3,2\n2,2,2\n"
        );
        let ramp = dir.path().join("ramp.csv");
        write_ramp_csv(&ramp, &rs).unwrap();
        assert_eq!(
            std::fs::read_to_string(&ramp).unwrap(),
            "hour,ramp_kw_A,ramp_kw_C\n1,2,1\n2,1,0\n"
        );
        let soc = dir.path().join("soc.csv");
        write_soc_csv(&soc, &rs).unwrap();
        let text = std::fs::read_to_string(&soc).unwrap();
        assert!(text.starts_with("scenario,battery,hour,soc_kwh,charge_kw,discharge_kw\nA,6,0,1,0,0\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
