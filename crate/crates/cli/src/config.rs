use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gridpac::grid::{generate_profiles, read_profile_csv, Network, ProfileParams, Profiles};
use gridpac::scenarios::{DistributedConfig, ScenarioTag, SocCase};
use gridpac::ErrorClass;

use crate::{CliResult, Failure, ProfileArgs, RunArgs};

/// Where hourly inputs come from. Generated PV and demand response are used
/// in both cases; a CSV only replaces the loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSource {
    Generated { params: Option<ProfileParams> },
    Csv { path: PathBuf },
}

impl Default for ProfileSource {
    fn default() -> Self {
        ProfileSource::Generated { params: None }
    }
}

impl ProfileSource {
    pub fn from_args(a: &ProfileArgs) -> CliResult<Self> {
        if let Some(path) = &a.profiles {
            return Ok(ProfileSource::Csv { path: path.clone() });
        }
        match &a.gen_profiles {
            Some(Some(path)) => Ok(ProfileSource::Generated {
                params: Some(read_toml(path)?),
            }),
            _ => Ok(ProfileSource::default()),
        }
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub network: PathBuf,
    pub seed: u64,
    pub profiles: ProfileSource,
    pub scenarios: Vec<ScenarioTag>,
    pub soc_cases: Vec<SocCase>,
    pub solver: DistributedConfig,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> CliResult<Self> {
        let network = a.network.clone().expect("clap enforces --network");
        let seed = a.seed.expect("clap enforces --seed");
        let mut solver: DistributedConfig = match &a.solver_config {
            Some(path) => read_toml(path)?,
            None => DistributedConfig::default(),
        };
        if let Some(n) = a.max_iter {
            solver.pac.max_iter = n;
        }
        if let Some(tol) = a.tol {
            solver.pac.eps_primal = tol;
            solver.pac.eps_coord = tol;
        }
        solver.pac.validate()?;
        let mut scenarios = a.scenarios.clone();
        scenarios.sort();
        scenarios.dedup();
        Ok(RunConfig {
            network,
            seed,
            profiles: ProfileSource::from_args(&a.profiles)?,
            scenarios,
            soc_cases: a.soc_case.clone(),
            solver,
        })
    }
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    toml::from_str(&text)
        .map_err(|e| Failure::new(ErrorClass::Validation, format!("{}: {}", path.display(), e.message())))
}

pub fn profiles_for(net: &Network, seed: u64, source: &ProfileSource) -> CliResult<Profiles> {
    let default = ProfileParams::for_horizon(net.horizon);
    match source {
        ProfileSource::Generated { params } => Ok(generate_profiles(seed, net, params.as_ref().unwrap_or(&default))?),
        ProfileSource::Csv { path } => {
            let loads = read_profile_csv(path, net)?;
            Ok(generate_profiles(seed, net, &default)?.with_loads(loads)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::Parser;

    use super::*;
    use crate::{Cli, Command};
    use gridpac::pac::Schedule;
    use gridpac::scenarios::AtomGrouping;

    fn run_args(extra: &[&str]) -> RunArgs {
        let mut argv = vec!["gridpac", "run", "--network", "n.json", "--seed", "4", "--out", "o"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Run(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn readme_solver_config_parses() {
        let text = r#"
atoms = "clusters"

[pac]
rho = 1.0
max_iter = 1000
eps_primal = 1e-4
eps_coord = 1e-4
gamma = { kind = "degree", scale = 1.0 }
alpha = { kind = "nesterov", floor = 0.05 }
equalities = "enforced"
"#;
        let cfg: DistributedConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg, DistributedConfig::default());
        let per_bus: DistributedConfig =
            toml::from_str("atoms = \"per_bus\"\n[pac]\nalpha = { kind = \"off\" }").unwrap();
        assert_eq!(per_bus.atoms, AtomGrouping::PerBus);
        assert_eq!(per_bus.pac.alpha, Schedule::Off);
        assert!(toml::from_str::<DistributedConfig>("[pac]\nrh0 = 1.0").is_err());
    }

    #[test]
    fn flags_override_the_solver_file() {
        let cfg = RunConfig::from_args(&run_args(&[
            "--max-iter",
            "50",
            "--tol",
            "1e-3",
            "--scenarios",
            "C,A,C",
        ]))
        .unwrap();
        assert_eq!(cfg.solver.pac.max_iter, 50);
        assert_eq!(cfg.solver.pac.eps_primal, 1e-3);
        assert_eq!(cfg.solver.pac.eps_coord, 1e-3);
        assert_eq!(cfg.scenarios, vec![ScenarioTag::A, ScenarioTag::C]);
        assert_eq!(cfg.profiles, ProfileSource::default());
    }

    #[test]
    fn zero_rounds_are_rejected() {
        let err = RunConfig::from_args(&run_args(&["--max-iter", "0"])).unwrap_err();
        assert_eq!(err.class, ErrorClass::Validation);
    }

    #[test]
    fn profile_csv_selects_the_csv_source() {
        let cfg = RunConfig::from_args(&run_args(&["--profiles", "loads.csv"])).unwrap();
        assert_eq!(
            cfg.profiles,
            ProfileSource::Csv {
                path: "loads.csv".into()
            }
        );
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::from_args(&run_args(&["--soc-case", "min,full"])).unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
