//! `gridpac` command-line harness.

mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridpac::decomposition::{decompose, validate_decomposition, Strategy};
use gridpac::grid::{impedance_blockmatrix, incidence_matrix};
use gridpac::opf::{build_ci_opf, preprocess_bounds, write_triplets, Objective};
use gridpac::pac::write_trace;
use gridpac::scenarios::{
    compare, local_agents, run_baseline, run_distributed, run_local, soc_sweep, write_pcc_csv, write_ramp_csv,
    write_soc_csv, write_sweep_csv, ScenarioResult, ScenarioTag, SocCase,
};
use gridpac::{ErrorClass, Network};

use config::{ProfileSource, RunConfig};
use manifest::Manifest;

/// A failure reported as one line on stderr, with an exit code per class.
#[derive(Debug)]
pub struct Failure {
    class: ErrorClass,
    message: String,
}

impl Failure {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Failure {
            class,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::new(ErrorClass::Io, format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self.class {
            ErrorClass::Validation => 2,
            ErrorClass::Infeasible => 3,
            ErrorClass::Divergence => 4,
            ErrorClass::Io => 5,
        }
    }
}

impl From<gridpac::Error> for Failure {
    fn from(e: gridpac::Error) -> Self {
        Failure::new(e.class(), e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "gridpac", version, about = "Ramp-limiting dispatch of distribution feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a network and report entity counts and structural checks.
    Validate(ValidateArgs),
    /// Run scenarios and write results, traces and a manifest.
    Run(RunArgs),
    /// Compare stored scenario results.
    Compare(CompareArgs),
    /// Write the relaxed problem as triplets.
    ExportProblem(ExportArgs),
}

#[derive(Args)]
struct ValidateArgs {
    network: PathBuf,
    /// Also build the problem for these profiles and check its decomposition.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
pub struct ProfileArgs {
    /// Load CSV with columns bus,phase,hour,p_kw,q_kvar (PV and demand
    /// response are still generated from the seed).
    #[arg(long, conflicts_with = "gen_profiles")]
    profiles: Option<PathBuf>,
    /// Generate profiles, optionally from a TOML parameter file.
    #[arg(long, num_args = 0..=1, value_name = "PARAMS")]
    gen_profiles: Option<Option<PathBuf>>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "manifest")]
    network: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    seed: Option<u64>,
    #[command(flatten)]
    profiles: ProfileArgs,
    /// Comma-separated scenario tags.
    #[arg(long, default_value = "A,B,C", value_delimiter = ',')]
    scenarios: Vec<ScenarioTag>,
    /// Initial-charge cases for the storage sweep (min, mid, full).
    #[arg(long, value_delimiter = ',')]
    soc_case: Vec<SocCase>,
    #[arg(long)]
    out: PathBuf,
    /// TOML file with the distributed solver settings.
    #[arg(long)]
    solver_config: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Primal and coordination tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Repeat the run recorded in a manifest; other flags except --out are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// JSON files with one result or a list of results.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long, default_value = "A")]
    baseline: ScenarioTag,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    profiles: ProfileArgs,
    #[arg(long, default_value = "pcc_ramp")]
    objective: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return report(Failure::new(ErrorClass::Validation, first));
        }
    };
    let outcome = match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Run(a) => run(&a),
        Command::Compare(a) => compare_cmd(&a),
        Command::ExportProblem(a) => export(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let msg = f.message.replace('\n', " ");
    eprintln!("error[{}]: {msg}", f.class);
    ExitCode::from(f.exit_code())
}

fn load(path: &Path) -> CliResult<Network> {
    Ok(gridpac::load_network(path)?)
}

fn validate(a: &ValidateArgs) -> CliResult<()> {
    let net = load(&a.network)?;
    let count = |f: &dyn Fn(&gridpac::grid::Bus) -> bool| net.buses.iter().filter(|b| f(b)).count();
    println!("network {}", net.name);
    println!("buses {}", net.buses.len());
    println!("lines {}", net.lines.len());
    println!("bus phases {}", net.bus_slots().len());
    println!("line phases {}", net.line_slots().len());
    println!("loads {}", count(&|b| b.load.is_some()));
    println!("pv {}", count(&|b| b.pv().is_some()));
    println!("flexible loads {}", count(&|b| b.flex().is_some()));
    println!("batteries {}", count(&|b| b.battery().is_some()));
    println!("clusters {}", net.clusters.len());
    println!("local agents {}", local_agents(&net).len());
    println!("horizon {}", net.horizon);

    let a_mat = incidence_matrix(&net);
    let mut rows = vec![(0usize, 0.0f64); a_mat.nrows()];
    for (r, _, v) in a_mat.triplets() {
        rows[r].0 += 1;
        rows[r].1 += v;
    }
    let incidence_ok = rows.iter().all(|&(n, s)| n == 2 && s == 0.0);
    println!("check radial ok");
    println!("check incidence {}", if incidence_ok { "ok" } else { "FAILED" });
    let z_ok = impedance_blockmatrix(&net).is_block_symmetric();
    println!("check impedance_symmetric {}", if z_ok { "ok" } else { "FAILED" });

    if let Some(seed) = a.seed {
        let profiles = config::profiles_for(&net, seed, &ProfileSource::default())?;
        let bounds = preprocess_bounds(&net, &profiles)?;
        let prob = build_ci_opf(&net, &profiles, &bounds, Objective::PccRamp)?;
        println!("variables {}", prob.n());
        println!("equality rows {}", prob.b.len());
        println!("inequality rows {}", prob.d.len());
        for (name, strategy) in [
            ("per_bus", Strategy::PerBus),
            ("clusters", Strategy::clusters_of(&net)?),
        ] {
            let dec = decompose(&prob, &strategy)?;
            let rep = validate_decomposition(&prob, &dec);
            println!(
                "decomposition {name} atoms {} edges {} max_degree {} {}",
                rep.atoms,
                rep.edges,
                rep.max_degree,
                if rep.ok { "ok" } else { "FAILED" }
            );
            for issue in &rep.issues {
                println!("  {issue}");
            }
        }
    }
    if incidence_ok && z_ok {
        Ok(())
    } else {
        Err(Failure::new(ErrorClass::Validation, "structural checks failed"))
    }
}

fn run(a: &RunArgs) -> CliResult<()> {
    let cfg = match &a.manifest {
        Some(path) => Manifest::read(path)?.config,
        None => RunConfig::from_args(a)?,
    };
    let out = &a.out;
    std::fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let net = load(&cfg.network)?;
    let profiles = config::profiles_for(&net, cfg.seed, &cfg.profiles)?;

    let mut results: Vec<ScenarioResult> = Vec::new();
    for &tag in &cfg.scenarios {
        let r = match tag {
            ScenarioTag::A => run_baseline(&net, &profiles),
            ScenarioTag::B => run_local(&net, &profiles, &net.clusters)?,
            ScenarioTag::C => run_distributed(&net, &profiles, &cfg.solver)?,
        };
        results.push(r);
    }

    let mut files = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> CliResult<()>| -> CliResult<()> {
        let path = out.join(name);
        f(&path)?;
        files.push(path);
        Ok(())
    };
    if !results.is_empty() {
        emit("pcc.csv", &|p| Ok(write_pcc_csv(p, &results)?))?;
        emit("ramp.csv", &|p| Ok(write_ramp_csv(p, &results)?))?;
        emit("soc.csv", &|p| Ok(write_soc_csv(p, &results)?))?;
        emit("results.json", &|p| write_json(p, &results))?;
    }
    for r in results.iter().filter(|r| !r.trace.is_empty()) {
        emit(&format!("trace_{}.csv", r.tag), &|p| Ok(write_trace(&r.trace, p)?))?;
    }
    if results.len() >= 2 && results.iter().any(|r| r.tag == ScenarioTag::A) {
        let cmp = compare(&results, ScenarioTag::A)?;
        for row in &cmp.rows {
            println!(
                "scenario {} total_ramping_kw {:.1} reduction_pct {:.2} peak_hour_reduction_pct {:.2}",
                row.tag, row.total_ramping_kw, row.reduction_pct, row.peak_hour_reduction_pct
            );
        }
        emit("comparison.json", &|p| write_json(p, &cmp))?;
    }
    if !cfg.soc_cases.is_empty() {
        let sweep = soc_sweep(&net, &profiles, &cfg.soc_cases, &cfg.solver)?;
        for s in &sweep {
            let finals: Vec<String> = s.final_soc_kwh.iter().map(|(b, v)| format!("{b}:{v:.1}")).collect();
            println!("soc case {} final_soc_kwh {}", s.case, finals.join(" "));
        }
        emit("soc_sweep.csv", &|p| Ok(write_sweep_csv(p, &sweep)?))?;
        emit("soc_sweep.json", &|p| write_json(p, &sweep))?;
    }
    Manifest::new(cfg, &files)?.write(&out.join("manifest.json"))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
}

fn compare_cmd(a: &CompareArgs) -> CliResult<()> {
    let mut results: Vec<ScenarioResult> = Vec::new();
    for path in &a.results {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Failure::new(ErrorClass::Validation, format!("{}: {e}", path.display())))?;
        let parsed = if value.is_array() {
            serde_json::from_value::<Vec<ScenarioResult>>(value)
        } else {
            serde_json::from_value::<ScenarioResult>(value).map(|r| vec![r])
        };
        results.extend(parsed.map_err(|e| Failure::new(ErrorClass::Validation, format!("{}: {e}", path.display())))?);
    }
    let cmp = compare(&results, a.baseline)?;
    let text = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
    match &a.out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn export(a: &ExportArgs) -> CliResult<()> {
    let objective = match a.objective.as_str() {
        "pcc_ramp" => Objective::PccRamp,
        "none" => Objective::None,
        other => {
            return Err(Failure::new(
                ErrorClass::Validation,
                format!("unknown objective {other:?}, expected pcc_ramp or none"),
            ))
        }
    };
    let net = load(&a.network)?;
    let source = ProfileSource::from_args(&a.profiles)?;
    let profiles = config::profiles_for(&net, a.seed, &source)?;
    let bounds = preprocess_bounds(&net, &profiles)?;
    let prob = build_ci_opf(&net, &profiles, &bounds, objective)?;
    write_triplets(&prob, &a.out)?;
    println!(
        "variables {} equality rows {} inequality rows {}",
        prob.n(),
        prob.b.len(),
        prob.d.len()
    );
    Ok(())
}
