//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridpac::decomposition::{decompose, validate_decomposition, Strategy};
use gridpac::grid::{generate_profiles, load_network, parse_network, sweep, Network, Phase, ProfileParams, Profiles};
use gridpac::opf::{
    build_ci_opf, idle_injection, lift_operating_point, mccormick_planes, preprocess_bounds, solve_centralized,
    CanonicalProblem, Objective,
};
use gridpac::pac::{run, PacConfig};
use gridpac::scenarios::{
    compare, local_agents, run_baseline, run_distributed, run_local, soc_box_violation_kwh, soc_replay_error_kwh,
    Comparison, DistributedConfig, ScenarioResult,
};

const FIXTURES: [&str; 3] = ["two_bus", "four_bus", "eight_bus"];

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn fixture_path(name: &str) -> PathBuf {
    core_dir().join("tests/fixtures").join(format!("{name}.json"))
}

fn fixture(name: &str) -> (Network, Profiles, CanonicalProblem) {
    let net = load_network(fixture_path(name)).unwrap();
    let params = ProfileParams {
        solar_shape: vec![0.1, 0.7, 0.5, 0.0],
        ..ProfileParams::for_horizon(4)
    };
    let profiles = generate_profiles(3, &net, &params).unwrap();
    let bounds = preprocess_bounds(&net, &profiles).unwrap();
    let prob = build_ci_opf(&net, &profiles, &bounds, Objective::PccRamp).unwrap();
    (net, profiles, prob)
}

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_equivalence() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in FIXTURES {
        let (_, _, prob) = fixture(name);
        let t0 = Instant::now();
        let central = solve_centralized(&prob, 1e-9).map_err(|e| e.to_string())?;
        let dec = decompose(&prob, &Strategy::PerBus).map_err(|e| e.to_string())?;
        let r = run(
            &dec,
            &PacConfig {
                max_iter: 5000,
                ..PacConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let secs = t0.elapsed().as_secs_f64();
        let rel = (r.objective - central.objective).abs() / central.objective.abs().max(1e-12);
        let pass = rel <= 0.01 && r.coord_residual <= 1e-4 && secs < 60.0;
        ok &= pass;
        lines.push(format!(
            "{name}: gap {:.3}% coord {:.1e} rounds {} {secs:.1}s",
            100.0 * rel,
            r.coord_residual,
            r.rounds
        ));
    }
    check(ok, lines.join("; "))
}

fn relaxation_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (c, d) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (xl, xu) = (f64::min(a, b), f64::max(a, b));
        let (yl, yu) = (f64::min(c, d), f64::max(c, d));
        let planes = mccormick_planes(xl, xu, yl, yu).map_err(|e| e.to_string())?;
        let x = rng.gen_range(xl..=xu);
        let y = rng.gen_range(yl..=yu);
        for p in &planes {
            worst = worst.max(-p.slack(x, y, x * y));
        }
    }
    // At every box corner the envelope pins w to the product exactly.
    let planes = mccormick_planes(-1.3, 0.7, 0.2, 1.9).map_err(|e| e.to_string())?;
    let mut corner = 0.0f64;
    for (x, y) in [(-1.3, 0.2), (-1.3, 1.9), (0.7, 0.2), (0.7, 1.9)] {
        let (lo, hi) = gridpac::opf::envelope_range(&planes, x, y);
        corner = corner.max((lo - x * y).abs()).max((hi - x * y).abs());
    }
    // Exact power-flow points of the two-bus fixture lie inside the relaxation.
    let (net, profiles, prob) = fixture("two_bus");
    let states: Vec<_> = (0..net.horizon)
        .map(|t| sweep(&net, |b, ph| idle_injection(&net, &profiles, b, ph, t), 1e-14, 200))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let x = lift_operating_point(&prob, &net, &profiles, &states);
    let eq = prob.eq_residual(&x);
    let ineq = prob.ineq_violation(&x);
    let bounds = (0..x.len())
        .map(|c| (prob.lower[c] - x[c]).max(x[c] - prob.upper[c]).max(0.0))
        .fold(0.0, f64::max);
    check(
        worst <= 1e-12 && corner <= 1e-15 && eq <= 1e-9 && ineq <= 1e-9 && bounds <= 1e-9,
        format!("plane violation {worst:.1e}, corner gap {corner:.1e}, AC point eq {eq:.1e} ineq {ineq:.1e} box {bounds:.1e}"),
    )
}

struct Bundled {
    net: Network,
    results: Vec<ScenarioResult>,
    cmp: Comparison,
    c_seconds: f64,
}

fn bundled() -> &'static Result<Bundled, String> {
    static CELL: OnceLock<Result<Bundled, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let net = load_network(core_dir().join("data/ieee34-like.json")).map_err(|e| e.to_string())?;
        let profiles = generate_profiles(7, &net, &ProfileParams::default()).map_err(|e| e.to_string())?;
        let a = run_baseline(&net, &profiles);
        let b = run_local(&net, &profiles, &net.clusters).map_err(|e| e.to_string())?;
        let cfg = DistributedConfig::default();
        let t0 = Instant::now();
        let c = run_distributed(&net, &profiles, &cfg).map_err(|e| e.to_string())?;
        let c_seconds = t0.elapsed().as_secs_f64();
        let results = vec![a, b, c];
        let cmp = compare(&results, gridpac::scenarios::ScenarioTag::A).map_err(|e| e.to_string())?;
        Ok(Bundled {
            net,
            results,
            cmp,
            c_seconds,
        })
    })
}

fn duck_curve_direction() -> Outcome {
    let d = bundled().as_ref()?;
    let b = &d.cmp.rows[1];
    let c = &d.cmp.rows[2];
    let rounds = d.results[2].solver.as_ref().map_or(0, |s| s.rounds);
    let mut misses = Vec::new();
    if c.reduction_pct < 15.0 {
        misses.push("C total below 15%");
    }
    if c.peak_hour_reduction_pct < 10.0 {
        misses.push("C peak hour below 10%");
    }
    if b.reduction_pct.abs() > 5.0 {
        misses.push("B outside ±5%");
    }
    if d.c_seconds > 600.0 {
        misses.push("C over 10 min");
    }
    let detail = format!(
        "C total {:.2}% peak hour {} {:.2}%, B total {:.2}%, C {rounds} rounds in {:.0}s",
        c.reduction_pct, d.cmp.peak_hour, c.peak_hour_reduction_pct, b.reduction_pct, d.c_seconds
    );
    if misses.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", misses.join(", ")))
    }
}

fn battery_physics() -> Outcome {
    let d = bundled().as_ref()?;
    let c = &d.results[2];
    let replay = soc_replay_error_kwh(&d.net, c).map_err(|e| e.to_string())?;
    let boxv = soc_box_violation_kwh(&d.net, c).map_err(|e| e.to_string())?;
    check(
        replay <= 1e-6 && boxv <= 0.0,
        format!(
            "replay error {replay:.1e} kWh, box violation {boxv:.1e} kWh over {} batteries",
            c.batteries.len()
        ),
    )
}

fn acceleration() -> Outcome {
    let (_, _, prob) = fixture("four_bus");
    let dec = decompose(&prob, &Strategy::PerBus).map_err(|e| e.to_string())?;
    let cfg = PacConfig {
        max_iter: 5000,
        ..PacConfig::default()
    };
    let fast = run(&dec, &cfg).map_err(|e| e.to_string())?.rounds_to(1e-3);
    let plain = run(&dec, &cfg.clone().without_extrapolation())
        .map_err(|e| e.to_string())?
        .rounds_to(1e-3);
    let ok = match (fast, plain) {
        (Some(f), Some(p)) => f <= p,
        (Some(_), None) => true,
        _ => false,
    };
    check(ok, format!("rounds to 1e-3: accelerated {fast:?}, plain {plain:?}"))
}

fn gridpac(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_gridpac"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&o.stderr).trim().to_string())
    }
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("gridpac-acceptance-{}", std::process::id()));
    let (first, second) = (dir.join("first"), dir.join("second"));
    let net = fixture_path("four_bus");
    gridpac(&[
        "run",
        "--network",
        net.to_str().unwrap(),
        "--seed",
        "5",
        "--max-iter",
        "300",
        "--out",
        first.to_str().unwrap(),
    ])?;
    let manifest = first.join("manifest.json");
    gridpac(&[
        "run",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ])?;
    let mut same = 0;
    let mut differ = Vec::new();
    for f in ["pcc.csv", "ramp.csv", "soc.csv", "trace_C.csv"] {
        let x = std::fs::read(first.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(second.join(f)).map_err(|e| format!("{f}: {e}"))?;
        if x == y {
            same += 1;
        } else {
            differ.push(f);
        }
    }
    let _ = std::fs::remove_dir_all(&dir);

    let (_, _, prob) = fixture("eight_bus");
    let dec = decompose(&prob, &Strategy::PerBus).map_err(|e| e.to_string())?;
    let cfg = |threads| PacConfig {
        threads: Some(threads),
        max_iter: 200,
        ..PacConfig::default()
    };
    let one = run(&dec, &cfg(1)).map_err(|e| e.to_string())?;
    let many = run(&dec, &cfg(4)).map_err(|e| e.to_string())?;
    let threads_ok = one.trace == many.trace && one.x == many.x;
    check(
        differ.is_empty() && threads_ok,
        format!("{same}/4 CSVs byte-identical {differ:?}, 1 vs 4 threads identical: {threads_ok}"),
    )
}

fn decomposition_correctness() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in FIXTURES {
        let (net, _, prob) = fixture(name);
        for strategy in [
            Strategy::PerBus,
            Strategy::clusters_of(&net).map_err(|e| e.to_string())?,
        ] {
            let dec = decompose(&prob, &strategy).map_err(|e| e.to_string())?;
            let rep = validate_decomposition(&prob, &dec);
            ok &= rep.ok;
            if !rep.ok {
                parts.push(format!("{name}: {}", rep.issues.join(", ")));
            }
        }
    }
    let d = bundled().as_ref()?;
    let profiles = generate_profiles(7, &d.net, &ProfileParams::default()).map_err(|e| e.to_string())?;
    let bounds = preprocess_bounds(&d.net, &profiles).map_err(|e| e.to_string())?;
    let prob = build_ci_opf(&d.net, &profiles, &bounds, Objective::PccRamp).map_err(|e| e.to_string())?;
    let dec =
        decompose(&prob, &Strategy::clusters_of(&d.net).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let rep = validate_decomposition(&prob, &dec);
    let agents = local_agents(&d.net).len();
    ok &= rep.ok && agents == 26;
    parts.push(format!(
        "fixtures reassemble exactly, 34-bus {} atoms reassemble {}, {agents} agents",
        rep.atoms, rep.ok
    ));
    check(ok, parts.join("; "))
}

fn agent_lp() -> Outcome {
    let (rate, b_min, b_max, b0) = (2.0, 0.5, 4.0, 1.0);
    let load = [3.0, 6.5, 4.0];
    let net = parse_network(&format!(
        r#"{{"name": "toy", "base_kva": 100.0, "base_kv_ln": 2.4, "horizon": 3,
  "voltage": {{"v_min": 0.9, "v_max": 1.1, "angle_window_deg": 10.0}},
  "buses": [{{"id": 1, "phases": "a", "kind": "pcc"}}, {{"id": 2, "phases": "a", "kind": "residential", "load": "r"}}],
  "lines": [{{"from": 1, "to": 2, "phases": "a", "impedance": [[{{"re": 0.01, "im": 0.02}}]]}}],
  "devices": [{{"bus": 2, "type": "battery", "p_sc_max_kw": {rate}, "p_sd_max_kw": {rate},
      "b_max_kwh": {b_max}, "b_min_kwh": {b_min}, "b0_kwh": {b0}, "eta_c": 1.0, "eta_d": 1.0, "eta_self": 0.0}}],
  "profiles": [{{"id": "r", "pf": 0.95, "p_kw": {{"a": [1, 1, 1]}}}}]}}"#
    ))
    .map_err(|e| e.to_string())?;
    let params = ProfileParams {
        solar_shape: vec![0.0; 3],
        pv_penetration: 0.0,
        ..ProfileParams::for_horizon(3)
    };
    let mut profiles = generate_profiles(1, &net, &params).map_err(|e| e.to_string())?;
    profiles
        .loads
        .insert((2, Phase::A), load.iter().map(|&l| (l, 0.3 * l)).collect());
    let b = run_local(&net, &profiles, &[]).map_err(|e| e.to_string())?;
    let lp = b.pcc_kw.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Every schedule on a grid of 1% of the power rating.
    let steps = 100i32;
    let u = |k: i32| rate * f64::from(k) / f64::from(steps);
    let inside = |s: f64| s >= b_min - 1e-12 && s <= b_max + 1e-12;
    let mut brute = f64::INFINITY;
    for k0 in -steps..=steps {
        let s0 = b0 + u(k0);
        if !inside(s0) {
            continue;
        }
        for k1 in -steps..=steps {
            let s1 = s0 + u(k1);
            if !inside(s1) {
                continue;
            }
            for k2 in -steps..=steps {
                if inside(s1 + u(k2)) {
                    brute = brute.min((load[0] + u(k0)).max(load[1] + u(k1)).max(load[2] + u(k2)));
                }
            }
        }
    }
    let rel = (lp - brute).abs() / brute;
    check(
        rel <= 0.01,
        format!("LP peak {lp:.4} kW, brute force {brute:.4} kW, gap {:.3}%", 100.0 * rel),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("relaxation soundness", relaxation_soundness),
        ("duck-curve direction", duck_curve_direction),
        ("battery physics", battery_physics),
        ("acceleration", acceleration),
        ("determinism", determinism),
        ("decomposition correctness", decomposition_correctness),
        ("agent LP", agent_lp),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
