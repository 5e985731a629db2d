mod common;

use gridpac::decomposition::{decompose, Strategy};
use gridpac::opf::solve_centralized;
use gridpac::pac::{run, PacConfig};

#[test]
fn four_bus_matches_central_optimum() {
    let (_, _, prob) = common::problem("four_bus");
    let central = solve_centralized(&prob, 1e-9).unwrap();
    let dec = decompose(&prob, &Strategy::PerBus).unwrap();
    let r = run(&dec, &PacConfig::default()).unwrap();
    assert!(r.converged, "rounds {} coord {:e}", r.rounds, r.coord_residual);
    let rel = (r.objective - central.objective).abs() / central.objective.abs();
    assert!(rel < 0.01, "{} vs {}", r.objective, central.objective);
    assert!(r.coord_residual <= 1e-4);
    // The assembled vector satisfies the whole problem to the residual tolerance.
    assert!(prob.eq_residual(&r.x) < 1e-3, "{:e}", prob.eq_residual(&r.x));
}

#[test]
fn one_atom_is_solved_in_few_rounds() {
    let (net, _, prob) = common::problem("two_bus");
    let all: Vec<usize> = (0..net.buses.len()).collect();
    let dec = decompose(&prob, &Strategy::PerCluster(vec![all])).unwrap();
    assert_eq!(dec.atoms.len(), 1);
    assert!(dec.edges.is_empty());
    let cfg = PacConfig {
        polish: false,
        ..PacConfig::default()
    };
    let r = run(&dec, &cfg).unwrap();
    assert!(r.converged);
    assert!(r.rounds < 500, "{}", r.rounds);
    assert!(r.eq_residual <= cfg.eps_primal);
    assert_eq!(r.coord_residual, 0.0);
    let first = r.trace.first().unwrap().max_eq_residual;
    assert!(r.trace.last().unwrap().max_eq_residual <= first);
}

#[test]
fn traces_do_not_depend_on_thread_count() {
    let (_, _, prob) = common::problem("four_bus");
    let dec = decompose(&prob, &Strategy::PerBus).unwrap();
    let cfg = |threads| PacConfig {
        threads: Some(threads),
        max_iter: 150,
        ..PacConfig::default()
    };
    let one = run(&dec, &cfg(1)).unwrap();
    let many = run(&dec, &cfg(4)).unwrap();
    assert_eq!(one.trace, many.trace);
    assert_eq!(one.x, many.x);
}

#[test]
fn extrapolation_does_not_slow_convergence() {
    let (_, _, prob) = common::problem("four_bus");
    let dec = decompose(&prob, &Strategy::PerBus).unwrap();
    let cfg = PacConfig {
        max_iter: 3000,
        ..PacConfig::default()
    };
    let fast = run(&dec, &cfg)
        .unwrap()
        .rounds_to(1e-3)
        .expect("accelerated run reaches 1e-3");
    let plain = run(&dec, &cfg.clone().without_extrapolation())
        .unwrap()
        .rounds_to(1e-3)
        .expect("plain run reaches 1e-3");
    assert!(fast <= plain, "accelerated {fast}, plain {plain}");
}

#[test]
fn invalid_gains_are_rejected_before_running() {
    let (_, _, prob) = common::problem("two_bus");
    let dec = decompose(&prob, &Strategy::PerBus).unwrap();
    let cfg = PacConfig {
        rho: -1.0,
        ..PacConfig::default()
    };
    assert!(matches!(run(&dec, &cfg), Err(gridpac::Error::Validation(_))));
}
