use criterion::{black_box, criterion_group, criterion_main, Criterion};

use gridpac::decomposition::{decompose, Strategy};
use gridpac::opf::{mccormick_planes, solve_centralized};
use gridpac::pac::{run, PacConfig};
use gridpac::scenarios::{run_baseline, run_local};
use gridpac_bench::{bundled, fixture, ramp_problem};

fn build(c: &mut Criterion) {
    c.bench_function("mccormick_planes", |b| {
        b.iter(|| mccormick_planes(black_box(-1.2), black_box(0.8), black_box(0.1), black_box(1.7)))
    });
    let (net, profiles) = bundled();
    c.bench_function("build_ci_opf/34-bus", |b| b.iter(|| ramp_problem(&net, &profiles)));
    let prob = ramp_problem(&net, &profiles);
    let strategy = Strategy::clusters_of(&net).unwrap();
    c.bench_function("decompose/34-bus clusters", |b| {
        b.iter(|| decompose(&prob, &strategy).unwrap())
    });
}

fn solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    for name in ["four_bus", "eight_bus"] {
        let (net, profiles) = fixture(name);
        let prob = ramp_problem(&net, &profiles);
        g.bench_function(format!("central/{name}"), |b| {
            b.iter(|| solve_centralized(&prob, 1e-9).unwrap())
        });
        let dec = decompose(&prob, &Strategy::PerBus).unwrap();
        let cfg = PacConfig {
            max_iter: 100,
            polish: false,
            ..PacConfig::default()
        };
        g.bench_function(format!("pac 100 rounds/{name}"), |b| {
            b.iter(|| run(&dec, &cfg).unwrap())
        });
    }
    g.finish();
}

fn scenarios(c: &mut Criterion) {
    let (net, profiles) = bundled();
    let mut g = c.benchmark_group("scenarios");
    g.sample_size(10);
    g.bench_function("baseline/34-bus", |b| b.iter(|| run_baseline(&net, &profiles)));
    g.bench_function("local agents/34-bus", |b| {
        b.iter(|| run_local(&net, &profiles, &net.clusters).unwrap())
    });
    g.finish();
}

criterion_group!(benches, build, solve, scenarios);
criterion_main!(benches);
