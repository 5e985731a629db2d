//! Shared inputs for the benchmarks.

use std::path::PathBuf;

use gridpac::grid::{generate_profiles, load_network, Network, ProfileParams, Profiles};
use gridpac::opf::{build_ci_opf, preprocess_bounds, CanonicalProblem, Objective};

fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core")
}

/// One of the small test feeders with four hours of profiles.
pub fn fixture(name: &str) -> (Network, Profiles) {
    let net = load_network(core_dir().join("tests/fixtures").join(format!("{name}.json"))).unwrap();
    let params = ProfileParams {
        solar_shape: vec![0.1, 0.7, 0.5, 0.0],
        ..ProfileParams::for_horizon(4)
    };
    let profiles = generate_profiles(3, &net, &params).unwrap();
    (net, profiles)
}

/// The bundled 34-bus feeder over 24 hours.
pub fn bundled() -> (Network, Profiles) {
    let net = load_network(core_dir().join("data/ieee34-like.json")).unwrap();
    let profiles = generate_profiles(7, &net, &ProfileParams::default()).unwrap();
    (net, profiles)
}

pub fn ramp_problem(net: &Network, profiles: &Profiles) -> CanonicalProblem {
    let bounds = preprocess_bounds(net, profiles).unwrap();
    build_ci_opf(net, profiles, &bounds, Objective::PccRamp).unwrap()
}
