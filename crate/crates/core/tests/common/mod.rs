#![allow(dead_code)]

use std::path::PathBuf;

use gridpac::grid::{generate_profiles, load_network, Network, ProfileParams, Profiles};
use gridpac::opf::{build_ci_opf, preprocess_bounds, CanonicalProblem, Objective};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(format!("{name}.json"))
}

pub fn bundled_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/ieee34-like.json")
}

/// Fixture network with its four-hour profiles: morning, midday, afternoon, evening sun.
pub fn fixture(name: &str) -> (Network, Profiles) {
    let net = load_network(fixture_path(name)).unwrap();
    let params = ProfileParams {
        solar_shape: vec![0.1, 0.7, 0.5, 0.0],
        ..ProfileParams::for_horizon(4)
    };
    let profiles = generate_profiles(3, &net, &params).unwrap();
    (net, profiles)
}

pub fn problem(name: &str) -> (Network, Profiles, CanonicalProblem) {
    let (net, profiles) = fixture(name);
    let bounds = preprocess_bounds(&net, &profiles).unwrap();
    let prob = build_ci_opf(&net, &profiles, &bounds, Objective::PccRamp).unwrap();
    (net, profiles, prob)
}
