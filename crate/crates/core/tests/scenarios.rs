mod common;

use gridpac::grid::{
    generate_profiles, load_network, parse_network, DeviceSpec, Network, Phase, ProfileParams, Profiles,
};
use gridpac::scenarios::{
    compare, local_agents, run_baseline, run_distributed, run_local, soc_box_violation_kwh, soc_replay_error_kwh,
    soc_sweep, DistributedConfig, ScenarioTag, SocCase,
};
use proptest::prelude::*;

/// One residential bus behind a short line, with an ideal battery and no PV.
fn toy(horizon: usize, battery: (f64, f64, f64, f64)) -> Network {
    let (rate, b_min, b_max, b0) = battery;
    let loads: Vec<String> = (0..horizon).map(|_| "1".to_string()).collect();
    let text = format!(
        r#"{{
  "name": "toy", "base_kva": 100.0, "base_kv_ln": 2.4, "horizon": {horizon},
  "voltage": {{"v_min": 0.9, "v_max": 1.1, "angle_window_deg": 10.0}},
  "buses": [
    {{"id": 1, "phases": "a", "kind": "pcc"}},
    {{"id": 2, "phases": "a", "kind": "residential", "load": "r"}}
  ],
  "lines": [{{"from": 1, "to": 2, "phases": "a", "impedance": [[{{"re": 0.01, "im": 0.02}}]]}}],
  "devices": [
    {{"bus": 2, "type": "battery", "p_sc_max_kw": {rate}, "p_sd_max_kw": {rate},
      "b_max_kwh": {b_max}, "b_min_kwh": {b_min}, "b0_kwh": {b0},
      "eta_c": 1.0, "eta_d": 1.0, "eta_self": 0.0}}
  ],
  "profiles": [{{"id": "r", "pf": 0.95, "p_kw": {{"a": [{}]}}}}]
}}"#,
        loads.join(",")
    );
    parse_network(&text).unwrap()
}

fn toy_profiles(net: &Network, load_kw: &[f64]) -> Profiles {
    let params = ProfileParams {
        solar_shape: vec![0.0; net.horizon],
        pv_penetration: 0.0,
        ..ProfileParams::for_horizon(net.horizon)
    };
    let mut p = generate_profiles(1, net, &params).unwrap();
    p.loads
        .insert((2, Phase::A), load_kw.iter().map(|&l| (l, 0.3 * l)).collect());
    p
}

fn peak(series: &[f64]) -> f64 {
    series.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum peak import over every battery schedule on a grid of 1% of the rating.
fn brute_force_peak(load: &[f64; 3], rate: f64, b_min: f64, b_max: f64, b0: f64) -> f64 {
    let steps = 100;
    let u = |k: i32| rate * k as f64 / steps as f64;
    let mut best = f64::INFINITY;
    for k0 in -steps..=steps {
        let s0 = b0 + u(k0);
        if s0 < b_min - 1e-12 || s0 > b_max + 1e-12 {
            continue;
        }
        for k1 in -steps..=steps {
            let s1 = s0 + u(k1);
            if s1 < b_min - 1e-12 || s1 > b_max + 1e-12 {
                continue;
            }
            for k2 in -steps..=steps {
                let s2 = s1 + u(k2);
                if s2 < b_min - 1e-12 || s2 > b_max + 1e-12 {
                    continue;
                }
                let p = (load[0] + u(k0)).max(load[1] + u(k1)).max(load[2] + u(k2));
                best = best.min(p);
            }
        }
    }
    best
}

#[test]
fn baseline_without_pv_is_the_total_load() {
    let (net, mut profiles) = common::fixture("four_bus");
    for v in profiles.pv_available_kw.values_mut() {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    let a = run_baseline(&net, &profiles);
    let load = profiles.total_load_kw();
    for t in 0..net.horizon {
        assert!((a.pcc_kw[t] - load[t]).abs() < 1e-9);
    }
    assert_eq!(a.energy_residual_kw(), 0.0);
}

#[test]
fn bundled_baseline_ramps_up_after_the_solar_peak() {
    let net = load_network(common::bundled_path()).unwrap();
    let profiles = generate_profiles(7, &net, &ProfileParams::default()).unwrap();
    let a = run_baseline(&net, &profiles);
    let d = a.deltas_kw();
    let (k, _) = d.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap();
    assert!(k + 1 > 13, "steepest up-ramp ends at hour {}", k + 1);
    // Midday trough below both the morning and evening shoulders.
    let trough = a.pcc_kw[12];
    assert!(trough < a.pcc_kw[8] && trough < a.pcc_kw[19]);
}

#[test]
fn bundled_dataset_has_twenty_six_agents() {
    let net = load_network(common::bundled_path()).unwrap();
    assert_eq!(local_agents(&net).len(), 26);
    let profiles = generate_profiles(7, &net, &ProfileParams::default()).unwrap();
    let b = run_local(&net, &profiles, &net.clusters).unwrap();
    assert_eq!(b.agents, 26);
}

#[test]
fn agent_without_devices_imports_its_load() {
    let mut net = toy(3, (1.0, 0.0, 1.0, 0.5));
    net.buses[1].devices.clear();
    let load = [3.0, 7.0, 5.0];
    let b = run_local(&net, &toy_profiles(&net, &load), &[]).unwrap();
    for t in 0..3 {
        assert!((b.pcc_kw[t] - load[t]).abs() < 1e-6, "{:?}", b.pcc_kw);
    }
}

#[test]
fn ideal_battery_levels_the_peak_in_closed_form() {
    // Unconstrained rating: the minimum peak is the largest running average of
    // load net of the initial charge, max over k of (Σ_{t≤k} l_t − b0)/(k+1).
    let net = toy(3, (1000.0, 0.0, 1000.0, 6.0));
    let load = [4.0, 10.0, 7.0];
    let b = run_local(&net, &toy_profiles(&net, &load), &[]).unwrap();
    assert!((peak(&b.pcc_kw) - 5.0).abs() < 1e-5, "{:?}", b.pcc_kw);
    assert!(soc_replay_error_kwh(&net, &b).unwrap() < 1e-6);
}

#[test]
fn agent_lp_matches_brute_force() {
    let (rate, b_min, b_max, b0) = (2.0, 0.5, 4.0, 1.0);
    let net = toy(3, (rate, b_min, b_max, b0));
    let load = [3.0, 6.5, 4.0];
    let b = run_local(&net, &toy_profiles(&net, &load), &[]).unwrap();
    let brute = brute_force_peak(&load, rate, b_min, b_max, b0);
    let lp = peak(&b.pcc_kw);
    assert!(
        lp <= brute + 1e-6 && (brute - lp) / brute < 0.01,
        "lp {lp} brute {brute}"
    );
}

#[test]
fn coordination_without_flexibility_reproduces_the_baseline() {
    let (mut net, profiles) = common::fixture("two_bus");
    net.buses[1].devices.retain(|d| !matches!(d, DeviceSpec::Battery(_)));
    let a = run_baseline(&net, &profiles);
    let cfg = DistributedConfig::default();
    let c = run_distributed(&net, &profiles, &cfg).unwrap();
    for t in 0..net.horizon {
        assert!(
            (c.pcc_kw[t] - a.pcc_kw[t]).abs() < 1e-3,
            "{:?} vs {:?}",
            c.pcc_kw,
            a.pcc_kw
        );
    }
}

#[test]
fn coordination_reduces_ramping_on_fixtures() {
    for name in ["four_bus", "eight_bus"] {
        let (net, profiles) = common::fixture(name);
        let a = run_baseline(&net, &profiles);
        let c = run_distributed(&net, &profiles, &DistributedConfig::default()).unwrap();
        assert!(c.total_ramping_kw() <= a.total_ramping_kw() + 1e-6, "{name}");
        assert!(soc_replay_error_kwh(&net, &c).unwrap() <= 1e-6, "{name}");
        assert!(soc_box_violation_kwh(&net, &c).unwrap() <= 1e-6, "{name}");
        assert!(c.energy_residual_kw() < 1e-6, "{name}");
        let cmp = compare(&[a, c], ScenarioTag::A).unwrap();
        assert!(cmp.rows[1].reduction_pct >= 0.0);
    }
}

#[test]
fn replay_detects_a_tampered_trajectory() {
    let net = toy(3, (1000.0, 0.0, 1000.0, 6.0));
    let mut b = run_local(&net, &toy_profiles(&net, &[4.0, 10.0, 7.0]), &[]).unwrap();
    b.batteries[0].soc_kwh[1] += 0.25;
    assert!((soc_replay_error_kwh(&net, &b).unwrap() - 0.25).abs() < 1e-6);
}

#[test]
fn replay_follows_self_discharge() {
    let mut net = toy(3, (1.0, 0.0, 10.0, 8.0));
    net.buses[1].battery_mut().unwrap().eta_self = 0.1;
    let mut b = run_local(&net, &toy_profiles(&net, &[1.0, 1.0, 1.0]), &[]).unwrap();
    let tr = &mut b.batteries[0];
    tr.charge_kw = vec![0.0; 3];
    tr.discharge_kw = vec![0.0; 3];
    tr.soc_kwh = vec![7.2, 6.48, 5.832];
    assert!(soc_replay_error_kwh(&net, &b).unwrap() < 1e-12);
}

#[test]
fn soc_sweep_needs_three_batteries() {
    let (net, profiles) = common::fixture("four_bus");
    let err = soc_sweep(&net, &profiles, &[SocCase::Mid], &DistributedConfig::default()).unwrap_err();
    assert!(matches!(err, gridpac::Error::Validation(_)));
}

#[test]
fn soc_case_outside_a_battery_box_is_rejected() {
    let mut net = load_network(common::bundled_path()).unwrap();
    let first = net.battery_buses()[0];
    let j = net.bus_idx(first).unwrap();
    net.buses[j].battery_mut().unwrap().b_max_kwh = 400.0;
    let profiles = generate_profiles(7, &net, &ProfileParams::default()).unwrap();
    let err = soc_sweep(&net, &profiles, &[SocCase::Full], &DistributedConfig::default()).unwrap_err();
    assert!(err.to_string().contains("SOC case full rejected"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn baseline_balances_energy(seed in 0u64..1000) {
        let net = load_network(common::fixture_path("eight_bus")).unwrap();
        let params = ProfileParams { solar_shape: vec![0.1, 0.7, 0.5, 0.0], ..ProfileParams::for_horizon(4) };
        let profiles = generate_profiles(seed, &net, &params).unwrap();
        let a = run_baseline(&net, &profiles);
        prop_assert!(a.energy_residual_kw() < 1e-9);
        let sum: f64 = a.ramps_kw().iter().sum();
        prop_assert!((sum - a.total_ramping_kw()).abs() < 1e-9);
        prop_assert!(a.ramps_kw().iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn local_peak_lies_between_average_and_unmanaged_peak(
        l0 in 0.5f64..10.0, l1 in 0.5f64..10.0, l2 in 0.5f64..10.0, b0 in 0.0f64..4.0,
    ) {
        let net = toy(3, (2.0, 0.0, 4.0, b0));
        let load = [l0, l1, l2];
        let b = run_local(&net, &toy_profiles(&net, &load), &[]).unwrap();
        let p = peak(&b.pcc_kw);
        prop_assert!(p <= peak(&load) + 1e-6);
        // Energy bound: the battery can at most deliver its initial charge.
        prop_assert!(p >= (l0 + l1 + l2 - b0) / 3.0 - 1e-6);
        prop_assert!(soc_replay_error_kwh(&net, &b).unwrap() < 1e-6);
        prop_assert!(soc_box_violation_kwh(&net, &b).unwrap() < 1e-6);
    }
}
