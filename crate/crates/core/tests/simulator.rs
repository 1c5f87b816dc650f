//! The simulator reproduces its configured moments and structure.

mod common;

use common::simulator_moments;
use msfc_core::sim::{generate, generate_with, SimConfig, SETTINGS};
use msfc_core::{Exec, Family};

#[test]
fn v60_high_moments_within_three_standard_errors() {
    let sim = SimConfig::setting("v60-high").unwrap();
    let (tensor, truth) = generate(&SimConfig { seed: 2024, ..sim.clone() }).unwrap();
    let checks = simulator_moments(&tensor, &truth);
    // 3 informative pairs per state, 3 subtypes, 2 states, plus noise.
    assert_eq!(checks.len(), 3 * 3 * 2 + 1);
    for c in &checks {
        assert!(c.z().abs() < 3.0, "{}: configured {} empirical {} (z = {:.2})", c.label, c.configured, c.empirical, c.z());
    }
    // Each informative pair uses every configured mean once.
    for m in 0..2 {
        for p in truth.informative_pairs(m) {
            let mut got: Vec<f64> = (0..3).map(|k| truth.means[k][m][p]).collect();
            got.sort_by(f64::total_cmp);
            assert_eq!(got, vec![-3.0, 2.0, 7.0]);
        }
    }
}

#[test]
fn binary_standardised_errors_are_calibrated() {
    // Pooled over seeds, the z-scores of a correct generator have mean
    // square near one and exceed 3 in about 0.3% of checks.
    let (mut sum_sq, mut extreme, mut n) = (0.0, 0usize, 0usize);
    for seed in 0..20 {
        let sim = SimConfig { family: Family::Binary, seed, ..SimConfig::default() };
        let (tensor, truth) = generate(&sim).unwrap();
        for c in simulator_moments(&tensor, &truth) {
            sum_sq += c.z() * c.z();
            extreme += usize::from(c.z().abs() > 3.0);
            n += 1;
        }
    }
    let mean_sq = sum_sq / n as f64;
    // Mean square of n chi-squared(1) draws has sd sqrt(2/n).
    assert!((mean_sq - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "mean z^2 = {mean_sq}");
    assert!(extreme <= 5, "{extreme} of {n} beyond 3 SE");
}

#[test]
fn every_setting_generates_valid_data() {
    for name in SETTINGS {
        let sim = SimConfig::setting(name).unwrap();
        assert_eq!(sim.n_blocks(), vec![3, 3]);
        let small = SimConfig { n_subjects: 4, seed: 1, ..sim };
        let (tensor, truth) = generate(&small).unwrap();
        assert_eq!(tensor.n_subjects(), 4);
        assert_eq!(truth.block_of[0].len(), tensor.n_nodes());
        for m in 0..2 {
            for b in 1..=3 {
                assert!(truth.block_of[m].iter().filter(|&&x| x == b).count() >= 2, "{name}: block {b} too small");
            }
        }
    }
    assert!(SimConfig::setting("v61-high").is_err());
}

#[test]
fn low_snr_raises_only_the_noise_variance() {
    let high = SimConfig::setting("v60-high").unwrap();
    let low = SimConfig::setting("v60-low").unwrap();
    assert_eq!((high.noise_var, low.noise_var), (6.0, 10.0));
    assert_eq!(high.informative_means, low.informative_means);
    assert_eq!(high.informative_vars, low.informative_vars);
}

#[test]
fn independent_of_execution_mode() {
    let sim = SimConfig { seed: 77, n_subjects: 12, ..SimConfig::default() };
    let (a, ta) = generate_with(&sim, Exec::Parallel).unwrap();
    let (b, tb) = generate_with(&sim, Exec::Sequential).unwrap();
    assert_eq!(a.values(), b.values());
    assert_eq!(ta, tb);
}
