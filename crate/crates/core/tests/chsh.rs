use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::f64::consts::SQRT_2;
use sunpair::chsh::*;
use sunpair::polarization::*;
use sunpair::source::{build_state, reference_calibration};

fn poisson_counts<R: Rng>(rho: &DensityMatrix, scale: f64, rng: &mut R) -> ChshCounts {
    let mut c = ChshCounts::exact(rho, ChshSettings::default(), scale).unwrap();
    for r in &mut c.records {
        let k: f64 = if r.normalized > 0.0 { Poisson::new(r.normalized).unwrap().sample(rng) } else { 0.0 };
        r.raw = k as u64;
        r.normalized = k;
    }
    c
}

#[test]
fn analytic_error_matches_resampling() {
    let rho = build_state(&reference_calibration(1600.0).params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for seed in 0..5 {
        // about 40 pairs per correlation
        let counts = poisson_counts(&rho, 40.0, &mut rng);
        let r = counts.evaluate().unwrap();
        let mc = counts.monte_carlo_std(2000, seed).unwrap();
        let ratio = mc / r.s_std;
        assert!((ratio - 1.0).abs() < 0.3, "MC/analytic = {ratio}");
    }
}

#[test]
fn analytic_error_matches_spread_of_repeated_experiments() {
    let rho = build_state(&reference_calibration(1600.0).params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let results: Vec<ChshResult> = (0..400).map(|_| poisson_counts(&rho, 40.0, &mut rng).evaluate().unwrap()).collect();
    let spread = run_spread(&results).unwrap();
    let mean_std = results.iter().map(|r| r.s_std).sum::<f64>() / results.len() as f64;
    assert!((spread.std / mean_std - 1.0).abs() < 0.3, "spread {} vs reported {mean_std}", spread.std);
    let exact = exact_s(&rho, &ChshSettings::default()).unwrap();
    assert!((spread.value - exact).abs() < 4.0 * spread.std / 20.0);
}

#[test]
fn exact_results_for_reference_states() {
    let singlet = densify(&PureState::singlet());
    let r = ChshResult::exact(&singlet, ChshSettings::default()).unwrap();
    assert!((r.s - 2.0 * SQRT_2).abs() < 1e-12);
    assert_eq!(r.s_std, 0.0);
    assert_eq!(r.violation_sigmas, None);
    // equal angles everywhere: every E is the same, so |S| = 2|E| ≤ 2
    let flat = ChshSettings {
        theta_s: 0.0,
        theta_s_prime: 0.0,
        theta_i: 0.0,
        theta_i_prime: 0.0,
    };
    assert!(exact_s(&singlet, &flat).unwrap() <= 2.0 + 1e-12);
    let mixed = DensityMatrix::maximally_mixed();
    assert!(exact_s(&mixed, &ChshSettings::default()).unwrap().abs() < 1e-12);
}

#[test]
fn werner_s_is_linear_in_visibility() {
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        let s = exact_s(&DensityMatrix::werner(v).unwrap(), &ChshSettings::default()).unwrap();
        assert!((s - 2.0 * SQRT_2 * v).abs() < 1e-12);
    }
}
