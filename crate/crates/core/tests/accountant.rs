use dpzo_core::accountant::{
    account, analytic_gaussian_delta, calibrate_sigma, compose_pld, discretize_pld,
    mc_delta_laplace, AccountOptions, AccountingBudget, Direction, GridSpec, McOptions, Mechanism,
    Method, PrivacyCurve, PrivacySpec,
};
use dpzo_core::optimizer::TrainConfig;
use proptest::prelude::*;

fn spec(mechanism: Mechanism, sigma: f64, p: f64, steps: u64, delta: f64) -> PrivacySpec {
    PrivacySpec::new(mechanism, sigma, p, steps, delta).unwrap()
}

fn eps(s: &PrivacySpec, method: Method) -> dpzo_core::accountant::Bounds {
    account(s, method, &AccountOptions::default()).unwrap().epsilon
}

#[test]
fn single_gaussian_step_matches_analytic_mechanism() {
    for sigma in [0.5, 1.0, 2.0, 4.0] {
        let s = spec(Mechanism::Gaussian, sigma, 1.0, 1, 1e-5);
        let curve = PrivacyCurve::for_spec(&s, &AccountingBudget::default()).unwrap();
        for i in 0..=50 {
            let e = 0.1 * i as f64;
            let exact = analytic_gaussian_delta(sigma, 1.0, e);
            let d = curve.delta(e);
            assert!(
                (d.estimate - exact).abs() < 1e-6,
                "sigma {sigma} eps {e}: {} vs {exact}",
                d.estimate
            );
            assert!(d.lower <= exact && exact <= d.upper, "sigma {sigma} eps {e}: {d:?}");
        }
    }
}

#[test]
fn single_laplace_step_matches_closed_form() {
    // Without subsampling the loss takes values in [-1/b, 1/b] with an atom
    // at 1/b of mass 1/2 and delta(eps) = 1 - exp((eps - 1/b) / 2).
    for b in [0.5, 1.0, 3.0] {
        let s = spec(Mechanism::Laplace, b, 1.0, 1, 1e-5);
        let curve = PrivacyCurve::for_spec(&s, &AccountingBudget::default()).unwrap();
        for i in 0..20 {
            let e = i as f64 * 0.05 / b;
            let exact = (1.0 - ((e - 1.0 / b) / 2.0).exp()).max(0.0);
            let d = curve.delta(e);
            assert!(d.lower <= exact + 1e-12 && exact <= d.upper + 1e-12, "b {b} eps {e}: {d:?} vs {exact}");
            assert!((d.estimate - exact).abs() < 1e-3, "b {b} eps {e}: {d:?} vs {exact}");
        }
    }
}

#[test]
fn fft_composition_matches_direct_convolution() {
    let budget = AccountingBudget {
        eps_error: 0.05,
        delta_error: 1e-10,
    };
    for (mechanism, sigma, p) in [(Mechanism::Gaussian, 1.0, 0.3), (Mechanism::Laplace, 1.5, 0.5)] {
        for direction in Direction::BOTH {
            let s = spec(mechanism, sigma, p, 2, 1e-5);
            let auto = GridSpec::auto(&s, direction, &budget).unwrap();
            let grid = GridSpec::new(auto.grid_min, (auto.grid_max() - auto.grid_min) / 4095.0, 4096)
                .unwrap();
            let one = discretize_pld(&s, direction, &grid, &budget).unwrap();
            assert_eq!(one.len(), 4096);

            let mut direct = vec![0.0; 2 * 4096 - 1];
            for (i, a) in one.masses.iter().enumerate() {
                for (j, b) in one.masses.iter().enumerate() {
                    direct[i + j] += a * b;
                }
            }
            let two = compose_pld(&one, 2).unwrap();
            let shift = ((two.grid_min - 2.0 * one.grid_min) / one.mesh).round() as i64;
            let mut tv = 0.0;
            let mut covered = vec![false; direct.len()];
            for (k, m) in two.masses.iter().enumerate() {
                let idx = shift + k as i64;
                let reference = if (0..direct.len() as i64).contains(&idx) {
                    covered[idx as usize] = true;
                    direct[idx as usize]
                } else {
                    0.0
                };
                tv += (m - reference).abs();
            }
            tv += direct
                .iter()
                .zip(&covered)
                .filter(|(_, c)| !**c)
                .map(|(d, _)| d)
                .sum::<f64>();
            assert!(tv < 1e-10, "{mechanism} {direction}: tv {tv:e}");
            assert!((two.mass_inf - (1.0 - (1.0 - one.mass_inf).powi(2))).abs() < 1e-15);
        }
    }
}

#[test]
fn monte_carlo_matches_pld_for_one_step() {
    let s = spec(Mechanism::Laplace, 1.0, 0.5, 1, 1e-5);
    let curve = PrivacyCurve::for_spec(&s, &AccountingBudget::default()).unwrap();
    let opts = McOptions {
        samples: 1_000_000,
        seed: 11,
        ..McOptions::default()
    };
    let samples = dpzo_core::accountant::McSamples::draw(&s, &opts).unwrap();
    for e in [0.05, 0.2, 0.4, 0.6] {
        let mc = samples.delta(e);
        let pld = curve.delta(e);
        let se = mc.std_error.max(1e-12);
        let gap = (mc.estimate - pld.estimate).abs();
        assert!(gap <= 3.0 * se, "eps {e}: mc {mc:?} pld {pld:?}");
        assert!(mc.lower <= pld.upper && pld.lower <= mc.upper);
    }
    let direct = mc_delta_laplace(&s, 0.2, &opts).unwrap();
    assert_eq!(direct, samples.delta(0.2));
}

#[test]
fn composing_scaled_gaussians_equals_one_release() {
    // n releases at noise sqrt(n) sigma compose to exactly one release at
    // sigma, which is how n-SPSA with a shared batch is accounted.
    let sigma = 2.0;
    let one = eps(&spec(Mechanism::Gaussian, sigma, 1.0, 1, 1e-5), Method::Pld);
    for n in [2u64, 4, 8] {
        let many = eps(
            &spec(Mechanism::Gaussian, sigma * (n as f64).sqrt(), 1.0, n, 1e-5),
            Method::Pld,
        );
        assert!(many.lower <= one.upper && one.lower <= many.upper, "n {n}: {many:?} vs {one:?}");
        assert!((many.estimate - one.estimate).abs() < 2e-3, "n {n}");
    }
}

#[test]
fn n_spsa_is_accounted_as_one_release_per_step() {
    let base = TrainConfig {
        sigma: 3.0,
        expected_batch: 10,
        steps: 50,
        ..TrainConfig::default()
    };
    let one = base.privacy_spec(500).unwrap();
    for n in [2, 4, 16] {
        assert_eq!(TrainConfig { n_spsa: n, ..base }.privacy_spec(500).unwrap(), one);
    }
    assert_eq!(one.sample_rate, 0.02);
    assert_eq!(one.steps, 50);
}

#[test]
fn subsampling_never_hurts() {
    for sigma in [0.8, 2.0] {
        let full = eps(&spec(Mechanism::Gaussian, sigma, 1.0, 10, 1e-5), Method::Pld);
        for p in [0.01, 0.1, 0.5] {
            let sub = eps(&spec(Mechanism::Gaussian, sigma, p, 10, 1e-5), Method::Pld);
            assert!(sub.lower <= full.upper, "sigma {sigma} p {p}");
            assert!(sub.estimate < full.estimate);
        }
    }
}

#[test]
fn laplace_pld_is_tighter_than_randomized_response() {
    let s = spec(Mechanism::Laplace, 4.0, 0.05, 200, 1e-5);
    let pld = eps(&s, Method::Pld);
    let rr = eps(&s, Method::RrPld);
    let pure = eps(&s, Method::ClosedFormPure);
    assert!(pld.lower <= rr.upper);
    assert!(rr.upper <= pure.upper);
}

#[test]
fn calibrated_sigma_is_feasible_and_tight() {
    let opts = AccountOptions::default();
    let c = calibrate_sigma(Mechanism::Gaussian, 1.0, 1e-5, 0.064, 200, Method::Pld, &opts).unwrap();
    assert!(c.epsilon <= 1.0);
    let below = account(&spec(Mechanism::Gaussian, c.sigma / 1.02, 0.064, 200, 1e-5), Method::Pld, &opts)
        .unwrap();
    assert!(below.epsilon() > 1.0, "{} at {}", below.epsilon(), c.sigma / 1.02);
}

#[test]
fn zero_steps_and_zero_rate_are_free() {
    let zero_steps = eps(&spec(Mechanism::Gaussian, 1.0, 0.5, 0, 1e-5), Method::Pld);
    assert_eq!(zero_steps.upper, 0.0);
    let zero_rate = eps(&spec(Mechanism::Gaussian, 1.0, 0.0, 100, 1e-5), Method::Pld);
    assert!(zero_rate.upper < 1e-2, "{zero_rate:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn epsilon_falls_with_sigma(sigma in 0.7f64..4.0, factor in 1.1f64..2.0, steps in 1u64..40) {
        let a = eps(&spec(Mechanism::Gaussian, sigma, 0.1, steps, 1e-5), Method::Pld);
        let b = eps(&spec(Mechanism::Gaussian, sigma * factor, 0.1, steps, 1e-5), Method::Pld);
        prop_assert!(b.lower <= a.upper);
        prop_assert!(b.estimate <= a.estimate + 1e-9);
    }

    #[test]
    fn epsilon_grows_with_steps(sigma in 0.7f64..4.0, steps in 1u64..30, extra in 1u64..30) {
        let a = eps(&spec(Mechanism::Gaussian, sigma, 0.1, steps, 1e-5), Method::Pld);
        let b = eps(&spec(Mechanism::Gaussian, sigma, 0.1, steps + extra, 1e-5), Method::Pld);
        prop_assert!(a.lower <= b.upper);
        prop_assert!(a.estimate <= b.estimate + 1e-9);
    }

    #[test]
    fn epsilon_grows_with_rate(sigma in 0.7f64..4.0, p in 0.01f64..0.5, bump in 1.1f64..2.0) {
        let a = eps(&spec(Mechanism::Laplace, sigma, p, 5, 1e-5), Method::Pld);
        let b = eps(&spec(Mechanism::Laplace, sigma, (p * bump).min(1.0), 5, 1e-5), Method::Pld);
        prop_assert!(a.lower <= b.upper);
        prop_assert!(a.estimate <= b.estimate + 1e-9);
    }

    #[test]
    fn bounds_are_ordered(sigma in 0.5f64..5.0, p in 0.001f64..1.0, steps in 1u64..50, gaussian in any::<bool>()) {
        let m = if gaussian { Mechanism::Gaussian } else { Mechanism::Laplace };
        let b = eps(&spec(m, sigma, p, steps, 1e-5), Method::Pld);
        prop_assert!(b.lower <= b.estimate && b.estimate <= b.upper);
        prop_assert!(b.lower >= 0.0);
        prop_assert!(b.upper - b.lower <= 2.5e-3, "{:?}", b);
    }
}
