use dpzo_core::accountant::normal_cdf;
use dpzo_core::rng::{derive_seed, standard_normal_quantile};
use dpzo_core::{clip_scalar, gaussian_vector, laplace_scalar, poisson_sample, CoreError};
use dpzo_core::{Dataset, Example, Rng};
use proptest::prelude::*;

const N: usize = 1_000_000;

fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let c = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let var = c(2);
    (mean, var, c(3) / var.powf(1.5), c(4) / (var * var))
}

/// Kolmogorov-Smirnov distance between the sample and `cdf`.
fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn gaussian_moments() {
    let mut rng = Rng::new(1);
    let xs = gaussian_vector(&mut rng, N);
    let (mean, var, skew, kurt) = moments(&xs);
    let n = N as f64;
    assert!(mean.abs() < 5.0 / n.sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "var {var}");
    assert!(skew.abs() < 5.0 * (6.0 / n).sqrt(), "skew {skew}");
    assert!((kurt - 3.0).abs() < 5.0 * (24.0 / n).sqrt(), "kurtosis {kurt}");
}

#[test]
fn gaussian_passes_ks() {
    let mut rng = Rng::new(2);
    let xs = gaussian_vector(&mut rng, 100_000);
    // 1% critical value.
    assert!(ks(xs, normal_cdf) < 1.63 / (100_000f64).sqrt());
}

#[test]
fn laplace_moments_and_median() {
    let b = 2.5;
    let mut rng = Rng::new(3);
    let mut xs: Vec<f64> = (0..N).map(|_| laplace_scalar(&mut rng, b).unwrap()).collect();
    let (mean, var, skew, kurt) = moments(&xs);
    let n = N as f64;
    // Variance of the sample variance is (mu4 - sigma^4) / n = 20 b^4 / n.
    assert!(mean.abs() < 5.0 * (2.0 * b * b / n).sqrt(), "mean {mean}");
    assert!((var - 2.0 * b * b).abs() < 5.0 * (20.0 * b.powi(4) / n).sqrt(), "var {var}");
    assert!(skew.abs() < 0.05, "skew {skew}");
    assert!((kurt - 6.0).abs() < 0.2, "kurtosis {kurt}");
    xs.select_nth_unstable_by(N / 2, f64::total_cmp);
    let median = xs[N / 2];
    // Density at the median is 1/(2b), so its standard error is b/sqrt(n).
    assert!(median.abs() < 5.0 * b / n.sqrt(), "median {median}");
}

#[test]
fn laplace_passes_ks() {
    let b = 0.7;
    let mut rng = Rng::new(4);
    let xs: Vec<f64> = (0..100_000).map(|_| laplace_scalar(&mut rng, b).unwrap()).collect();
    let cdf = |x: f64| {
        if x < 0.0 {
            0.5 * (x / b).exp()
        } else {
            1.0 - 0.5 * (-x / b).exp()
        }
    };
    assert!(ks(xs, cdf) < 1.63 / (100_000f64).sqrt());
}

#[test]
fn laplace_rejects_bad_scale() {
    let mut rng = Rng::new(0);
    for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(matches!(laplace_scalar(&mut rng, s), Err(CoreError::InvalidScale(_))));
    }
}

#[test]
fn uniforms_stay_in_range() {
    let mut rng = Rng::new(5);
    for _ in 0..100_000 {
        let u = rng.unit();
        assert!((0.0..1.0).contains(&u));
        let o = rng.open01();
        assert!(o > 0.0 && o < 1.0);
    }
}

#[test]
fn derived_seeds_do_not_collide() {
    let mut seen = std::collections::HashSet::new();
    for stream in 0..20 {
        for index in 0..5000 {
            assert!(seen.insert(derive_seed(42, stream, index)));
        }
    }
}

#[test]
fn quantile_inverts_cdf() {
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        let back = normal_cdf(standard_normal_quantile(p));
        assert!((back - p).abs() <= 1e-15, "{p}: {back}");
    }
}

#[test]
fn poisson_sample_edges_and_rate() {
    let mut rng = Rng::new(6);
    assert!(poisson_sample(100, 0.0, &mut rng).is_empty());
    assert_eq!(poisson_sample(100, 1.0, &mut rng), (0..100).collect::<Vec<_>>());
    let mut counts = vec![0u32; 50];
    let rounds = 20_000;
    for _ in 0..rounds {
        let s = poisson_sample(50, 0.3, &mut rng);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        for i in s {
            counts[i] += 1;
        }
    }
    for c in counts {
        let rate = c as f64 / rounds as f64;
        assert!((rate - 0.3).abs() < 5.0 * (0.21 / rounds as f64).sqrt(), "{rate}");
    }
}

#[test]
fn dataset_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let data = Dataset::new(vec![
        Example::new(vec![0.1, -2.0, 1e-300], 1.0),
        Example::new(vec![3.5, 0.0, -7.25], -1.0),
    ])
    .unwrap();
    data.save_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().next().unwrap().ends_with("label"));
    assert_eq!(Dataset::load_csv(&path).unwrap(), data);
}

#[test]
fn dataset_rejects_ragged_and_empty() {
    assert!(matches!(Dataset::new(vec![]), Err(CoreError::EmptyDataset)));
    let ragged = vec![Example::new(vec![1.0], 1.0), Example::new(vec![1.0, 2.0], 1.0)];
    assert!(matches!(Dataset::new(ragged), Err(CoreError::RaggedFeatures { index: 1, .. })));
    let bad = "x0,label\n1.0,1\nfoo,0\n";
    assert!(Dataset::read_csv(bad.as_bytes()).is_err());
}

proptest! {
    #[test]
    fn clipping_is_a_projection(v in -1e12f64..1e12, c in 1e-6f64..1e6) {
        let x = clip_scalar(v, c);
        prop_assert!(x.abs() <= c);
        prop_assert_eq!(clip_scalar(x, c), x);
        if v.abs() <= c {
            prop_assert_eq!(x, v);
        } else {
            prop_assert_eq!(x, c.copysign(v));
        }
    }

    #[test]
    fn streams_replay(seed in any::<u64>(), skip in 0usize..100) {
        let mut a = Rng::new(seed);
        for _ in 0..skip {
            a.next_word();
        }
        let mut b = Rng::new(seed);
        let tail: Vec<u64> = (0..skip + 5).map(|_| b.next_word()).collect();
        let next: Vec<u64> = (0..5).map(|_| a.next_word()).collect();
        prop_assert_eq!(&tail[skip..], &next[..]);
    }

    #[test]
    fn poisson_indices_are_valid(n in 0usize..500, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let s = poisson_sample(n, p, &mut Rng::new(seed));
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.iter().all(|&i| i < n));
    }
}
