use fsqkd::channel::{fit_lognormal, sample_trace, LogNormal, MeanAnchor, PdtcModel};
use fsqkd::quad::integrate;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn anchor() -> impl Strategy<Value = MeanAnchor> {
    prop_oneof![
        Just(MeanAnchor::Untruncated),
        Just(MeanAnchor::Truncated),
        Just(MeanAnchor::Literal)
    ]
}

/// Interval probability from the Gaussian law of `-ln eta`.
fn interval_oracle(ln: &LogNormal, a: f64, b: f64) -> f64 {
    let n = Normal::new(ln.location(), ln.sigma()).unwrap();
    let mass = n.cdf(0.0).mul_add(-1.0, 1.0);
    (n.cdf(-a.ln()) - n.cdf(-b.ln())) / mass
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_is_normalized(sigma in 0.1f64..2.5, db in 3.0f64..40.0, anchor in anchor()) {
        let mean = 10f64.powf(-db / 10.0);
        let Ok(ln) = LogNormal::with_anchor(sigma, mean, anchor) else { return Ok(()) };
        // Integrate in theta = -ln eta, where the density is smooth.
        let mass = integrate(|t: f64| ln.density((-t).exp()) * (-t).exp(), 0.0, ln.location() + 15.0 * sigma, 1e-10, 1e-14).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-6, "mass {}", mass);
    }

    #[test]
    fn density_matches_gaussian_oracle(sigma in 0.2f64..2.0, db in 5.0f64..30.0, lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let ln = LogNormal::new(sigma, 10f64.powf(-db / 10.0)).unwrap();
        let a = 1e-6 + lo.min(hi) * 0.5;
        let b = a + (lo - hi).abs() * 0.5 + 1e-6;
        let p = integrate(|x| ln.density(x), a, b, 1e-10, 1e-14).unwrap();
        prop_assert!((p - interval_oracle(&ln, a, b)).abs() < 1e-7);
    }

    #[test]
    fn truncated_anchor_hits_its_mean(sigma in 0.1f64..2.2, db in 3.0f64..40.0) {
        let mean = 10f64.powf(-db / 10.0);
        let Ok(ln) = LogNormal::with_anchor(sigma, mean, MeanAnchor::Truncated) else { return Ok(()) };
        let m = integrate(|t: f64| ln.density((-t).exp()) * (-2.0 * t).exp(), 0.0, ln.location() + 15.0 * sigma, 1e-11, 1e-16).unwrap();
        prop_assert!((m / mean - 1.0).abs() < 1e-6);
        prop_assert!((ln.truncated_mean() / mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn samples_stay_in_unit_interval(sigma in 0.1f64..3.0, db in 0.5f64..40.0, seed in any::<u64>()) {
        let m = PdtcModel::lognormal(sigma, 10f64.powf(-db / 10.0)).unwrap();
        let t = sample_trace(&m, 200, 0.01, seed).unwrap();
        prop_assert!(t.etas.iter().all(|e| *e > 0.0 && *e <= 1.0));
    }

    #[test]
    fn empirical_mean_is_bin_weighted(p in proptest::collection::vec(0.0f64..1.0, 1..20)) {
        let s: f64 = p.iter().sum();
        prop_assume!(s > 0.0);
        let probs: Vec<f64> = p.iter().map(|x| x / s).collect();
        let n = probs.len();
        let edges: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let m = PdtcModel::empirical(edges.clone(), probs.clone()).unwrap();
        let oracle: f64 = probs.iter().enumerate().map(|(k, q)| q * 0.5 * (edges[k] + edges[k + 1])).sum();
        prop_assert!((m.mean() - oracle).abs() < 1e-12);
    }
}

#[test]
fn sampled_trace_refits() {
    let m = PdtcModel::lognormal(0.8, 0.02).unwrap();
    let t = sample_trace(&m, 100_000, 0.01, 11).unwrap();
    let fit = fit_lognormal(&t.etas).unwrap();
    // Standard errors are about 0.3% for both.
    assert!((fit.sigma / 0.8 - 1.0).abs() < 0.015, "{fit:?}");
    assert!((fit.mean_eta / 0.02 - 1.0).abs() < 0.02, "{fit:?}");
}

#[test]
fn same_seed_same_trace() {
    let m = PdtcModel::lognormal(1.0, 0.01).unwrap();
    assert_eq!(
        sample_trace(&m, 50, 0.01, 5).unwrap(),
        sample_trace(&m, 50, 0.01, 5).unwrap()
    );
    assert_ne!(
        sample_trace(&m, 50, 0.01, 5).unwrap(),
        sample_trace(&m, 50, 0.01, 6).unwrap()
    );
}

#[test]
fn tiny_sigma_concentrates_at_the_mean() {
    let ln = LogNormal::new(1e-6, 0.1).unwrap();
    let p = interval_oracle(&ln, 0.099, 0.101);
    assert!(p > 0.999, "mass {p}");
    assert!((ln.mean_eta() - 0.1).abs() < 1e-12);
}
