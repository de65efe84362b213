use fsqkd::channel::PdtcModel;
use fsqkd::decoy::{
    bound_at, db_to_eta, gain_and_error, optimal_key_rate, secure_key_rate, tighter_bound, y0_interval, ChannelSpec,
    DecoyParams, Observed,
};
use fsqkd::keyrate::binary_entropy;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = DecoyParams> {
    (0.2f64..0.9, 0.01f64..0.15, 0.0f64..1e-5, 0.0f64..0.04).prop_map(|(mu, nu, y0, ed)| DecoyParams {
        mu,
        nu,
        y0,
        e_detector: ed,
        ..DecoyParams::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Static gain `Y0 + 1 - exp(-eta mu)` and its error rate.
    #[test]
    fn static_gain_matches_closed_form(p in params(), db in 1.0f64..50.0) {
        let eta = db_to_eta(db);
        let (q, e) = gain_and_error(&p, &ChannelSpec::static_eta(eta).unwrap(), p.mu).unwrap();
        let signal = 1.0 - (-eta * p.mu).exp();
        let q_want = p.y0 + signal;
        prop_assert!((q / q_want - 1.0).abs() < 1e-9);
        prop_assert!((e - (p.e0 * p.y0 + p.e_detector * signal) / q_want).abs() < 1e-9);
    }

    #[test]
    fn degenerate_fading_equals_static(p in params(), db in 1.0f64..45.0) {
        let eta = db_to_eta(db);
        let s = secure_key_rate(&p, &ChannelSpec::static_eta(eta).unwrap()).unwrap();
        let d = secure_key_rate(&p, &ChannelSpec::Fluctuating(PdtcModel::degenerate(eta).unwrap())).unwrap();
        prop_assert!((s - d).abs() <= 1e-12 * s.max(1e-300));
    }

    /// At the true vacuum yield the estimates bound the model's
    /// single-photon yield `Y0 + eta` and error rate; the worst case over
    /// admissible yields is never better than that.
    #[test]
    fn bounds_contain_the_truth(p in params(), db in 1.0f64..40.0) {
        let eta = db_to_eta(db);
        let spec = ChannelSpec::static_eta(eta).unwrap();
        let obs = Observed::measure(&p, &spec).unwrap();
        let at_truth = bound_at(&p, &obs, p.y0);
        let y1 = p.y0 + eta;
        prop_assert!(at_truth.y1_lower <= y1 * (1.0 + 1e-9));
        if at_truth.y1_lower > 0.0 {
            let e1 = (p.e0 * p.y0 + p.e_detector * eta) / y1;
            prop_assert!(at_truth.e1_upper + 1e-9 >= e1.min(0.5));
        }
        prop_assert!(tighter_bound(&p, &obs).rate <= at_truth.rate + 1e-15);
        let (lo, hi) = y0_interval(&p, &obs);
        prop_assert!(lo <= p.y0 * (1.0 + 1e-6) + 1e-15 && p.y0 <= hi * (1.0 + 1e-6) + 1e-15);
    }

    /// The worst case over admissible vacuum yields is never better than
    /// knowing the true one.
    #[test]
    fn tighter_bound_is_a_minimum(p in params(), db in 1.0f64..40.0) {
        let spec = ChannelSpec::static_eta(db_to_eta(db)).unwrap();
        let obs = Observed::measure(&p, &spec).unwrap();
        let worst = tighter_bound(&p, &obs);
        let (lo, hi) = y0_interval(&p, &obs);
        for k in 0..=20 {
            let y0 = lo + (hi - lo) * k as f64 / 20.0;
            prop_assert!(worst.rate <= bound_at(&p, &obs, y0).rate + 1e-15);
        }
    }

    #[test]
    fn rate_falls_with_loss(a in 1.0f64..45.0, b in 1.0f64..45.0) {
        let p = DecoyParams::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let r_lo = secure_key_rate(&p, &ChannelSpec::static_loss_db(lo).unwrap()).unwrap();
        let r_hi = secure_key_rate(&p, &ChannelSpec::static_loss_db(hi).unwrap()).unwrap();
        prop_assert!(r_lo + 1e-18 >= r_hi);
    }
}

/// With perfect knowledge of single-photon quantities the rate is
/// `q (Q1 (1 - h(e1)) - f Q_mu h(E_mu))`; the decoy estimate may not beat it.
#[test]
fn decoy_rate_below_perfect_knowledge() {
    let p = DecoyParams::default();
    for db in [5.0, 15.0, 25.0, 35.0] {
        let eta = db_to_eta(db);
        let spec = ChannelSpec::static_eta(eta).unwrap();
        let obs = Observed::measure(&p, &spec).unwrap();
        let y1 = p.y0 + eta;
        let e1 = (p.e0 * p.y0 + p.e_detector * eta) / y1;
        let q1 = y1 * p.mu * (-p.mu).exp();
        let ideal =
            p.q * (q1 * (1.0 - binary_entropy(e1).unwrap()) - p.f_ec * obs.q_mu * binary_entropy(obs.e_mu).unwrap());
        let got = secure_key_rate(&p, &spec).unwrap();
        assert!(got <= ideal * (1.0 + 1e-9), "{db} dB: {got} > {ideal}");
        assert!(got >= 0.8 * ideal, "{db} dB: {got} far below {ideal}");
    }
}

#[test]
fn optimal_mu_beats_default() {
    let p = DecoyParams::default();
    let spec = ChannelSpec::static_loss_db(20.0).unwrap();
    let (mu, best) = optimal_key_rate(&p, &spec).unwrap();
    assert!(mu > p.nu && mu <= 1.5);
    assert!(best >= secure_key_rate(&p, &spec).unwrap());
}

#[test]
fn calm_atmosphere_matches_static() {
    // A weakly fluctuating channel is indistinguishable from a static one.
    let p = DecoyParams::default();
    for db in [5.0, 20.0, 40.0] {
        let s = secure_key_rate(&p, &ChannelSpec::static_loss_db(db).unwrap()).unwrap();
        let f = secure_key_rate(&p, &ChannelSpec::lognormal_loss_db(0.18, db).unwrap()).unwrap();
        assert!((f / s - 1.0).abs() < 0.01, "{db} dB");
    }
}

#[test]
fn fading_never_raises_the_clean_gain() {
    // 1 - exp(-mu eta) is concave in eta.
    let p = DecoyParams {
        y0: 0.0,
        e_detector: 0.0,
        ..DecoyParams::default()
    };
    for db in [5.0, 10.0, 20.0, 30.0, 40.0] {
        for sigma in [0.18, 0.9, 1.8] {
            let s = ChannelSpec::static_loss_db(db).unwrap();
            let f = ChannelSpec::lognormal_loss_db(sigma, db).unwrap();
            let (qs, _) = gain_and_error(&p, &s, p.mu).unwrap();
            let (qf, _) = gain_and_error(&p, &f, p.mu).unwrap();
            assert!(qf <= qs * (1.0 + 1e-9), "{db} dB sigma {sigma}: {qf} > {qs}");
        }
    }
}

#[test]
fn clean_single_photon_yield_matches_photon_number_sum() {
    let p = DecoyParams {
        y0: 0.0,
        e_detector: 0.0,
        ..DecoyParams::default()
    };
    for db in [3.0, 10.0, 25.0] {
        let eta = db_to_eta(db);
        // Gain summed over photon numbers with Y_n = 1 - (1 - eta)^n.
        let gain = |mu: f64| {
            let (mut term, mut sum) = ((-mu).exp(), 0.0);
            for n in 1..60 {
                term *= mu / n as f64;
                sum += term * (1.0 - (1.0 - eta).powi(n));
            }
            sum
        };
        let obs = Observed::measure(&p, &ChannelSpec::static_eta(eta).unwrap()).unwrap();
        assert!((obs.q_mu - gain(p.mu)).abs() < 1e-12 * gain(p.mu).max(1e-300));
        let b = bound_at(&p, &obs, 0.0);
        assert!(b.y1_lower <= eta * (1.0 + 1e-9));
        assert!(b.y1_lower > 0.9 * eta, "{db} dB: {} vs {eta}", b.y1_lower);
    }
}
