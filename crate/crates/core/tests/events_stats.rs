use fsqkd::channel::TransmissionTrace;
use fsqkd::coincidence::{block_statistics, qber, total, CoincidenceConfig};
use fsqkd::events::{
    simulate_link_experiment, simulate_local_experiment, BackgroundConfig, DeviceEfficiencies, EventGenerator, Party,
    SourceConfig, TimeTagStream,
};

fn src(n: f64, q: f64) -> SourceConfig {
    SourceConfig {
        pair_rate: n,
        intrinsic_qber: q,
    }
}

fn within_sigmas(observed: f64, expected: f64, k: f64) -> bool {
    (observed - expected).abs() <= k * expected.sqrt()
}

#[test]
fn singles_follow_expected_rates() {
    let bg = BackgroundConfig {
        bob_background_rate: 3000.0,
        alice_dark_rate: 200.0,
        bob_dark_rate: 100.0,
    };
    let trace = TransmissionTrace::constant(0.02, 200, 0.01).unwrap();
    let (a, b) =
        simulate_link_experiment(&src(5e5, 0.02), &DeviceEfficiencies::lumped(0.9, 0.7), &bg, &trace, 3).unwrap();
    // N eta_A + dark, and N eta_B eta + background + dark, over 2 s.
    assert!(
        within_sigmas(a.len() as f64, 2.0 * (5e5 * 0.9 + 200.0), 5.0),
        "{}",
        a.len()
    );
    assert!(
        within_sigmas(b.len() as f64, 2.0 * (5e5 * 0.7 * 0.02 + 3100.0), 5.0),
        "{}",
        b.len()
    );
}

#[test]
fn clean_local_run_reproduces_intrinsic_qber() {
    let (a, b) = simulate_local_experiment(
        &src(2e5, 0.05),
        &DeviceEfficiencies::lumped(0.8, 0.8),
        &BackgroundConfig::none(),
        2.0,
        8,
    )
    .unwrap();
    let blocks = block_statistics(&a, &b, 0.1, &CoincidenceConfig::default()).unwrap();
    let t = total(&blocks);
    let q = qber(&blocks).unwrap().total;
    let sd = (0.05 * 0.95 / t.sifted_count as f64).sqrt();
    assert!((q - 0.05).abs() < 5.0 * sd + 2e-3, "{q}");
    // Half the pairs survive sifting.
    let frac = t.sifted_count as f64 / t.coincidences as f64;
    assert!((frac - 0.5).abs() < 0.01, "{frac}");
}

#[test]
fn chunks_are_reproducible_and_seed_dependent() {
    let trace = TransmissionTrace::constant(0.1, 20, 0.01).unwrap();
    let make = |seed| {
        EventGenerator::link(
            &src(1e5, 0.02),
            &DeviceEfficiencies::lumped(0.9, 0.8),
            &BackgroundConfig::none(),
            &trace,
            seed,
        )
        .unwrap()
    };
    let (g1, g2, g3) = (make(1), make(1), make(2));
    assert_eq!(g1.chunk(7).alice, g2.chunk(7).alice);
    assert_eq!(g1.chunk(7).bob, g2.chunk(7).bob);
    assert_ne!(g1.chunk(7).alice, g3.chunk(7).alice);
}

#[test]
fn streams_round_trip_through_csv() {
    let (a, _) = simulate_local_experiment(
        &src(1e4, 0.02),
        &DeviceEfficiencies::lumped(0.9, 0.8),
        &BackgroundConfig::none(),
        0.1,
        1,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alice.csv");
    a.write_csv(std::fs::File::create(&path).unwrap(), true).unwrap();
    let back = TimeTagStream::read_csv(&path, Party::Alice, Some(a.span_ns())).unwrap();
    assert_eq!(back.len(), a.len());
    for (x, y) in back.events().iter().zip(a.events()) {
        assert_eq!(
            (x.timestamp_ns, x.basis, x.outcome),
            (y.timestamp_ns, y.basis, y.outcome)
        );
    }
}
