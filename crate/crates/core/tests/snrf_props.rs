use fsqkd::coincidence::{coarsen, total, BlockStats};
use fsqkd::keyrate::{binary_entropy, ErrorCorrectionModel};
use fsqkd::snrf::{apply_snrf, rolling_threshold, summary_table, sweep_blocks, SnrfConfig};
use proptest::prelude::*;

fn blocks(n: usize) -> impl Strategy<Value = Vec<BlockStats>> {
    proptest::collection::vec((0u64..200, 0u64..60, 0u64..30), 1..n).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (bob, coin, err))| {
                let coincidences = coin.min(bob);
                let sifted = coincidences / 2;
                let errors = err.min(sifted);
                BlockStats {
                    block_index: i,
                    duration: 0.005,
                    alice_singles: 1000,
                    bob_singles: bob,
                    coincidences,
                    sifted_count: sifted,
                    sifted_z: sifted,
                    errors_z: errors,
                    ..BlockStats::default()
                }
            })
            .collect()
    })
}

/// Pooled key of blocks at or above a rate, recomputed by hand.
fn key_oracle(blocks: &[BlockStats], threshold: f64, f: f64) -> f64 {
    let (mut n, mut e) = (0u64, 0u64);
    for b in blocks.iter().filter(|b| b.bob_singles as f64 / b.duration >= threshold) {
        n += b.sifted_count;
        e += b.errors();
    }
    if n == 0 {
        return 0.0;
    }
    let q = (e as f64 / n as f64).min(0.5);
    (n as f64 * (1.0 - (1.0 + f) * binary_entropy(q).unwrap())).max(0.0)
}

proptest! {
    #[test]
    fn zero_threshold_keeps_everything(b in blocks(80)) {
        let split = apply_snrf(&b, &SnrfConfig::singles(0.005, 0.0).unwrap()).unwrap();
        prop_assert!(split.rejected.is_empty());
        prop_assert_eq!(split.kept, b);
    }

    #[test]
    fn split_conserves_blocks(b in blocks(80), t in 0.0f64..50_000.0) {
        let split = apply_snrf(&b, &SnrfConfig::singles(0.005, t).unwrap()).unwrap();
        prop_assert_eq!(split.kept.len() + split.rejected.len(), b.len());
        let (mut k, r, all) = (total(&split.kept), total(&split.rejected), total(&b));
        k.absorb(&r);
        prop_assert_eq!((k.coincidences, k.sifted_count, k.errors()), (all.coincidences, all.sifted_count, all.errors()));
        prop_assert!(split.kept.iter().all(|x| x.bob_rate() >= t));
        prop_assert!(split.rejected.iter().all(|x| x.bob_rate() < t));
    }

    #[test]
    fn grid_matches_oracle_and_optimum_is_its_max(b in blocks(120), f in 1.0f64..1.4) {
        let ec = ErrorCorrectionModel::constant(f).unwrap();
        let durations = [0.005, 0.010, 0.020];
        let thresholds = [0.0, 2000.0, 8000.0, 20_000.0, 35_000.0];
        let r = sweep_blocks(&b, 0.005, &durations, &thresholds, &ec).unwrap();
        let mut best = f64::NEG_INFINITY;
        for (i, d) in durations.iter().enumerate() {
            let coarse = coarsen(&b, (d / 0.005).round() as usize).unwrap();
            for (j, t) in thresholds.iter().enumerate() {
                let want = key_oracle(&coarse, *t, f);
                prop_assert!((r.secret_bits[i][j] - want).abs() <= 1e-9 * want.max(1.0));
                best = best.max(want);
            }
        }
        prop_assert!((r.optimum.secret_bits - best).abs() <= 1e-9 * best.max(1.0));
        // Threshold zero is always on the grid, so filtering never loses.
        prop_assert!(r.optimum.secret_bits + 1e-9 >= r.unfiltered_secret_bits);
    }

    #[test]
    fn summary_rows_partition_the_run(b in blocks(80), t in 0.0f64..40_000.0) {
        let ec = ErrorCorrectionModel::default();
        let rows = summary_table(&b, &SnrfConfig::singles(0.005, t).unwrap(), &ec).unwrap();
        prop_assert_eq!(rows[0].raw, rows[1].raw + rows[2].raw);
        prop_assert_eq!(rows[0].sifted, rows[1].sifted + rows[2].sifted);
    }

    #[test]
    fn rolling_segments_cover_the_run(b in blocks(200), w in 10usize..40) {
        let r = rolling_threshold(&b, w, &[0.0, 5000.0, 20_000.0], &ErrorCorrectionModel::default()).unwrap();
        let covered: usize = r.segments.iter().map(|s| s.n_blocks).sum();
        prop_assert_eq!(covered, b.len());
        prop_assert!(r.key.sifted_count <= total(&b).sifted_count);
    }
}

#[test]
fn wrong_block_duration_is_rejected() {
    let b = vec![
        BlockStats {
            duration: 0.01,
            ..BlockStats::default()
        };
        3
    ];
    assert!(apply_snrf(&b, &SnrfConfig::singles(0.005, 0.0).unwrap()).is_err());
}
