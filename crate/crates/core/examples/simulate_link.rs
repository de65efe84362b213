//! Generates a short link run over a fading channel and counts
//! coincidences, accidentals and the sifted-key QBER.

use fsqkd::channel::{sample_trace, PdtcModel};
use fsqkd::coincidence::{block_statistics, estimate_accidentals, find_coincidences, qber, total, CoincidenceConfig};
use fsqkd::events::{BackgroundConfig, DeviceEfficiencies, EventGenerator, SourceConfig};

fn main() -> fsqkd::error::Result<()> {
    let source = SourceConfig {
        pair_rate: 1e6,
        intrinsic_qber: 0.0234,
    };
    let devices = DeviceEfficiencies::lumped(0.95, 0.8);
    let background = BackgroundConfig {
        bob_background_rate: 2700.0,
        ..BackgroundConfig::default()
    };
    let trace = sample_trace(&PdtcModel::lognormal(1.5, 0.01)?, 200, 0.01, 1)?;
    let gen = EventGenerator::link(&source, &devices, &background, &trace, 1)?;
    let (alice, bob) = gen.collect();
    println!(
        "Alice {} events ({:.0}/s), Bob {} events ({:.0}/s)",
        alice.len(),
        alice.rate(),
        bob.len(),
        bob.rate()
    );

    let cc = CoincidenceConfig::default();
    let pairs = find_coincidences(&alice, &bob, &cc)?;
    let acc = estimate_accidentals(&alice, &bob, &cc)?;
    println!(
        "{} coincidences; accidentals {:.1}/s measured, {:.1}/s from singles",
        pairs.len(),
        acc.measured_rate,
        acc.analytic_rate
    );

    let blocks = block_statistics(&alice, &bob, 0.01, &cc)?;
    let q = qber(&blocks)?;
    let t = total(&blocks);
    println!(
        "sifted {} bits, QBER {:.2}% (Z {:.2}%, X {:.2}%)",
        t.sifted_count,
        q.total * 100.0,
        q.z.unwrap_or(f64::NAN) * 100.0,
        q.x.unwrap_or(f64::NAN) * 100.0
    );
    Ok(())
}
