//! Calibrates Bob's device efficiency on a local run, then reconstructs
//! the link transmittance distribution block by block.

use fsqkd::channel::{fit_lognormal, sample_trace, PdtcModel};
use fsqkd::coincidence::{BlockAccumulator, CoincidenceConfig};
use fsqkd::events::{BackgroundConfig, DeviceEfficiencies, EventGenerator, SourceConfig};
use fsqkd::pdtc::{device_efficiency_from_local, estimate_link_pdtc};

fn stats(
    gen: &EventGenerator,
    block: f64,
    cc: &CoincidenceConfig,
) -> fsqkd::error::Result<Vec<fsqkd::coincidence::BlockStats>> {
    let mut acc = BlockAccumulator::new(block, gen.span_ns(), cc)?;
    gen.for_each_chunk(|c| acc.push_chunk(&c));
    Ok(acc.finish())
}

fn main() -> fsqkd::error::Result<()> {
    let source = SourceConfig {
        pair_rate: 1e6,
        intrinsic_qber: 0.0234,
    };
    let devices = DeviceEfficiencies::lumped(0.95, 0.8);
    let bg = BackgroundConfig::none();
    let cc = CoincidenceConfig::default();

    let local = EventGenerator::local(&source, &devices, &bg, 5.0, 2)?;
    let eta_b = device_efficiency_from_local(&stats(&local, 1.0, &cc)?)?;
    println!("calibrated eta_B = {eta_b:.4}");

    let truth = PdtcModel::lognormal(1.0, 0.0125)?;
    let trace = sample_trace(&truth, 3000, 0.01, 2)?;
    let link = EventGenerator::link(&source, &devices, &bg, &trace, 2)?;
    let est = estimate_link_pdtc(&stats(&link, 0.01, &cc)?, eta_b, 40)?;

    let positive: Vec<f64> = est.etas().into_iter().filter(|e| *e > 0.0).collect();
    let fit = fit_lognormal(&positive)?;
    println!(
        "recovered sigma {:.3} (true 1.0), mean {:.5} (true 0.0125)",
        fit.sigma, fit.mean_eta
    );
    est.write_histogram_csv(std::io::stdout().lock())?;
    Ok(())
}
