//! Log-normal turbulence: density, the three mean anchors, and a sampled
//! transmittance trace refit by moments.

use fsqkd::channel::{fit_lognormal, sample_trace, LogNormal, MeanAnchor, PdtcModel};
use fsqkd::decoy::eta_to_db;

fn main() -> fsqkd::error::Result<()> {
    let mean = 0.01;
    println!("sigma  anchor       location  truncated mean");
    for sigma in [0.18, 1.0, 1.8] {
        for anchor in [MeanAnchor::Untruncated, MeanAnchor::Truncated, MeanAnchor::Literal] {
            let ln = LogNormal::with_anchor(sigma, mean, anchor)?;
            println!(
                "{sigma:<6} {:<12} {:>8.3}  {:.5}",
                format!("{anchor:?}"),
                ln.location(),
                ln.truncated_mean()
            );
        }
    }

    let model = PdtcModel::lognormal(1.0, mean)?;
    for eta in [0.001, 0.005, 0.01, 0.05] {
        println!("p({eta}) = {:.3}", model.density(eta)?);
    }

    let trace = sample_trace(&model, 20_000, 0.01, 42)?;
    let fit = fit_lognormal(&trace.etas)?;
    println!(
        "trace of {} blocks: mean {:.5} ({:.2} dB), refit sigma {:.3}",
        trace.len(),
        fit.mean_eta,
        eta_to_db(fit.mean_eta),
        fit.sigma
    );
    Ok(())
}
