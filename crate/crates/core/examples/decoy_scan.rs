//! Decoy-state key rate per pulse for a static channel and a log-normal
//! fading one of the same mean loss.

use fsqkd::decoy::{scan_sigma, DecoyParams};

fn main() -> fsqkd::error::Result<()> {
    let losses: Vec<f64> = (1..=10).map(|k| 5.0 * k as f64).collect();
    let rows = scan_sigma(&DecoyParams::default(), &losses, &[0.18, 1.8], true)?;
    println!("loss dB  sigma  static      fading      rel. diff");
    for r in rows {
        println!(
            "{:>7}  {:>5}  {:.4e}  {:.4e}  {:+.3}%",
            r.mean_loss_db,
            r.sigma,
            r.rate_static,
            r.rate_fluct,
            (r.rate_fluct / r.rate_static - 1.0) * 100.0
        );
    }
    Ok(())
}
