//! Signal-to-noise-ratio filtering on a shortened high-turbulence run:
//! the duration/threshold grid, its optimum and the three-row summary.

use fsqkd::selftest::replica_config;
use fsqkd::snrf::{base_block_ns, base_stats_from_generator, sweep_report, write_summary_csv};

fn main() -> fsqkd::error::Result<()> {
    let mut cfg = replica_config();
    cfg.experiment.duration = 20.0;
    let durations = cfg.snrf.durations();
    let base_ns = base_block_ns(&durations)?;
    let base = base_stats_from_generator(&cfg.generator()?, base_ns, &cfg.coincidence)?;
    let report = sweep_report(
        &base,
        base_ns as f64 * 1e-9,
        &durations,
        None,
        cfg.snrf.threshold_points,
        &cfg.error_correction,
    )?;

    for (d, row) in report.sweep.durations.iter().zip(&report.sweep.secret_bits) {
        let best = row.iter().cloned().fold(0.0, f64::max);
        println!("{:>5.0} ms: best {:.0} bits", d * 1e3, best);
    }
    println!("{}", report.sweep.optimum_json()?);
    write_summary_csv(&report.summary, std::io::stdout().lock())?;
    Ok(())
}
