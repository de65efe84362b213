//! Key over an illustrative satellite pass, with and without SNRF. The
//! lowest entry has no key unless the filter is used.

use fsqkd::config::ExperimentConfig;
use fsqkd::satellite::{evaluate_pass_both, pass_totals, write_pass_csv};

fn main() -> fsqkd::error::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(include_str!("../configs/satellite.toml"), "satellite.toml")?;
    let section = cfg.satellite.as_ref().expect("bundled config has a pass");
    let rows = evaluate_pass_both(
        &section.scenario()?,
        &section.coincidence,
        &cfg.error_correction,
        cfg.seed,
    )?;
    write_pass_csv(&rows, std::io::stdout().lock())?;
    println!("{}", serde_json::to_string_pretty(&pass_totals(&rows))?);
    Ok(())
}
