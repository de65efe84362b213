//! Key rates for a low-earth-orbit pass, one quasi-static entry per
//! elevation.
//!
//! Each entry samples a log-normal trace, simulates the downlink, builds
//! block statistics once and evaluates both the unfiltered key and the
//! SNRF sweep optimum from them.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_trace, PdtcModel};
use crate::coincidence::{BlockStats, CoincidenceConfig};
use crate::decoy::db_to_eta;
use crate::error::{ensure, Result};
use crate::events::{duration_to_ns, BackgroundConfig, DeviceEfficiencies, EventGenerator, SourceConfig};
use crate::keyrate::{secret_key_from_blocks, ErrorCorrectionModel, KeyRateResult};
use crate::rng::derive_seed;
use crate::snrf::{
    apply_snrf, base_block_ns, base_stats_from_generator, sweep_report, DEFAULT_DURATIONS, DEFAULT_THRESHOLD_POINTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassEntry {
    pub elevation_deg: f64,
    /// Mean link loss, excluding Bob's device efficiency.
    pub mean_loss_db: f64,
    pub sigma: f64,
    /// Bob's background, counts/s.
    pub background_rate: f64,
    /// Seconds spent at this elevation.
    pub dwell_time: f64,
}

fn default_source() -> SourceConfig {
    SourceConfig {
        pair_rate: 1e8,
        intrinsic_qber: 0.025,
    }
}

fn default_devices() -> DeviceEfficiencies {
    DeviceEfficiencies::lumped(0.3, 0.5)
}

fn default_trace_block() -> f64 {
    0.01
}

fn default_durations() -> Vec<f64> {
    DEFAULT_DURATIONS.to_vec()
}

fn default_points() -> usize {
    DEFAULT_THRESHOLD_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassScenario {
    pub entries: Vec<PassEntry>,
    #[serde(default = "default_source")]
    pub source: SourceConfig,
    #[serde(default = "default_devices")]
    pub devices: DeviceEfficiencies,
    #[serde(default)]
    pub alice_dark_rate: f64,
    #[serde(default)]
    pub bob_dark_rate: f64,
    /// Seconds per independent transmittance sample.
    #[serde(default = "default_trace_block")]
    pub trace_block_duration: f64,
    #[serde(default = "default_durations")]
    pub durations: Vec<f64>,
    #[serde(default = "default_points")]
    pub threshold_points: usize,
}

impl PassScenario {
    pub fn new(entries: Vec<PassEntry>) -> Result<Self> {
        let s = Self {
            entries,
            source: default_source(),
            devices: default_devices(),
            alice_dark_rate: 0.0,
            bob_dark_rate: 0.0,
            trace_block_duration: default_trace_block(),
            durations: default_durations(),
            threshold_points: default_points(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.entries.is_empty(), InvalidArgument, "scenario has no entries");
        for e in &self.entries {
            ensure!(
                e.elevation_deg > 0.0 && e.elevation_deg <= 90.0,
                InvalidArgument,
                "elevation {} outside (0, 90]",
                e.elevation_deg
            );
            ensure!(
                e.mean_loss_db > 0.0,
                InvalidArgument,
                "loss {} dB must be > 0",
                e.mean_loss_db
            );
            ensure!(e.sigma > 0.0, InvalidArgument, "sigma {} must be > 0", e.sigma);
            ensure!(
                e.background_rate >= 0.0,
                InvalidArgument,
                "background rate must be >= 0"
            );
            ensure!(e.dwell_time > 0.0, InvalidArgument, "dwell time must be > 0");
            ensure!(
                e.dwell_time >= self.trace_block_duration,
                InvalidArgument,
                "dwell time {} s is shorter than one trace block",
                e.dwell_time
            );
        }
        ensure!(
            self.entries.windows(2).all(|w| w[0].elevation_deg < w[1].elevation_deg),
            InvalidArgument,
            "entries must be sorted by strictly increasing elevation"
        );
        self.source.validate()?;
        self.devices.validate()?;
        duration_to_ns(self.trace_block_duration)?;
        base_block_ns(&self.durations)?;
        ensure!(
            self.threshold_points >= 1,
            InvalidArgument,
            "need at least one threshold"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassMode {
    NoSnrf,
    Snrf,
}

impl PassMode {
    pub fn label(self) -> &'static str {
        match self {
            Self::NoSnrf => "no_snrf",
            Self::Snrf => "snrf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassRow {
    pub elevation_deg: f64,
    pub mode: PassMode,
    pub secret_bits_per_s: f64,
    pub secret_bits_per_pass: f64,
    pub qber: Option<f64>,
    pub unfloored_fraction: f64,
    /// Filter setting behind the SNRF row.
    pub block_duration: Option<f64>,
    pub threshold_cps: Option<f64>,
    pub key: KeyRateResult,
}

/// Base-block statistics of one entry.
pub fn entry_block_stats(
    scenario: &PassScenario,
    index: usize,
    cc: &CoincidenceConfig,
    seed: u64,
) -> Result<(u64, Vec<BlockStats>)> {
    let e = &scenario.entries[index];
    let entry_seed = derive_seed(seed, index as u64);
    let n_blocks = (e.dwell_time / scenario.trace_block_duration).round().max(1.0) as usize;
    let model = PdtcModel::lognormal(e.sigma, db_to_eta(e.mean_loss_db))?;
    let trace = sample_trace(&model, n_blocks, scenario.trace_block_duration, entry_seed)?;
    let bg = BackgroundConfig {
        bob_background_rate: e.background_rate,
        alice_dark_rate: scenario.alice_dark_rate,
        bob_dark_rate: scenario.bob_dark_rate,
    };
    let gen = EventGenerator::link(&scenario.source, &scenario.devices, &bg, &trace, entry_seed)?;
    let base_ns = base_block_ns(&scenario.durations)?;
    Ok((base_ns, base_stats_from_generator(&gen, base_ns, cc)?))
}

fn rows_for_entry(
    scenario: &PassScenario,
    index: usize,
    cc: &CoincidenceConfig,
    ec: &ErrorCorrectionModel,
    seed: u64,
) -> Result<[PassRow; 2]> {
    let e = scenario.entries[index];
    let (base_ns, base) = entry_block_stats(scenario, index, cc, seed)?;
    let base_duration = base_ns as f64 * 1e-9;
    let plain = secret_key_from_blocks(&base, ec)?;
    let report = sweep_report(
        &base,
        base_duration,
        &scenario.durations,
        None,
        scenario.threshold_points,
        ec,
    )?;
    let opt = report.sweep.optimum;
    let split = apply_snrf(&report.blocks, &report.filter)?;
    let filtered = secret_key_from_blocks(&split.kept, ec)?;

    let row = |mode, key: KeyRateResult, setting: Option<(f64, f64)>| PassRow {
        elevation_deg: e.elevation_deg,
        mode,
        secret_bits_per_s: key.secret_bits / e.dwell_time,
        secret_bits_per_pass: key.secret_bits,
        qber: key.qber,
        unfloored_fraction: key.secret_fraction,
        block_duration: setting.map(|s| s.0),
        threshold_cps: setting.map(|s| s.1),
        key,
    };
    Ok([
        row(PassMode::NoSnrf, plain, None),
        row(PassMode::Snrf, filtered, Some((opt.duration, opt.threshold))),
    ])
}

/// Both modes for every entry, ordered by entry then mode.
pub fn evaluate_pass_both(
    scenario: &PassScenario,
    cc: &CoincidenceConfig,
    ec: &ErrorCorrectionModel,
    seed: u64,
) -> Result<Vec<PassRow>> {
    scenario.validate()?;
    cc.validate()?;
    ec.validate()?;
    let per_entry: Vec<[PassRow; 2]> = (0..scenario.entries.len())
        .into_par_iter()
        .map(|i| rows_for_entry(scenario, i, cc, ec, seed))
        .collect::<Result<_>>()?;
    Ok(per_entry.into_iter().flatten().collect())
}

/// One mode for every entry.
pub fn evaluate_pass(
    scenario: &PassScenario,
    with_snrf: bool,
    cc: &CoincidenceConfig,
    ec: &ErrorCorrectionModel,
    seed: u64,
) -> Result<Vec<PassRow>> {
    let mode = if with_snrf { PassMode::Snrf } else { PassMode::NoSnrf };
    Ok(evaluate_pass_both(scenario, cc, ec, seed)?
        .into_iter()
        .filter(|r| r.mode == mode)
        .collect())
}

pub fn write_pass_csv<W: Write>(rows: &[PassRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "elevation_deg",
        "mode",
        "secret_bits_per_s",
        "secret_bits_per_pass",
        "qber",
        "unfloored_fraction",
        "block_duration_ms",
        "threshold_cps",
    ])?;
    for r in rows {
        w.write_record([
            r.elevation_deg.to_string(),
            r.mode.label().to_string(),
            r.secret_bits_per_s.to_string(),
            r.secret_bits_per_pass.to_string(),
            r.qber.map(|q| q.to_string()).unwrap_or_default(),
            r.unfloored_fraction.to_string(),
            r.block_duration.map(|d| (d * 1e3).to_string()).unwrap_or_default(),
            r.threshold_cps.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PassTotals {
    pub no_snrf_bits_per_pass: f64,
    pub snrf_bits_per_pass: f64,
    pub entries: Vec<EntryTotals>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryTotals {
    pub elevation_deg: f64,
    pub mode: PassMode,
    pub secret_bits_per_s: f64,
    pub secret_bits_per_pass: f64,
}

pub fn pass_totals(rows: &[PassRow]) -> PassTotals {
    let sum = |m| {
        rows.iter()
            .filter(|r| r.mode == m)
            .map(|r| r.secret_bits_per_pass)
            .sum()
    };
    PassTotals {
        no_snrf_bits_per_pass: sum(PassMode::NoSnrf),
        snrf_bits_per_pass: sum(PassMode::Snrf),
        entries: rows
            .iter()
            .map(|r| EntryTotals {
                elevation_deg: r.elevation_deg,
                mode: r.mode,
                secret_bits_per_s: r.secret_bits_per_s,
                secret_bits_per_pass: r.secret_bits_per_pass,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(el: f64) -> PassEntry {
        PassEntry {
            elevation_deg: el,
            mean_loss_db: 30.0,
            sigma: 0.5,
            background_rate: 1000.0,
            dwell_time: 0.1,
        }
    }

    #[test]
    fn validation() {
        assert!(PassScenario::new(vec![]).is_err());
        assert!(PassScenario::new(vec![entry(40.0), entry(30.0)]).is_err());
        assert!(PassScenario::new(vec![entry(0.0)]).is_err());
        assert!(PassScenario::new(vec![PassEntry {
            dwell_time: 0.001,
            ..entry(10.0)
        }])
        .is_err());
        assert!(PassScenario::new(vec![entry(30.0), entry(40.0)]).is_ok());
    }

    #[test]
    fn both_modes_reported_per_entry() {
        let mut s = PassScenario::new(vec![entry(30.0), entry(60.0)]).unwrap();
        s.source.pair_rate = 1e6;
        let cc = CoincidenceConfig::with_window(1).unwrap();
        let rows = evaluate_pass_both(&s, &cc, &ErrorCorrectionModel::default(), 3).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].mode, PassMode::NoSnrf);
        assert_eq!(rows[1].mode, PassMode::Snrf);
        for r in &rows {
            assert!(r.secret_bits_per_s >= 0.0);
            assert!((r.secret_bits_per_pass - r.secret_bits_per_s * 0.1).abs() < 1e-9);
        }
        let mut buf = Vec::new();
        write_pass_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("elevation_deg,mode,secret_bits_per_s,secret_bits_per_pass,qber,unfloored_fraction,block_duration_ms,threshold_cps\n30,no_snrf,"));
    }
}
