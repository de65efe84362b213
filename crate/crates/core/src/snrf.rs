//! Signal-to-noise-ratio filter.
//!
//! A block is kept iff Bob's summed singles rate is at least the threshold.
//! Under a constant background the SNR is a monotone function of that rate,
//! so the SNR form is an affine re-parameterization of the same rule.
//! Kept blocks are pooled into one sifted key before the key fraction is
//! applied.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coincidence::{block_statistics, coarsen, total, BlockAccumulator, BlockStats, CoincidenceConfig};
use crate::error::{ensure, Result};
use crate::events::{duration_to_ns, EventGenerator, TimeTagStream};
use crate::keyrate::{secret_key_from_blocks, ErrorCorrectionModel, KeyRateResult};

/// Block durations in seconds.
pub const DEFAULT_DURATIONS: [f64; 6] = [0.005, 0.010, 0.020, 0.030, 0.050, 0.100];
pub const DEFAULT_THRESHOLD_POINTS: usize = 41;

/// Base blocks above this count make the sweep recompute per duration.
const MAX_BASE_BLOCKS: u64 = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FilterMode {
    /// Threshold is a singles rate in counts/s.
    Singles,
    /// Threshold is the dimensionless `(rate - background) / background`.
    Snr { background_rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrfConfig {
    /// Seconds.
    pub block_duration: f64,
    pub threshold: f64,
    pub mode: FilterMode,
}

impl SnrfConfig {
    pub fn singles(block_duration: f64, threshold: f64) -> Result<Self> {
        let c = Self {
            block_duration,
            threshold,
            mode: FilterMode::Singles,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn snr(block_duration: f64, threshold: f64, background_rate: f64) -> Result<Self> {
        let c = Self {
            block_duration,
            threshold,
            mode: FilterMode::Snr { background_rate },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.block_duration > 0.0 && self.block_duration.is_finite(),
            InvalidArgument,
            "block duration must be > 0"
        );
        ensure!(self.threshold >= 0.0, InvalidArgument, "threshold must be >= 0");
        if let FilterMode::Snr { background_rate } = self.mode {
            ensure!(
                background_rate > 0.0,
                InvalidArgument,
                "SNR mode needs a positive background rate"
            );
        }
        Ok(())
    }

    /// The equivalent singles-rate threshold in counts/s.
    pub fn rate_threshold(&self) -> f64 {
        match self.mode {
            FilterMode::Singles => self.threshold,
            FilterMode::Snr { background_rate } => background_rate * (1.0 + self.threshold),
        }
    }

    /// The threshold read as counts within one block.
    pub fn counts_per_block(&self) -> f64 {
        self.rate_threshold() * self.block_duration
    }

    fn keeps(&self, b: &BlockStats) -> bool {
        let rate = b.bob_rate();
        match self.mode {
            FilterMode::Singles => rate >= self.threshold,
            FilterMode::Snr { background_rate } => (rate - background_rate) / background_rate >= self.threshold,
        }
    }
}

fn check_durations(blocks: &[BlockStats], duration: f64) -> Result<()> {
    let tol = 1e-9 * duration;
    for (k, b) in blocks.iter().enumerate() {
        let last = k + 1 == blocks.len();
        let ok = (b.duration - duration).abs() <= tol || (last && b.duration > 0.0 && b.duration < duration);
        ensure!(
            ok,
            InvalidArgument,
            "block {} lasts {} s, filter expects {} s",
            b.block_index,
            b.duration,
            duration
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SnrfSplit {
    pub kept: Vec<BlockStats>,
    pub rejected: Vec<BlockStats>,
}

/// Partitions blocks into kept and rejected.
pub fn apply_snrf(blocks: &[BlockStats], cfg: &SnrfConfig) -> Result<SnrfSplit> {
    cfg.validate()?;
    check_durations(blocks, cfg.block_duration)?;
    let (kept, rejected) = blocks.iter().partition(|b| cfg.keeps(b));
    Ok(SnrfSplit { kept, rejected })
}

/// Pooled key over blocks with Bob rate `>= threshold`.
fn key_above(blocks: &[BlockStats], threshold: f64, ec: &ErrorCorrectionModel) -> Result<KeyRateResult> {
    let mut t = BlockStats::default();
    for b in blocks.iter().filter(|b| b.bob_rate() >= threshold) {
        t.absorb(b);
    }
    secret_key_from_blocks(&[t], ec)
}

/// `points` evenly spaced thresholds from 0 to twice the mean Bob rate.
pub fn default_thresholds(mean_bob_rate: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|k| 2.0 * mean_bob_rate * k as f64 / (points - 1) as f64)
        .collect()
}

pub fn mean_bob_rate(blocks: &[BlockStats]) -> f64 {
    let t = total(blocks);
    if t.duration > 0.0 {
        t.bob_singles as f64 / t.duration
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optimum {
    pub duration: f64,
    pub threshold: f64,
    pub secret_bits: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub durations: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// `secret_bits[i][j]` for `durations[i]`, `thresholds[j]`.
    pub secret_bits: Vec<Vec<f64>>,
    pub optimum: Optimum,
    pub unfiltered_secret_bits: f64,
    pub unfiltered: KeyRateResult,
}

impl SweepResult {
    pub fn gain(&self) -> f64 {
        self.optimum.secret_bits / self.unfiltered_secret_bits
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["duration_ms", "threshold_cps", "secret_bits"])?;
        for (i, d) in self.durations.iter().enumerate() {
            for (j, t) in self.thresholds.iter().enumerate() {
                w.write_record([(d * 1e3).to_string(), t.to_string(), self.secret_bits[i][j].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn optimum_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary {
            optimum_duration_ms: f64,
            optimum_threshold_cps: f64,
            optimum_threshold_counts_per_block: f64,
            optimum_secret_bits: f64,
            unfiltered_secret_bits: f64,
            gain: f64,
        }
        Ok(serde_json::to_string_pretty(&Summary {
            optimum_duration_ms: self.optimum.duration * 1e3,
            optimum_threshold_cps: self.optimum.threshold,
            optimum_threshold_counts_per_block: self.optimum.threshold * self.optimum.duration,
            optimum_secret_bits: self.optimum.secret_bits,
            unfiltered_secret_bits: self.unfiltered_secret_bits,
            gain: self.gain(),
        })?)
    }
}

/// Source of block statistics at arbitrary durations.
enum BlockSource<'a> {
    Base {
        blocks: Vec<BlockStats>,
        base_ns: u64,
    },
    Streams {
        a: &'a TimeTagStream,
        b: &'a TimeTagStream,
        cc: CoincidenceConfig,
    },
}

impl BlockSource<'_> {
    fn at(&self, duration: f64) -> Result<Vec<BlockStats>> {
        match self {
            Self::Base { blocks, base_ns } => {
                let ns = duration_to_ns(duration)?;
                ensure!(
                    ns % base_ns == 0,
                    InvalidArgument,
                    "duration {duration} s is not a multiple of the {base_ns} ns base block"
                );
                coarsen(blocks, (ns / base_ns) as usize)
            }
            Self::Streams { a, b, cc } => block_statistics(a, b, duration, cc),
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Greatest common block length of the durations, in ns.
pub fn base_block_ns(durations: &[f64]) -> Result<u64> {
    ensure!(!durations.is_empty(), InvalidArgument, "no block durations");
    let mut g = 0;
    for &d in durations {
        g = gcd(g, duration_to_ns(d)?);
    }
    Ok(g)
}

/// Sweep over time-tag streams held in memory.
pub fn sweep(
    a: &TimeTagStream,
    b: &TimeTagStream,
    durations: &[f64],
    thresholds: &[f64],
    cc: &CoincidenceConfig,
    ec: &ErrorCorrectionModel,
) -> Result<SweepResult> {
    let base_ns = base_block_ns(durations)?;
    let span = a.span_ns().max(b.span_ns());
    let source = if span / base_ns <= MAX_BASE_BLOCKS {
        BlockSource::Base {
            blocks: block_statistics(a, b, base_ns as f64 * 1e-9, cc)?,
            base_ns,
        }
    } else {
        BlockSource::Streams { a, b, cc: *cc }
    };
    sweep_source(&source, durations, thresholds, ec)
}

/// Per-block statistics at `base_ns` streamed from a generator, so the
/// event streams never need to be held in memory.
pub fn base_stats_from_generator(
    gen: &EventGenerator,
    base_ns: u64,
    cc: &CoincidenceConfig,
) -> Result<Vec<BlockStats>> {
    let mut acc = BlockAccumulator::new(base_ns as f64 * 1e-9, gen.span_ns(), cc)?;
    gen.for_each_chunk(|c| acc.push_chunk(&c));
    Ok(acc.finish())
}

/// Sweep over statistics at a base block length that divides every
/// duration.
pub fn sweep_blocks(
    base: &[BlockStats],
    base_duration: f64,
    durations: &[f64],
    thresholds: &[f64],
    ec: &ErrorCorrectionModel,
) -> Result<SweepResult> {
    let source = BlockSource::Base {
        blocks: base.to_vec(),
        base_ns: duration_to_ns(base_duration)?,
    };
    sweep_source(&source, durations, thresholds, ec)
}

fn sweep_source(
    source: &BlockSource,
    durations: &[f64],
    thresholds: &[f64],
    ec: &ErrorCorrectionModel,
) -> Result<SweepResult> {
    ensure!(!durations.is_empty(), InvalidArgument, "no block durations");
    ensure!(!thresholds.is_empty(), InvalidArgument, "no thresholds");
    ensure!(
        thresholds.iter().all(|t| *t >= 0.0 && t.is_finite()),
        InvalidArgument,
        "thresholds must be finite and >= 0"
    );
    let per_duration: Vec<Vec<BlockStats>> = durations.iter().map(|&d| source.at(d)).collect::<Result<_>>()?;
    let unfiltered = secret_key_from_blocks(&per_duration[0], ec)?;

    let cells: Vec<(usize, usize)> = (0..durations.len())
        .flat_map(|i| (0..thresholds.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| key_above(&per_duration[i], thresholds[j], ec).map(|r| r.secret_bits))
        .collect::<Result<_>>()?;

    let mut grid = vec![vec![0.0; thresholds.len()]; durations.len()];
    for (&(i, j), v) in cells.iter().zip(&values) {
        grid[i][j] = *v;
    }
    let optimum = argmax(durations, thresholds, &grid);
    Ok(SweepResult {
        durations: durations.to_vec(),
        thresholds: thresholds.to_vec(),
        secret_bits: grid,
        optimum,
        unfiltered_secret_bits: unfiltered.secret_bits,
        unfiltered,
    })
}

/// Grid argmax; ties go to the smallest duration, then smallest threshold.
fn argmax(durations: &[f64], thresholds: &[f64], grid: &[Vec<f64>]) -> Optimum {
    let mut best: Option<(f64, f64, f64)> = None;
    for (i, row) in grid.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let cand = (durations[i], thresholds[j], v);
            best = match best {
                None => Some(cand),
                Some(b) => {
                    let better = v > b.2 || (v == b.2 && (cand.0, cand.1) < (b.0, b.1));
                    Some(if better { cand } else { b })
                }
            };
        }
    }
    let (duration, threshold, secret_bits) = best.expect("non-empty grid");
    Optimum {
        duration,
        threshold,
        secret_bits,
    }
}

/// Best threshold for fixed blocks; ties go to the smallest threshold.
pub fn optimize_threshold(
    blocks: &[BlockStats],
    thresholds: &[f64],
    ec: &ErrorCorrectionModel,
) -> Result<(f64, KeyRateResult)> {
    ensure!(!thresholds.is_empty(), InvalidArgument, "no thresholds");
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, KeyRateResult)> = None;
    for t in sorted {
        let r = key_above(blocks, t, ec)?;
        if best.as_ref().is_none_or(|b| r.secret_bits > b.1.secret_bits) {
            best = Some((t, r));
        }
    }
    Ok(best.unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub first_block: usize,
    pub n_blocks: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RollingResult {
    pub segments: Vec<Segment>,
    /// Pooled over the kept blocks of every segment.
    pub key: KeyRateResult,
}

/// Online variant: the run is cut into segments of `window_blocks`; each
/// segment uses the threshold that was optimal on the preceding window.
/// The first segment, having no history, is optimized on itself.
pub fn rolling_threshold(
    blocks: &[BlockStats],
    window_blocks: usize,
    thresholds: &[f64],
    ec: &ErrorCorrectionModel,
) -> Result<RollingResult> {
    ensure!(
        window_blocks >= 10,
        InvalidArgument,
        "rolling window of {window_blocks} blocks is below the minimum of 10"
    );
    ensure!(!blocks.is_empty(), InvalidArgument, "no blocks");
    let mut segments = Vec::new();
    let mut kept = BlockStats::default();
    let mut start = 0;
    while start < blocks.len() {
        let end = (start + window_blocks).min(blocks.len());
        let history = if start == 0 {
            &blocks[..end]
        } else {
            &blocks[start.saturating_sub(window_blocks)..start]
        };
        let (threshold, _) = optimize_threshold(history, thresholds, ec)?;
        for b in blocks[start..end].iter().filter(|b| b.bob_rate() >= threshold) {
            kept.absorb(b);
        }
        segments.push(Segment {
            first_block: start,
            n_blocks: end - start,
            threshold,
        });
        start = end;
    }
    Ok(RollingResult {
        segments,
        key: secret_key_from_blocks(&[kept], ec)?,
    })
}

/// A sweep together with the filter accounting at its optimum.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub sweep: SweepResult,
    pub filter: SnrfConfig,
    /// Blocks at the optimum duration.
    pub blocks: Vec<BlockStats>,
    pub summary: [SummaryRow; 3],
}

/// Sweeps base statistics and evaluates the optimum. Without explicit
/// thresholds the default grid over `points` values is used.
pub fn sweep_report(
    base: &[BlockStats],
    base_duration: f64,
    durations: &[f64],
    thresholds: Option<&[f64]>,
    points: usize,
    ec: &ErrorCorrectionModel,
) -> Result<SweepReport> {
    let base_ns = duration_to_ns(base_duration)?;
    let grid;
    let thresholds = match thresholds {
        Some(t) => t,
        None => {
            grid = default_thresholds(mean_bob_rate(base), points);
            &grid
        }
    };
    let sweep = sweep_blocks(base, base_duration, durations, thresholds, ec)?;
    let filter = SnrfConfig::singles(sweep.optimum.duration, sweep.optimum.threshold)?;
    let blocks = coarsen(base, (duration_to_ns(filter.block_duration)? / base_ns) as usize)?;
    let summary = summary_table(&blocks, &filter, ec)?;
    Ok(SweepReport {
        sweep,
        filter,
        blocks,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NoSnrf,
    AboveSnrf,
    BelowSnrf,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Self::NoSnrf => "no_snrf",
            Self::AboveSnrf => "above_snrf",
            Self::BelowSnrf => "below_snrf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub raw: u64,
    pub sifted: u64,
    pub secret: f64,
    pub f: f64,
    pub qber: Option<f64>,
}

impl SummaryRow {
    fn from_key(scenario: Scenario, r: &KeyRateResult) -> Self {
        Self {
            scenario,
            raw: r.raw_count,
            sifted: r.sifted_count,
            secret: r.secret_bits,
            f: r.f_used,
            qber: r.qber,
        }
    }
}

/// Unfiltered, kept and rejected key accounting at one filter setting.
pub fn summary_table(blocks: &[BlockStats], cfg: &SnrfConfig, ec: &ErrorCorrectionModel) -> Result<[SummaryRow; 3]> {
    let split = apply_snrf(blocks, cfg)?;
    Ok([
        SummaryRow::from_key(Scenario::NoSnrf, &secret_key_from_blocks(blocks, ec)?),
        SummaryRow::from_key(Scenario::AboveSnrf, &secret_key_from_blocks(&split.kept, ec)?),
        SummaryRow::from_key(Scenario::BelowSnrf, &secret_key_from_blocks(&split.rejected, ec)?),
    ])
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "raw", "sifted", "secret", "f", "qber"])?;
    for r in rows {
        let f = if r.f.is_finite() {
            r.f.to_string()
        } else {
            String::new()
        };
        w.write_record([
            r.scenario.label().to_string(),
            r.raw.to_string(),
            r.sifted.to_string(),
            r.secret.to_string(),
            f,
            r.qber.map(|q| q.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn block(i: usize, duration: f64, n_b: u64, sifted: u64, errors: u64) -> BlockStats {
        BlockStats {
            block_index: i,
            duration,
            bob_singles: n_b,
            coincidences: 2 * sifted,
            sifted_count: sifted,
            sifted_z: sifted,
            errors_z: errors,
            alice_singles: 10 * sifted,
            ..Default::default()
        }
    }

    fn mixed() -> Vec<BlockStats> {
        (0..20)
            .map(|i| {
                if i % 4 == 0 {
                    block(i, 0.01, 30, 100, 30)
                } else {
                    block(i, 0.01, 1000, 1000, 20)
                }
            })
            .collect()
    }

    #[test]
    fn threshold_zero_keeps_everything() {
        let blocks = mixed();
        let split = apply_snrf(&blocks, &SnrfConfig::singles(0.01, 0.0).unwrap()).unwrap();
        assert_eq!(split.kept.len(), blocks.len());
        assert!(split.rejected.is_empty());
    }

    #[test]
    fn boundary_is_inclusive() {
        let blocks = mixed();
        let split = apply_snrf(&blocks, &SnrfConfig::singles(0.01, 100_000.0).unwrap()).unwrap();
        assert_eq!(split.kept.len(), 15);
        let above = apply_snrf(&blocks, &SnrfConfig::singles(0.01, 100_001.0).unwrap()).unwrap();
        assert!(above.kept.is_empty());
    }

    #[test]
    fn snr_mode_matches_equivalent_rate() {
        let blocks = mixed();
        let snr = SnrfConfig::snr(0.01, 9.0, 10_000.0).unwrap();
        assert_eq!(snr.rate_threshold(), 100_000.0);
        let a = apply_snrf(&blocks, &snr).unwrap();
        let b = apply_snrf(&blocks, &SnrfConfig::singles(0.01, 100_000.0).unwrap()).unwrap();
        assert_eq!(a.kept, b.kept);
        assert!(SnrfConfig::snr(0.01, 1.0, 0.0).is_err());
    }

    #[test]
    fn duration_mismatch_is_rejected() {
        let blocks = mixed();
        assert!(matches!(
            apply_snrf(&blocks, &SnrfConfig::singles(0.02, 0.0).unwrap()),
            Err(Error::InvalidArgument(_))
        ));
        let mut tail = mixed();
        tail.last_mut().unwrap().duration = 0.004;
        assert!(apply_snrf(&tail, &SnrfConfig::singles(0.01, 0.0).unwrap()).is_ok());
    }

    #[test]
    fn sweep_grid_and_optimum() {
        let base = mixed();
        let ec = ErrorCorrectionModel::constant(1.2).unwrap();
        let r = sweep_blocks(&base, 0.01, &[0.01, 0.02], &[0.0, 50_000.0, 200_000.0], &ec).unwrap();
        assert_eq!(r.secret_bits.len(), 2);
        assert_eq!(r.secret_bits[0][0], r.unfiltered_secret_bits);
        assert_eq!(r.secret_bits[0][2], 0.0);
        assert_eq!(r.optimum.duration, 0.01);
        assert_eq!(r.optimum.threshold, 50_000.0);
        assert!(r.gain() > 1.0);
    }

    #[test]
    fn summary_rows() {
        let ec = ErrorCorrectionModel::constant(1.2).unwrap();
        let rows = summary_table(&mixed(), &SnrfConfig::singles(0.01, 50_000.0).unwrap(), &ec).unwrap();
        assert_eq!(rows[1].sifted + rows[2].sifted, rows[0].sifted);
        assert_eq!(rows[2].qber, Some(0.3));
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("scenario,raw,sifted,secret,f,qber\nno_snrf,"));
    }

    #[test]
    fn rolling_window_limits() {
        let ec = ErrorCorrectionModel::default();
        assert!(rolling_threshold(&mixed(), 9, &[0.0], &ec).is_err());
    }

    #[test]
    fn rolling_over_whole_run_is_global() {
        let ec = ErrorCorrectionModel::constant(1.2).unwrap();
        let ts = default_thresholds(mean_bob_rate(&mixed()), 41);
        let r = rolling_threshold(&mixed(), 20, &ts, &ec).unwrap();
        let (t, k) = optimize_threshold(&mixed(), &ts, &ec).unwrap();
        assert_eq!(r.segments.len(), 1);
        assert_eq!(r.segments[0].threshold, t);
        assert_eq!(r.key, k);
    }

    #[test]
    fn base_block_is_gcd() {
        assert_eq!(base_block_ns(&DEFAULT_DURATIONS).unwrap(), 5_000_000);
        assert_eq!(base_block_ns(&[0.02, 0.03]).unwrap(), 10_000_000);
    }
}
