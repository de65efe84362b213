//! Channel transmittance reconstruction from coincidence ratios.
//!
//! A local run (source, Alice and Bob on one bench) calibrates Bob's device
//! efficiency as `sum N_coin / sum N_A`. In a link run each block then gives
//! an atmospheric transmittance estimate
//! `max(0, (N_coin - N_acc) / N_A) / eta_B`, clamped to `[0, 1]`.

use std::io::Write;

use serde::Serialize;

use crate::channel::{Empirical, PdtcModel};
use crate::coincidence::{total, BlockStats};
use crate::error::{ensure, Result};

pub const DEFAULT_BINS: usize = 50;

/// Bob's lumped device efficiency from a local experiment.
pub fn device_efficiency_from_local(stats: &[BlockStats]) -> Result<f64> {
    let t = total(stats);
    ensure!(
        t.alice_singles > 0,
        Estimation,
        "no Alice singles in the local experiment"
    );
    ensure!(
        t.coincidences <= t.alice_singles,
        InvariantViolation,
        "{} coincidences exceed {} Alice singles",
        t.coincidences,
        t.alice_singles
    );
    Ok(t.coincidences as f64 / t.alice_singles as f64)
}

/// Whether accidental coincidences are removed before dividing by `N_A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Subtraction {
    Accidentals,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockEstimate {
    pub block_index: usize,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct PdtcEstimate {
    pub model: PdtcModel,
    pub blocks: Vec<BlockEstimate>,
    /// Blocks without Alice singles.
    pub skipped: usize,
}

impl PdtcEstimate {
    pub fn etas(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.eta).collect()
    }

    pub fn histogram(&self) -> &Empirical {
        match &self.model {
            PdtcModel::Empirical(e) => e,
            _ => unreachable!("estimates are always empirical"),
        }
    }

    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<()> {
        write_histogram_csv(self.histogram(), out)
    }
}

pub fn estimate_link_pdtc(stats: &[BlockStats], eta_b_device: f64, n_bins: usize) -> Result<PdtcEstimate> {
    estimate_link_pdtc_with(stats, eta_b_device, n_bins, Subtraction::Accidentals)
}

pub fn estimate_link_pdtc_with(
    stats: &[BlockStats],
    eta_b_device: f64,
    n_bins: usize,
    subtraction: Subtraction,
) -> Result<PdtcEstimate> {
    ensure!(
        eta_b_device > 0.0 && eta_b_device <= 1.0,
        Domain,
        "device efficiency {eta_b_device} outside (0, 1]"
    );
    ensure!(n_bins >= 1, InvalidArgument, "need at least one bin");
    let mut blocks = Vec::with_capacity(stats.len());
    let mut skipped = 0;
    for s in stats {
        if s.alice_singles == 0 {
            skipped += 1;
            continue;
        }
        let signal = match subtraction {
            Subtraction::Accidentals => s.coincidences as f64 - s.accidental_estimate,
            Subtraction::None => s.coincidences as f64,
        };
        let eta = (signal.max(0.0) / s.alice_singles as f64 / eta_b_device).clamp(0.0, 1.0);
        blocks.push(BlockEstimate {
            block_index: s.block_index,
            eta,
        });
    }
    ensure!(
        !blocks.is_empty(),
        Estimation,
        "all {skipped} blocks lack Alice singles"
    );

    let max = blocks.iter().map(|b| b.eta).fold(0.0, f64::max);
    let hi = if max > 0.0 { max } else { 1.0 };
    let width = hi / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for b in &blocks {
        let k = ((b.eta / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let n = blocks.len() as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|k| if k == n_bins { hi } else { k as f64 * width })
        .collect();
    let probs = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(PdtcEstimate {
        model: PdtcModel::Empirical(Empirical::new(edges, probs)?),
        blocks,
        skipped,
    })
}

pub fn write_histogram_csv<W: Write>(hist: &Empirical, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_left", "bin_right", "probability"])?;
    let e = hist.bin_edges();
    for (k, p) in hist.probabilities().iter().enumerate() {
        w.write_record([e[k].to_string(), e[k + 1].to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
