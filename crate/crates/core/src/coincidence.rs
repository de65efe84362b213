//! Coincidence identification, accidental estimation and per-block
//! statistics.
//!
//! `window_ns` is the full width of the coincidence window: two detections
//! pair up when `2 |t_A - t_B| <= window_ns`. With integer-nanosecond tags
//! and an odd window this accepts exactly `window_ns` distinct offsets, so
//! the accidental rate of independent streams is `N_A N_B window`.
//!
//! Matching is greedy, earliest first and one-to-one. The matcher is
//! incremental: detections can be pushed chunk by chunk in time order and
//! the result is identical to matching the concatenated streams.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::events::{check_ordered, duration_to_ns, Basis, ChunkEvents, Detection, TimeTagStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoincidenceConfig {
    pub window_ns: u64,
    /// Offset applied to Bob's tags when counting accidentals.
    pub accidental_shift_ns: u64,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        Self {
            window_ns: 5,
            accidental_shift_ns: 50,
        }
    }
}

impl CoincidenceConfig {
    /// Window with the default shift of ten windows.
    pub fn with_window(window_ns: u64) -> Result<Self> {
        Self::new(window_ns, 10 * window_ns)
    }

    pub fn new(window_ns: u64, accidental_shift_ns: u64) -> Result<Self> {
        let cfg = Self {
            window_ns,
            accidental_shift_ns,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.window_ns > 0, InvalidArgument, "window must be > 0");
        ensure!(
            self.accidental_shift_ns > self.window_ns,
            InvalidArgument,
            "accidental shift ({} ns) must exceed the window ({} ns)",
            self.accidental_shift_ns,
            self.window_ns
        );
        Ok(())
    }

    fn max_offset(&self) -> u64 {
        self.window_ns / 2
    }

    pub fn window_seconds(&self) -> f64 {
        self.window_ns as f64 * 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoincidencePair {
    pub alice: Detection,
    pub bob: Detection,
}

/// Incremental greedy matcher. Bob's tags are offset by `shift_ns` on entry.
#[derive(Debug, Clone)]
struct Matcher {
    max_offset: u64,
    shift_ns: u64,
    a: Vec<Detection>,
    a_pos: usize,
    b: Vec<Detection>,
    b_pos: usize,
}

impl Matcher {
    fn new(max_offset: u64, shift_ns: u64) -> Self {
        Self {
            max_offset,
            shift_ns,
            a: Vec::new(),
            a_pos: 0,
            b: Vec::new(),
            b_pos: 0,
        }
    }

    fn push(&mut self, alice: &[Detection], bob: &[Detection]) {
        compact(&mut self.a, &mut self.a_pos);
        compact(&mut self.b, &mut self.b_pos);
        self.a.extend_from_slice(alice);
        let shift = self.shift_ns;
        self.b.extend(bob.iter().map(|d| {
            let mut d = *d;
            d.timestamp_ns += shift;
            d
        }));
    }

    /// Runs until one side is exhausted; decisions taken are final because
    /// each depends only on the two heads.
    fn run<F: FnMut(&Detection, &Detection)>(&mut self, mut on_match: F) {
        let (a, b) = (&self.a, &self.b);
        let (mut i, mut j) = (self.a_pos, self.b_pos);
        while i < a.len() && j < b.len() {
            let ta = a[i].timestamp_ns;
            let tb = b[j].timestamp_ns;
            if ta.abs_diff(tb) <= self.max_offset {
                on_match(&a[i], &b[j]);
                i += 1;
                j += 1;
            } else if ta < tb {
                i += 1;
            } else {
                j += 1;
            }
        }
        self.a_pos = i;
        self.b_pos = j;
    }
}

fn compact(v: &mut Vec<Detection>, pos: &mut usize) {
    if *pos > 0 {
        v.drain(..*pos);
        *pos = 0;
    }
}

fn match_slices(a: &[Detection], b: &[Detection], cfg: &CoincidenceConfig, shift: u64) -> Vec<CoincidencePair> {
    let mut m = Matcher::new(cfg.max_offset(), shift);
    m.push(a, b);
    let mut out = Vec::new();
    m.run(|x, y| {
        out.push(CoincidencePair {
            alice: *x,
            bob: {
                let mut d = *y;
                d.timestamp_ns -= shift;
                d
            },
        })
    });
    out
}

/// Greedy one-to-one matching of two time-ordered detection lists.
pub fn find_coincidences_in(a: &[Detection], b: &[Detection], cfg: &CoincidenceConfig) -> Result<Vec<CoincidencePair>> {
    cfg.validate()?;
    check_ordered(a)?;
    check_ordered(b)?;
    Ok(match_slices(a, b, cfg, 0))
}

pub fn find_coincidences(
    a: &TimeTagStream,
    b: &TimeTagStream,
    cfg: &CoincidenceConfig,
) -> Result<Vec<CoincidencePair>> {
    find_coincidences_in(a.events(), b.events(), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccidentalEstimate {
    /// Coincidences per second with Bob shifted by the accidental shift.
    pub measured_rate: f64,
    /// `N_A N_B window` from the measured singles rates.
    pub analytic_rate: f64,
    pub shifted_coincidences: u64,
    pub overlap_seconds: f64,
}

pub fn estimate_accidentals(
    a: &TimeTagStream,
    b: &TimeTagStream,
    cfg: &CoincidenceConfig,
) -> Result<AccidentalEstimate> {
    cfg.validate()?;
    let span = a.span_ns().min(b.span_ns());
    ensure!(
        span > cfg.accidental_shift_ns,
        InvalidArgument,
        "streams overlap for {span} ns, not longer than the {} ns shift",
        cfg.accidental_shift_ns
    );
    let overlap = (span - cfg.accidental_shift_ns) as f64 * 1e-9;
    let t = span as f64 * 1e-9;
    let shifted = match_slices(a.events(), b.events(), cfg, cfg.accidental_shift_ns).len() as u64;
    Ok(AccidentalEstimate {
        measured_rate: shifted as f64 / overlap,
        analytic_rate: a.len() as f64 * b.len() as f64 * cfg.window_seconds() / (t * t),
        shifted_coincidences: shifted,
        overlap_seconds: overlap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockStats {
    pub block_index: usize,
    /// Seconds.
    pub duration: f64,
    pub alice_singles: u64,
    pub bob_singles: u64,
    pub coincidences: u64,
    pub accidental_estimate: f64,
    pub sifted_count: u64,
    pub errors_z: u64,
    pub errors_x: u64,
    pub sifted_z: u64,
    pub sifted_x: u64,
}

impl BlockStats {
    pub fn errors(&self) -> u64 {
        self.errors_z + self.errors_x
    }

    pub fn bob_rate(&self) -> f64 {
        self.bob_singles as f64 / self.duration
    }

    pub fn qber(&self) -> Option<f64> {
        (self.sifted_count > 0).then(|| self.errors() as f64 / self.sifted_count as f64)
    }

    /// Adds the counts of `other`; the index stays that of `self`.
    pub fn absorb(&mut self, other: &BlockStats) {
        self.duration += other.duration;
        self.alice_singles += other.alice_singles;
        self.bob_singles += other.bob_singles;
        self.coincidences += other.coincidences;
        self.accidental_estimate += other.accidental_estimate;
        self.sifted_count += other.sifted_count;
        self.errors_z += other.errors_z;
        self.errors_x += other.errors_x;
        self.sifted_z += other.sifted_z;
        self.sifted_x += other.sifted_x;
    }

    pub fn check_invariants(&self) -> Result<()> {
        ensure!(
            self.sifted_count == self.sifted_z + self.sifted_x,
            InvariantViolation,
            "block {}: sifted count is not the sum of per-basis counts",
            self.block_index
        );
        ensure!(
            self.sifted_count <= self.coincidences,
            InvariantViolation,
            "block {}: more sifted bits than coincidences",
            self.block_index
        );
        ensure!(
            self.errors_z <= self.sifted_z && self.errors_x <= self.sifted_x,
            InvariantViolation,
            "block {}: more errors than sifted bits",
            self.block_index
        );
        Ok(())
    }

    fn record_pair(&mut self, a: &Detection, b: &Detection) {
        self.coincidences += 1;
        if a.basis == b.basis {
            self.sifted_count += 1;
            let err = (a.outcome != b.outcome) as u64;
            match a.basis {
                Basis::Z => {
                    self.sifted_z += 1;
                    self.errors_z += err;
                }
                Basis::X => {
                    self.sifted_x += 1;
                    self.errors_x += err;
                }
            }
        }
    }
}

/// Sum of all blocks as one block.
pub fn total(stats: &[BlockStats]) -> BlockStats {
    let mut t = BlockStats::default();
    for s in stats {
        t.absorb(s);
    }
    t
}

/// Streaming per-block statistics. Detections are pushed in time order,
/// typically one generator chunk at a time.
#[derive(Debug, Clone)]
pub struct BlockAccumulator {
    block_ns: u64,
    span_ns: u64,
    stats: Vec<BlockStats>,
    pairs: Matcher,
    shifted: Matcher,
}

impl BlockAccumulator {
    pub fn new(block_duration: f64, span_ns: u64, cfg: &CoincidenceConfig) -> Result<Self> {
        cfg.validate()?;
        let block_ns = duration_to_ns(block_duration)?;
        ensure!(span_ns > 0, InvalidArgument, "acquisition span must be > 0");
        let n = span_ns.div_ceil(block_ns) as usize;
        let stats = (0..n)
            .map(|i| {
                let start = i as u64 * block_ns;
                let end = (start + block_ns).min(span_ns);
                BlockStats {
                    block_index: i,
                    duration: (end - start) as f64 * 1e-9,
                    ..BlockStats::default()
                }
            })
            .collect();
        Ok(Self {
            block_ns,
            span_ns,
            stats,
            pairs: Matcher::new(cfg.max_offset(), 0),
            shifted: Matcher::new(cfg.max_offset(), cfg.accidental_shift_ns),
        })
    }

    fn block_mut(&mut self, ts: u64) -> &mut BlockStats {
        let i = (ts / self.block_ns) as usize;
        if i >= self.stats.len() {
            // Only reachable for events past the declared span.
            let block_ns = self.block_ns;
            let from = self.stats.len();
            self.stats.extend((from..=i).map(|k| BlockStats {
                block_index: k,
                duration: block_ns as f64 * 1e-9,
                ..BlockStats::default()
            }));
        }
        &mut self.stats[i]
    }

    fn count_singles(&mut self, events: &[Detection], alice: bool) {
        let mut k = 0;
        while k < events.len() {
            let block = events[k].timestamp_ns / self.block_ns;
            let boundary = (block + 1) * self.block_ns;
            let run = events[k..].partition_point(|e| e.timestamp_ns < boundary);
            let s = self.block_mut(events[k].timestamp_ns);
            if alice {
                s.alice_singles += run as u64;
            } else {
                s.bob_singles += run as u64;
            }
            k += run;
        }
    }

    pub fn push(&mut self, alice: &[Detection], bob: &[Detection]) {
        self.count_singles(alice, true);
        self.count_singles(bob, false);

        self.pairs.push(alice, bob);
        let mut pairs = std::mem::replace(&mut self.pairs, Matcher::new(0, 0));
        pairs.run(|a, b| self.block_mut(a.timestamp_ns).record_pair(a, b));
        self.pairs = pairs;

        self.shifted.push(alice, bob);
        let mut shifted = std::mem::replace(&mut self.shifted, Matcher::new(0, 0));
        shifted.run(|a, _| self.block_mut(a.timestamp_ns).accidental_estimate += 1.0);
        self.shifted = shifted;
    }

    pub fn push_chunk(&mut self, chunk: &ChunkEvents) {
        self.push(&chunk.alice, &chunk.bob);
    }

    pub fn span_ns(&self) -> u64 {
        self.span_ns
    }

    pub fn finish(self) -> Vec<BlockStats> {
        self.stats
    }
}

/// Partitions `[0, span)` into consecutive blocks of `block_duration` and
/// aggregates singles, coincidences, shifted-window accidentals and sifted
/// bits per block. A coincidence belongs to the block of its Alice member.
pub fn block_statistics(
    a: &TimeTagStream,
    b: &TimeTagStream,
    block_duration: f64,
    cfg: &CoincidenceConfig,
) -> Result<Vec<BlockStats>> {
    let span = a.span_ns().max(b.span_ns());
    let mut acc = BlockAccumulator::new(block_duration, span, cfg)?;
    acc.push(a.events(), b.events());
    Ok(acc.finish())
}

/// Merges every `factor` consecutive blocks into one.
pub fn coarsen(stats: &[BlockStats], factor: usize) -> Result<Vec<BlockStats>> {
    ensure!(factor >= 1, InvalidArgument, "coarsening factor must be >= 1");
    Ok(stats
        .chunks(factor)
        .enumerate()
        .map(|(i, group)| {
            let mut merged = BlockStats {
                block_index: i,
                ..BlockStats::default()
            };
            for s in group {
                merged.absorb(s);
            }
            merged
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QberSummary {
    pub total: f64,
    pub z: Option<f64>,
    pub x: Option<f64>,
}

/// Pooled QBER over blocks, overall and per basis.
pub fn qber(stats: &[BlockStats]) -> Result<QberSummary> {
    let t = total(stats);
    if t.sifted_count == 0 {
        return Err(Error::UndefinedQber);
    }
    Ok(QberSummary {
        total: t.errors() as f64 / t.sifted_count as f64,
        z: (t.sifted_z > 0).then(|| t.errors_z as f64 / t.sifted_z as f64),
        x: (t.sifted_x > 0).then(|| t.errors_x as f64 / t.sifted_x as f64),
    })
}

pub const BLOCK_STATS_HEADER: [&str; 10] = [
    "block_index",
    "n_a",
    "n_b",
    "n_coin",
    "n_acc",
    "sifted",
    "err_z",
    "err_x",
    "sifted_z",
    "sifted_x",
];

pub fn write_block_stats_csv<W: Write>(stats: &[BlockStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BLOCK_STATS_HEADER)?;
    for s in stats {
        w.write_record([
            s.block_index.to_string(),
            s.alice_singles.to_string(),
            s.bob_singles.to_string(),
            s.coincidences.to_string(),
            s.accidental_estimate.to_string(),
            s.sifted_count.to_string(),
            s.errors_z.to_string(),
            s.errors_x.to_string(),
            s.sifted_z.to_string(),
            s.sifted_x.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
