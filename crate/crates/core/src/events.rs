//! Synthetic time-tag streams for the local and free-space link experiments.
//!
//! Pairs are emitted by a homogeneous Poisson process of rate `N`; each
//! member independently reaches its detector with the party's total
//! efficiency (times the atmospheric transmittance of the current block for
//! Bob). By Poisson thinning the detected-by-both, Alice-only and Bob-only
//! pairs are independent Poisson processes, and together with dark counts
//! and background light the whole record of a block is a single Poisson
//! process whose events carry a type drawn in proportion to the rates.
//! That is how a chunk is generated: one exponential gap and one type draw
//! per detection, with no work spent on pairs that nobody sees.
//!
//! Chunks (one per trace block) are seeded independently, so they can be
//! generated in parallel and streamed through the analysis in time order
//! without ever materializing a full three-minute record.

use std::io::Write;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::TransmissionTrace;
use crate::error::{ensure, Error, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    fn from_bit(bit: u64) -> Self {
        if bit & 1 == 0 {
            Basis::Z
        } else {
            Basis::X
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Z => "Z",
            Basis::X => "X",
        }
    }
}

/// Simulation ground truth. Only test oracles may look at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Signal,
    Background,
    Dark,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::Signal => "signal",
            EventKind::Background => "background",
            EventKind::Dark => "dark",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub timestamp_ns: u64,
    pub basis: Basis,
    pub outcome: u8,
    truth: Option<EventKind>,
}

impl Detection {
    pub fn new(timestamp_ns: u64, basis: Basis, outcome: u8) -> Self {
        Self {
            timestamp_ns,
            basis,
            outcome,
            truth: None,
        }
    }

    pub fn with_truth(timestamp_ns: u64, basis: Basis, outcome: u8, kind: EventKind) -> Self {
        Self {
            timestamp_ns,
            basis,
            outcome,
            truth: Some(kind),
        }
    }

    /// What the simulator knows produced this click. Analysis code must not
    /// call this.
    pub fn ground_truth(&self) -> Option<EventKind> {
        self.truth
    }
}

/// Time-ordered detections of one party over the acquisition window
/// `[0, span_ns)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    party: Party,
    span_ns: u64,
    events: Vec<Detection>,
}

impl TimeTagStream {
    pub fn new(party: Party, span_ns: u64, events: Vec<Detection>) -> Result<Self> {
        check_ordered(&events)?;
        if let Some(last) = events.last() {
            ensure!(
                last.timestamp_ns < span_ns,
                InvalidArgument,
                "event at {} ns lies outside the {} ns acquisition window",
                last.timestamp_ns,
                span_ns
            );
        }
        Ok(Self { party, span_ns, events })
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn span_ns(&self) -> u64 {
        self.span_ns
    }

    pub fn duration(&self) -> f64 {
        self.span_ns as f64 * 1e-9
    }

    pub fn events(&self) -> &[Detection] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn rate(&self) -> f64 {
        self.events.len() as f64 / self.duration()
    }

    /// Writes `timestamp_ns,basis,outcome`, plus a `kind` column when
    /// `debug_truth` is set.
    pub fn write_csv<W: Write>(&self, out: W, debug_truth: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if debug_truth {
            w.write_record(["timestamp_ns", "basis", "outcome", "kind"])?;
        } else {
            w.write_record(["timestamp_ns", "basis", "outcome"])?;
        }
        for ev in &self.events {
            let ts = ev.timestamp_ns.to_string();
            let outcome = ev.outcome.to_string();
            if debug_truth {
                let kind = ev.truth.map(EventKind::as_str).unwrap_or("");
                w.write_record([ts.as_str(), ev.basis.as_str(), outcome.as_str(), kind])?;
            } else {
                w.write_record([ts.as_str(), ev.basis.as_str(), outcome.as_str()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a stream CSV. A `kind` column, if present, is ignored. When
    /// `span_ns` is not given the window ends just after the last event.
    pub fn read_csv(path: &Path, party: Party, span_ns: Option<u64>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        ensure!(
            cols.len() >= 3 && cols[..3] == ["timestamp_ns", "basis", "outcome"],
            Format,
            "expected header `timestamp_ns,basis,outcome` in {}",
            path.display()
        );
        let mut events = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Format(format!("bad {what} on data row {}", row + 1));
            let ts: u64 = rec[0].trim().parse().map_err(|_| bad("timestamp_ns"))?;
            let basis = match rec[1].trim() {
                "Z" | "z" => Basis::Z,
                "X" | "x" => Basis::X,
                _ => return Err(bad("basis")),
            };
            let outcome: u8 = match rec[2].trim() {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad("outcome")),
            };
            events.push(Detection::new(ts, basis, outcome));
        }
        let span = span_ns.unwrap_or_else(|| events.last().map_or(1, |e| e.timestamp_ns + 1));
        Self::new(party, span, events)
    }
}

pub(crate) fn check_ordered(events: &[Detection]) -> Result<()> {
    if let Some(i) = events.windows(2).position(|w| w[1].timestamp_ns < w[0].timestamp_ns) {
        return Err(Error::Format(format!(
            "timestamps decrease at event {} ({} ns after {} ns)",
            i + 1,
            events[i + 1].timestamp_ns,
            events[i].timestamp_ns
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Pairs produced per second.
    pub pair_rate: f64,
    /// Same-basis disagreement probability of the devices themselves.
    pub intrinsic_qber: f64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.pair_rate > 0.0 && self.pair_rate.is_finite(),
            InvalidArgument,
            "pair_rate must be > 0"
        );
        ensure!(
            (0.0..=0.5).contains(&self.intrinsic_qber),
            InvalidArgument,
            "intrinsic_qber must be in [0, 0.5]"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyEfficiency {
    pub source_coupling: f64,
    pub polarization_analyzer: f64,
    pub detector: f64,
}

impl PartyEfficiency {
    pub fn new(source_coupling: f64, polarization_analyzer: f64, detector: f64) -> Self {
        Self {
            source_coupling,
            polarization_analyzer,
            detector,
        }
    }

    /// A party whose whole chain has efficiency `eta`, lumped into the detector.
    pub fn lumped(eta: f64) -> Self {
        Self::new(1.0, 1.0, eta)
    }

    pub fn total(&self) -> f64 {
        self.source_coupling * self.polarization_analyzer * self.detector
    }

    fn validate(&self, who: &str) -> Result<()> {
        for (name, v) in [
            ("source_coupling", self.source_coupling),
            ("polarization_analyzer", self.polarization_analyzer),
            ("detector", self.detector),
        ] {
            ensure!(
                v > 0.0 && v <= 1.0,
                InvalidArgument,
                "{who}.{name} must be in (0, 1], got {v}"
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEfficiencies {
    pub alice: PartyEfficiency,
    pub bob: PartyEfficiency,
}

impl DeviceEfficiencies {
    pub fn lumped(eta_a: f64, eta_b: f64) -> Self {
        Self {
            alice: PartyEfficiency::lumped(eta_a),
            bob: PartyEfficiency::lumped(eta_b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alice.validate("alice")?;
        self.bob.validate("bob")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundConfig {
    /// Background light collected by Bob over the link, counts/s.
    pub bob_background_rate: f64,
    pub alice_dark_rate: f64,
    pub bob_dark_rate: f64,
}

impl BackgroundConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bob_background_rate", self.bob_background_rate),
            ("alice_dark_rate", self.alice_dark_rate),
            ("bob_dark_rate", self.bob_dark_rate),
        ] {
            ensure!(
                v >= 0.0 && v.is_finite(),
                InvalidArgument,
                "{name} must be >= 0, got {v}"
            );
        }
        Ok(())
    }
}

/// Detections of both parties inside one chunk `[start_ns, end_ns)`.
#[derive(Debug, Clone, Default)]
pub struct ChunkEvents {
    pub start_ns: u64,
    pub end_ns: u64,
    pub alice: Vec<Detection>,
    pub bob: Vec<Detection>,
}

#[derive(Debug, Clone, Copy)]
struct Chunk {
    start_ns: u64,
    end_ns: u64,
    eta_atm: f64,
}

/// Chunk length used when a local run has no trace to follow.
pub const LOCAL_CHUNK_NS: u64 = 10_000_000;

/// Deterministic, chunked generator behind both experiment simulations.
#[derive(Debug, Clone)]
pub struct EventGenerator {
    source: SourceConfig,
    eta_a: f64,
    eta_b_device: f64,
    background: BackgroundConfig,
    jitter_ns: f64,
    seed: u64,
    domain: Domain,
    chunks: Vec<Chunk>,
}

impl EventGenerator {
    /// Free-space link: Bob's per-pair survival in block `i` is his device
    /// efficiency times `trace.etas[i]`, and he also sees background light.
    pub fn link(
        source: &SourceConfig,
        dev: &DeviceEfficiencies,
        bg: &BackgroundConfig,
        trace: &TransmissionTrace,
        seed: u64,
    ) -> Result<Self> {
        source.validate()?;
        dev.validate()?;
        bg.validate()?;
        ensure!(!trace.is_empty(), InvalidArgument, "trace is empty");
        let block_ns = duration_to_ns(trace.block_duration)?;
        let chunks = trace
            .etas
            .iter()
            .enumerate()
            .map(|(i, &eta_atm)| Chunk {
                start_ns: i as u64 * block_ns,
                end_ns: (i as u64 + 1) * block_ns,
                eta_atm,
            })
            .collect();
        Ok(Self {
            source: *source,
            eta_a: dev.alice.total(),
            eta_b_device: dev.bob.total(),
            background: *bg,
            jitter_ns: 0.0,
            seed,
            domain: Domain::LinkChunk,
            chunks,
        })
    }

    /// Both parties next to the source: no atmosphere and no background
    /// light, dark counts only.
    pub fn local(
        source: &SourceConfig,
        dev: &DeviceEfficiencies,
        bg: &BackgroundConfig,
        duration: f64,
        seed: u64,
    ) -> Result<Self> {
        source.validate()?;
        dev.validate()?;
        bg.validate()?;
        let span = duration_to_ns(duration)?;
        let mut chunks = Vec::with_capacity((span / LOCAL_CHUNK_NS + 1) as usize);
        let mut start = 0;
        while start < span {
            let end = (start + LOCAL_CHUNK_NS).min(span);
            chunks.push(Chunk {
                start_ns: start,
                end_ns: end,
                eta_atm: 1.0,
            });
            start = end;
        }
        Ok(Self {
            source: *source,
            eta_a: dev.alice.total(),
            eta_b_device: dev.bob.total(),
            background: BackgroundConfig {
                bob_background_rate: 0.0,
                ..*bg
            },
            jitter_ns: 0.0,
            seed,
            domain: Domain::LocalChunk,
            chunks,
        })
    }

    /// Gaussian timing jitter (standard deviation in ns) on every detection.
    pub fn with_jitter(mut self, jitter_ns: f64) -> Result<Self> {
        ensure!(
            jitter_ns >= 0.0 && jitter_ns.is_finite(),
            InvalidArgument,
            "jitter must be >= 0"
        );
        self.jitter_ns = jitter_ns;
        Ok(self)
    }

    pub fn n_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn span_ns(&self) -> u64 {
        self.chunks.last().map_or(0, |c| c.end_ns)
    }

    /// Expected detections per second at Alice and (on average) at Bob.
    pub fn expected_rates(&self) -> (f64, f64) {
        let n = self.source.pair_rate;
        let mean_eta = self.chunks.iter().map(|c| c.eta_atm).sum::<f64>() / self.chunks.len() as f64;
        (
            n * self.eta_a + self.background.alice_dark_rate,
            n * self.eta_b_device * mean_eta + self.background.bob_background_rate + self.background.bob_dark_rate,
        )
    }

    /// Generates chunk `index`. Identical output for identical
    /// (configuration, seed, index).
    pub fn chunk(&self, index: usize) -> ChunkEvents {
        let c = self.chunks[index];
        let mut rng = rng::stream(self.seed, self.domain, index as u64);
        let eta_b = self.eta_b_device * c.eta_atm;
        let n = self.source.pair_rate * 1e-9;
        let rates = [
            n * self.eta_a * eta_b,
            n * self.eta_a * (1.0 - eta_b),
            n * (1.0 - self.eta_a) * eta_b,
            self.background.alice_dark_rate * 1e-9,
            self.background.bob_background_rate * 1e-9,
            self.background.bob_dark_rate * 1e-9,
        ];
        let mut cum = [0.0; 6];
        let mut acc = 0.0;
        for (slot, r) in cum.iter_mut().zip(rates) {
            acc += r;
            *slot = acc;
        }
        let total = acc;
        let len = (c.end_ns - c.start_ns) as f64;
        let expected_a = (rates[0] + rates[1] + rates[3]) * len;
        let expected_b = (rates[0] + rates[2] + rates[4] + rates[5]) * len;
        let mut out = ChunkEvents {
            start_ns: c.start_ns,
            end_ns: c.end_ns,
            alice: Vec::with_capacity((expected_a * 1.05) as usize + 16),
            bob: Vec::with_capacity((expected_b * 1.05) as usize + 16),
        };
        if total <= 0.0 {
            return out;
        }
        let qber = self.source.intrinsic_qber;
        let inv_total = 1.0 / total;
        let end = c.end_ns as f64;
        let mut t = c.start_ns as f64;
        loop {
            let gap: f64 = rng.sample(Exp1);
            t += gap * inv_total;
            if t >= end {
                break;
            }
            let ts = t as u64;
            let bits = rng.next_u64();
            let x = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * total;
            let kind = cum.iter().position(|c| x < *c).unwrap_or(5);
            match kind {
                0 => {
                    let a_basis = Basis::from_bit(bits);
                    let a_out = ((bits >> 1) & 1) as u8;
                    let b_basis = Basis::from_bit(bits >> 2);
                    let b_out = if a_basis == b_basis {
                        if qber > 0.0 && rng.random::<f64>() < qber {
                            a_out ^ 1
                        } else {
                            a_out
                        }
                    } else {
                        ((bits >> 3) & 1) as u8
                    };
                    out.alice
                        .push(Detection::with_truth(ts, a_basis, a_out, EventKind::Signal));
                    out.bob
                        .push(Detection::with_truth(ts, b_basis, b_out, EventKind::Signal));
                }
                1 | 3 => {
                    let k = if kind == 1 { EventKind::Signal } else { EventKind::Dark };
                    out.alice.push(Detection::with_truth(
                        ts,
                        Basis::from_bit(bits),
                        ((bits >> 1) & 1) as u8,
                        k,
                    ));
                }
                _ => {
                    let k = match kind {
                        2 => EventKind::Signal,
                        4 => EventKind::Background,
                        _ => EventKind::Dark,
                    };
                    out.bob.push(Detection::with_truth(
                        ts,
                        Basis::from_bit(bits),
                        ((bits >> 1) & 1) as u8,
                        k,
                    ));
                }
            }
        }
        if self.jitter_ns > 0.0 {
            apply_jitter(&mut out.alice, self.jitter_ns, &c, &mut rng);
            apply_jitter(&mut out.bob, self.jitter_ns, &c, &mut rng);
        }
        out
    }

    /// Generates every chunk in order, in parallel batches, handing each to
    /// `sink` sequentially. Peak memory is one batch.
    pub fn for_each_chunk<F: FnMut(ChunkEvents)>(&self, mut sink: F) {
        let (ra, rb) = self.expected_rates();
        let per_chunk = (ra + rb) * (self.span_ns() as f64 * 1e-9) / self.chunks.len() as f64;
        let batch = ((8.0e6 / per_chunk.max(1.0)) as usize)
            .clamp(1, 4096)
            .max(rayon::current_num_threads());
        let mut start = 0;
        while start < self.chunks.len() {
            let end = (start + batch).min(self.chunks.len());
            let generated: Vec<ChunkEvents> = (start..end).into_par_iter().map(|i| self.chunk(i)).collect();
            for c in generated {
                sink(c);
            }
            start = end;
        }
    }

    /// Materializes both streams.
    pub fn collect(&self) -> (TimeTagStream, TimeTagStream) {
        let mut alice = Vec::new();
        let mut bob = Vec::new();
        self.for_each_chunk(|c| {
            alice.extend_from_slice(&c.alice);
            bob.extend_from_slice(&c.bob);
        });
        let span = self.span_ns();
        (
            TimeTagStream {
                party: Party::Alice,
                span_ns: span,
                events: alice,
            },
            TimeTagStream {
                party: Party::Bob,
                span_ns: span,
                events: bob,
            },
        )
    }
}

fn apply_jitter(events: &mut [Detection], sigma: f64, c: &Chunk, rng: &mut ChaCha8Rng) {
    let lo = c.start_ns as f64;
    let hi = (c.end_ns - 1) as f64;
    for ev in events.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        let t = (ev.timestamp_ns as f64 + 0.5 + sigma * z).clamp(lo, hi);
        ev.timestamp_ns = t as u64;
    }
    events.sort_by_key(|e| e.timestamp_ns);
}

pub(crate) fn duration_to_ns(seconds: f64) -> Result<u64> {
    ensure!(
        seconds > 0.0 && seconds.is_finite(),
        InvalidArgument,
        "duration must be > 0, got {seconds}"
    );
    let ns = (seconds * 1e9).round();
    ensure!(ns >= 1.0, InvalidArgument, "duration {seconds} s is below 1 ns");
    Ok(ns as u64)
}

/// Alice and Bob next to the source for `duration` seconds.
pub fn simulate_local_experiment(
    source: &SourceConfig,
    dev: &DeviceEfficiencies,
    bg: &BackgroundConfig,
    duration: f64,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    Ok(EventGenerator::local(source, dev, bg, duration, seed)?.collect())
}

/// Alice next to the source, Bob across the fluctuating link described by
/// `trace`.
pub fn simulate_link_experiment(
    source: &SourceConfig,
    dev: &DeviceEfficiencies,
    bg: &BackgroundConfig,
    trace: &TransmissionTrace,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    Ok(EventGenerator::link(source, dev, bg, trace, seed)?.collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(n: f64, q: f64) -> SourceConfig {
        SourceConfig {
            pair_rate: n,
            intrinsic_qber: q,
        }
    }

    #[test]
    fn lossless_local_run_pairs_everything() {
        let (a, b) = simulate_local_experiment(
            &src(1e5, 0.0),
            &DeviceEfficiencies::lumped(1.0, 1.0),
            &BackgroundConfig::none(),
            10.0,
            3,
        )
        .unwrap();
        assert_eq!(a.len(), b.len());
        assert!(a
            .events()
            .iter()
            .zip(b.events())
            .all(|(x, y)| x.timestamp_ns == y.timestamp_ns));
        // 1e6 expected pairs, 5 sigma
        assert!((a.len() as f64 - 1e6).abs() < 5000.0);
    }

    #[test]
    fn same_seed_same_streams() {
        let trace = TransmissionTrace::new(0.01, vec![0.3, 0.01, 0.7], 0).unwrap();
        let bg = BackgroundConfig {
            bob_background_rate: 2700.0,
            alice_dark_rate: 100.0,
            bob_dark_rate: 50.0,
        };
        let dev = DeviceEfficiencies::lumped(0.2, 0.3);
        let x = simulate_link_experiment(&src(1e6, 0.02), &dev, &bg, &trace, 11).unwrap();
        let y = simulate_link_experiment(&src(1e6, 0.02), &dev, &bg, &trace, 11).unwrap();
        assert_eq!(x, y);
        let z = simulate_link_experiment(&src(1e6, 0.02), &dev, &bg, &trace, 12).unwrap();
        assert_ne!(x.0, z.0);
    }

    #[test]
    fn dark_trace_leaves_only_noise_at_bob() {
        let trace = TransmissionTrace::constant(0.0, 50, 0.01).unwrap();
        let bg = BackgroundConfig {
            bob_background_rate: 5000.0,
            alice_dark_rate: 0.0,
            bob_dark_rate: 100.0,
        };
        let (_, b) =
            simulate_link_experiment(&src(1e6, 0.0), &DeviceEfficiencies::lumped(0.5, 0.5), &bg, &trace, 5).unwrap();
        assert!(!b.is_empty());
        assert!(b.events().iter().all(|e| e.ground_truth() != Some(EventKind::Signal)));
    }

    #[test]
    fn jitter_keeps_streams_ordered() {
        let trace = TransmissionTrace::constant(1.0, 20, 0.001).unwrap();
        let g = EventGenerator::link(
            &src(1e6, 0.0),
            &DeviceEfficiencies::lumped(0.5, 0.5),
            &BackgroundConfig::none(),
            &trace,
            9,
        )
        .unwrap()
        .with_jitter(0.5)
        .unwrap();
        let (a, b) = g.collect();
        assert!(check_ordered(a.events()).is_ok());
        assert!(check_ordered(b.events()).is_ok());
    }

    #[test]
    fn unordered_streams_are_rejected() {
        let ev = vec![Detection::new(10, Basis::Z, 0), Detection::new(5, Basis::X, 1)];
        assert!(matches!(
            TimeTagStream::new(Party::Alice, 100, ev),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn csv_round_trip_drops_truth() {
        let s = TimeTagStream::new(
            Party::Bob,
            1000,
            vec![
                Detection::with_truth(3, Basis::Z, 1, EventKind::Background),
                Detection::with_truth(40, Basis::X, 0, EventKind::Signal),
            ],
        )
        .unwrap();
        let mut plain = Vec::new();
        s.write_csv(&mut plain, false).unwrap();
        assert_eq!(
            String::from_utf8(plain.clone()).unwrap(),
            "timestamp_ns,basis,outcome\n3,Z,1\n40,X,0\n"
        );
        let mut debug = Vec::new();
        s.write_csv(&mut debug, true).unwrap();
        assert_eq!(
            String::from_utf8(debug.clone()).unwrap(),
            "timestamp_ns,basis,outcome,kind\n3,Z,1,background\n40,X,0,signal\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        std::fs::write(&p, &debug).unwrap();
        let back = TimeTagStream::read_csv(&p, Party::Bob, Some(1000)).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back.events().iter().all(|e| e.ground_truth().is_none()));
        assert_eq!(back.events()[1].timestamp_ns, 40);
    }
}
