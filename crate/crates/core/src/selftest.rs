//! Acceptance suite shared by the `selftest` subcommand and the
//! `acceptance` test target.
//!
//! Each criterion reports a pass/fail line with the measured values. A
//! criterion marked `known_unattainable` is one the model provably cannot
//! meet; it is still evaluated and reported as a failure.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::channel::{fit_lognormal, sample_trace, LogNormal, MeanAnchor, PdtcModel};
use crate::coincidence::{coarsen, total, BlockAccumulator, BlockStats, CoincidenceConfig};
use crate::config::ExperimentConfig;
use crate::decoy::{scan_sigma, secure_key_rate, ChannelSpec, DecoyParams};
use crate::error::Result;
use crate::events::{BackgroundConfig, DeviceEfficiencies, EventGenerator, SourceConfig};
use crate::keyrate::{binary_entropy, secret_fraction, secret_key_from_blocks, ErrorCorrectionModel};
use crate::pdtc::{device_efficiency_from_local, estimate_link_pdtc};
use crate::quad::integrate;
use crate::rng::{stream, Domain};
use crate::satellite::{evaluate_pass_both, PassEntry, PassMode, PassScenario};
use crate::snrf::{apply_snrf, base_block_ns, base_stats_from_generator, sweep_report, SnrfConfig};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub known_unattainable: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        let status = match (self.passed, self.known_unattainable) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known unattainable)",
        };
        format!(
            "[{status}] {} {}: {} ({:.2} s)",
            self.id, self.title, self.detail, self.seconds
        )
    }

    /// Passed, or failed in the documented unattainable way.
    pub fn acceptable(&self) -> bool {
        self.passed || self.known_unattainable
    }
}

fn outcome(id: &'static str, title: &'static str, passed: bool, detail: String, started: Instant) -> CriterionOutcome {
    CriterionOutcome {
        id,
        title,
        passed,
        known_unattainable: false,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

pub const CRITERIA: [&str; 8] = ["1", "2", "3", "4", "5", "6", "7", "8"];

/// Runs the named criteria (all when empty) in order.
pub fn run(ids: &[&str]) -> Result<Vec<CriterionOutcome>> {
    let want = |id: &str| ids.is_empty() || ids.contains(&id);
    let mut out = Vec::new();
    if want("1") {
        out.push(table_arithmetic()?);
    }
    if want("2") || want("3") {
        let (gain, optimum) = replica_sweep()?;
        if want("2") {
            out.push(gain);
        }
        if want("3") {
            out.push(optimum);
        }
    }
    if want("4") {
        out.push(pdtc_round_trip()?);
    }
    if want("5") {
        out.push(accidentals()?);
    }
    if want("6") {
        out.extend(decoy_static_vs_fluctuating()?);
    }
    if want("7") {
        out.push(properties()?);
    }
    if want("8") {
        out.push(satellite_rescue()?);
    }
    Ok(out)
}

fn counts_block(sifted: u64, qber: f64) -> BlockStats {
    let errors = (qber * sifted as f64).round() as u64;
    BlockStats {
        duration: 1.0,
        coincidences: 2 * sifted,
        sifted_count: sifted,
        sifted_z: sifted,
        errors_z: errors,
        ..BlockStats::default()
    }
}

pub fn table_arithmetic() -> Result<CriterionOutcome> {
    let t0 = Instant::now();
    let a = secret_key_from_blocks(
        &[counts_block(259_855, 0.0551)],
        &ErrorCorrectionModel::constant(1.2697)?,
    )?
    .secret_bits;
    let b = secret_key_from_blocks(
        &[counts_block(226_279, 0.0430)],
        &ErrorCorrectionModel::constant(1.2202)?,
    )?
    .secret_bits;
    let (ra, rb) = (a / 78_009.0 - 1.0, b / 97_678.0 - 1.0);
    let secs = t0.elapsed().as_secs_f64();
    Ok(outcome(
        "1",
        "key arithmetic on the published counts",
        ra.abs() <= 0.01 && rb.abs() <= 0.005 && secs < 1.0,
        format!(
            "unfiltered {a:.0} ({:+.2}%), filtered {b:.0} ({:+.3}%)",
            ra * 100.0,
            rb * 100.0
        ),
        t0,
    ))
}

pub const REPLICA_TOML: &str = include_str!("../configs/replica.toml");

/// The bundled high-turbulence replica: log-normal fading tuned so the
/// unfiltered QBER and sifted key size land near the measured run.
pub fn replica_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(REPLICA_TOML, "configs/replica.toml").expect("bundled replica config is valid")
}

fn replica_sweep() -> Result<(CriterionOutcome, CriterionOutcome)> {
    let t0 = Instant::now();
    let cfg = replica_config();
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
    let split = apply_snrf(&report.blocks, &report.filter)?;
    let kept = secret_key_from_blocks(&split.kept, &cfg.error_correction)?;
    let rejected = secret_key_from_blocks(&split.rejected, &cfg.error_correction)?;
    let secs = t0.elapsed().as_secs_f64();

    let plain = &report.sweep.unfiltered;
    let q = plain.qber.unwrap_or(f64::NAN);
    let gain = report.sweep.gain();
    let (qk, qr) = (kept.qber.unwrap_or(f64::NAN), rejected.qber.unwrap_or(f64::NAN));
    let sifted_ok = (plain.sifted_count as f64 - 260_000.0).abs() <= 26_000.0;
    let c2 = CriterionOutcome {
        seconds: secs,
        ..outcome(
            "2",
            "SNRF gain on the turbulent replica",
            (0.05..=0.06).contains(&q) && sifted_ok && gain >= 1.15 && qr - qk >= 0.05 && secs < 300.0,
            format!(
                "QBER {:.2}%, sifted {}, gain {gain:.3}, rejected {:.2}% vs kept {:.2}%",
                q * 100.0,
                plain.sifted_count,
                qr * 100.0,
                qk * 100.0
            ),
            t0,
        )
    };

    let opt = report.sweep.optimum;
    let max_rate = report.blocks.iter().map(|b| b.bob_rate()).fold(0.0, f64::max);
    let c3 = CriterionOutcome {
        seconds: secs,
        ..outcome(
            "3",
            "sweep optimum plausibility",
            (0.010..=0.100).contains(&opt.duration) && opt.threshold > 0.0 && opt.threshold < max_rate,
            format!(
                "optimum {:.0} ms at {:.0} counts/s, max Bob rate {:.0} counts/s",
                opt.duration * 1e3,
                opt.threshold,
                max_rate
            ),
            t0,
        )
    };
    Ok((c2, c3))
}

pub fn pdtc_round_trip() -> Result<CriterionOutcome> {
    let t0 = Instant::now();
    let (sigma, mean_eta, block) = (1.0, 0.0125, 0.01);
    let src = SourceConfig {
        pair_rate: 1e6,
        intrinsic_qber: 0.0234,
    };
    let dev = DeviceEfficiencies::lumped(0.95, 0.8);
    let bg = BackgroundConfig::none();
    let seed = 4;

    let local = EventGenerator::local(&src, &dev, &bg, 10.0, seed)?;
    let local_stats = base_stats_from_generator(&local, 1_000_000_000, &CoincidenceConfig::default())?;
    let eta_b = device_efficiency_from_local(&local_stats)?;

    let model = PdtcModel::lognormal(sigma, mean_eta)?;
    let trace = sample_trace(&model, (180.0 / block) as usize, block, seed)?;
    let link = EventGenerator::link(&src, &dev, &bg, &trace, seed)?;
    let stats = base_stats_from_generator(&link, 10_000_000, &CoincidenceConfig::default())?;
    let est = estimate_link_pdtc(&stats, eta_b, 50)?;
    let positive: Vec<f64> = est.etas().into_iter().filter(|e| *e > 0.0).collect();
    let fit = fit_lognormal(&positive)?;
    let (rs, rm) = (fit.sigma / sigma - 1.0, fit.mean_eta / mean_eta - 1.0);
    let secs = t0.elapsed().as_secs_f64();
    Ok(outcome(
        "4",
        "PDTC round trip",
        rs.abs() <= 0.15 && rm.abs() <= 0.05 && secs < 120.0,
        format!(
            "eta_B {eta_b:.4}, sigma {:.4} ({:+.2}%), mean {:.5} ({:+.2}%)",
            fit.sigma,
            rs * 100.0,
            fit.mean_eta,
            rm * 100.0
        ),
        t0,
    ))
}

pub fn accidentals() -> Result<CriterionOutcome> {
    let t0 = Instant::now();
    let (ra, rb, secs_run) = (1e5, 2700.0, 600.0);
    let cc = CoincidenceConfig::default();
    // A vanishing pair rate leaves two independent dark-count streams.
    let gen = EventGenerator::local(
        &SourceConfig {
            pair_rate: 1e-12,
            intrinsic_qber: 0.0,
        },
        &DeviceEfficiencies::lumped(1.0, 1.0),
        &BackgroundConfig {
            bob_background_rate: 0.0,
            alice_dark_rate: ra,
            bob_dark_rate: rb,
        },
        secs_run,
        5,
    )?;
    let mut acc = BlockAccumulator::new(secs_run, gen.span_ns(), &cc)?;
    gen.for_each_chunk(|c| acc.push_chunk(&c));
    let t = total(&acc.finish());
    let overlap = secs_run - cc.accidental_shift_ns as f64 * 1e-9;
    let expected = ra * rb * cc.window_seconds();
    let measured = t.accidental_estimate / overlap;
    let z = (t.accidental_estimate - expected * overlap) / (expected * overlap).sqrt();
    let secs = t0.elapsed().as_secs_f64();
    Ok(outcome(
        "5",
        "shifted-window accidentals",
        z.abs() <= 3.0 && secs < 60.0,
        format!("measured {measured:.4}/s vs {expected:.4}/s, z = {z:+.2}"),
        t0,
    ))
}

pub fn decoy_static_vs_fluctuating() -> Result<Vec<CriterionOutcome>> {
    let t0 = Instant::now();
    let params = DecoyParams::default();
    let losses: Vec<f64> = (1..=10).map(|k| 5.0 * k as f64).collect();
    let rows = scan_sigma(&params, &losses, &[0.18, 1.8], true)?;
    let secs = t0.elapsed().as_secs_f64();
    let diff = |r: &crate::decoy::ScanRow| r.rate_fluct / r.rate_static - 1.0;

    let calm: Vec<_> = rows.iter().filter(|r| r.sigma == 0.18).collect();
    let worst_calm = calm.iter().map(|r| r.relative_difference()).fold(0.0, f64::max);
    let a = CriterionOutcome {
        seconds: secs,
        ..outcome(
            "6a",
            "decoy rates, sigma 0.18 within 1% over 5-50 dB",
            worst_calm <= 0.01 && secs < 60.0,
            format!("worst relative difference {:.3}%", worst_calm * 100.0),
            t0,
        )
    };

    let strong: Vec<_> = rows.iter().filter(|r| r.sigma == 1.8).collect();
    let at5 = strong.iter().find(|r| r.mean_loss_db == 5.0).expect("5 dB in grid");
    let b = CriterionOutcome {
        seconds: secs,
        known_unattainable: true,
        ..outcome(
            "6b",
            "decoy rates, sigma 1.8 fluctuating below static at 5 dB",
            at5.rate_fluct < at5.rate_static,
            format!("fluctuating/static - 1 = {:+.3}%", diff(at5) * 100.0),
            t0,
        )
    };

    let high: Vec<_> = strong.iter().filter(|r| r.mean_loss_db > 15.0).collect();
    let worst_high = high.iter().map(|r| r.relative_difference()).fold(0.0, f64::max);
    let c = CriterionOutcome {
        seconds: secs,
        ..outcome(
            "6c",
            "decoy rates, sigma 1.8 within 2% above 15 dB",
            worst_high <= 0.02 && secs < 60.0,
            format!("worst relative difference {:.3}%", worst_high * 100.0),
            t0,
        )
    };
    Ok(vec![a, b, c])
}

/// Deterministic property checks; the randomized versions live in the
/// test suite.
pub fn properties() -> Result<CriterionOutcome> {
    let t0 = Instant::now();
    let mut failed: Vec<&str> = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok {
            failed.push(name);
        }
    };

    let grid: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    let mut entropy_ok = binary_entropy(0.5)? == 1.0 && binary_entropy(0.0)? == 0.0;
    for &e in &grid {
        let h = binary_entropy(e)?;
        entropy_ok &= (h - binary_entropy(1.0 - e)?).abs() < 1e-12 && (0.0..=1.0).contains(&h);
    }
    check("binary entropy", entropy_ok);

    let unit = ErrorCorrectionModel::constant(1.0)?;
    let mut monotone = true;
    for model in [&unit, &ErrorCorrectionModel::default()] {
        let mut prev = f64::INFINITY;
        for &e in grid.iter().filter(|e| **e <= 0.5) {
            let r = secret_fraction(e, model)?;
            monotone &= r <= prev + 1e-12;
            prev = r;
        }
    }
    check("secret fraction monotone", monotone);
    let root = bisect(|e| secret_fraction(e, &unit).unwrap_or(f64::NAN), 0.01, 0.3);
    check("secret fraction zero near 0.11", (root - 0.110).abs() < 0.002);

    let params = DecoyParams::default();
    let mut same = true;
    for eta in [0.5, 0.05, 1e-3] {
        let s = secure_key_rate(&params, &ChannelSpec::static_eta(eta)?)?;
        let d = secure_key_rate(&params, &ChannelSpec::Fluctuating(PdtcModel::degenerate(eta)?))?;
        same &= (s - d).abs() <= 1e-12 * s.abs().max(1e-300);
    }
    check("degenerate equals static", same);

    let gen = EventGenerator::local(
        &SourceConfig {
            pair_rate: 2e5,
            intrinsic_qber: 0.03,
        },
        &DeviceEfficiencies::lumped(0.9, 0.7),
        &BackgroundConfig {
            alice_dark_rate: 500.0,
            bob_dark_rate: 300.0,
            ..BackgroundConfig::default()
        },
        1.0,
        7,
    )?;
    let cc = CoincidenceConfig::default();
    let blocks = base_stats_from_generator(&gen, 5_000_000, &cc)?;
    let split = apply_snrf(&blocks, &SnrfConfig::singles(0.005, 0.0)?)?;
    check(
        "threshold 0 keeps every block",
        split.rejected.is_empty() && split.kept == blocks,
    );

    let whole = total(&blocks);
    let mut conserved = blocks.len() == 200;
    for factor in [1, 2, 3, 7, 200] {
        conserved &= same_counts(&total(&coarsen(&blocks, factor)?), &whole);
    }
    let cut = SnrfConfig::singles(0.005, whole.bob_singles as f64 / whole.duration)?;
    let split = apply_snrf(&blocks, &cut)?;
    let mut rejoined = total(&split.kept);
    rejoined.absorb(&total(&split.rejected));
    conserved &= split.kept.len() + split.rejected.len() == blocks.len() && same_counts(&rejoined, &whole);
    check("block-count conservation", conserved);

    let mut normalized = true;
    for (sigma, mean, anchor) in [
        (0.18, 0.1, MeanAnchor::Untruncated),
        (1.8, 1e-3, MeanAnchor::Untruncated),
        (1.8, 0.3, MeanAnchor::Truncated),
        (2.5, 0.05, MeanAnchor::Literal),
    ] {
        let ln = LogNormal::with_anchor(sigma, mean, anchor)?;
        let mass = integrate(|x| ln.density(x), 0.0, 1.0, 1e-10, 1e-12)?;
        normalized &= (mass - 1.0).abs() < 1e-6;
    }
    check("truncated density normalization", normalized);

    let again = base_stats_from_generator(&gen, 5_000_000, &cc)?;
    let m = PdtcModel::lognormal(1.0, 0.01)?;
    let draws = |seed| {
        let mut r = stream(seed, Domain::Trace, 0);
        (0..32).map(|_| m.sample(&mut r)).collect::<Vec<_>>()
    };
    let mut r = stream(9, Domain::Background, 1);
    let seed: u64 = r.random();
    check(
        "determinism under a fixed seed",
        again == blocks && draws(seed) == draws(seed) && draws(seed) != draws(seed ^ 1),
    );

    let secs = t0.elapsed().as_secs_f64();
    let detail = if failed.is_empty() {
        "all 7 property groups hold".to_string()
    } else {
        format!("failed: {}", failed.join(", "))
    };
    Ok(outcome(
        "7",
        "property suites",
        failed.is_empty() && secs < 120.0,
        detail,
        t0,
    ))
}

fn same_counts(a: &BlockStats, b: &BlockStats) -> bool {
    a.alice_singles == b.alice_singles
        && a.bob_singles == b.bob_singles
        && a.coincidences == b.coincidences
        && a.sifted_count == b.sifted_count
        && a.errors() == b.errors()
        && a.accidental_estimate == b.accidental_estimate
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f(lo) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A low-elevation entry where background swamps the unfiltered key but
/// bright fading peaks survive the filter.
pub fn rescue_entry() -> PassEntry {
    PassEntry {
        elevation_deg: 20.0,
        mean_loss_db: 37.0,
        sigma: 2.0,
        background_rate: 20_000.0,
        dwell_time: 1.0,
    }
}

pub fn satellite_rescue() -> Result<CriterionOutcome> {
    let t0 = Instant::now();
    let scenario = PassScenario::new(vec![rescue_entry()])?;
    let cc = CoincidenceConfig::with_window(1)?;
    let ec = ErrorCorrectionModel::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 1..=5 {
        let rows = evaluate_pass_both(&scenario, &cc, &ec, seed)?;
        let bits = |mode| {
            rows.iter()
                .find(|r| r.mode == mode)
                .map_or(f64::NAN, |r| r.secret_bits_per_pass)
        };
        let (plain, filtered) = (bits(PassMode::NoSnrf), bits(PassMode::Snrf));
        ok &= plain == 0.0 && filtered > 0.0;
        parts.push(format!("{plain:.0}/{filtered:.0}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok(outcome(
        "8",
        "satellite rescue",
        ok && secs < 300.0,
        format!("bits without/with SNRF per seed: {}", parts.join(", ")),
        t0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_criterion_passes() {
        assert!(table_arithmetic().unwrap().passed);
    }

    #[test]
    fn outcome_lines() {
        let o = CriterionOutcome {
            id: "6b",
            title: "t",
            passed: false,
            known_unattainable: true,
            detail: "d".into(),
            seconds: 0.5,
        };
        assert!(o.line().starts_with("[FAIL (known unattainable)] 6b"));
        assert!(o.acceptable());
    }

    #[test]
    fn replica_config_is_valid() {
        replica_config().validate().unwrap();
    }
}
