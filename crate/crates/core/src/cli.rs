//! Command-line front end.
//!
//! Every subcommand reads one experiment file, writes its artifacts into
//! the output directory and, on failure, removes whatever it had written
//! and prints a JSON error record to stderr.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::channel::fit_lognormal;
use crate::coincidence::{block_statistics, qber, write_block_stats_csv, BlockStats};
use crate::config::{ExperimentConfig, RunKind};
use crate::decoy::{scan_sigma, write_scan_csv};
use crate::error::{ensure, Error, Result};
use crate::events::{Party, TimeTagStream};
use crate::pdtc::{device_efficiency_from_local, estimate_link_pdtc_with, Subtraction};
use crate::satellite::{evaluate_pass_both, pass_totals, write_pass_csv};
use crate::selftest;
use crate::snrf::{base_block_ns, base_stats_from_generator, rolling_threshold, sweep_report, write_summary_csv};

#[derive(Debug, Parser)]
#[command(name = "fsqkd", version, about = "Free-space entanglement QKD toolkit")]
pub struct Cli {
    /// Experiment file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the root seed of the experiment file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Adds the simulator's ground-truth `kind` column to stream CSVs.
    #[arg(long, global = true)]
    pub debug_truth: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate Alice and Bob time-tag streams.
    Simulate,
    /// Reconstruct the link transmittance distribution.
    Pdtc,
    /// Sweep SNRF block duration and threshold; write the grid and summary table.
    SnrfSweep,
    /// Static versus fading decoy-state key rates.
    DecoyScan,
    /// Key rates over a satellite pass, with and without SNRF.
    Satellite,
    /// Run the acceptance suite.
    Selftest {
        /// Criteria to run, e.g. `1,5`; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let record = ErrorRecord {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&record).expect("record serializes"));
            1
        }
    }
}

/// Files written so far; removed again unless the run commits.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    created_dir: bool,
    committed: bool,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            created_dir,
            committed: false,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes)?;
        Ok(())
    }

    fn csv<F: FnOnce(&mut Vec<u8>) -> Result<()>>(&mut self, name: &str, fill: F) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Ok(false) when the selftest found an unexpected failure.
pub fn execute(cli: &Cli) -> Result<bool> {
    if cli.threads > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let cfg = load(cli)?;
    let mut out = Outputs::new(&cli.out)?;
    let ok = match &cli.command {
        Command::Simulate => simulate(&cfg, cli.debug_truth, &mut out).map(|_| true),
        Command::Pdtc => pdtc(&cfg, &mut out).map(|_| true),
        Command::SnrfSweep => snrf_sweep(&cfg, &mut out).map(|_| true),
        Command::DecoyScan => decoy_scan(&cfg, &mut out).map(|_| true),
        Command::Satellite => satellite(&cfg, &mut out).map(|_| true),
        Command::Selftest { only } => run_selftest(only, &mut out),
    }?;
    out.committed = true;
    Ok(ok)
}

fn simulate(cfg: &ExperimentConfig, debug_truth: bool, out: &mut Outputs) -> Result<()> {
    let gen = cfg.generator()?;
    if cfg.experiment.kind == RunKind::Link {
        let trace = cfg.trace()?;
        out.csv("trace.csv", |b| trace.write_csv(b))?;
    }
    let (a, b) = gen.collect();
    out.csv("alice.csv", |buf| a.write_csv(buf, debug_truth))?;
    out.csv("bob.csv", |buf| b.write_csv(buf, debug_truth))?;
    #[derive(Serialize)]
    struct Summary {
        span_ns: u64,
        alice_events: usize,
        bob_events: usize,
        alice_rate_cps: f64,
        bob_rate_cps: f64,
    }
    out.json(
        "simulate.json",
        &Summary {
            span_ns: a.span_ns(),
            alice_events: a.len(),
            bob_events: b.len(),
            alice_rate_cps: a.rate(),
            bob_rate_cps: b.rate(),
        },
    )
}

fn read_pair(alice: &Path, bob: &Path, span_ns: Option<u64>) -> Result<(TimeTagStream, TimeTagStream)> {
    let a = TimeTagStream::read_csv(alice, Party::Alice, span_ns)?;
    let b = TimeTagStream::read_csv(bob, Party::Bob, span_ns)?;
    // Without a declared span both streams share the later end.
    let span = a.span_ns().max(b.span_ns());
    Ok((
        TimeTagStream::new(Party::Alice, span, a.events().to_vec())?,
        TimeTagStream::new(Party::Bob, span, b.events().to_vec())?,
    ))
}

/// Link statistics at `block_ns`, from recorded streams when configured.
fn link_stats(cfg: &ExperimentConfig, block_ns: u64) -> Result<Vec<BlockStats>> {
    match (&cfg.inputs.alice, &cfg.inputs.bob) {
        (Some(a), Some(b)) => {
            let (a, b) = read_pair(a, b, cfg.inputs.span_ns)?;
            block_statistics(&a, &b, block_ns as f64 * 1e-9, &cfg.coincidence)
        }
        _ => base_stats_from_generator(&cfg.generator()?, block_ns, &cfg.coincidence),
    }
}

fn pdtc(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let eta_b = match cfg.pdtc.eta_b_device {
        Some(e) => e,
        None => {
            let stats = match (&cfg.inputs.local_alice, &cfg.inputs.local_bob) {
                (Some(a), Some(b)) => {
                    let (a, b) = read_pair(a, b, None)?;
                    block_statistics(&a, &b, a.duration(), &cfg.coincidence)?
                }
                _ => {
                    let gen = cfg.local_generator()?;
                    base_stats_from_generator(&gen, gen.span_ns(), &cfg.coincidence)?
                }
            };
            device_efficiency_from_local(&stats)?
        }
    };
    let block_ns = base_block_ns(&[cfg.pdtc.block_duration])?;
    let stats = link_stats(cfg, block_ns)?;
    let subtraction = if cfg.pdtc.subtract_accidentals {
        Subtraction::Accidentals
    } else {
        Subtraction::None
    };
    let est = estimate_link_pdtc_with(&stats, eta_b, cfg.pdtc.n_bins, subtraction)?;
    out.csv("pdtc_histogram.csv", |b| est.write_histogram_csv(b))?;
    out.csv("pdtc_blocks.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["block_index", "eta"])?;
        for e in &est.blocks {
            w.write_record([e.block_index.to_string(), e.eta.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let positive: Vec<f64> = est.etas().into_iter().filter(|e| *e > 0.0).collect();
    #[derive(Serialize)]
    struct Summary {
        eta_b_device: f64,
        blocks: usize,
        empty_blocks: usize,
        skipped_blocks: usize,
        mean_eta: f64,
        lognormal_fit: Option<crate::channel::LognormalFit>,
    }
    out.json(
        "pdtc.json",
        &Summary {
            eta_b_device: eta_b,
            blocks: est.blocks.len(),
            empty_blocks: est.blocks.len() - positive.len(),
            skipped_blocks: est.skipped,
            mean_eta: est.histogram().mean(),
            lognormal_fit: fit_lognormal(&positive).ok(),
        },
    )
}

fn snrf_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let durations = cfg.snrf.durations();
    let base_ns = base_block_ns(&durations)?;
    let base = link_stats(cfg, base_ns)?;
    let explicit = (!cfg.snrf.thresholds_cps.is_empty()).then_some(cfg.snrf.thresholds_cps.as_slice());
    let report = sweep_report(
        &base,
        base_ns as f64 * 1e-9,
        &durations,
        explicit,
        cfg.snrf.threshold_points,
        &cfg.error_correction,
    )?;
    out.csv("sweep_grid.csv", |b| report.sweep.write_csv(b))?;
    out.csv("summary.csv", |b| write_summary_csv(&report.summary, b))?;
    out.csv("blocks.csv", |b| write_block_stats_csv(&report.blocks, b))?;
    let mut optimum = report.sweep.optimum_json()?;
    optimum.push('\n');
    out.write("optimum.json", optimum.as_bytes())?;
    if let Some(window) = cfg.snrf.rolling_window_blocks {
        let rolling = rolling_threshold(&report.blocks, window, &report.sweep.thresholds, &cfg.error_correction)?;
        out.json("rolling.json", &rolling)?;
    }
    let q = qber(&base)?;
    out.json("qber.json", &q)
}

fn decoy_scan(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    ensure!(
        !cfg.decoy.losses_db.is_empty() && !cfg.decoy.sigmas.is_empty(),
        InvalidArgument,
        "decoy.losses_db and decoy.sigmas must not be empty"
    );
    let rows = scan_sigma(
        &cfg.decoy.protocol,
        &cfg.decoy.losses_db,
        &cfg.decoy.sigmas,
        cfg.decoy.optimize_mu,
    )?;
    out.csv("decoy_scan.csv", |b| write_scan_csv(&rows, b))
}

fn satellite(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let section = cfg
        .satellite
        .as_ref()
        .ok_or_else(|| Error::config("satellite", "the satellite subcommand needs a [satellite] section"))?;
    let scenario = section.scenario()?;
    let rows = evaluate_pass_both(&scenario, &section.coincidence, &cfg.error_correction, cfg.seed)?;
    out.csv("pass.csv", |b| write_pass_csv(&rows, b))?;
    out.json("pass_totals.json", &pass_totals(&rows))
}

fn run_selftest(only: &[String], out: &mut Outputs) -> Result<bool> {
    let ids: Vec<&str> = only.iter().map(String::as_str).collect();
    for id in &ids {
        ensure!(
            selftest::CRITERIA.contains(id),
            InvalidArgument,
            "unknown criterion `{id}`; expected one of {}",
            selftest::CRITERIA.join(", ")
        );
    }
    let results = selftest::run(&ids)?;
    for r in &results {
        println!("{}", r.line());
    }
    out.json("selftest.json", &results)?;
    Ok(results.iter().all(|r| r.acceptable()))
}
