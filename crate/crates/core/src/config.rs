//! Experiment configuration files (TOML).
//!
//! One file describes a whole experiment. Every section is optional and
//! falls back to the documented defaults; unknown keys are errors reported
//! with their full key path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{sample_trace, LogNormal, MeanAnchor, PdtcModel, TransmissionTrace};
use crate::coincidence::CoincidenceConfig;
use crate::decoy::DecoyParams;
use crate::error::{ensure, Error, Result};
use crate::events::{BackgroundConfig, DeviceEfficiencies, EventGenerator, SourceConfig};
use crate::keyrate::ErrorCorrectionModel;
use crate::pdtc::DEFAULT_BINS;
use crate::satellite::{PassEntry, PassScenario};
use crate::snrf::{DEFAULT_DURATIONS, DEFAULT_THRESHOLD_POINTS};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_source")]
    pub source: SourceConfig,
    #[serde(default = "default_devices")]
    pub devices: DeviceEfficiencies,
    #[serde(default)]
    pub background: BackgroundConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub experiment: RunConfig,
    #[serde(default)]
    pub coincidence: CoincidenceConfig,
    #[serde(default)]
    pub snrf: SnrfSection,
    #[serde(default)]
    pub error_correction: ErrorCorrectionModel,
    #[serde(default)]
    pub pdtc: PdtcSection,
    #[serde(default)]
    pub decoy: DecoySection,
    pub satellite: Option<SatelliteSection>,
    #[serde(default)]
    pub inputs: InputsSection,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_source() -> SourceConfig {
    SourceConfig {
        pair_rate: 1e6,
        intrinsic_qber: 0.0234,
    }
}

fn default_devices() -> DeviceEfficiencies {
    DeviceEfficiencies::lumped(0.95, 0.8)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            source: default_source(),
            devices: default_devices(),
            background: BackgroundConfig::default(),
            channel: ChannelConfig::default(),
            experiment: RunConfig::default(),
            coincidence: CoincidenceConfig::default(),
            snrf: SnrfSection::default(),
            error_correction: ErrorCorrectionModel::default(),
            pdtc: PdtcSection::default(),
            decoy: DecoySection::default(),
            satellite: None,
            inputs: InputsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModelKind {
    #[default]
    Degenerate,
    Lognormal,
    Empirical,
    /// Per-block transmittances from a `block_index,eta` CSV.
    Trace,
}

/// Only the keys belonging to `model` may be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub model: ChannelModelKind,
    /// Seconds per transmittance sample.
    pub block_duration: f64,
    pub eta0: Option<f64>,
    pub sigma: Option<f64>,
    pub mean_eta: Option<f64>,
    pub anchor: MeanAnchor,
    pub bin_edges: Option<Vec<f64>>,
    pub probabilities: Option<Vec<f64>>,
    pub path: Option<PathBuf>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            model: ChannelModelKind::Degenerate,
            block_duration: 0.01,
            eta0: None,
            sigma: None,
            mean_eta: None,
            anchor: MeanAnchor::default(),
            bin_edges: None,
            probabilities: None,
            path: None,
        }
    }
}

impl ChannelConfig {
    fn validate(&self) -> Result<()> {
        use ChannelModelKind::*;
        ensure!(
            self.block_duration > 0.0,
            InvalidArgument,
            "channel.block_duration must be > 0"
        );
        let given = [
            ("eta0", self.eta0.is_some(), [Degenerate].as_slice()),
            ("sigma", self.sigma.is_some(), &[Lognormal]),
            ("mean_eta", self.mean_eta.is_some(), &[Lognormal]),
            ("bin_edges", self.bin_edges.is_some(), &[Empirical]),
            ("probabilities", self.probabilities.is_some(), &[Empirical]),
            ("path", self.path.is_some(), &[Trace]),
        ];
        for (key, set, owners) in given {
            ensure!(
                !set || owners.contains(&self.model),
                InvalidArgument,
                "channel.{key} does not apply to model {:?}",
                self.model
            );
        }
        let missing = |key: &str| Error::InvalidArgument(format!("channel.{key} is required for this model"));
        match self.model {
            Degenerate => {}
            Lognormal => {
                self.sigma.ok_or_else(|| missing("sigma"))?;
                self.mean_eta.ok_or_else(|| missing("mean_eta"))?;
            }
            Empirical => {
                self.bin_edges.as_ref().ok_or_else(|| missing("bin_edges"))?;
                self.probabilities.as_ref().ok_or_else(|| missing("probabilities"))?;
            }
            Trace => {
                self.path.as_ref().ok_or_else(|| missing("path"))?;
            }
        }
        Ok(())
    }

    /// The distribution, or `None` for a recorded trace.
    pub fn model(&self) -> Result<Option<PdtcModel>> {
        Ok(Some(match self.model {
            ChannelModelKind::Degenerate => PdtcModel::degenerate(self.eta0.unwrap_or(1.0))?,
            ChannelModelKind::Lognormal => PdtcModel::LogNormal(LogNormal::with_anchor(
                self.sigma.unwrap_or(f64::NAN),
                self.mean_eta.unwrap_or(f64::NAN),
                self.anchor,
            )?),
            ChannelModelKind::Empirical => PdtcModel::empirical(
                self.bin_edges.clone().unwrap_or_default(),
                self.probabilities.clone().unwrap_or_default(),
            )?,
            ChannelModelKind::Trace => return Ok(None),
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    #[default]
    Link,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kind: RunKind,
    /// Seconds.
    pub duration: f64,
    /// Standard deviation of detector timing jitter, ns.
    pub jitter_ns: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: RunKind::Link,
            duration: 10.0,
            jitter_ns: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnrfSection {
    pub durations_ms: Vec<f64>,
    /// Explicit threshold axis in counts/s; empty means the default grid.
    pub thresholds_cps: Vec<f64>,
    pub threshold_points: usize,
    /// Segment length of the online variant; unset disables it.
    pub rolling_window_blocks: Option<usize>,
}

impl Default for SnrfSection {
    fn default() -> Self {
        Self {
            durations_ms: DEFAULT_DURATIONS.iter().map(|d| d * 1e3).collect(),
            thresholds_cps: Vec::new(),
            threshold_points: DEFAULT_THRESHOLD_POINTS,
            rolling_window_blocks: None,
        }
    }
}

impl SnrfSection {
    pub fn durations(&self) -> Vec<f64> {
        self.durations_ms.iter().map(|d| d * 1e-3).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdtcSection {
    pub n_bins: usize,
    /// Bob's device efficiency; unset means calibrate with a local run.
    pub eta_b_device: Option<f64>,
    /// Seconds of local run used for calibration.
    pub local_duration: f64,
    pub subtract_accidentals: bool,
    /// Seconds per estimation block.
    pub block_duration: f64,
}

impl Default for PdtcSection {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            eta_b_device: None,
            local_duration: 10.0,
            subtract_accidentals: true,
            block_duration: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoySection {
    pub protocol: DecoyParams,
    pub losses_db: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Optimize the signal intensity per point instead of using `protocol.mu`.
    pub optimize_mu: bool,
}

impl Default for DecoySection {
    fn default() -> Self {
        Self {
            protocol: DecoyParams::default(),
            losses_db: (1..=10).map(|k| 5.0 * k as f64).collect(),
            sigmas: vec![0.18, 1.8],
            optimize_mu: true,
        }
    }
}

/// A pass scenario plus the coincidence settings used for the downlink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteSection {
    pub entries: Vec<PassEntry>,
    pub source: Option<SourceConfig>,
    pub devices: Option<DeviceEfficiencies>,
    #[serde(default)]
    pub alice_dark_rate: f64,
    #[serde(default)]
    pub bob_dark_rate: f64,
    pub trace_block_duration: Option<f64>,
    pub durations_ms: Option<Vec<f64>>,
    pub threshold_points: Option<usize>,
    #[serde(default = "satellite_coincidence")]
    pub coincidence: CoincidenceConfig,
}

fn satellite_coincidence() -> CoincidenceConfig {
    CoincidenceConfig {
        window_ns: 1,
        accidental_shift_ns: 10,
    }
}

impl SatelliteSection {
    pub fn scenario(&self) -> Result<PassScenario> {
        let mut s = PassScenario::new(self.entries.clone())?;
        if let Some(src) = self.source {
            s.source = src;
        }
        if let Some(dev) = self.devices {
            s.devices = dev;
        }
        s.alice_dark_rate = self.alice_dark_rate;
        s.bob_dark_rate = self.bob_dark_rate;
        if let Some(t) = self.trace_block_duration {
            s.trace_block_duration = t;
        }
        if let Some(d) = &self.durations_ms {
            s.durations = d.iter().map(|x| x * 1e-3).collect();
        }
        if let Some(p) = self.threshold_points {
            s.threshold_points = p;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InputsSection {
    /// Recorded streams to analyse instead of simulating.
    pub alice: Option<PathBuf>,
    pub bob: Option<PathBuf>,
    /// Acquisition span of the recorded streams, ns.
    pub span_ns: Option<u64>,
    /// Recorded local run for device calibration.
    pub local_alice: Option<PathBuf>,
    pub local_bob: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config(origin, e.to_string().trim_end()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.into_inner().to_string();
            let msg = msg.trim_end();
            if path == "." {
                Error::config(origin, msg)
            } else {
                Error::config(origin, format!("{path}: {msg}"))
            }
        })?;
        cfg.validate().map_err(|e| Error::config(origin, e.to_string()))?;
        Ok(cfg)
    }

    /// Loads a file; relative input paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for p in [
            &mut self.channel.path,
            &mut self.inputs.alice,
            &mut self.inputs.bob,
            &mut self.inputs.local_alice,
            &mut self.inputs.local_bob,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.devices.validate()?;
        self.background.validate()?;
        self.coincidence.validate()?;
        self.error_correction.validate()?;
        self.decoy.protocol.validate()?;
        self.channel.validate()?;
        ensure!(
            self.experiment.duration > 0.0,
            InvalidArgument,
            "experiment.duration must be > 0"
        );
        ensure!(self.pdtc.n_bins >= 1, InvalidArgument, "pdtc.n_bins must be >= 1");
        ensure!(
            !self.snrf.durations_ms.is_empty(),
            InvalidArgument,
            "snrf.durations_ms must not be empty"
        );
        ensure!(
            self.inputs.alice.is_some() == self.inputs.bob.is_some(),
            InvalidArgument,
            "inputs.alice and inputs.bob must be given together"
        );
        ensure!(
            self.inputs.local_alice.is_some() == self.inputs.local_bob.is_some(),
            InvalidArgument,
            "inputs.local_alice and inputs.local_bob must be given together"
        );
        if let Some(s) = &self.satellite {
            s.scenario()?;
            s.coincidence.validate()?;
        }
        Ok(())
    }

    /// The link transmittance trace covering `experiment.duration`.
    pub fn trace(&self) -> Result<TransmissionTrace> {
        let bd = self.channel.block_duration;
        match self.channel.model()? {
            None => TransmissionTrace::read_csv(self.channel.path.as_deref().expect("validated"), bd),
            Some(model) => {
                let n = (self.experiment.duration / bd).round().max(1.0) as usize;
                sample_trace(&model, n, bd, self.seed)
            }
        }
    }

    pub fn generator(&self) -> Result<EventGenerator> {
        let gen = match self.experiment.kind {
            RunKind::Link => {
                EventGenerator::link(&self.source, &self.devices, &self.background, &self.trace()?, self.seed)?
            }
            RunKind::Local => EventGenerator::local(
                &self.source,
                &self.devices,
                &self.background,
                self.experiment.duration,
                self.seed,
            )?,
        };
        gen.with_jitter(self.experiment.jitter_ns)
    }

    pub fn local_generator(&self) -> Result<EventGenerator> {
        EventGenerator::local(
            &self.source,
            &self.devices,
            &self.background,
            self.pdtc.local_duration,
            crate::rng::derive_seed(self.seed, 0x10ca1),
        )?
        .with_jitter(self.experiment.jitter_ns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("", "mem").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_reports_path() {
        let err =
            ExperimentConfig::from_toml_str("[source]\npair_rate = 1e6\nintrinsic_qber = 0.02\ncolour = 3\n", "mem")
                .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("source"), "{text}");
        assert!(text.contains("colour"), "{text}");
    }

    #[test]
    fn nested_type_error_reports_path() {
        let err = ExperimentConfig::from_toml_str("[coincidence]\nwindow_ns = \"five\"\n", "mem").unwrap_err();
        assert!(err.to_string().contains("coincidence.window_ns"), "{err}");
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = ExperimentConfig::from_toml_str("[coincidence]\nwindow_ns = 5\naccidental_shift_ns = 3\n", "mem")
            .unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn channel_models_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            "[channel]\nmodel = \"lognormal\"\nsigma = 1.0\nmean_eta = 0.01\nblock_duration = 0.03\n",
            "mem",
        )
        .unwrap();
        assert!(matches!(cfg.channel.model().unwrap(), Some(PdtcModel::LogNormal(_))));
        assert_eq!(cfg.channel.block_duration, 0.03);
    }

    #[test]
    fn satellite_section() {
        let cfg = ExperimentConfig::from_toml_str(
            "[satellite]\nentries = [{ elevation_deg = 30, mean_loss_db = 40, sigma = 1, background_rate = 100, dwell_time = 1 }]\n[satellite.coincidence]\nwindow_ns = 1\naccidental_shift_ns = 10\n",
            "mem",
        )
        .unwrap();
        let s = cfg.satellite.unwrap();
        assert_eq!(s.scenario().unwrap().source.pair_rate, 1e8);
        assert_eq!(s.coincidence.window_ns, 1);
    }
}
