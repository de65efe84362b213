//! Distributions of the per-block atmospheric transmittance (the PDTC).
//!
//! The log-normal family is parameterized by the turbulence scale `sigma`
//! (standard deviation of `theta = -ln eta`) and a target mean transmittance.
//! Physical transmittance cannot exceed one, so the law is truncated to
//! `(0, 1]`: densities are renormalized over that interval and samples above
//! one are redrawn. How the Gaussian location in `theta` is tied to the
//! target mean is selected by [`MeanAnchor`].

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{ensure, Error, Result};
use crate::quad;
use crate::rng::{self, Domain};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// How the location of the Gaussian in `theta = -ln eta` is derived from
/// the configured mean transmittance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanAnchor {
    /// Location `-ln(mean) + sigma^2 / 2`: the untruncated law has the
    /// configured mean.
    #[default]
    Untruncated,
    /// Location `-ln(mean)`, the form in which the log-normal PDTC is
    /// usually quoted (the `literal_form` compatibility mode).
    Literal,
    /// Location solved so that the law *after* truncation to `(0, 1]` has
    /// the configured mean.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogNormal {
    sigma: f64,
    mean_eta: f64,
    anchor: MeanAnchor,
    location: f64,
    /// Probability mass of the untruncated law inside `(0, 1]`.
    mass: f64,
}

impl LogNormal {
    pub fn new(sigma: f64, mean_eta: f64) -> Result<Self> {
        Self::with_anchor(sigma, mean_eta, MeanAnchor::Untruncated)
    }

    pub fn literal_form(sigma: f64, mean_eta: f64) -> Result<Self> {
        Self::with_anchor(sigma, mean_eta, MeanAnchor::Literal)
    }

    pub fn with_anchor(sigma: f64, mean_eta: f64, anchor: MeanAnchor) -> Result<Self> {
        ensure!(
            sigma > 0.0 && sigma.is_finite(),
            Domain,
            "sigma must be > 0, got {sigma}"
        );
        ensure!(
            mean_eta > 0.0 && mean_eta <= 1.0,
            Domain,
            "mean_eta must be in (0, 1], got {mean_eta}"
        );
        let location = match anchor {
            MeanAnchor::Untruncated => -mean_eta.ln() + 0.5 * sigma * sigma,
            MeanAnchor::Literal => -mean_eta.ln(),
            MeanAnchor::Truncated => {
                ensure!(mean_eta < 1.0, Domain, "a truncated law cannot have mean 1");
                solve_truncated_location(sigma, mean_eta)
            }
        };
        let mass = std_normal_cdf(location / sigma);
        ensure!(
            mass > 1e-12,
            Domain,
            "log-normal with sigma {sigma} and location {location} has no mass in (0, 1]"
        );
        Ok(Self {
            sigma,
            mean_eta,
            anchor,
            location,
            mass,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean_eta(&self) -> f64 {
        self.mean_eta
    }

    pub fn anchor(&self) -> MeanAnchor {
        self.anchor
    }

    /// Mean of `theta = -ln eta` before truncation.
    pub fn location(&self) -> f64 {
        self.location
    }

    /// Mode of the untruncated density in `eta`.
    pub fn mode(&self) -> f64 {
        (-self.location - self.sigma * self.sigma).exp()
    }

    /// Mean of the truncated law actually sampled.
    pub fn truncated_mean(&self) -> f64 {
        truncated_mean(self.sigma, self.location)
    }

    /// Untruncated density.
    pub fn raw_density(&self, eta: f64) -> f64 {
        let z = (-eta.ln() - self.location) / self.sigma;
        (-0.5 * z * z).exp() / (SQRT_2PI * self.sigma * eta)
    }

    pub fn density(&self, eta: f64) -> f64 {
        self.raw_density(eta) / self.mass
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mass > 0.25 {
            loop {
                let z: f64 = rng.sample(StandardNormal);
                let theta = self.location + self.sigma * z;
                if theta >= 0.0 {
                    return (-theta).exp();
                }
            }
        }
        // Most of the untruncated mass lies above eta = 1; redrawing would
        // stall, so invert the tail CDF of theta >= 0 directly.
        let tail = std_normal_cdf(self.location / self.sigma);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let z = -std_normal_quantile(u * tail);
        let theta = (self.location + self.sigma * z).max(0.0);
        (-theta).exp()
    }

    /// `E[g(eta)]` under the truncated law, integrated in `theta`.
    fn expect<F: Fn(f64) -> f64>(&self, g: F, rel_tol: f64) -> Result<f64> {
        let lo = (self.location - 12.0 * self.sigma).max(0.0);
        let hi = (self.location + 12.0 * self.sigma).max(lo + 1e-12);
        let s = self.sigma;
        let m = self.location;
        let integrand = |theta: f64| {
            let z = (theta - m) / s;
            (-0.5 * z * z).exp() / (SQRT_2PI * s) * g((-theta).exp())
        };
        Ok(quad::integrate(integrand, lo, hi, rel_tol, 1e-300)? / self.mass)
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `ln Phi(x)`, usable far into the lower tail.
fn ln_std_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        std_normal_cdf(x).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

fn truncated_mean(sigma: f64, location: f64) -> f64 {
    let s2 = sigma * sigma;
    (-location + 0.5 * s2 + ln_std_normal_cdf((location - s2) / sigma) - ln_std_normal_cdf(location / sigma)).exp()
}

fn solve_truncated_location(sigma: f64, target: f64) -> f64 {
    // Truncation only removes mass above one, so the untruncated anchor
    // undershoots and brackets from above.
    let mut hi = -target.ln() + 0.5 * sigma * sigma;
    let mut lo = hi - sigma;
    while truncated_mean(sigma, lo) < target {
        lo -= (hi - lo).max(sigma);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_mean(sigma, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Piecewise-constant PDTC over ascending bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    bin_edges: Vec<f64>,
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
}

impl Empirical {
    pub fn new(bin_edges: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        ensure!(
            !probabilities.is_empty() && bin_edges.len() == probabilities.len() + 1,
            Domain,
            "need n + 1 bin edges for n probabilities (got {} edges, {} probabilities)",
            bin_edges.len(),
            probabilities.len()
        );
        ensure!(
            bin_edges.windows(2).all(|w| w[0] < w[1]),
            Domain,
            "bin edges must be strictly ascending"
        );
        ensure!(
            bin_edges[0] >= 0.0 && *bin_edges.last().unwrap() <= 1.0,
            Domain,
            "bin edges must lie in [0, 1]"
        );
        ensure!(
            probabilities.iter().all(|p| *p >= 0.0 && p.is_finite()),
            Domain,
            "bin probabilities must be nonnegative"
        );
        let total: f64 = probabilities.iter().sum();
        ensure!(
            (total - 1.0).abs() <= 1e-9,
            Domain,
            "bin probabilities sum to {total}, expected 1"
        );
        let mut cdf = Vec::with_capacity(probabilities.len());
        let mut acc = 0.0;
        for p in &probabilities {
            acc += p;
            cdf.push(acc);
        }
        Ok(Self {
            bin_edges,
            probabilities,
            cdf,
        })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn density(&self, eta: f64) -> f64 {
        let edges = &self.bin_edges;
        if eta < edges[0] || eta > *edges.last().unwrap() {
            return 0.0;
        }
        let i = edges.partition_point(|e| *e <= eta).clamp(1, edges.len() - 1) - 1;
        self.probabilities[i] / (edges[i + 1] - edges[i])
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(p, w)| p * 0.5 * (w[0] + w[1]))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * *self.cdf.last().unwrap();
        let i = self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1);
        let lo = self.bin_edges[i];
        let hi = self.bin_edges[i + 1];
        lo + rng.random::<f64>() * (hi - lo)
    }

    fn expect<F: Fn(f64) -> f64>(&self, g: F, rel_tol: f64) -> Result<f64> {
        let mut total = 0.0;
        for (p, w) in self.probabilities.iter().zip(self.bin_edges.windows(2)) {
            if *p == 0.0 {
                continue;
            }
            let width = w[1] - w[0];
            total += p / width * quad::integrate(&g, w[0], w[1], rel_tol, 1e-300)?;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PdtcModel {
    Degenerate { eta0: f64 },
    LogNormal(LogNormal),
    Empirical(Empirical),
}

impl PdtcModel {
    pub fn degenerate(eta0: f64) -> Result<Self> {
        ensure!(
            (0.0..=1.0).contains(&eta0),
            Domain,
            "eta0 must be in [0, 1], got {eta0}"
        );
        Ok(PdtcModel::Degenerate { eta0 })
    }

    pub fn lognormal(sigma: f64, mean_eta: f64) -> Result<Self> {
        Ok(PdtcModel::LogNormal(LogNormal::new(sigma, mean_eta)?))
    }

    pub fn empirical(bin_edges: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        Ok(PdtcModel::Empirical(Empirical::new(bin_edges, probabilities)?))
    }

    /// Probability density at `eta`.
    pub fn density(&self, eta: f64) -> Result<f64> {
        ensure!(eta > 0.0 && eta <= 1.0, Domain, "eta must be in (0, 1], got {eta}");
        match self {
            PdtcModel::Degenerate { .. } => Err(Error::Unsupported(
                "a degenerate PDTC has no density; sample it instead".into(),
            )),
            PdtcModel::LogNormal(ln) => Ok(ln.density(eta)),
            PdtcModel::Empirical(emp) => Ok(emp.density(eta)),
        }
    }

    /// Mean transmittance of the distribution as sampled.
    pub fn mean(&self) -> f64 {
        match self {
            PdtcModel::Degenerate { eta0 } => *eta0,
            PdtcModel::LogNormal(ln) => ln.truncated_mean(),
            PdtcModel::Empirical(emp) => emp.mean(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PdtcModel::Degenerate { eta0 } => *eta0,
            PdtcModel::LogNormal(ln) => ln.sample(rng),
            PdtcModel::Empirical(emp) => emp.sample(rng),
        }
    }

    /// `E[g(eta)]` by adaptive quadrature at relative tolerance `rel_tol`.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F, rel_tol: f64) -> Result<f64> {
        match self {
            PdtcModel::Degenerate { eta0 } => Ok(g(*eta0)),
            PdtcModel::LogNormal(ln) => ln.expect(g, rel_tol),
            PdtcModel::Empirical(emp) => emp.expect(g, rel_tol),
        }
    }
}

impl Distribution<f64> for PdtcModel {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        PdtcModel::sample(self, rng)
    }
}

pub fn pdtc_density(model: &PdtcModel, eta: f64) -> Result<f64> {
    model.density(eta)
}

/// Per-block transmittance samples of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionTrace {
    pub block_duration: f64,
    pub etas: Vec<f64>,
    pub seed: u64,
}

impl TransmissionTrace {
    pub fn new(block_duration: f64, etas: Vec<f64>, seed: u64) -> Result<Self> {
        ensure!(
            block_duration > 0.0 && block_duration.is_finite(),
            InvalidArgument,
            "block_duration must be > 0"
        );
        ensure!(!etas.is_empty(), InvalidArgument, "a trace needs at least one block");
        ensure!(
            etas.iter().all(|e| (0.0..=1.0).contains(e)),
            Domain,
            "trace transmittances must lie in [0, 1]"
        );
        Ok(Self {
            block_duration,
            etas,
            seed,
        })
    }

    pub fn constant(eta: f64, n_blocks: usize, block_duration: f64) -> Result<Self> {
        Self::new(block_duration, vec![eta; n_blocks], 0)
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.block_duration * self.etas.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.etas.iter().sum::<f64>() / self.etas.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["block_index", "eta"])?;
        for (i, eta) in self.etas.iter().enumerate() {
            w.write_record([i.to_string(), eta.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, block_duration: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        ensure!(
            headers.iter().collect::<Vec<_>>() == ["block_index", "eta"],
            Format,
            "expected header `block_index,eta` in {}",
            path.display()
        );
        let mut etas = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let eta: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad eta on data row {}", line + 1)))?;
            etas.push(eta);
        }
        Self::new(block_duration, etas, 0)
    }
}

/// Draws `n_blocks` i.i.d. transmittances from `model`.
pub fn sample_trace(model: &PdtcModel, n_blocks: usize, block_duration: f64, seed: u64) -> Result<TransmissionTrace> {
    ensure!(n_blocks >= 1, InvalidArgument, "n_blocks must be >= 1");
    ensure!(
        block_duration > 0.0 && block_duration.is_finite(),
        InvalidArgument,
        "block_duration must be > 0"
    );
    let mut rng = rng::stream(seed, Domain::Trace, 0);
    let etas = (0..n_blocks).map(|_| model.sample(&mut rng)).collect();
    TransmissionTrace::new(block_duration, etas, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LognormalFit {
    pub sigma: f64,
    pub mean_eta: f64,
}

/// Moment fit: `sigma` is the population standard deviation of `-ln eta`,
/// `mean_eta` the arithmetic mean of the samples.
pub fn fit_lognormal(samples: &[f64]) -> Result<LognormalFit> {
    ensure!(samples.len() >= 2, InvalidArgument, "need at least 2 samples");
    ensure!(
        samples.iter().all(|s| *s > 0.0),
        Domain,
        "samples must be strictly positive (filter empty blocks first)"
    );
    let n = samples.len() as f64;
    let mean_eta = samples.iter().sum::<f64>() / n;
    let mean_theta = samples.iter().map(|s| -s.ln()).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|s| {
            let d = -s.ln() - mean_theta;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(LognormalFit {
        sigma: var.sqrt(),
        mean_eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_rejects_out_of_domain() {
        let m = PdtcModel::lognormal(0.5, 0.1).unwrap();
        assert!(matches!(m.density(0.0), Err(Error::Domain(_))));
        assert!(matches!(m.density(1.5), Err(Error::Domain(_))));
        let d = PdtcModel::degenerate(0.3).unwrap();
        assert!(matches!(d.density(0.3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn constructor_invariants() {
        assert!(LogNormal::new(0.0, 0.1).is_err());
        assert!(LogNormal::new(0.5, 0.0).is_err());
        assert!(LogNormal::new(0.5, 1.2).is_err());
        assert!(PdtcModel::degenerate(1.1).is_err());
        assert!(Empirical::new(vec![0.0, 0.5, 1.0], vec![0.5, 0.6]).is_err());
        assert!(Empirical::new(vec![0.0, 0.5, 0.4], vec![0.5, 0.5]).is_err());
        assert!(Empirical::new(vec![0.0, 0.5], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn degenerate_trace_is_constant() {
        let m = PdtcModel::degenerate(0.3).unwrap();
        let t = sample_trace(&m, 1000, 0.01, 1).unwrap();
        assert!(t.etas.iter().all(|e| *e == 0.3));
    }

    #[test]
    fn zero_blocks_is_an_argument_error() {
        let m = PdtcModel::degenerate(0.3).unwrap();
        assert!(matches!(sample_trace(&m, 0, 0.01, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fit_of_constant_samples() {
        let fit = fit_lognormal(&[0.2; 10]).unwrap();
        assert!(fit.sigma.abs() < 1e-12);
        assert!((fit.mean_eta - 0.2).abs() < 1e-15);
    }

    #[test]
    fn fit_of_two_points_by_hand() {
        let e1 = (-1.0f64).exp();
        let e3 = (-3.0f64).exp();
        let fit = fit_lognormal(&[e1, e3]).unwrap();
        assert!((fit.sigma - 1.0).abs() < 1e-12);
        assert!((fit.mean_eta - 0.5 * (e1 + e3)).abs() < 1e-15);
    }

    #[test]
    fn fit_rejects_nonpositive() {
        assert!(matches!(fit_lognormal(&[0.1, 0.0]), Err(Error::Domain(_))));
        assert!(fit_lognormal(&[0.1]).is_err());
    }

    #[test]
    fn truncated_anchor_hits_target_mean() {
        for &(s, m) in &[(0.18, 0.3), (1.8, 0.316), (1.8, 0.0316), (2.5, 0.3), (0.01, 0.5)] {
            let ln = LogNormal::with_anchor(s, m, MeanAnchor::Truncated).unwrap();
            let q = PdtcModel::LogNormal(ln.clone()).expect(|e| e, 1e-10).unwrap();
            assert!((ln.truncated_mean() - m).abs() < 1e-9 * m, "{s} {m}");
            assert!((q - m).abs() < 1e-7 * m, "{s} {m}: quadrature {q}");
        }
    }

    #[test]
    fn truncated_anchor_without_mass_is_rejected() {
        assert!(matches!(
            LogNormal::with_anchor(2.5, 0.9, MeanAnchor::Truncated),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn untruncated_anchor_mean_matches_when_mass_above_one_is_negligible() {
        let ln = LogNormal::new(0.18, 0.1).unwrap();
        assert!((ln.truncated_mean() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empirical_density_and_mean() {
        let emp = Empirical::new(vec![0.0, 0.1, 0.3], vec![0.25, 0.75]).unwrap();
        assert!((emp.density(0.05) - 2.5).abs() < 1e-12);
        assert!((emp.density(0.2) - 3.75).abs() < 1e-12);
        assert_eq!(emp.density(0.5), 0.0);
        assert!((emp.mean() - (0.25 * 0.05 + 0.75 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn trace_csv_round_trip() {
        let t = TransmissionTrace::new(0.01, vec![0.5, 0.25, 1.0], 3).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("block_index,eta\n0,0.5\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, text).unwrap();
        let back = TransmissionTrace::read_csv(&p, 0.01).unwrap();
        assert_eq!(back.etas, t.etas);
    }
}
