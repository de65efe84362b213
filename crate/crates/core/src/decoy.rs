//! One-decoy weak-coherent-pulse BB84 key rates over static and fading
//! channels.
//!
//! The parties observe gains `Q_x` and error rates `E_x` for the signal
//! (`x = mu`) and decoy (`x = nu`) intensities. For a fading channel these
//! are averages over the transmittance distribution; the bounds are then
//! applied exactly as for a static channel.
//!
//! Bounds, with the vacuum yield `Y0` unknown:
//!
//! ```text
//! Y1 >= Y1L(Y0) = mu / (mu nu - nu^2)
//!                 * (Q_nu e^nu - Q_mu e^mu nu^2/mu^2 - (mu^2 - nu^2)/mu^2 Y0)
//! e1 <= e1U(Y0) = min_x (E_x Q_x e^x - e0 Y0) / (Y1L(Y0) x),   x in {nu, mu}
//! Q1  = Y1L(Y0) mu e^-mu
//! R(Y0) = q (-Q_mu f h2(E_mu) + Q1 (1 - h2(e1U)))
//! ```
//!
//! `Y0` ranges over the values consistent with the observations:
//! `Y0 >= max(0, (nu Q_mu e^mu - mu Q_nu e^nu) / (nu - mu))` and
//! `e0 Y0 <= E_x Q_x e^x` for both intensities. The rate is the minimum of
//! `R` over that interval, floored at zero.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{LogNormal, MeanAnchor, PdtcModel};
use crate::error::{ensure, Result};
use crate::keyrate::binary_entropy;

const QUAD_REL_TOL: f64 = 1e-8;
const Y0_GRID: usize = 64;
const MU_GRID: usize = 24;
const MU_MAX: f64 = 1.5;

/// Transmittance of a loss in dB.
pub fn db_to_eta(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn eta_to_db(eta: f64) -> f64 {
    -10.0 * eta.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoyParams {
    /// Signal mean photon number.
    pub mu: f64,
    /// Decoy mean photon number.
    pub nu: f64,
    /// Background yield per pulse.
    pub y0: f64,
    pub e_detector: f64,
    /// Error probability of background clicks.
    pub e0: f64,
    pub f_ec: f64,
    /// Sifting factor.
    pub q: f64,
}

impl Default for DecoyParams {
    fn default() -> Self {
        Self {
            mu: 0.5,
            nu: 0.05,
            y0: 1e-7,
            e_detector: 0.01,
            e0: 0.5,
            f_ec: 1.22,
            q: 0.5,
        }
    }
}

impl DecoyParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.nu >= 0.0 && self.nu < self.mu && self.mu.is_finite(),
            InvalidArgument,
            "need 0 <= nu < mu, got nu {} mu {}",
            self.nu,
            self.mu
        );
        ensure!(self.nu > 0.0, InvalidArgument, "the one-decoy bound needs nu > 0");
        ensure!(
            (0.0..1.0).contains(&self.y0),
            InvalidArgument,
            "y0 {} outside [0, 1)",
            self.y0
        );
        ensure!(
            (0.0..=0.5).contains(&self.e_detector),
            InvalidArgument,
            "e_detector {} outside [0, 0.5]",
            self.e_detector
        );
        ensure!(
            self.e0 > 0.0 && self.e0 <= 0.5,
            InvalidArgument,
            "e0 {} outside (0, 0.5]",
            self.e0
        );
        ensure!(self.f_ec >= 1.0, InvalidArgument, "f_ec {} below 1", self.f_ec);
        ensure!(
            self.q > 0.0 && self.q <= 1.0,
            InvalidArgument,
            "q {} outside (0, 1]",
            self.q
        );
        Ok(())
    }

    pub fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Static { eta: f64 },
    Fluctuating(PdtcModel),
}

impl ChannelSpec {
    pub fn static_eta(eta: f64) -> Result<Self> {
        ensure!(eta > 0.0 && eta <= 1.0, Domain, "transmittance {eta} outside (0, 1]");
        Ok(Self::Static { eta })
    }

    pub fn static_loss_db(db: f64) -> Result<Self> {
        ensure!(db > 0.0, Domain, "loss must be > 0 dB, got {db}");
        Self::static_eta(db_to_eta(db))
    }

    /// Log-normal fading whose truncated mean equals the static channel
    /// of the same loss.
    pub fn lognormal_loss_db(sigma: f64, db: f64) -> Result<Self> {
        ensure!(db > 0.0, Domain, "loss must be > 0 dB, got {db}");
        Ok(Self::Fluctuating(PdtcModel::LogNormal(LogNormal::with_anchor(
            sigma,
            db_to_eta(db),
            MeanAnchor::Truncated,
        )?)))
    }

    /// `E[g(eta)]` over the channel.
    fn expect<F: Fn(f64) -> f64>(&self, g: F) -> Result<f64> {
        match self {
            Self::Static { eta } => Ok(g(*eta)),
            Self::Fluctuating(model) => model.expect(g, QUAD_REL_TOL),
        }
    }
}

/// Gain and error rate of a pulse class with mean photon number `pulse_mu`.
pub fn gain_and_error(params: &DecoyParams, spec: &ChannelSpec, pulse_mu: f64) -> Result<(f64, f64)> {
    ensure!(pulse_mu >= 0.0, InvalidArgument, "mean photon number {pulse_mu} < 0");
    // 1 - exp(-eta mu), the signal part of the gain.
    let signal = spec.expect(|eta| -(-eta * pulse_mu).exp_m1())?;
    let q = params.y0 + signal;
    let eq = params.e0 * params.y0 + params.e_detector * signal;
    let e = if q > 0.0 { eq / q } else { params.e0 };
    Ok((q, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observed {
    pub q_mu: f64,
    pub e_mu: f64,
    pub q_nu: f64,
    pub e_nu: f64,
}

impl Observed {
    pub fn measure(params: &DecoyParams, spec: &ChannelSpec) -> Result<Self> {
        let (q_mu, e_mu) = gain_and_error(params, spec, params.mu)?;
        let (q_nu, e_nu) = gain_and_error(params, spec, params.nu)?;
        Ok(Self { q_mu, e_mu, q_nu, e_nu })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoyBound {
    /// Worst-case vacuum yield.
    pub y0: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub q1: f64,
    /// Unfloored rate per pulse.
    pub rate: f64,
}

/// Bound quantities and unfloored rate at a given vacuum yield.
pub fn bound_at(params: &DecoyParams, obs: &Observed, y0: f64) -> DecoyBound {
    let (mu, nu) = (params.mu, params.nu);
    let qmu = obs.q_mu * mu.exp();
    let qnu = obs.q_nu * nu.exp();
    let y1 = mu / (mu * nu - nu * nu) * (qnu - qmu * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0);
    let leak = obs.q_mu * params.f_ec * binary_entropy(obs.e_mu.clamp(0.0, 1.0)).unwrap_or(1.0);
    if y1 <= 0.0 {
        return DecoyBound {
            y0,
            y1_lower: y1,
            e1_upper: 0.5,
            q1: 0.0,
            rate: -params.q * leak,
        };
    }
    let e1 = [(nu, obs.e_nu * qnu), (mu, obs.e_mu * qmu)]
        .iter()
        .map(|&(x, eqx)| (eqx - params.e0 * y0) / (y1 * x))
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 0.5);
    let q1 = y1 * mu * (-mu).exp();
    let h1 = binary_entropy(e1).expect("clamped to [0, 0.5]");
    DecoyBound {
        y0,
        y1_lower: y1,
        e1_upper: e1,
        q1,
        rate: params.q * (-leak + q1 * (1.0 - h1)),
    }
}

/// Vacuum yields consistent with the observed gains and errors.
pub fn y0_interval(params: &DecoyParams, obs: &Observed) -> (f64, f64) {
    let (mu, nu) = (params.mu, params.nu);
    let qmu = obs.q_mu * mu.exp();
    let qnu = obs.q_nu * nu.exp();
    let lo = ((nu * qmu - mu * qnu) / (nu - mu)).max(0.0);
    let hi = (obs.e_mu * qmu).min(obs.e_nu * qnu) / params.e0;
    (lo, hi.max(lo))
}

/// Golden-section minimization on `[a, b]`.
fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Worst case over the admissible vacuum yields: a coarse grid, then
/// golden-section refinement around the lowest grid point.
pub fn tighter_bound(params: &DecoyParams, obs: &Observed) -> DecoyBound {
    let (lo, hi) = y0_interval(params, obs);
    if hi <= lo {
        return bound_at(params, obs, lo);
    }
    let step = (hi - lo) / Y0_GRID as f64;
    let mut best = bound_at(params, obs, lo);
    let mut best_k = 0;
    for k in 1..=Y0_GRID {
        let b = bound_at(params, obs, lo + k as f64 * step);
        if b.rate < best.rate {
            best = b;
            best_k = k;
        }
    }
    let a = lo + best_k.saturating_sub(1) as f64 * step;
    let z = (lo + (best_k + 1) as f64 * step).min(hi);
    let (y, _) = golden_min(|y| bound_at(params, obs, y).rate, a, z, 60);
    let refined = bound_at(params, obs, y);
    if refined.rate < best.rate {
        refined
    } else {
        best
    }
}

/// Secure key rate per pulse at the configured `mu`, floored at zero.
pub fn secure_key_rate(params: &DecoyParams, spec: &ChannelSpec) -> Result<f64> {
    params.validate()?;
    let obs = Observed::measure(params, spec)?;
    Ok(tighter_bound(params, &obs).rate.max(0.0))
}

/// Rate at the signal intensity that maximizes it.
pub fn optimal_key_rate(params: &DecoyParams, spec: &ChannelSpec) -> Result<(f64, f64)> {
    params.validate()?;
    let (q_nu, e_nu) = gain_and_error(params, spec, params.nu)?;
    let rate_at = |mu: f64| -> Result<f64> {
        let p = params.with_mu(mu);
        let (q_mu, e_mu) = gain_and_error(&p, spec, mu)?;
        let obs = Observed { q_mu, e_mu, q_nu, e_nu };
        Ok(tighter_bound(&p, &obs).rate)
    };
    let lo = params.nu + 0.01;
    let step = (MU_MAX - lo) / (MU_GRID - 1) as f64;
    let mut grid = Vec::with_capacity(MU_GRID);
    for k in 0..MU_GRID {
        let mu = lo + k as f64 * step;
        grid.push((mu, rate_at(mu)?));
    }
    let k = (0..MU_GRID).max_by(|&i, &j| grid[i].1.total_cmp(&grid[j].1)).unwrap();
    let a = grid[k.saturating_sub(1)].0;
    let b = grid[(k + 1).min(MU_GRID - 1)].0;
    // Golden search on -rate; quadrature errors surface afterwards.
    let failed = std::cell::Cell::new(None);
    let (mu, neg) = golden_min(
        |mu| match rate_at(mu) {
            Ok(r) => -r,
            Err(e) => {
                failed.set(Some(e));
                f64::INFINITY
            }
        },
        a,
        b,
        40,
    );
    if let Some(e) = failed.into_inner() {
        return Err(e);
    }
    let (mu, rate) = if -neg > grid[k].1 { (mu, -neg) } else { grid[k] };
    Ok((mu, rate.max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub mean_loss_db: f64,
    pub sigma: f64,
    pub rate_static: f64,
    pub rate_fluct: f64,
}

impl ScanRow {
    /// `|static - fluct| / static`; zero when both rates vanish.
    pub fn relative_difference(&self) -> f64 {
        if self.rate_static == 0.0 && self.rate_fluct == 0.0 {
            0.0
        } else {
            (self.rate_static - self.rate_fluct).abs() / self.rate_static
        }
    }
}

/// Static and log-normal fading rates on a (loss, sigma) grid. With
/// `optimize_mu` each rate uses its own best signal intensity; otherwise
/// `params.mu` is used throughout.
pub fn scan_sigma(
    params: &DecoyParams,
    mean_losses_db: &[f64],
    sigmas: &[f64],
    optimize_mu: bool,
) -> Result<Vec<ScanRow>> {
    params.validate()?;
    ensure!(
        mean_losses_db.iter().all(|&l| l > 0.0),
        InvalidArgument,
        "losses must be > 0 dB"
    );
    let rate = |spec: &ChannelSpec| -> Result<f64> {
        if optimize_mu {
            Ok(optimal_key_rate(params, spec)?.1)
        } else {
            secure_key_rate(params, spec)
        }
    };
    let statics: Vec<f64> = mean_losses_db
        .par_iter()
        .map(|&l| rate(&ChannelSpec::static_loss_db(l)?))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, f64)> = mean_losses_db
        .iter()
        .enumerate()
        .flat_map(|(i, _)| sigmas.iter().map(move |&s| (i, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(i, sigma)| {
            let l = mean_losses_db[i];
            Ok(ScanRow {
                mean_loss_db: l,
                sigma,
                rate_static: statics[i],
                rate_fluct: rate(&ChannelSpec::lognormal_loss_db(sigma, l)?)?,
            })
        })
        .collect()
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mean_loss_db", "sigma", "rate_static", "rate_fluct"])?;
    for r in rows {
        w.write_record([
            r.mean_loss_db.to_string(),
            r.sigma.to_string(),
            r.rate_static.to_string(),
            r.rate_fluct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean() -> DecoyParams {
        DecoyParams {
            y0: 0.0,
            e_detector: 0.0,
            ..DecoyParams::default()
        }
    }

    #[test]
    fn static_gain_closed_form() {
        let (q, e) = gain_and_error(&clean(), &ChannelSpec::static_eta(1.0).unwrap(), 0.5).unwrap();
        assert!((q - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn vacuum_pulse_is_all_background() {
        let p = DecoyParams::default();
        let (q, e) = gain_and_error(&p, &ChannelSpec::static_eta(0.1).unwrap(), 0.0).unwrap();
        assert_eq!(q, p.y0);
        assert_eq!(e, 0.5);
    }

    #[test]
    fn degenerate_fading_equals_static() {
        let p = DecoyParams::default();
        let s = ChannelSpec::static_eta(0.01).unwrap();
        let f = ChannelSpec::Fluctuating(PdtcModel::degenerate(0.01).unwrap());
        assert_eq!(
            gain_and_error(&p, &s, 0.5).unwrap(),
            gain_and_error(&p, &f, 0.5).unwrap()
        );
        assert_eq!(secure_key_rate(&p, &s).unwrap(), secure_key_rate(&p, &f).unwrap());
    }

    #[test]
    fn noiseless_rate_is_single_photon_gain() {
        let p = clean();
        let s = ChannelSpec::static_eta(1.0).unwrap();
        let obs = Observed::measure(&p, &s).unwrap();
        let b = tighter_bound(&p, &obs);
        assert_eq!(b.y0, 0.0);
        assert!((secure_key_rate(&p, &s).unwrap() - p.q * b.q1).abs() < 1e-15);
    }

    #[test]
    fn parameter_validation() {
        let p = DecoyParams::default();
        assert!(DecoyParams { nu: 0.6, ..p }.validate().is_err());
        assert!(DecoyParams { e_detector: 0.6, ..p }.validate().is_err());
        assert!(DecoyParams { y0: 1.0, ..p }.validate().is_err());
        assert!(DecoyParams { f_ec: 0.9, ..p }.validate().is_err());
        assert!(ChannelSpec::static_loss_db(0.0).is_err());
    }

    #[test]
    fn loss_conversion() {
        assert!((db_to_eta(20.0) - 0.01).abs() < 1e-15);
        assert!((eta_to_db(0.001) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_scan_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "mean_loss_db,sigma,rate_static,rate_fluct\n"
        );
    }
}
