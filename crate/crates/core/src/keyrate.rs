//! Asymptotic secret key accounting for entanglement-based BB84.
//!
//! Fractions are per sifted bit: `1 - f(e) h2(e) - h2(e)`. The raw-bit
//! form carries the extra sifting factor 1/2.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coincidence::{total, BlockStats};
use crate::error::{ensure, Result};

/// Base-2 binary entropy.
pub fn binary_entropy(e: f64) -> Result<f64> {
    ensure!((0.0..=1.0).contains(&e), Domain, "probability {e} outside [0, 1]");
    if e == 0.0 || e == 1.0 {
        return Ok(0.0);
    }
    Ok(-e * e.log2() - (1.0 - e) * (1.0 - e).log2())
}

/// Error-correction inefficiency `f(e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ErrorCorrectionModel {
    Constant {
        f: f64,
    },
    /// `(qber, f)` points with strictly increasing qber, linearly
    /// interpolated and clamped outside the end points.
    Table {
        points: Vec<(f64, f64)>,
    },
}

impl Default for ErrorCorrectionModel {
    fn default() -> Self {
        Self::Table {
            points: vec![(0.043, 1.2202), (0.0551, 1.2697)],
        }
    }
}

impl ErrorCorrectionModel {
    pub fn constant(f: f64) -> Result<Self> {
        let m = Self::Constant { f };
        m.validate()?;
        Ok(m)
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        let m = Self::Table { points };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { f } => {
                ensure!(*f >= 1.0, InvalidArgument, "inefficiency {f} below 1");
            }
            Self::Table { points } => {
                ensure!(!points.is_empty(), InvalidArgument, "empty inefficiency table");
                for (q, f) in points {
                    ensure!(*f >= 1.0, InvalidArgument, "inefficiency {f} below 1 at qber {q}");
                    ensure!(
                        (0.0..=0.5).contains(q),
                        InvalidArgument,
                        "table qber {q} outside [0, 0.5]"
                    );
                }
                ensure!(
                    points.windows(2).all(|w| w[0].0 < w[1].0),
                    InvalidArgument,
                    "table qber values must be strictly increasing"
                );
            }
        }
        Ok(())
    }

    pub fn f(&self, e: f64) -> f64 {
        match self {
            Self::Constant { f } => *f,
            Self::Table { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if e <= first.0 {
                    return first.1;
                }
                if e >= last.0 {
                    return last.1;
                }
                let k = points.partition_point(|p| p.0 <= e);
                let (q0, f0) = points[k - 1];
                let (q1, f1) = points[k];
                f0 + (f1 - f0) * (e - q0) / (q1 - q0)
            }
        }
    }
}

/// Secret bits per sifted bit; negative past the security threshold.
pub fn secret_fraction(e: f64, ec: &ErrorCorrectionModel) -> Result<f64> {
    ensure!((0.0..=0.5).contains(&e), Domain, "qber {e} outside [0, 0.5]");
    let h = binary_entropy(e)?;
    Ok(1.0 - ec.f(e) * h - h)
}

/// Secret bits per raw (unsifted) bit.
pub fn secret_fraction_per_raw_bit(e: f64, ec: &ErrorCorrectionModel) -> Result<f64> {
    Ok(0.5 * secret_fraction(e, ec)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateResult {
    /// Coincidences in the pooled blocks.
    pub raw_count: u64,
    pub sifted_count: u64,
    pub error_count: u64,
    /// Measured error ratio; `None` when nothing was sifted.
    pub qber: Option<f64>,
    pub f_used: f64,
    /// Unfloored fraction per sifted bit.
    pub secret_fraction: f64,
    /// `max(0, sifted_count * secret_fraction)`.
    pub secret_bits: f64,
}

impl KeyRateResult {
    pub fn qber_defined(&self) -> bool {
        self.qber.is_some()
    }

    pub const CSV_HEADER: [&'static str; 7] = [
        "raw_count",
        "sifted_count",
        "error_count",
        "qber",
        "f_used",
        "secret_fraction",
        "secret_bits",
    ];

    pub fn csv_record(&self) -> [String; 7] {
        [
            self.raw_count.to_string(),
            self.sifted_count.to_string(),
            self.error_count.to_string(),
            self.qber.map(|q| q.to_string()).unwrap_or_default(),
            self.f_used.to_string(),
            self.secret_fraction.to_string(),
            self.secret_bits.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        w.write_record(self.csv_record())?;
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn secret_key_from_counts(
    raw_count: u64,
    sifted_count: u64,
    error_count: u64,
    ec: &ErrorCorrectionModel,
) -> Result<KeyRateResult> {
    ensure!(
        error_count <= sifted_count && sifted_count <= raw_count,
        InvariantViolation,
        "{error_count} errors in {sifted_count} sifted bits"
    );
    if sifted_count == 0 {
        return Ok(KeyRateResult {
            raw_count,
            sifted_count,
            error_count,
            qber: None,
            f_used: f64::NAN,
            secret_fraction: 0.0,
            secret_bits: 0.0,
        });
    }
    let q = error_count as f64 / sifted_count as f64;
    // Noise can push a small sample past 1/2; no key is extractable there.
    let e = q.min(0.5);
    let fraction = secret_fraction(e, ec)?;
    Ok(KeyRateResult {
        raw_count,
        sifted_count,
        error_count,
        qber: Some(q),
        f_used: ec.f(e),
        secret_fraction: fraction,
        secret_bits: (sifted_count as f64 * fraction).max(0.0),
    })
}

/// Pools all blocks into one sifted key and applies the fraction once.
pub fn secret_key_from_blocks(blocks: &[BlockStats], ec: &ErrorCorrectionModel) -> Result<KeyRateResult> {
    let t = total(blocks);
    secret_key_from_counts(t.coincidences, t.sifted_count, t.errors(), ec)
}
