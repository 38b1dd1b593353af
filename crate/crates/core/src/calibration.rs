//! Per-finger linear raw-to-Newton force models.

use crate::hand_model::Finger;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Published fits `(finger, a, b, R²)`; the thumb row is the thumb bend actuator.
pub const PUBLISHED_FITS: [(Finger, f64, f64, f64); 3] = [
    (Finger::Index, 0.0075, -0.414, 0.987),
    (Finger::Middle, 0.0065, 0.018, 0.986),
    (Finger::Thumb, 0.0125, 0.384, 0.993),
];

/// Reconstructed gauge sweep shipped with the crate.
pub const SHIPPED_SWEEP_CSV: &str = include_str!("../data/calibration_sweep.csv");

/// Seed search start for [`reconstruct_sweep`] that produced the shipped file.
pub const SHIPPED_SWEEP_SEED: u64 = 7;

pub const RAW_MAX: f64 = 1000.0;

pub const CSV_HEADER: [&str; 4] = ["finger", "raw_set", "gauge_force_n", "repeat"];

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("no sweep records")]
    Empty,
    #[error("all raw_set values are identical ({0}); slope is undetermined")]
    Degenerate(f64),
    #[error("records mix fingers {0} and {1}")]
    MixedFingers(Finger, Finger),
    #[error("header must be `{}`, found `{found}`", CSV_HEADER.join(","))]
    Schema { found: String },
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("reading sweep: {0}")]
    Io(String),
    #[error("no calibration model for {0}")]
    Missing(Finger),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub finger: Finger,
    pub raw_set: f64,
    pub gauge_force_n: f64,
    pub repeat: u32,
}

/// Where a model's coefficients came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Fitted,
    Published,
    /// Borrowed from another finger's model because none exists for this one.
    Reused(Finger),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Fitted => f.write_str("fitted"),
            Provenance::Published => f.write_str("published"),
            Provenance::Reused(from) => write!(f, "reused:{from}"),
        }
    }
}

impl From<Provenance> for String {
    fn from(p: Provenance) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Provenance {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "fitted" => Ok(Provenance::Fitted),
            "published" => Ok(Provenance::Published),
            other => other
                .strip_prefix("reused:")
                .and_then(|f| f.parse().ok())
                .map(Provenance::Reused)
                .ok_or_else(|| format!("unknown provenance `{other}`")),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Provenance::try_from(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// `F = a·L + b` for one finger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub finger: Finger,
    pub a: f64,
    pub b: f64,
    pub r2: f64,
    pub provenance: Provenance,
}

/// A converted value and whether it hit a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

impl CalibrationModel {
    pub fn published(finger: Finger) -> Option<CalibrationModel> {
        PUBLISHED_FITS.iter().find(|row| row.0 == finger).map(|&(finger, a, b, r2)| CalibrationModel {
            finger,
            a,
            b,
            r2,
            provenance: Provenance::Published,
        })
    }

    /// Force in Newtons; negative estimates clamp to zero.
    pub fn raw_to_newtons(&self, raw: f64) -> Clamped {
        let f = self.a * raw + self.b;
        if f < 0.0 {
            Clamped { value: 0.0, clamped: true }
        } else {
            Clamped { value: f, clamped: false }
        }
    }

    /// Nearest raw setting for a force, clamped to `[0, 1000]`.
    pub fn newtons_to_raw(&self, newtons: f64) -> Clamped {
        let raw = ((newtons - self.b) / self.a).round();
        let value = raw.clamp(0.0, RAW_MAX);
        Clamped { value, clamped: value != raw }
    }
}

/// Ordinary least squares over `(raw_set, gauge_force_n)` for one finger.
pub fn fit_linear(records: &[SweepRecord]) -> Result<CalibrationModel, CalibrationError> {
    let first = records.first().ok_or(CalibrationError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.finger != first.finger) {
        return Err(CalibrationError::MixedFingers(first.finger, other.finger));
    }
    let n = records.len() as f64;
    let mean_x = records.iter().map(|r| r.raw_set).sum::<f64>() / n;
    let mean_y = records.iter().map(|r| r.gauge_force_n).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for r in records {
        let (dx, dy) = (r.raw_set - mean_x, r.gauge_force_n - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(CalibrationError::Degenerate(first.raw_set));
    }
    let a = sxy / sxx;
    let b = mean_y - a * mean_x;
    let ss_res: f64 = records.iter().map(|r| (r.gauge_force_n - a * r.raw_set - b).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(CalibrationModel { finger: first.finger, a, b, r2, provenance: Provenance::Fitted })
}

/// One model per finger present in `records`, in finger order.
pub fn fit_all(records: &[SweepRecord]) -> Result<Vec<CalibrationModel>, CalibrationError> {
    let mut groups: BTreeMap<Finger, Vec<SweepRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.finger).or_default().push(*r);
    }
    if groups.is_empty() {
        return Err(CalibrationError::Empty);
    }
    groups.values().map(|g| fit_linear(g)).collect()
}

/// Models for all five fingers; ring and pinky borrow the middle model when
/// they have none of their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub models: Vec<CalibrationModel>,
}

impl CalibrationSet {
    pub fn from_models(models: &[CalibrationModel]) -> Self {
        let mut out: Vec<CalibrationModel> = Vec::new();
        for f in Finger::ALL {
            if let Some(m) = models.iter().find(|m| m.finger == f) {
                out.push(*m);
            } else if matches!(f, Finger::Ring | Finger::Pinky) {
                if let Some(m) = models.iter().find(|m| m.finger == Finger::Middle) {
                    out.push(CalibrationModel { finger: f, provenance: Provenance::Reused(Finger::Middle), ..*m });
                }
            }
        }
        CalibrationSet { models: out }
    }

    /// The published coefficients, completed for ring and pinky.
    pub fn published() -> Self {
        let models: Vec<CalibrationModel> =
            PUBLISHED_FITS.iter().filter_map(|row| CalibrationModel::published(row.0)).collect();
        Self::from_models(&models)
    }

    pub fn get(&self, finger: Finger) -> Result<&CalibrationModel, CalibrationError> {
        self.models.iter().find(|m| m.finger == finger).ok_or(CalibrationError::Missing(finger))
    }
}

/// Parsed sweep plus non-fatal notes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepFile {
    pub records: Vec<SweepRecord>,
    pub warnings: Vec<String>,
}

pub fn parse_sweep_csv(text: &str) -> Result<SweepFile, CalibrationError> {
    if text.trim().is_empty() {
        return Ok(SweepFile { records: Vec::new(), warnings: vec!["sweep file is empty".to_string()] });
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CalibrationError::Io(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(CalibrationError::Schema { found: header.iter().collect::<Vec<_>>().join(",") });
    }
    let mut out = SweepFile::default();
    for row in reader.deserialize::<SweepRecord>() {
        let record = row.map_err(|e| CalibrationError::Row {
            line: e.position().map_or(0, |p| p.line()),
            reason: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        let line = out.records.len() as u64 + 2;
        if !(0.0..=RAW_MAX).contains(&record.raw_set) {
            return Err(CalibrationError::Row {
                line,
                reason: format!("raw_set {} outside [0, 1000]", record.raw_set),
            });
        }
        if !(record.gauge_force_n >= 0.0) {
            return Err(CalibrationError::Row {
                line,
                reason: format!("gauge_force_n {} is negative", record.gauge_force_n),
            });
        }
        out.records.push(record);
    }
    if out.records.is_empty() {
        out.warnings.push("sweep file has a header but no rows".to_string());
    }
    Ok(out)
}

pub fn load_sweep_csv(path: &Path) -> Result<SweepFile, CalibrationError> {
    let text = std::fs::read_to_string(path).map_err(|e| CalibrationError::Io(format!("{}: {e}", path.display())))?;
    parse_sweep_csv(&text)
}

pub fn sweep_to_csv(records: &[SweepRecord]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{:.3},{}\n", r.finger, r.raw_set, r.gauge_force_n, r.repeat));
    }
    out
}

/// Sweep setpoints 25, 50, ..., 1000.
pub fn sweep_setpoints() -> Vec<f64> {
    (1..=40).map(|i| 25.0 * i as f64).collect()
}

/// Synthetic two-repeat sweep whose least-squares refit reproduces `(a, b, R²)`.
///
/// Gaussian residuals are projected off the span of `[1, L]`, so the fit
/// recovers `a` and `b`, then scaled so `1 − SS_res/SS_tot` equals the target.
/// Seeds are tried upward from `seed` until every reading is non-negative.
/// Returns the readings and the seed that was used.
pub fn reconstruct_finger_sweep(finger: Finger, a: f64, b: f64, r2: f64, seed: u64) -> (Vec<SweepRecord>, u64) {
    let xs: Vec<f64> = (0..2).flat_map(|_| sweep_setpoints()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let ss_res = a * a * sxx * (1.0 - r2) / r2;
    for s in seed.. {
        let mut rng = ChaCha8Rng::seed_from_u64(s ^ ((finger.index() as u64) << 32));
        let mut e: Vec<f64> = (0..xs.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mean_e = e.iter().sum::<f64>() / n;
        let slope = xs.iter().zip(&e).map(|(x, v)| (x - mean_x) * v).sum::<f64>() / sxx;
        for (v, x) in e.iter_mut().zip(&xs) {
            *v -= mean_e + slope * (x - mean_x);
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = ss_res.sqrt() / norm;
        let ys: Vec<f64> = xs.iter().zip(&e).map(|(x, v)| a * x + b + scale * v).collect();
        if ys.iter().all(|&y| (y * 1000.0).round() >= 0.0) {
            let records = xs
                .iter()
                .zip(&ys)
                .enumerate()
                .map(|(i, (&raw_set, &y))| SweepRecord {
                    finger,
                    raw_set,
                    gauge_force_n: (y * 1000.0).round() / 1000.0 + 0.0,
                    repeat: (i / 40) as u32,
                })
                .collect();
            return (records, s);
        }
    }
    unreachable!("seed space exhausted")
}

/// The reconstructed sweep for every published finger.
pub fn reconstruct_sweep(seed: u64) -> Vec<SweepRecord> {
    PUBLISHED_FITS.iter().flat_map(|&(f, a, b, r2)| reconstruct_finger_sweep(f, a, b, r2, seed).0).collect()
}
