//! Point-to-point (D1) geometry PSNR and bandwidth accounting.

use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::spatial::KdTree;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot compare an empty point cloud")]
    EmptyCloud,
    #[error("peak value must be positive and finite, got {0}")]
    InvalidPeak(f64),
    #[error("size lists differ in length ({original} vs {adapted})")]
    LengthMismatch { original: usize, adapted: usize },
}

/// How the two directional errors combine into one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

/// PSNR in dB; identical clouds have no error and report [`Psnr::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Psnr::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(*v),
            Psnr::Infinite => None,
        }
    }
}

impl PartialOrd for Psnr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Psnr::Infinite, Psnr::Infinite) => Some(Equal),
            (Psnr::Infinite, _) => Some(Greater),
            (_, Psnr::Infinite) => Some(Less),
            (Psnr::Finite(a), Psnr::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsnrReport {
    /// Reference to degraded.
    pub mse_ab: f64,
    /// Degraded to reference.
    pub mse_ba: f64,
    pub mse_sym: f64,
    pub aggregation: Aggregation,
    pub peak: f64,
    pub psnr_db: Psnr,
}

impl PsnrReport {
    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        format!(
            "mse_ab={}\nmse_ba={}\nmse_sym={}\naggregation={}\npeak={}\npsnr_db={}\n",
            self.mse_ab,
            self.mse_ba,
            self.mse_sym,
            match self.aggregation {
                Aggregation::Max => "max",
                Aggregation::Mean => "mean",
            },
            self.peak,
            self.psnr_db
        )
    }

    /// One JSON line in the session-log record format.
    pub fn to_json_record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            record: &'static str,
            #[serde(flatten)]
            report: &'a PsnrReport,
        }
        serde_json::to_string(&Record {
            record: "psnr",
            report: self,
        })
        .expect("report serializes")
    }
}

/// Mean squared distance from each point of `a` to its nearest neighbor in
/// `b`. The sum runs in `a`'s point order, so the value is reproducible.
pub fn directional_mse(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let index = KdTree::new(b.points());
    let distances: Vec<f64> = a
        .points()
        .par_iter()
        .map(|p| index.nearest_distance_sq(p).expect("index is non-empty"))
        .collect();
    Ok(distances.iter().sum::<f64>() / a.len() as f64)
}

/// Point-to-point PSNR of `degraded` against `reference`. `peak` defaults to
/// the reference bounding-box diagonal.
pub fn psnr_d1(
    reference: &PointCloud,
    degraded: &PointCloud,
    peak: Option<f64>,
    aggregation: Aggregation,
) -> Result<PsnrReport, MetricsError> {
    let peak = match peak {
        Some(p) => p,
        None => reference.bbox().ok_or(MetricsError::EmptyCloud)?.diagonal(),
    };
    if !(peak.is_finite() && peak > 0.0) {
        return Err(MetricsError::InvalidPeak(peak));
    }
    let mse_ab = directional_mse(reference, degraded)?;
    let mse_ba = directional_mse(degraded, reference)?;
    let mse_sym = match aggregation {
        Aggregation::Max => mse_ab.max(mse_ba),
        Aggregation::Mean => 0.5 * (mse_ab + mse_ba),
    };
    let psnr_db = if mse_sym > 0.0 {
        Psnr::Finite(10.0 * (peak * peak / mse_sym).log10())
    } else {
        Psnr::Infinite
    };
    Ok(PsnrReport {
        mse_ab,
        mse_ba,
        mse_sym,
        aggregation,
        peak,
        psnr_db,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthStat {
    pub bytes_original: u64,
    pub bytes_adapted: u64,
    pub saving_fraction: f64,
}

/// Totals two equally long byte-count lists and reports the fraction saved.
pub fn bandwidth_saving(original: &[u64], adapted: &[u64]) -> Result<BandwidthStat, MetricsError> {
    if original.len() != adapted.len() {
        return Err(MetricsError::LengthMismatch {
            original: original.len(),
            adapted: adapted.len(),
        });
    }
    let bytes_original: u64 = original.iter().sum();
    let bytes_adapted: u64 = adapted.iter().sum();
    let saving_fraction = if bytes_original == 0 {
        0.0
    } else {
        1.0 - bytes_adapted as f64 / bytes_original as f64
    };
    Ok(BandwidthStat {
        bytes_original,
        bytes_adapted,
        saving_fraction,
    })
}
