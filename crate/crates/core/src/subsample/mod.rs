//! Deterministic density sub-sampling.
//!
//! Three methods reduce a cloud to exactly `ceil(n / R)` of its own points:
//!
//! * [`Method::SortedCluster`]: spatially sort, then keep every R-th point.
//! * [`Method::DensityTree`]: cluster by a density tree and thin each leaf
//!   with the sorted stride, deepest leaves first.
//! * [`Method::OctreeNeighbors`]: grow nearest-neighbor clusters from the
//!   leaves of a complete octree and keep each cluster's middle point.

mod density;
mod neighbors;
mod tree;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cloud::{Point, PointCloud};

pub use density::subsample_density_tree;
pub use neighbors::{
    subsample_octree_neighbors, trace_octree_neighbors, Cluster, NeighborPass, NeighborTrace,
};
pub use tree::{octant_bounds, DensityTree, TreeNode, MAX_DEPTH, MAX_GRID};

pub const DEFAULT_GRID: u32 = 16;
pub const DEFAULT_LEAF_THRESHOLD: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SubsampleError {
    #[error("cannot sub-sample an empty point cloud")]
    EmptyCloud,
    #[error("sub-sampling ratio must be a finite number >= 1, got {0}")]
    InvalidRatio(f64),
    #[error("keep percentage must be in (0, 100], got {0}")]
    InvalidPercentage(f64),
    #[error("grid resolution must be in 1..={max}, got {0}", max = MAX_GRID)]
    InvalidGrid(u32),
    #[error("leaf threshold must be at least 1")]
    InvalidLeafThreshold,
    #[error("cluster size must be at least 2, got {0}")]
    InvalidClusterSize(usize),
}

/// Input-to-output point count ratio, always `>= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Ratio(f64);

impl Ratio {
    pub const ONE: Ratio = Ratio(1.0);

    pub fn new(r: f64) -> Result<Self, SubsampleError> {
        if r.is_finite() && r >= 1.0 {
            Ok(Ratio(r))
        } else {
            Err(SubsampleError::InvalidRatio(r))
        }
    }

    /// Ratio that keeps `percentage` percent of the points.
    pub fn from_percentage(percentage: f64) -> Result<Self, SubsampleError> {
        if percentage.is_finite() && percentage > 0.0 && percentage <= 100.0 {
            Ok(Ratio(100.0 / percentage))
        } else {
            Err(SubsampleError::InvalidPercentage(percentage))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_integral(self) -> bool {
        self.0.fract() == 0.0
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SortedCluster,
    DensityTree,
    OctreeNeighbors,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::SortedCluster,
        Method::DensityTree,
        Method::OctreeNeighbors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SortedCluster => "alg1",
            Method::DensityTree => "alg2",
            Method::OctreeNeighbors => "alg3",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alg1" | "sorted" => Ok(Method::SortedCluster),
            "alg2" | "density-tree" => Ok(Method::DensityTree),
            "alg3" | "octree-nn" => Ok(Method::OctreeNeighbors),
            other => Err(format!(
                "unknown sampling method `{other}` (expected alg1, alg2 or alg3)"
            )),
        }
    }
}

/// Full parameter set for one sub-sampling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingSpec {
    pub method: Method,
    pub ratio: Ratio,
    /// Level-0 histogram resolution (density tree only).
    pub grid: u32,
    /// Leaf occupancy bound (density tree only).
    pub leaf_threshold: usize,
    /// Neighborhood size (octree method only); `None` means `round(R)`.
    pub cluster_size: Option<usize>,
}

impl SamplingSpec {
    pub fn new(method: Method, ratio: Ratio) -> Self {
        SamplingSpec {
            method,
            ratio,
            grid: DEFAULT_GRID,
            leaf_threshold: DEFAULT_LEAF_THRESHOLD,
            cluster_size: None,
        }
    }

    pub fn effective_cluster_size(&self) -> usize {
        self.cluster_size
            .unwrap_or_else(|| (self.ratio.get().round() as usize).max(2))
    }

    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud, SubsampleError> {
        match self.method {
            Method::SortedCluster => subsample_sorted(cloud, self.ratio),
            Method::DensityTree => {
                subsample_density_tree(cloud, self.ratio, self.grid, self.leaf_threshold)
            }
            Method::OctreeNeighbors => {
                subsample_octree_neighbors(cloud, self.ratio, self.effective_cluster_size())
            }
        }
    }
}

/// `ceil(x)`, except that values within a relative 1e-9 of an integer snap
/// to it. Ratios derived from percentages (`100 / p`) are rarely exact in
/// binary floating point.
pub(crate) fn ceil_tolerant(x: f64) -> f64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    }
}

/// Number of points every method keeps: `ceil(n / R)`, clamped to `1..=n`
/// for non-empty input. The removal budget is `n` minus this.
pub fn target_keep_count(n: usize, ratio: Ratio) -> usize {
    if n == 0 {
        return 0;
    }
    (ceil_tolerant(n as f64 / ratio.get()) as usize).clamp(1, n)
}

/// Indices `floor(j * stride)` for `j < keep`, strictly increasing and below
/// `len`.
pub(crate) fn stride_indices(len: usize, keep: usize, stride: f64) -> Vec<usize> {
    debug_assert!(keep <= len);
    let mut out = Vec::with_capacity(keep);
    let mut next_min = 0usize;
    for j in 0..keep {
        let idx = ((j as f64 * stride).floor() as usize)
            .max(next_min)
            .min(len - (keep - j));
        out.push(idx);
        next_min = idx + 1;
    }
    out
}

/// Sorted-cluster sub-sampling: sort spatially and keep points at
/// `floor(j * R)` for `j < ceil(n / R)`.
pub fn subsample_sorted(cloud: &PointCloud, ratio: Ratio) -> Result<PointCloud, SubsampleError> {
    if cloud.is_empty() {
        return Err(SubsampleError::EmptyCloud);
    }
    let sorted = cloud.sort_spatial();
    let keep = target_keep_count(sorted.len(), ratio);
    let points: Vec<Point> = stride_indices(sorted.len(), keep, ratio.get())
        .into_iter()
        .map(|i| sorted.points()[i])
        .collect();
    Ok(PointCloud::from_valid(points))
}
