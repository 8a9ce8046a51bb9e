//! Density-adaptive point cloud streaming: the point cloud model, PLY I/O,
//! sub-sampling, visual-acuity math, the streaming manifest and quality
//! metrics.

pub mod acuity;
pub mod cloud;
pub mod manifest;
pub mod metrics;
pub mod ply;
pub mod spatial;
pub mod subsample;

pub use cloud::{BoundingBox, CloudError, Point, PointCloud};
pub use ply::{PlyEncoding, PlyError};
pub use subsample::{Method, Ratio, SamplingSpec, SubsampleError};
