#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;

use dashpc_core::manifest::{package_clouds, PackageOptions};
use dashpc_core::{Method, Point, PointCloud, Ratio, SamplingSpec};
use rand::{Rng, SeedableRng};

pub fn loopback() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

/// A wobbly 40-unit blob; frames differ slightly but share their extent.
pub fn frame(index: usize, points: usize) -> PointCloud {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(index as u64);
    let mut pts: Vec<Point> = (0..points)
        .map(|_| {
            Point::new(
                rng.gen_range(0.0..40.0),
                rng.gen_range(0.0..40.0),
                rng.gen_range(0.0..40.0),
                rng.gen(),
                rng.gen(),
                rng.gen(),
            )
        })
        .collect();
    pts[0] = Point::new(0.0, 0.0, 0.0, 0, 0, 0);
    pts[1] = Point::new(40.0, 40.0, 40.0, 0, 0, 0);
    PointCloud::new(pts).unwrap()
}

pub fn ladder(ratios: &[f64]) -> Vec<SamplingSpec> {
    ratios
        .iter()
        .map(|&r| SamplingSpec::new(Method::SortedCluster, Ratio::new(r).unwrap()))
        .collect()
}

pub fn package_sequence(dir: &Path, frames: usize, points: usize, ratios: &[f64]) {
    let clouds: Vec<PointCloud> = (0..frames).map(|i| frame(i, points)).collect();
    package_clouds(&clouds, &ladder(ratios), dir, &PackageOptions::default()).unwrap();
}
