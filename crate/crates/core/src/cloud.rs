//! Point and point cloud types shared by every stage of the pipeline.

use std::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("scale factor must be a positive finite number, got {0}")]
    InvalidScale(f64),
}

/// A single XYZ+RGB sample. Coordinates are kept as `f64` even though PLY
/// files store them as 32-bit floats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, r: u8, g: u8, b: u8) -> Self {
        Point { x, y, z, r, g, b }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Squared Euclidean distance. The evaluation order is fixed so every
    /// caller (indexed or brute force) produces bit-identical values.
    #[inline]
    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    /// Ordering used by spatial sorting: Z, then Y, then X.
    #[inline]
    pub fn spatial_cmp(&self, other: &Point) -> Ordering {
        self.z
            .total_cmp(&other.z)
            .then_with(|| self.y.total_cmp(&other.y))
            .then_with(|| self.x.total_cmp(&other.x))
    }
}

/// Axis-aligned box in model units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingBox {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut bbox = BoundingBox {
            min: first.position(),
            max: first.position(),
        };
        for p in iter {
            bbox.include(p);
        }
        Some(bbox)
    }

    fn include(&mut self, p: &Point) {
        for (axis, v) in p.position().into_iter().enumerate() {
            if v < self.min[axis] {
                self.min[axis] = v;
            }
            if v > self.max[axis] {
                self.max[axis] = v;
            }
        }
    }

    pub fn extents(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn diagonal(&self) -> f64 {
        let [a, b, c] = self.extents();
        (a * a + b * b + c * c).sqrt()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.position()
            .into_iter()
            .enumerate()
            .all(|(axis, v)| v >= self.min[axis] && v <= self.max[axis])
    }
}

/// Ordered list of points with a cached bounding box.
///
/// Point order is significant: PLY I/O preserves it and the sub-sampling
/// algorithms define their output order in terms of it.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    points: Vec<Point>,
    bbox: Option<BoundingBox>,
}

impl PartialEq for PointCloud {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite coordinates.
    pub fn new(points: Vec<Point>) -> Result<Self, CloudError> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(CloudError::NonFinite { index });
        }
        Ok(Self::from_valid(points))
    }

    /// Caller guarantees every point is finite.
    pub(crate) fn from_valid(points: Vec<Point>) -> Self {
        let bbox = BoundingBox::from_points(&points);
        PointCloud { points, bbox }
    }

    pub fn empty() -> Self {
        PointCloud::default()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `None` for an empty cloud.
    pub fn bbox(&self) -> Option<&BoundingBox> {
        self.bbox.as_ref()
    }

    /// Scales about the bounding-box center: `p' = c + factor * (p - c)`.
    /// Colors and point order are unchanged.
    pub fn scale(&self, factor: f64) -> Result<PointCloud, CloudError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(CloudError::InvalidScale(factor));
        }
        let Some(bbox) = self.bbox else {
            return Ok(PointCloud::empty());
        };
        let [cx, cy, cz] = bbox.center();
        let points = self
            .points
            .iter()
            .map(|p| Point {
                x: cx + factor * (p.x - cx),
                y: cy + factor * (p.y - cy),
                z: cz + factor * (p.z - cz),
                ..*p
            })
            .collect::<Vec<_>>();
        PointCloud::new(points)
    }

    /// Reorders points by successive stable sorts on X, then Y, then Z. The
    /// net order is lexicographic on (Z, Y, X) with ties kept in input order.
    pub fn sort_spatial(&self) -> PointCloud {
        let mut points = self.points.clone();
        sort_points_spatial(&mut points);
        PointCloud {
            points,
            bbox: self.bbox,
        }
    }
}

/// In-place stable spatial sort; see [`PointCloud::sort_spatial`].
pub fn sort_points_spatial(points: &mut [Point]) {
    points.sort_by(Point::spatial_cmp);
}

/// Sorts indices into `points` by the spatial order, ties broken by index.
pub(crate) fn sort_indices_spatial(points: &[Point], indices: &mut [usize]) {
    indices.sort_unstable_by(|&a, &b| points[a].spatial_cmp(&points[b]).then(a.cmp(&b)));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point::new(x, y, z, 1, 2, 3)
    }

    #[test]
    fn bbox_is_componentwise_min_max() {
        let cloud = PointCloud::new(vec![p(1.0, -2.0, 3.0), p(-1.0, 5.0, 0.5)]).unwrap();
        let bbox = cloud.bbox().unwrap();
        assert_eq!(bbox.min, [-1.0, -2.0, 0.5]);
        assert_eq!(bbox.max, [1.0, 5.0, 3.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let err = PointCloud::new(vec![p(0.0, 0.0, 0.0), p(f64::NAN, 0.0, 0.0)]).unwrap_err();
        assert_eq!(err, CloudError::NonFinite { index: 1 });
        assert!(PointCloud::new(vec![p(0.0, f64::INFINITY, 0.0)]).is_err());
    }

    #[test]
    fn empty_cloud_has_no_bbox() {
        let cloud = PointCloud::new(Vec::new()).unwrap();
        assert!(cloud.bbox().is_none());
        assert!(cloud.scale(2.0).unwrap().is_empty());
    }

    #[test]
    fn scale_identity_and_doubling() {
        let cloud = PointCloud::new(vec![p(0.0, 0.0, 0.0), p(1.0, 2.0, 2.0)]).unwrap();
        assert_eq!(cloud.scale(1.0).unwrap(), cloud);
        let doubled = cloud.scale(2.0).unwrap();
        assert_eq!(
            doubled.bbox().unwrap().diagonal(),
            2.0 * cloud.bbox().unwrap().diagonal()
        );
    }

    #[test]
    fn scale_unit_cube_by_half() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(p(
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            ));
        }
        let cloud = PointCloud::new(pts).unwrap();
        let half = cloud.scale(0.5).unwrap();
        let bbox = half.bbox().unwrap();
        assert_eq!(bbox.extents(), [0.5, 0.5, 0.5]);
        assert_eq!(bbox.center(), [0.5, 0.5, 0.5]);
        assert_eq!(bbox.min, [0.25, 0.25, 0.25]);
    }

    #[test]
    fn scale_rejects_non_positive() {
        let cloud = PointCloud::new(vec![p(0.0, 0.0, 0.0)]).unwrap();
        for f in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(cloud.scale(f), Err(CloudError::InvalidScale(_))));
        }
    }

    #[test]
    fn sort_single_axis() {
        let cloud = PointCloud::new(vec![p(1.0, 0.0, 0.0), p(0.0, 0.0, 0.0)]).unwrap();
        let sorted = cloud.sort_spatial();
        assert_eq!(sorted.points()[0].x, 0.0);
        assert_eq!(sorted.points()[1].x, 1.0);
    }

    #[test]
    fn sort_is_stable_for_coincident_points() {
        let a = Point::new(1.0, 1.0, 1.0, 10, 0, 0);
        let b = Point::new(1.0, 1.0, 1.0, 20, 0, 0);
        let cloud = PointCloud::new(vec![a, p(0.0, 0.0, 5.0), b]).unwrap();
        let sorted = cloud.sort_spatial();
        assert_eq!(sorted.points()[0].r, 10);
        assert_eq!(sorted.points()[1].r, 20);
        assert_eq!(sorted.sort_spatial(), sorted);
    }
}
