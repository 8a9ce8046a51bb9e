//! Visual-acuity model linking viewing geometry to the point density a viewer
//! can actually resolve.
//!
//! Normal adult acuity resolves one arc-minute, i.e. 60 pixels per degree.
//! A viewer at distance `D` inches therefore needs
//! `1 / (2 D tan(½ · 1/60 · π/180))` pixels per inch; a model scaled by `S`
//! and pushed `D'` inches behind the screen plane needs
//! `S / (2 (D + D') tan(…))`.

use thiserror::Error;

use crate::cloud::{BoundingBox, PointCloud};
use crate::subsample::{ceil_tolerant, Method, Ratio, SamplingSpec, SubsampleError};

/// Smallest resolvable angle, in degrees.
pub const ACUITY_DEGREES: f64 = 1.0 / 60.0;

/// Model units per inch used when nothing else is configured. A 1024-voxel
/// figure then spans about 25.6 inches.
pub const DEFAULT_UNITS_PER_INCH: f64 = 40.0;

#[derive(Debug, Error, PartialEq)]
pub enum AcuityError {
    #[error("viewer distance must be positive, got {0}")]
    ViewerDistance(f64),
    #[error("camera distance must be non-negative, got {0}")]
    CameraDistance(f64),
    #[error("model scale must be positive, got {0}")]
    Scale(f64),
    #[error("units per inch must be positive, got {0}")]
    UnitsPerInch(f64),
    #[error("density must be at least 1")]
    Density,
    #[error("bounding box is degenerate (all extents zero)")]
    DegenerateBox,
    #[error(transparent)]
    Subsample(#[from] SubsampleError),
}

/// Viewer/screen/model geometry. Distances are in inches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewingGeometry {
    /// Eye to screen (`D`).
    pub viewer_distance: f64,
    /// Camera to the model's bounding-box centroid (`D'`).
    pub camera_distance: f64,
    /// Model scale factor (`S`).
    pub scale: f64,
    pub units_per_inch: f64,
}

impl ViewingGeometry {
    pub fn new(
        viewer_distance: f64,
        camera_distance: f64,
        scale: f64,
        units_per_inch: f64,
    ) -> Result<Self, AcuityError> {
        let g = ViewingGeometry {
            viewer_distance,
            camera_distance,
            scale,
            units_per_inch,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), AcuityError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.viewer_distance) {
            return Err(AcuityError::ViewerDistance(self.viewer_distance));
        }
        if !(self.camera_distance.is_finite() && self.camera_distance >= 0.0) {
            return Err(AcuityError::CameraDistance(self.camera_distance));
        }
        if !positive(self.scale) {
            return Err(AcuityError::Scale(self.scale));
        }
        if !positive(self.units_per_inch) {
            return Err(AcuityError::UnitsPerInch(self.units_per_inch));
        }
        Ok(())
    }
}

fn half_acuity_tan() -> f64 {
    (0.5 * ACUITY_DEGREES * (std::f64::consts::PI / 180.0)).tan()
}

/// Minimum pixels per inch a viewer at `viewer_distance` inches can resolve.
pub fn required_ppi(viewer_distance: f64) -> Result<f64, AcuityError> {
    if !(viewer_distance.is_finite() && viewer_distance > 0.0) {
        return Err(AcuityError::ViewerDistance(viewer_distance));
    }
    Ok(1.0 / (2.0 * viewer_distance * half_acuity_tan()))
}

/// Required pixels per inch accounting for model scale and camera distance.
pub fn required_ppi_scaled(g: &ViewingGeometry) -> Result<f64, AcuityError> {
    g.validate()?;
    Ok(g.scale / (2.0 * (g.viewer_distance + g.camera_distance) * half_acuity_tan()))
}

/// Maps a point count to a linear points-per-inch figure for a model.
pub trait DensityModel {
    fn effective_ppi(
        &self,
        density: usize,
        bbox: &BoundingBox,
        g: &ViewingGeometry,
    ) -> Result<f64, AcuityError>;

    /// Smallest point count whose effective PPI reaches `required`.
    fn min_density(
        &self,
        required: f64,
        bbox: &BoundingBox,
        g: &ViewingGeometry,
    ) -> Result<usize, AcuityError>;
}

/// Half the bounding-box surface (the visible side of a captured figure) in
/// square inches, with extents multiplied by `scale`.
fn half_surface_sq_in(
    bbox: &BoundingBox,
    g: &ViewingGeometry,
    scale: f64,
) -> Result<f64, AcuityError> {
    g.validate()?;
    let [a, b, c] = bbox.extents().map(|e| e * scale / g.units_per_inch);
    let area = a * b + b * c + c * a;
    if area > 0.0 {
        return Ok(area);
    }
    // A line segment has no area; fall back to its length squared.
    let longest = a.max(b).max(c);
    if longest > 0.0 {
        Ok(longest * longest)
    } else {
        Err(AcuityError::DegenerateBox)
    }
}

fn surface_ppi(density: usize, area: f64) -> Result<f64, AcuityError> {
    if density == 0 {
        return Err(AcuityError::Density);
    }
    Ok((density as f64 / area).sqrt())
}

fn surface_min_density(required: f64, area: f64) -> usize {
    (ceil_tolerant(required * required * area) as usize).max(1)
}

/// Treats the points as covering half the bounding-box surface, measured in
/// the model's own inches; linear density is `sqrt(points / area)`.
///
/// [`required_ppi_scaled`] already folds the scale factor into the
/// requirement (one model inch spans `S` inches on screen), so the area here
/// is deliberately unscaled. This keeps the chosen density unchanged when
/// scale and distance grow together.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurfaceDensity;

impl DensityModel for SurfaceDensity {
    fn effective_ppi(
        &self,
        density: usize,
        bbox: &BoundingBox,
        g: &ViewingGeometry,
    ) -> Result<f64, AcuityError> {
        surface_ppi(density, half_surface_sq_in(bbox, g, 1.0)?)
    }

    fn min_density(
        &self,
        required: f64,
        bbox: &BoundingBox,
        g: &ViewingGeometry,
    ) -> Result<usize, AcuityError> {
        Ok(surface_min_density(
            required,
            half_surface_sq_in(bbox, g, 1.0)?,
        ))
    }
}

/// Like [`SurfaceDensity`] but measures the area after scaling the model by
/// `S`, so doubling the scale halves the effective density. Combined with
/// [`required_ppi_scaled`] this counts the scale twice; it is kept for
/// comparison with screen-space measurements.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScaledSurfaceDensity;

impl DensityModel for ScaledSurfaceDensity {
    fn effective_ppi(
        &self,
        density: usize,
        bbox: &BoundingBox,
        g: &ViewingGeometry,
    ) -> Result<f64, AcuityError> {
        surface_ppi(density, half_surface_sq_in(bbox, g, g.scale)?)
    }

    fn min_density(
        &self,
        required: f64,
        bbox: &BoundingBox,
        g: &ViewingGeometry,
    ) -> Result<usize, AcuityError> {
        Ok(surface_min_density(
            required,
            half_surface_sq_in(bbox, g, g.scale)?,
        ))
    }
}

/// [`SurfaceDensity::effective_ppi`].
pub fn effective_ppi(
    density: usize,
    bbox: &BoundingBox,
    g: &ViewingGeometry,
) -> Result<f64, AcuityError> {
    SurfaceDensity.effective_ppi(density, bbox, g)
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub cloud: PointCloud,
    pub ratio: Ratio,
    pub required_ppi: f64,
    /// Effective PPI of the returned cloud.
    pub effective_ppi: f64,
    /// Smallest density satisfying the requirement.
    pub min_density: usize,
}

/// Sub-samples `cloud` down to the smallest density that still satisfies the
/// acuity requirement for `g`. Clouds already at or below it are returned
/// unchanged.
pub fn optimize_density(
    cloud: &PointCloud,
    g: &ViewingGeometry,
    spec: &SamplingSpec,
) -> Result<OptimizeOutcome, AcuityError> {
    optimize_density_with(&SurfaceDensity, cloud, g, spec)
}

/// [`optimize_density`] with a caller-supplied density model. The method and
/// tuning parameters come from `spec`; its ratio is ignored.
pub fn optimize_density_with(
    model: &dyn DensityModel,
    cloud: &PointCloud,
    g: &ViewingGeometry,
    spec: &SamplingSpec,
) -> Result<OptimizeOutcome, AcuityError> {
    let bbox = *cloud.bbox().ok_or(SubsampleError::EmptyCloud)?;
    let required = required_ppi_scaled(g)?;
    let min_density = model.min_density(required, &bbox, g)?;
    let n = cloud.len();
    if min_density >= n {
        return Ok(OptimizeOutcome {
            cloud: cloud.clone(),
            ratio: Ratio::ONE,
            required_ppi: required,
            effective_ppi: model.effective_ppi(n, &bbox, g)?,
            min_density,
        });
    }
    let ratio = Ratio::new(n as f64 / min_density as f64)?;
    let spec = SamplingSpec { ratio, ..*spec };
    let out = spec.apply(cloud)?;
    let effective = model.effective_ppi(out.len(), &bbox, g)?;
    Ok(OptimizeOutcome {
        cloud: out,
        ratio,
        required_ppi: required,
        effective_ppi: effective,
        min_density,
    })
}

/// Convenience wrapper using default tuning for `method`.
pub fn optimize_density_by_method(
    cloud: &PointCloud,
    g: &ViewingGeometry,
    method: Method,
) -> Result<OptimizeOutcome, AcuityError> {
    optimize_density(cloud, g, &SamplingSpec::new(method, Ratio::ONE))
}
