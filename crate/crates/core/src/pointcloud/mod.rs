//! Point-cloud analysis: PLY ingestion, DBSCAN segmentation, pole/vegetation
//! classification, pole-axis fitting and vegetation clearance.
//!
//! Coordinates are in the reconstruction frame. Reconstructions are only
//! known up to scale, so [`CloudParams::scale_m_per_unit`] converts to metres
//! before any metric threshold (DBSCAN `eps`, pole height, clearance) is
//! applied.

mod corridor;
mod dbscan;
mod features;
mod index;
mod ply;

pub use corridor::{
    analyze_cloud, clearance_distance, Clearance, CloudAnalysis, CloudParams, ClusterSummary,
    CorridorResult,
};
pub use dbscan::{dbscan, ClusterLabeling, NOISE};
pub use features::{
    classify_clusters, cluster_features, fit_pole_axis, pca, tilt_from_vertical, ClassifierConfig,
    ClusterFeatures, ClusterRole, Line3D, Pca,
};
pub use index::SpatialIndex;
pub use ply::{parse_ply, write_ply, PlyError, PlyFormat};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point3 = [f64; 3];

pub const UP: Point3 = [0.0, 0.0, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("colour count {colors} does not match point count {points}")]
    ColorCount { points: usize, colors: usize },
    #[error("eps must be positive, got {0}")]
    Eps(f64),
    #[error("min_pts must be at least 1")]
    MinPts,
    #[error("axis ill-defined")]
    AxisIllDefined,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("no pole cluster found")]
    NoPole,
    #[error("empty point set")]
    EmptySet,
    #[error("up vector must be non-zero")]
    UpVector,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, colors: Option<Vec<[u8; 3]>>) -> Result<Self, CloudError> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(CloudError::NonFinite(i));
        }
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(CloudError::ColorCount {
                    points: points.len(),
                    colors: c.len(),
                });
            }
        }
        Ok(Self { points, colors })
    }

    pub fn from_points(points: Vec<Point3>) -> Result<Self, CloudError> {
        Self::new(points, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[inline]
pub fn dist(a: &Point3, b: &Point3) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[inline]
pub(crate) fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: &Point3) -> Option<Point3> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| [a[0] / n, a[1] / n, a[2] / n])
}
