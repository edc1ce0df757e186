use serde::{Deserialize, Serialize};

use super::{
    classify_clusters, cluster_features, dbscan, dot, fit_pole_axis, normalize, tilt_from_vertical,
    ClassifierConfig, CloudError, ClusterRole, Point3, PointCloud, SpatialIndex, UP,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clearance {
    pub clearance_m: f64,
    /// `(pole point, vegetation point)` realizing the minimum.
    pub nearest_pair: (Point3, Point3),
}

/// Exact minimum distance between any pole point and any point in the
/// vegetation index.
pub fn clearance_distance(
    pole_points: &[Point3],
    vegetation: &SpatialIndex,
) -> Result<Clearance, CloudError> {
    if pole_points.is_empty() || vegetation.is_empty() {
        return Err(CloudError::EmptySet);
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, p) in pole_points.iter().enumerate() {
        let bound = best.map_or(f64::INFINITY, |b| b.2);
        if let Some((j, d)) = vegetation.nearest_within(p, bound) {
            if best.is_none_or(|b| d < b.2) {
                best = Some((i, j, d));
            }
        }
    }
    let (i, j, d) = best.expect("both sets are non-empty");
    Ok(Clearance {
        clearance_m: d,
        nearest_pair: (pole_points[i], vegetation.points()[j]),
    })
}

/// Pole tilt and vegetation clearance for one reconstructed scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorResult {
    /// Deflection of the pole axis from the up vector, degrees.
    pub tilt_deg: f64,
    /// `90 - tilt_deg`, comparable with image-based inclination.
    pub inclination_deg: f64,
    /// `None` when no vegetation cluster was found.
    pub clearance_m: Option<f64>,
    pub nearest_pair: Option<(Point3, Point3)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudParams {
    pub eps: f64,
    pub min_pts: usize,
    pub up: Point3,
    pub scale_m_per_unit: f64,
    pub classifier: ClassifierConfig,
    /// Warn when the dominant ground-like plane tilts more than this from
    /// `up`.
    pub ground_disagreement_deg: f64,
}

impl Default for CloudParams {
    fn default() -> Self {
        Self {
            eps: 0.35,
            min_pts: 8,
            up: UP,
            scale_m_per_unit: 1.0,
            classifier: ClassifierConfig::default(),
            ground_disagreement_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub role: ClusterRole,
    pub point_count: usize,
    pub centroid: Point3,
    pub linearity: f64,
    pub verticality: f64,
    pub vertical_extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudAnalysis {
    pub n_points: usize,
    pub n_noise: usize,
    pub clusters: Vec<ClusterSummary>,
    pub corridor: CorridorResult,
    /// Angle between `up` and the normal of the largest planar cluster.
    pub ground_tilt_deg: Option<f64>,
    pub up_vector_suspect: bool,
}

/// dbscan -> features -> classify -> axis fit -> tilt and clearance.
pub fn analyze_cloud(
    cloud: &PointCloud,
    params: &CloudParams,
) -> Result<CloudAnalysis, CloudError> {
    let up = normalize(&params.up).ok_or(CloudError::UpVector)?;
    let scaled;
    let cloud = if params.scale_m_per_unit != 1.0 {
        let s = params.scale_m_per_unit;
        scaled = PointCloud {
            points: cloud
                .points
                .iter()
                .map(|p| [p[0] * s, p[1] * s, p[2] * s])
                .collect(),
            colors: None,
        };
        &scaled
    } else {
        cloud
    };

    let labeling = dbscan(cloud, params.eps, params.min_pts)?;
    let features = cluster_features(cloud, &labeling, &up);
    let roles = classify_clusters(&features, &params.classifier);

    let pole_id = roles
        .iter()
        .find(|(_, r)| **r == ClusterRole::Pole)
        .map(|(id, _)| *id)
        .ok_or(CloudError::NoPole)?;
    let mut pole_pts = Vec::new();
    let mut veg_pts = Vec::new();
    for (p, &l) in cloud.points.iter().zip(&labeling.labels) {
        if l < 0 {
            continue;
        }
        match roles.get(&(l as usize)) {
            Some(ClusterRole::Pole) if l as usize == pole_id => pole_pts.push(*p),
            Some(ClusterRole::Vegetation) => veg_pts.push(*p),
            _ => {}
        }
    }
    let axis = fit_pole_axis(&pole_pts)?;
    let tilt_deg = tilt_from_vertical(&axis, &up)?;
    let clearance = if veg_pts.is_empty() {
        None
    } else {
        let index = SpatialIndex::new(&veg_pts, params.eps);
        Some(clearance_distance(&pole_pts, &index)?)
    };

    let ground_tilt_deg = features
        .iter()
        .filter(|f| {
            roles.get(&f.cluster_id) != Some(&ClusterRole::Pole)
                && f.planarity >= 0.5
                && f.point_count >= params.classifier.min_veg_points
        })
        .max_by_key(|f| f.point_count)
        .map(|f| dot(&f.normal, &up).abs().min(1.0).acos().to_degrees());

    let clusters = features
        .iter()
        .map(|f| ClusterSummary {
            cluster_id: f.cluster_id,
            role: roles[&f.cluster_id],
            point_count: f.point_count,
            centroid: f.centroid,
            linearity: f.linearity,
            verticality: f.verticality,
            vertical_extent: f.vertical_extent,
        })
        .collect();

    Ok(CloudAnalysis {
        n_points: cloud.len(),
        n_noise: labeling.noise_count(),
        clusters,
        corridor: CorridorResult {
            tilt_deg,
            inclination_deg: 90.0 - tilt_deg,
            clearance_m: clearance.map(|c| c.clearance_m),
            nearest_pair: clearance.map(|c| c.nearest_pair),
        },
        ground_tilt_deg,
        up_vector_suspect: ground_tilt_deg.is_some_and(|g| g > params.ground_disagreement_deg),
    })
}
