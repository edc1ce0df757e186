use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{cross, dot, norm, normalize, CloudError, ClusterLabeling, Point3, PointCloud};

/// Principal components of a point set; eigenvalues are population
/// covariance eigenvalues in descending order, clamped at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub centroid: Point3,
    pub eigenvalues: [f64; 3],
    pub eigenvectors: [Point3; 3],
}

pub fn pca(points: &[Point3]) -> Option<Pca> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    let centroid = [c[0] / n, c[1] / n, c[2] / n];
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = [p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]];
        for r in 0..3 {
            for s in r..3 {
                cov[(r, s)] += d[r] * d[s];
            }
        }
    }
    for r in 0..3 {
        for s in r..3 {
            cov[(r, s)] /= n;
            cov[(s, r)] = cov[(r, s)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.map(|i| eig.eigenvalues[i].max(0.0));
    let eigenvectors = order.map(|i| {
        let v = eig.eigenvectors.column(i);
        [v[0], v[1], v[2]]
    });
    Some(Pca {
        centroid,
        eigenvalues,
        eigenvectors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeatures {
    pub cluster_id: usize,
    pub point_count: usize,
    pub centroid: Point3,
    pub eigenvalues: [f64; 3],
    /// Unit eigenvector of the largest eigenvalue, oriented so that its
    /// component along `up` is non-negative.
    pub principal_axis: Point3,
    /// Unit eigenvector of the smallest eigenvalue.
    pub normal: Point3,
    pub linearity: f64,
    pub planarity: f64,
    pub verticality: f64,
    pub extent: Point3,
    pub vertical_extent: f64,
}

fn orient(v: Point3, up: &Point3) -> Point3 {
    let d = dot(&v, up);
    let flip = d < 0.0 || (d == 0.0 && v.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0));
    if flip {
        [-v[0], -v[1], -v[2]]
    } else {
        v
    }
}

fn features_of(cluster_id: usize, points: &[Point3], up: &Point3) -> ClusterFeatures {
    let p = pca(points).expect("cluster is non-empty");
    let mut ev = p.eigenvalues;
    if points.len() < 3 {
        ev[1] = 0.0;
        ev[2] = 0.0;
    }
    let principal_axis = if ev[0] > 0.0 {
        orient(p.eigenvectors[0], up)
    } else {
        *up
    };
    let (linearity, planarity) = if ev[0] > 0.0 {
        (
            ((ev[0] - ev[1]) / ev[0]).clamp(0.0, 1.0),
            ((ev[1] - ev[2]) / ev[0]).clamp(0.0, 1.0),
        )
    } else {
        (0.0, 0.0)
    };
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let (mut up_lo, mut up_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for q in points {
        for k in 0..3 {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
        let h = dot(q, up);
        up_lo = up_lo.min(h);
        up_hi = up_hi.max(h);
    }
    ClusterFeatures {
        cluster_id,
        point_count: points.len(),
        centroid: p.centroid,
        eigenvalues: ev,
        principal_axis,
        normal: orient(p.eigenvectors[2], up),
        linearity,
        planarity,
        verticality: dot(&principal_axis, up).abs().min(1.0),
        extent: [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]],
        vertical_extent: up_hi - up_lo,
    }
}

/// Per-cluster PCA shape features, ordered by cluster id. `up` must be a
/// unit vector.
pub fn cluster_features(
    cloud: &PointCloud,
    labeling: &ClusterLabeling,
    up: &Point3,
) -> Vec<ClusterFeatures> {
    let mut members: Vec<Vec<Point3>> = vec![Vec::new(); labeling.n_clusters];
    for (p, &l) in cloud.points.iter().zip(&labeling.labels) {
        if l >= 0 {
            members[l as usize].push(*p);
        }
    }
    members
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(id, m)| features_of(id, m, up))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterRole {
    Pole,
    Vegetation,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub pole_min_linearity: f64,
    pub pole_min_verticality: f64,
    pub min_pole_height: f64,
    pub vegetation_max_linearity: f64,
    pub min_veg_points: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            pole_min_linearity: 0.85,
            pole_min_verticality: 0.9,
            min_pole_height: 4.0,
            vegetation_max_linearity: 0.5,
            min_veg_points: 30,
        }
    }
}

/// Rule-based roles. At most one cluster is labelled pole: the tallest one
/// that qualifies. Clusters with fewer than three points are always `Other`.
pub fn classify_clusters(
    features: &[ClusterFeatures],
    rules: &ClassifierConfig,
) -> BTreeMap<usize, ClusterRole> {
    let pole = features
        .iter()
        .filter(|f| {
            f.point_count >= 3
                && f.linearity >= rules.pole_min_linearity
                && f.verticality >= rules.pole_min_verticality
                && f.vertical_extent >= rules.min_pole_height
        })
        .max_by(|a, b| {
            a.vertical_extent
                .total_cmp(&b.vertical_extent)
                .then(b.cluster_id.cmp(&a.cluster_id))
        })
        .map(|f| f.cluster_id);
    features
        .iter()
        .map(|f| {
            let role = if Some(f.cluster_id) == pole {
                ClusterRole::Pole
            } else if f.point_count >= 3
                && f.linearity < rules.vegetation_max_linearity
                && f.point_count >= rules.min_veg_points
            {
                ClusterRole::Vegetation
            } else {
                ClusterRole::Other
            };
            (f.cluster_id, role)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line3D {
    pub point_on_line: Point3,
    /// Unit direction with non-negative z component.
    pub direction: Point3,
}

const MIN_AXIS_DOMINANCE: f64 = 1.5;

/// Total-least-squares line through the points.
pub fn fit_pole_axis(points: &[Point3]) -> Result<Line3D, CloudError> {
    if points.len() < 3 {
        return Err(CloudError::TooFewPoints {
            need: 3,
            got: points.len(),
        });
    }
    let p = pca(points).expect("non-empty");
    let [l1, l2, _] = p.eigenvalues;
    if !(l1 > 0.0) || l1 < MIN_AXIS_DOMINANCE * l2 {
        return Err(CloudError::AxisIllDefined);
    }
    let direction = normalize(&orient(p.eigenvectors[0], &[0.0, 0.0, 1.0]))
        .ok_or(CloudError::AxisIllDefined)?;
    Ok(Line3D {
        point_on_line: p.centroid,
        direction,
    })
}

/// Angle between the axis and `up`, in `[0, 90]` degrees, independent of
/// the direction's sign.
pub fn tilt_from_vertical(axis: &Line3D, up: &Point3) -> Result<f64, CloudError> {
    let up = normalize(up).ok_or(CloudError::UpVector)?;
    let d = normalize(&axis.direction).ok_or(CloudError::AxisIllDefined)?;
    let along = dot(&d, &up).abs();
    let across = norm(&cross(&d, &up));
    Ok(across.atan2(along).to_degrees().clamp(0.0, 90.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::dbscan::ClusterLabeling as Labels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const UP: Point3 = [0.0, 0.0, 1.0];

    fn single_cluster(points: &[Point3]) -> ClusterFeatures {
        let cloud = PointCloud::from_points(points.to_vec()).unwrap();
        let labels = Labels {
            labels: vec![0; points.len()],
            eps: 1.0,
            min_pts: 1,
            n_clusters: 1,
        };
        cluster_features(&cloud, &labels, &UP).remove(0)
    }

    #[test]
    fn vertical_segment_features() {
        let pts: Vec<Point3> = (0..20).map(|i| [2.0, -1.0, i as f64 * 0.5]).collect();
        let f = single_cluster(&pts);
        assert_eq!(f.linearity, 1.0);
        assert_eq!(f.verticality, 1.0);
        assert_eq!(f.principal_axis, [0.0, 0.0, 1.0]);
        assert_eq!(f.vertical_extent, 9.5);
        assert!((norm(&f.principal_axis) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn isotropic_blob_low_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<Point3> = (0..5000)
            .map(|_| [n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)])
            .collect();
        let f = single_cluster(&pts);
        assert!(f.linearity < 0.2, "{}", f.linearity);
        assert!(f.eigenvalues[0] >= f.eigenvalues[1] && f.eigenvalues[1] >= f.eigenvalues[2]);
    }

    #[test]
    fn horizontal_disc_not_vertical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Point3> = (0..3000)
            .map(|_| {
                let r = 3.0 * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                [r * a.cos(), r * a.sin(), 0.0]
            })
            .collect();
        let f = single_cluster(&pts);
        assert!(f.verticality < 1e-9, "{}", f.verticality);
        assert!(f.planarity > 0.8);
        assert!(f.normal[2].abs() > 1.0 - 1e-9);
    }

    #[test]
    fn classification_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cylinder: Vec<Point3> = (0..2000)
            .map(|_| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                [0.15 * a.cos(), 0.15 * a.sin(), rng.random_range(0.0..10.0)]
            })
            .collect();
        let canopy: Vec<Point3> = (0..2000)
            .map(|_| {
                let (u, v, w): (f64, f64, f64) = (
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                [4.0 + 2.0 * u, 2.0 * v, 6.0 + 1.5 * w]
            })
            .collect();
        let f = vec![
            ClusterFeatures {
                cluster_id: 0,
                ..single_cluster(&cylinder)
            },
            ClusterFeatures {
                cluster_id: 1,
                ..single_cluster(&canopy)
            },
            ClusterFeatures {
                cluster_id: 2,
                ..single_cluster(&[[0.0, 0.0, 0.0], [0.0, 0.0, 9.0]])
            },
        ];
        let roles = classify_clusters(&f, &ClassifierConfig::default());
        assert_eq!(roles[&0], ClusterRole::Pole);
        assert_eq!(roles[&1], ClusterRole::Vegetation);
        assert_eq!(roles[&2], ClusterRole::Other);
    }

    #[test]
    fn only_tallest_pole() {
        let line = |h: f64| {
            (0..50)
                .map(|i| [0.0, 0.0, h * i as f64 / 49.0])
                .collect::<Vec<_>>()
        };
        let f = vec![
            ClusterFeatures {
                cluster_id: 0,
                ..single_cluster(&line(6.0))
            },
            ClusterFeatures {
                cluster_id: 1,
                ..single_cluster(&line(9.0))
            },
        ];
        let roles = classify_clusters(&f, &ClassifierConfig::default());
        assert_eq!(roles[&0], ClusterRole::Other);
        assert_eq!(roles[&1], ClusterRole::Pole);
    }

    #[test]
    fn axis_of_exact_lines() {
        let pts: Vec<Point3> = (0..10).map(|i| [1.0, 1.0, i as f64]).collect();
        let l = fit_pole_axis(&pts).unwrap();
        assert_eq!(l.direction, [0.0, 0.0, 1.0]);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pts: Vec<Point3> = (0..10).map(|i| [i as f64 * s, 0.0, i as f64 * s]).collect();
        let l = fit_pole_axis(&pts).unwrap();
        for (a, b) in l.direction.iter().zip([s, 0.0, s]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn axis_ill_defined() {
        let square = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ];
        assert_eq!(fit_pole_axis(&square), Err(CloudError::AxisIllDefined));
        assert!(matches!(
            fit_pole_axis(&square[..2]),
            Err(CloudError::TooFewPoints { .. })
        ));
        assert_eq!(
            fit_pole_axis(&[[1.0; 3]; 5]),
            Err(CloudError::AxisIllDefined)
        );
    }

    #[test]
    fn tilt_cases() {
        let axis = |d: Point3| Line3D {
            point_on_line: [0.0; 3],
            direction: d,
        };
        assert_eq!(
            tilt_from_vertical(&axis([0.0, 0.0, 1.0]), &UP).unwrap(),
            0.0
        );
        assert_eq!(
            tilt_from_vertical(&axis([1.0, 0.0, 0.0]), &UP).unwrap(),
            90.0
        );
        let r = 5f64.to_radians();
        let t = tilt_from_vertical(&axis([r.sin(), 0.0, r.cos()]), &UP).unwrap();
        assert!((t - 5.0).abs() < 1e-6);
        let flipped = tilt_from_vertical(&axis([-r.sin(), 0.0, -r.cos()]), &UP).unwrap();
        assert_eq!(t, flipped);
        assert_eq!(
            tilt_from_vertical(&axis([0.0, 0.0, 1.0]), &[0.0; 3]),
            Err(CloudError::UpVector)
        );
    }
}
