use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{CloudError, PointCloud, SpatialIndex};

pub const NOISE: i64 = -1;
const UNVISITED: i64 = i64::MIN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    /// Per point: `NOISE` or a cluster id in `0..n_clusters`.
    pub labels: Vec<i64>,
    pub eps: f64,
    pub min_pts: usize,
    pub n_clusters: usize,
}

impl ClusterLabeling {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == cluster as i64)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == NOISE).count()
    }
}

/// Density-based clustering over closed `eps` balls (a point counts toward
/// its own neighbourhood).
///
/// Points are scanned in ascending index order and clusters grow
/// breadth-first, so a border point reachable from several clusters joins the
/// first one to reach it. Cluster ids are dense in discovery order.
pub fn dbscan(cloud: &PointCloud, eps: f64, min_pts: usize) -> Result<ClusterLabeling, CloudError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CloudError::Eps(eps));
    }
    if min_pts == 0 {
        return Err(CloudError::MinPts);
    }
    let pts = &cloud.points;
    let index = SpatialIndex::new(pts, eps);
    let mut labels = vec![UNVISITED; pts.len()];
    let mut next = 0i64;
    let mut queue = VecDeque::new();

    for i in 0..pts.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        let seeds = index.within(&pts[i], eps);
        if seeds.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = cluster;
        queue.clear();
        queue.extend(seeds);
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                NOISE => labels[j] = cluster,
                UNVISITED => {
                    labels[j] = cluster;
                    let nbrs = index.within(&pts[j], eps);
                    if nbrs.len() >= min_pts {
                        queue.extend(nbrs);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(ClusterLabeling {
        labels,
        eps,
        min_pts,
        n_clusters: next as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_points_single_cluster() {
        let cloud = PointCloud::from_points(vec![[1.0, 2.0, 3.0]; 6]).unwrap();
        let l = dbscan(&cloud, 0.1, 6).unwrap();
        assert_eq!(l.labels, vec![0; 6]);
        assert_eq!(l.n_clusters, 1);
    }

    #[test]
    fn isolated_point_is_noise() {
        let cloud = PointCloud::from_points(vec![[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(dbscan(&cloud, 1.0, 4).unwrap().labels, vec![NOISE]);
    }

    #[test]
    fn two_separated_blobs() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.05;
            pts.push([t, 0.0, 0.0]);
            pts.push([100.0 + t, 0.0, 0.0]);
        }
        let l = dbscan(&PointCloud::from_points(pts).unwrap(), 0.2, 3).unwrap();
        assert_eq!(l.n_clusters, 2);
        for i in 0..10 {
            assert_eq!(l.labels[2 * i], 0);
            assert_eq!(l.labels[2 * i + 1], 1);
        }
    }

    #[test]
    fn border_point_joins_first_cluster() {
        // Two dense lines with a single point in between, within eps of an
        // end point of each; it is not itself a core point.
        let mut pts = vec![[0.0, 0.0, 0.0]];
        pts.extend((0..4).map(|i| [-1.0 - i as f64 * 0.1, 0.0, 0.0]));
        pts.extend((0..4).map(|i| [1.0 + i as f64 * 0.1, 0.0, 0.0]));
        let l = dbscan(&PointCloud::from_points(pts).unwrap(), 1.0, 4).unwrap();
        assert_eq!(l.n_clusters, 2);
        assert_eq!(l.labels[0], l.labels[1]);
        assert_ne!(l.labels[1], l.labels[5]);
    }

    #[test]
    fn closed_ball_and_self_count() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let l = dbscan(&PointCloud::from_points(pts.clone()).unwrap(), 1.0, 2).unwrap();
        assert_eq!(l.labels, vec![0, 0]);
        let l = dbscan(&PointCloud::from_points(pts).unwrap(), 0.999, 2).unwrap();
        assert_eq!(l.labels, vec![NOISE, NOISE]);
        let l = dbscan(&PointCloud::from_points(vec![[0.0; 3]]).unwrap(), 1.0, 1).unwrap();
        assert_eq!(l.labels, vec![0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let c = PointCloud::default();
        assert_eq!(dbscan(&c, 0.0, 3), Err(CloudError::Eps(0.0)));
        assert_eq!(dbscan(&c, 1.0, 0), Err(CloudError::MinPts));
        assert!(dbscan(&c, 1.0, 3).unwrap().labels.is_empty());
    }
}
