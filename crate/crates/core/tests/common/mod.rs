//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use polerisk_core::detection::{iou, Detection, GroundTruth};
use polerisk_core::pointcloud::{dist, Point3, NOISE};

/// O(n^2) DBSCAN.
///
/// Core points are connected through eps-neighbourhoods; clusters are
/// numbered by their lowest-index core point, and a border point belongs to
/// the lowest-numbered cluster with a core point within `eps`.
pub fn brute_dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let nbrs: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| dist(&points[i], &points[j]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = nbrs.iter().map(|v| v.len() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        if core[i] {
            for &j in &nbrs[i] {
                if core[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // Root of each component is its minimum index; number components by it.
    let mut ids: BTreeMap<usize, i64> = BTreeMap::new();
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let next = ids.len() as i64;
            ids.entry(r).or_insert(next);
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                ids[&find(&mut parent, i)]
            } else {
                nbrs[i]
                    .iter()
                    .filter(|&&j| core[j])
                    .map(|&j| ids[&find(&mut parent, j)])
                    .min()
                    .unwrap_or(NOISE)
            }
        })
        .collect()
}

/// Relabels clusters in order of first appearance so partitions can be
/// compared up to label permutation.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                return l;
            }
            let next = map.len() as i64;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Exhaustive nearest-pair distance.
pub fn brute_clearance(a: &[Point3], b: &[Point3]) -> f64 {
    a.iter()
        .flat_map(|p| b.iter().map(move |q| dist(p, q)))
        .fold(f64::INFINITY, f64::min)
}

/// Mean AP over classes with ground truth or detections. Each true positive
/// adds `1/n_gt` recall at the best precision attained at that rank or any
/// later rank.
pub fn brute_map(dets: &[Detection], gts: &[GroundTruth], thresh: f64) -> Option<f64> {
    let mut ranked: Vec<&Detection> = dets.iter().collect();
    ranked.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let mut taken = vec![false; gts.len()];
    let mut tp = Vec::with_capacity(ranked.len());
    for d in &ranked {
        let mut best: Option<usize> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j]
                || g.class_id != d.class_id
                || g.image_id != d.image_id
                || iou(&d.bbox, &g.bbox) < thresh
            {
                continue;
            }
            if best.is_none_or(|b| iou(&d.bbox, &g.bbox) > iou(&d.bbox, &gts[b].bbox)) {
                best = Some(j);
            }
        }
        if let Some(j) = best {
            taken[j] = true;
        }
        tp.push(best.is_some());
    }

    let mut classes: Vec<i64> = dets
        .iter()
        .map(|d| d.class_id)
        .chain(gts.iter().map(|g| g.class_id))
        .collect();
    classes.sort();
    classes.dedup();
    let mut aps = Vec::new();
    for c in classes {
        let flags: Vec<bool> = ranked
            .iter()
            .zip(&tp)
            .filter(|(d, _)| d.class_id == c)
            .map(|(_, t)| *t)
            .collect();
        let n_gt = gts.iter().filter(|g| g.class_id == c).count();
        if n_gt == 0 {
            aps.push(0.0);
            continue;
        }
        let precision: Vec<f64> = (0..flags.len())
            .map(|k| flags[..=k].iter().filter(|f| **f).count() as f64 / (k + 1) as f64)
            .collect();
        let mut ap = 0.0;
        for k in 0..flags.len() {
            if flags[k] {
                let envelope = precision[k..].iter().cloned().fold(0.0, f64::max);
                ap += envelope / n_gt as f64;
            }
        }
        aps.push(ap);
    }
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Gaussian-ish blobs plus uniform background, so clusters, border points
/// and noise all occur.
pub fn clustered_points(rng: &mut impl rand::Rng, n: usize) -> Vec<Point3> {
    let n_blobs = rng.random_range(1..6);
    let centers: Vec<Point3> = (0..n_blobs)
        .map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0)))
        .collect();
    let spread: f64 = rng.random_range(0.2..1.5);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                std::array::from_fn(|_| rng.random_range(-7.0..7.0))
            } else {
                let c = centers[rng.random_range(0..n_blobs)];
                std::array::from_fn(|k| {
                    c[k] + spread * (rng.random::<f64>() + rng.random::<f64>() - 1.0)
                })
            }
        })
        .collect()
}
