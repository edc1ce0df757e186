mod common;

use common::{brute_clearance, brute_dbscan, canonical, clustered_points};
use polerisk_core::pointcloud::{
    clearance_distance, dbscan, fit_pole_axis, parse_ply, tilt_from_vertical, write_ply, Line3D,
    PlyFormat, Point3, PointCloud, SpatialIndex, NOISE,
};
use polerisk_core::synthetic::{tilted_axis, tilted_cylinder};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

fn rotate_z(p: &Point3, a: f64) -> Point3 {
    let (s, c) = a.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

fn angle_between(a: &Point3, b: &Point3) -> f64 {
    let dot: f64 = (0..3).map(|k| a[k] * b[k]).sum::<f64>().abs();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(0.0, 1.0).acos().to_degrees()
}

fn cylinder(seed: u64, tilt: f64, azimuth: f64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tilted_cylinder(
        &mut rng,
        [1.0, -2.0, 0.0],
        tilted_axis(tilt, azimuth),
        0.15,
        10.0,
        800,
        0.02,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dbscan_matches_brute_force(seed in any::<u64>(), n in 0usize..400, eps in 0.1f64..1.2, min_pts in 1usize..12) {
        let pts = clustered_points(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let got = dbscan(&PointCloud::from_points(pts.clone()).unwrap(), eps, min_pts).unwrap();
        prop_assert_eq!(&got.labels, &brute_dbscan(&pts, eps, min_pts));
        prop_assert_eq!(got.n_clusters as i64, got.labels.iter().max().map_or(0, |m| m + 1).max(0));
    }

    #[test]
    fn core_partition_ignores_point_order(seed in any::<u64>(), n in 1usize..300, eps in 0.2f64..1.0, min_pts in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = clustered_points(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();
        let a = dbscan(&PointCloud::from_points(pts.clone()).unwrap(), eps, min_pts).unwrap();
        let b = dbscan(&PointCloud::from_points(shuffled).unwrap(), eps, min_pts).unwrap();
        let core: Vec<usize> = (0..n)
            .filter(|&i| pts.iter().filter(|q| polerisk_core::pointcloud::dist(&pts[i], q) <= eps).count() >= min_pts)
            .collect();
        // Labels of core points in original order, from both runs.
        let mut inverse = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            inverse[i] = k;
        }
        let la: Vec<i64> = core.iter().map(|&i| a.labels[i]).collect();
        let lb: Vec<i64> = core.iter().map(|&i| b.labels[inverse[i]]).collect();
        prop_assert!(la.iter().all(|l| *l != NOISE));
        prop_assert_eq!(canonical(&la), canonical(&lb));
        prop_assert_eq!(a.noise_count(), b.noise_count());
        prop_assert_eq!(a.n_clusters, b.n_clusters);
    }

    #[test]
    fn axis_fit_is_translation_invariant(seed in any::<u64>(), tilt in 0.0f64..30.0, az in 0.0f64..TAU, t in prop::array::uniform3(-100.0f64..100.0)) {
        let pts = cylinder(seed, tilt, az);
        let moved: Vec<Point3> = pts.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
        let a = fit_pole_axis(&pts).unwrap();
        let b = fit_pole_axis(&moved).unwrap();
        for (k, shift) in t.iter().enumerate() {
            prop_assert!((a.direction[k] - b.direction[k]).abs() <= 1e-9);
            prop_assert!((a.point_on_line[k] + shift - b.point_on_line[k]).abs() <= 1e-9);
        }
    }

    #[test]
    fn axis_fit_is_rotation_equivariant(seed in any::<u64>(), tilt in 0.0f64..30.0, az in 0.0f64..TAU, rot in -PI..PI) {
        let pts = cylinder(seed, tilt, az);
        let turned: Vec<Point3> = pts.iter().map(|p| rotate_z(p, rot)).collect();
        let a = fit_pole_axis(&pts).unwrap();
        let b = fit_pole_axis(&turned).unwrap();
        prop_assert!(angle_between(&rotate_z(&a.direction, rot), &b.direction) <= 1e-6);
        let up = [0.0, 0.0, 1.0];
        prop_assert!((tilt_from_vertical(&a, &up).unwrap() - tilt_from_vertical(&b, &up).unwrap()).abs() <= 1e-6);
    }

    #[test]
    fn tilt_ignores_axis_sign(d in prop::array::uniform3(-1.0f64..1.0), up in prop::array::uniform3(-1.0f64..1.0)) {
        prop_assume!(d.iter().any(|v| v.abs() > 1e-3) && up.iter().any(|v| v.abs() > 1e-3));
        let pos = Line3D { point_on_line: [0.0; 3], direction: d };
        let neg = Line3D { point_on_line: [0.0; 3], direction: [-d[0], -d[1], -d[2]] };
        let a = tilt_from_vertical(&pos, &up).unwrap();
        prop_assert_eq!(a, tilt_from_vertical(&neg, &up).unwrap());
        prop_assert!((0.0..=90.0).contains(&a));
    }

    #[test]
    fn clearance_matches_brute_force(seed in any::<u64>(), na in 1usize..300, nb in 1usize..300, offset in 0.0f64..20.0, cell in 0.05f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Point3> = (0..na).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
        let b: Vec<Point3> = (0..nb).map(|_| [rng.random_range(-2.0..2.0) + offset, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let got = clearance_distance(&a, &SpatialIndex::new(&b, cell)).unwrap();
        prop_assert_eq!(got.clearance_m, brute_clearance(&a, &b));
        let (p, q) = got.nearest_pair;
        prop_assert_eq!(polerisk_core::pointcloud::dist(&p, &q), got.clearance_m);
    }

    #[test]
    fn ply_round_trip(
        pts in prop::collection::vec(prop::array::uniform3(-1e6f64..1e6), 0..60),
        with_color in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors = with_color.then(|| pts.iter().map(|_| rng.random::<[u8; 3]>()).collect());
        let cloud = PointCloud::new(pts, colors).unwrap();
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            prop_assert_eq!(&parse_ply(&write_ply(&cloud, format)).unwrap(), &cloud);
        }
    }
}
