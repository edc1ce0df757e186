//! Seeded synthetic fixtures: edge masks with a leaning pole, depth maps with
//! pole and vegetation regions, tilted-cylinder clouds with a canopy, and a
//! full per-pole input tree for [`crate::pipeline::run_pipeline`].

use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::{write_pole_catalog, Material, PoleRecord};
use crate::depth::{encode_pfm, DepthMap};
use crate::hough::draw_segment;
use crate::imaging::{BBox, EdgeMask};
use crate::pipeline::encode_edge_mask;
use crate::pointcloud::{write_ply, PlyFormat, Point3, PointCloud};

/// Unit vector `tilt_deg` away from +z toward azimuth `azimuth_rad`.
pub fn tilted_axis(tilt_deg: f64, azimuth_rad: f64) -> Point3 {
    let t = tilt_deg.to_radians();
    [
        t.sin() * azimuth_rad.cos(),
        t.sin() * azimuth_rad.sin(),
        t.cos(),
    ]
}

/// Points on the lateral surface of a cylinder with its base centre at
/// `base`, perturbed by isotropic Gaussian noise of standard deviation
/// `sigma`.
pub fn tilted_cylinder(
    rng: &mut impl Rng,
    base: Point3,
    axis: Point3,
    radius: f64,
    height: f64,
    n: usize,
    sigma: f64,
) -> Vec<Point3> {
    let helper = if axis[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let u = unit(cross(axis, helper));
    let v = cross(axis, u);
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    (0..n)
        .map(|_| {
            let h = rng.random_range(0.0..height);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let (c, s) = (radius * a.cos(), radius * a.sin());
            std::array::from_fn(|k| base[k] + h * axis[k] + c * u[k] + s * v[k] + noise.sample(rng))
        })
        .collect()
}

/// Points uniformly distributed inside an axis-aligned ellipsoid.
pub fn ellipsoid_blob(rng: &mut impl Rng, center: Point3, radii: Point3, n: usize) -> Vec<Point3> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p: Point3 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
            out.push(std::array::from_fn(|k| center[k] + radii[k] * p[k]));
        }
    }
    out
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn unit(a: Point3) -> Point3 {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// A pole drawn as two parallel edges from `base` upward with the given
/// image-plane lean (degrees, positive leans right), plus a horizontal wire
/// and sparse noise. Returns the mask and the ROI around the pole.
pub fn pole_edge_view(
    rng: &mut impl Rng,
    size: usize,
    base: (f64, f64),
    length: f64,
    lean_deg: f64,
    noise_fraction: f64,
) -> (EdgeMask, BBox) {
    let mut mask = EdgeMask::new(size, size);
    let (s, c) = lean_deg.to_radians().sin_cos();
    let top = (base.0 + length * s, base.1 - length * c);
    let gap = 5.0;
    draw_segment(&mut mask, base, top);
    draw_segment(&mut mask, (base.0 + gap, base.1), (top.0 + gap, top.1));
    let wire_y = (top.1 + 0.25 * length).round();
    draw_segment(&mut mask, (0.0, wire_y), (size as f64 - 1.0, wire_y));
    let noisy = (noise_fraction * (size * size) as f64) as usize;
    for _ in 0..noisy {
        let (x, y) = (rng.random_range(0..size), rng.random_range(0..size));
        mask.set(x, y, true);
    }
    let margin = 4.0;
    let lim = size as f64;
    let roi = BBox::new(
        (base.0.min(top.0) - margin).max(0.0),
        (top.1 - margin).max(0.0),
        (base.0.max(top.0) + gap + margin + 1.0).min(lim),
        (base.1 + margin + 1.0).min(lim),
    )
    .expect("roi lies inside the view");
    (mask, roi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOptions {
    pub n_poles: usize,
    pub seed: u64,
    pub views_per_pole: usize,
    pub view_size: usize,
    pub depth_size: usize,
    pub pole_points: usize,
    pub canopy_points: usize,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            n_poles: 100,
            seed: 7,
            views_per_pole: 3,
            view_size: 160,
            depth_size: 48,
            pole_points: 1500,
            canopy_points: 1200,
        }
    }
}

/// Ground truth for one generated pole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub pole_id: String,
    pub tilt_deg: f64,
    pub view_lean_deg: Vec<f64>,
    pub depth_separation: f64,
    pub canopy_gap_m: f64,
}

/// Writes `<root>/poles.csv` and one complete input directory per pole.
pub fn write_synthetic_dataset(
    root: &Path,
    opts: &SyntheticOptions,
) -> io::Result<(Vec<PoleRecord>, Vec<SyntheticTruth>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    fs::create_dir_all(root)?;
    let mut poles = Vec::with_capacity(opts.n_poles);
    let mut truths = Vec::with_capacity(opts.n_poles);

    for i in 0..opts.n_poles {
        let pole_id = format!("SYN-{:04}", i + 1);
        let material = Material::ALL[rng.random_range(0..Material::ALL.len())];
        let pole = PoleRecord {
            pole_id: pole_id.clone(),
            latitude: 37.0 + rng.random_range(0.0..1.0),
            longitude: -122.5 + rng.random_range(0.0..1.0),
            age_years: rng.random_bool(0.9).then(|| rng.random_range(0..90) as f64),
            material,
            height_m: Some(10.0),
            circumference_m: Some(0.94),
        };
        let dir = root.join(&pole_id);
        fs::create_dir_all(dir.join("edges"))?;
        fs::create_dir_all(dir.join("depth"))?;

        let tilt_deg = rng.random_range(0.0..8.0);
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);

        let mut rois = csv::Writer::from_writer(Vec::new());
        rois.write_record([
            "pole_id", "image", "heading", "x_min", "y_min", "x_max", "y_max",
        ])?;
        let mut leans = Vec::new();
        for v in 0..opts.views_per_pole {
            let heading = (v * 360 / opts.views_per_pole.max(1)) as f64;
            // Apparent lean is the tilt projected onto the image plane.
            let lean = tilt_deg * (azimuth - heading.to_radians()).sin();
            let n = opts.view_size as f64;
            let (mask, roi) = pole_edge_view(
                &mut rng,
                opts.view_size,
                (0.45 * n, 0.9 * n),
                0.7 * n,
                lean,
                0.003,
            );
            let name = format!("view_{v:02}.pgm");
            fs::write(dir.join("edges").join(&name), encode_edge_mask(&mask))?;
            rois.write_record([
                pole_id.clone(),
                name,
                heading.to_string(),
                roi.x_min.to_string(),
                roi.y_min.to_string(),
                roi.x_max.to_string(),
                roi.y_max.to_string(),
            ])?;
            leans.push(lean);
        }
        fs::write(
            dir.join("rois.csv"),
            rois.into_inner().map_err(|e| e.into_error())?,
        )?;

        let d = opts.depth_size;
        let pole_depth = rng.random_range(5.0..20.0);
        let separation = rng.random_range(0.5..12.0);
        let pole_box = BBox::new(
            0.2 * d as f64,
            0.1 * d as f64,
            0.3 * d as f64,
            0.9 * d as f64,
        )
        .expect("static box");
        let veg_box = BBox::new(
            0.5 * d as f64,
            0.1 * d as f64,
            0.9 * d as f64,
            0.5 * d as f64,
        )
        .expect("static box");
        let inside = |b: &BBox, x: usize, y: usize| {
            (x as f64) >= b.x_min
                && (x as f64) < b.x_max
                && (y as f64) >= b.y_min
                && (y as f64) < b.y_max
        };
        let values = (0..d * d)
            .map(|k| {
                let (x, y) = (k % d, k / d);
                if inside(&pole_box, x, y) {
                    pole_depth
                } else if inside(&veg_box, x, y) {
                    pole_depth + separation
                } else {
                    60.0 + y as f64 * 0.1
                }
            })
            .collect();
        let map = DepthMap::new(d, d, values).expect("finite depths");
        fs::write(dir.join("depth").join("map_00.pfm"), encode_pfm(&map))?;
        let mut boxes = csv::Writer::from_writer(Vec::new());
        boxes.write_record([
            "map",
            "pole_x_min",
            "pole_y_min",
            "pole_x_max",
            "pole_y_max",
            "veg_x_min",
            "veg_y_min",
            "veg_x_max",
            "veg_y_max",
            "actual_m",
        ])?;
        let mut row = vec!["map_00.pfm".to_string()];
        for b in [pole_box, veg_box] {
            row.extend(
                [b.x_min, b.y_min, b.x_max, b.y_max]
                    .iter()
                    .map(|v| v.to_string()),
            );
        }
        row.push((0.8 * separation).to_string());
        boxes.write_record(&row)?;
        fs::write(
            dir.join("depth").join("boxes.csv"),
            boxes.into_inner().map_err(|e| e.into_error())?,
        )?;

        let axis = tilted_axis(tilt_deg, azimuth);
        let mut points =
            tilted_cylinder(&mut rng, [0.0; 3], axis, 0.15, 10.0, opts.pole_points, 0.02);
        let gap = rng.random_range(0.8..5.0);
        let top = [axis[0] * 7.0, axis[1] * 7.0, axis[2] * 7.0];
        let r = [1.5, 1.5, 1.2];
        let offset = 0.15 + gap + r[0];
        let side = azimuth + std::f64::consts::FRAC_PI_2;
        let center = [
            top[0] + offset * side.cos(),
            top[1] + offset * side.sin(),
            top[2],
        ];
        points.extend(ellipsoid_blob(&mut rng, center, r, opts.canopy_points));
        let cloud = PointCloud::from_points(points).expect("finite points");
        fs::write(
            dir.join("cloud.ply"),
            write_ply(&cloud, PlyFormat::BinaryLittleEndian),
        )?;

        poles.push(pole);
        truths.push(SyntheticTruth {
            pole_id,
            tilt_deg,
            view_lean_deg: leans,
            depth_separation: separation,
            canopy_gap_m: gap,
        });
    }

    let catalog = write_pole_catalog(&poles).map_err(io::Error::other)?;
    fs::write(root.join("poles.csv"), catalog)?;
    Ok((poles, truths))
}
