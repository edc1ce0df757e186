//! Seeded fixtures shared by the benchmarks.

use polerisk_core::hough::draw_segment;
use polerisk_core::synthetic::{ellipsoid_blob, tilted_axis, tilted_cylinder};
use polerisk_core::{EdgeMask, GrayRaster, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Square mask with one full-width line through the centre at
/// `inclination_deg` from horizontal.
pub fn line_mask(size: usize, inclination_deg: f64) -> EdgeMask {
    let c = size as f64 / 2.0;
    let (dx, dy) = (
        inclination_deg.to_radians().cos(),
        -inclination_deg.to_radians().sin(),
    );
    let reach = size as f64;
    let mut mask = EdgeMask::new(size, size);
    draw_segment(
        &mut mask,
        (c - reach * dx, c - reach * dy),
        (c + reach * dx, c + reach * dy),
    );
    mask
}

/// Noisy grey image with a bright vertical bar, a plausible Canny input.
pub fn pole_image(size: usize, seed: u64) -> GrayRaster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..size * size)
        .map(|_| rng.random_range(0.0..0.05))
        .collect();
    let bar = size / 2 - size / 40..size / 2 + size / 40;
    GrayRaster::from_fn(size, size, |x, y| {
        noise[y * size + x] + if bar.contains(&x) { 0.8 } else { 0.1 }
    })
    .expect("non-empty")
}

/// Tilted pole surface and a canopy blob beside it, `n` points each.
pub fn pole_and_canopy(n: usize, seed: u64) -> (Vec<Point3>, Vec<Point3>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pole = tilted_cylinder(
        &mut rng,
        [0.0, 0.0, 0.0],
        tilted_axis(4.0, 0.3),
        0.15,
        10.0,
        n,
        0.02,
    );
    let canopy = ellipsoid_blob(&mut rng, [3.0, 0.0, 7.0], [1.5, 1.5, 1.2], n);
    (pole, canopy)
}

/// Uniform points in a cube of side `extent`.
pub fn uniform_cloud(n: usize, extent: f64, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.0..extent)))
        .collect()
}
