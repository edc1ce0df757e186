use polerisk_core::hough::{
    aggregate_pole_inclination, draw_segment, extract_peaks, hough_accumulate, inclination_angle,
    HoughLine, InclinationResult,
};
use polerisk_core::imaging::{
    canny_edges, crop_roi, gaussian_blur, sobel_gradients, BBox, CannyParams, EdgeMask, GrayRaster,
    SOBEL_UNIT_STEP,
};
use proptest::prelude::*;

fn raster() -> impl Strategy<Value = GrayRaster> {
    (6usize..20, 6usize..20).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h)
            .prop_map(move |d| GrayRaster::new(w, h, d).unwrap())
    })
}

/// Smoothed, normalized gradient field as Canny sees it.
fn normalized_gradients(img: &GrayRaster) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = CannyParams::default();
    let g = sobel_gradients(&gaussian_blur(img, p.sigma, p.kernel_radius)).unwrap();
    let mag = g.magnitude.iter().map(|m| m / SOBEL_UNIT_STEP).collect();
    (g.gx, g.gy, mag)
}

fn quantized_step(gx: f64, gy: f64) -> (isize, isize) {
    const STEPS: [(isize, isize); 8] = [
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
    ];
    STEPS[((gy.atan2(gx).to_degrees() / 45.0).round() as i64).rem_euclid(8) as usize]
}

fn random_mask() -> impl Strategy<Value = EdgeMask> {
    (1usize..40, 1usize..40).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop::bool::weighted(0.1), w * h)
            .prop_map(move |b| EdgeMask::from_bits(w, h, b).unwrap())
    })
}

/// Smallest angular distance between two line orientations in degrees.
fn theta_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

proptest! {
    #[test]
    fn canny_edges_have_at_least_low_magnitude(img in raster(), low in 0.0f64..0.3, span in 0.01f64..0.3) {
        let edges = canny_edges(&img, low, low + span).unwrap();
        let (_, _, mag) = normalized_gradients(&img);
        for (i, on) in edges.bits().iter().enumerate() {
            if *on {
                prop_assert!(mag[i] >= low);
            }
        }
    }

    #[test]
    fn canny_edges_are_directional_maxima(img in raster()) {
        let edges = canny_edges(&img, 0.01, 0.05).unwrap();
        let (gx, gy, mag) = normalized_gradients(&img);
        let (w, h) = (img.width() as isize, img.height() as isize);
        let at = |x: isize, y: isize| if x < 0 || y < 0 || x >= w || y >= h { 0.0 } else { mag[(y * w + x) as usize] };
        for (x, y) in edges.edge_points() {
            let i = y * img.width() + x;
            let (dx, dy) = quantized_step(gx[i], gy[i]);
            let (x, y) = (x as isize, y as isize);
            prop_assert!(mag[i] >= at(x + dx, y + dy) - 1e-12);
            prop_assert!(mag[i] >= at(x - dx, y - dy) - 1e-12);
        }
    }

    #[test]
    fn raising_high_threshold_only_removes_edges(img in raster(), high in 0.05f64..0.3, extra in 0.0f64..0.3) {
        let a = canny_edges(&img, 0.04, high).unwrap();
        let b = canny_edges(&img, 0.04, high + extra).unwrap();
        for (ea, eb) in a.bits().iter().zip(b.bits()) {
            prop_assert!(!*eb || *ea);
        }
    }

    #[test]
    fn crop_coordinates_round_trip(
        img in raster(),
        fx in 0.0f64..1.0, fy in 0.0f64..1.0, fw in 0.05f64..1.0, fh in 0.05f64..1.0, margin in 0.0f64..3.0,
    ) {
        let (w, h) = (img.width() as f64, img.height() as f64);
        let (x0, y0) = (fx * (w - 1.0), fy * (h - 1.0));
        let bbox = BBox::new(x0, y0, (x0 + fw * w).min(w), (y0 + fh * h).min(h)).unwrap();
        let crop = crop_roi(&img, &bbox, margin).unwrap();
        for ly in 0..crop.window.height {
            for lx in 0..crop.window.width {
                let (gx, gy) = crop.window.to_full(lx, ly);
                prop_assert_eq!(crop.window.to_local(gx, gy), Some((lx, ly)));
                prop_assert_eq!(crop.raster.get(lx, ly), img.get(gx, gy));
            }
        }
    }

    #[test]
    fn hough_conserves_votes(mask in random_mask(), res in prop::sample::select(vec![0.25, 0.5, 1.0, 3.0])) {
        let acc = hough_accumulate(&mask, res, 1.0).unwrap();
        prop_assert_eq!(acc.total_votes(), mask.count() as u64 * acc.theta_bins as u64);
    }

    #[test]
    fn top_peak_recovers_line_orientation(theta in 0.0f64..180.0) {
        let n = 301usize;
        let c = (n / 2) as f64;
        let (s, co) = theta.to_radians().sin_cos();
        // Direction along the line is perpendicular to its normal.
        let (dx, dy) = (-s, co);
        let mut mask = EdgeMask::new(n, n);
        draw_segment(&mut mask, (c - 200.0 * dx, c - 200.0 * dy), (c + 200.0 * dx, c + 200.0 * dy));
        let acc = hough_accumulate(&mask, 0.25, 1.0).unwrap();
        let peaks = extract_peaks(&acc, 1, 1, (5, 5)).unwrap();
        // At most one bin away from the bin containing the truth.
        prop_assert!(theta_gap(peaks[0].theta, theta) <= 1.5 * 0.25 + 1e-9, "{} vs {theta}", peaks[0].theta);
    }

    #[test]
    fn inclination_ignores_reparameterization(rho in -300.0f64..300.0, theta in 0.0f64..180.0) {
        let a = inclination_angle(&HoughLine { rho, theta, votes: 1 });
        let b = inclination_angle(&HoughLine { rho: -rho, theta: theta + 180.0, votes: 1 });
        let c = inclination_angle(&HoughLine { rho: -rho, theta: theta - 180.0, votes: 1 });
        // theta +- 180 is itself rounded, so only near-equality is meaningful.
        prop_assert!((a - b).abs() <= 1e-12 && (a - c).abs() <= 1e-12);
        prop_assert!((0.0..=90.0).contains(&a));
    }

    #[test]
    fn deflection_identity_is_exact(angles in prop::collection::vec(0.0f64..=90.0, 1..12)) {
        for a in &angles {
            let r = InclinationResult::from_inclination(*a, vec![]);
            prop_assert_eq!(r.inclination_deg + r.deflection_deg, 90.0);
        }
        let views: Vec<(f64, f64)> = angles.iter().enumerate().map(|(i, a)| (i as f64 * 36.0, *a)).collect();
        let r = aggregate_pole_inclination(&views).unwrap();
        prop_assert_eq!(r.inclination_deg + r.deflection_deg, 90.0);
        prop_assert_eq!(r.n_views_used, angles.len());
    }
}
