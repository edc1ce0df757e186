//! Straight-line Hough transform and pole inclination.
//!
//! Lines use the normal form `rho = x*cos(theta) + y*sin(theta)` with `x` the
//! column, `y` the row (pointing down) and `theta` in `[0, 180)` degrees.
//! `theta = 0` is a vertical image line, so a perfectly plumb pole has an
//! inclination of 90 degrees and a deflection of 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{BBox, EdgeMask, ImagingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoughError {
    #[error("edge mask has zero width or height")]
    EmptyMask,
    #[error("theta resolution {0} outside (0, 10] degrees")]
    ThetaResolution(f64),
    #[error("rho resolution {0} must be positive")]
    RhoResolution(f64),
    #[error("max_peaks must be at least 1")]
    MaxPeaks,
    #[error("no pole-like line")]
    NoPoleLine,
    #[error("no views to aggregate")]
    NoViews,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoughAccumulator {
    pub theta_bins: usize,
    pub rho_bins: usize,
    pub theta_res: f64,
    pub rho_res: f64,
    pub rho_max: f64,
    /// Row-major over `theta_bins x rho_bins`.
    pub votes: Vec<u32>,
}

impl HoughAccumulator {
    #[inline]
    pub fn at(&self, theta_idx: usize, rho_idx: usize) -> u32 {
        self.votes[theta_idx * self.rho_bins + rho_idx]
    }

    pub fn theta_of(&self, theta_idx: usize) -> f64 {
        theta_idx as f64 * self.theta_res
    }

    pub fn rho_of(&self, rho_idx: usize) -> f64 {
        (rho_idx as f64 - self.rho_center() as f64) * self.rho_res
    }

    pub fn rho_index(&self, rho: f64) -> usize {
        ((rho / self.rho_res).round() as isize + self.rho_center() as isize) as usize
    }

    fn rho_center(&self) -> usize {
        (self.rho_bins - 1) / 2
    }

    pub fn total_votes(&self) -> u64 {
        self.votes.iter().map(|v| *v as u64).sum()
    }

    /// Element-wise sum; used to merge per-thread partial accumulators.
    pub fn merge(&mut self, other: &HoughAccumulator) {
        assert_eq!(
            self.votes.len(),
            other.votes.len(),
            "accumulator shapes differ"
        );
        for (a, b) in self.votes.iter_mut().zip(&other.votes) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughLine {
    pub rho: f64,
    pub theta: f64,
    pub votes: u32,
}

impl HoughLine {
    /// Deviation of the line from the image vertical, in `[0, 90]`.
    pub fn deflection(&self) -> f64 {
        self.theta.min(180.0 - self.theta)
    }

    /// Perpendicular distance from `(x, y)` to the line.
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let t = self.theta.to_radians();
        (x * t.cos() + y * t.sin() - self.rho).abs()
    }
}

pub fn hough_accumulate(
    edges: &EdgeMask,
    theta_res: f64,
    rho_res: f64,
) -> Result<HoughAccumulator, HoughError> {
    if edges.width() == 0 || edges.height() == 0 {
        return Err(HoughError::EmptyMask);
    }
    if !(theta_res > 0.0 && theta_res <= 10.0) {
        return Err(HoughError::ThetaResolution(theta_res));
    }
    if !(rho_res > 0.0 && rho_res.is_finite()) {
        return Err(HoughError::RhoResolution(rho_res));
    }
    let theta_bins = (180.0 / theta_res - 1e-9).ceil() as usize;
    let rho_max = ((edges.width() as f64).powi(2) + (edges.height() as f64).powi(2)).sqrt();
    let half = (rho_max / rho_res).ceil() as usize;
    let rho_bins = 2 * half + 1;

    let trig: Vec<(f64, f64)> = (0..theta_bins)
        .map(|k| (k as f64 * theta_res).to_radians().sin_cos())
        .collect();
    let mut votes = vec![0u32; theta_bins * rho_bins];
    for (x, y) in edges.edge_points() {
        let (x, y) = (x as f64, y as f64);
        for (k, (s, c)) in trig.iter().enumerate() {
            let rho = x * c + y * s;
            let r = ((rho / rho_res).round() as isize + half as isize) as usize;
            votes[k * rho_bins + r] += 1;
        }
    }
    Ok(HoughAccumulator {
        theta_bins,
        rho_bins,
        theta_res,
        rho_res,
        rho_max,
        votes,
    })
}

/// Greedy peak picking with a suppression window of `nms_window = (theta
/// bins, rho bins)`. The window wraps across `theta = 0/180` with the rho
/// sign flipped, since `(rho, theta)` and `(-rho, theta + 180)` are the same
/// line.
pub fn extract_peaks(
    acc: &HoughAccumulator,
    max_peaks: usize,
    min_votes: u32,
    nms_window: (usize, usize),
) -> Result<Vec<HoughLine>, HoughError> {
    if max_peaks == 0 {
        return Err(HoughError::MaxPeaks);
    }
    let mut votes = acc.votes.clone();
    let (tb, rb) = (acc.theta_bins as isize, acc.rho_bins as isize);
    let (ht, hr) = ((nms_window.0 / 2) as isize, (nms_window.1 / 2) as isize);
    let min_votes = min_votes.max(1);
    let mut lines = Vec::new();

    while lines.len() < max_peaks {
        // First maximum in (theta asc, rho asc) scan order.
        let (best, &v) = match votes.iter().enumerate().rev().max_by_key(|(_, v)| **v) {
            Some(p) => p,
            None => break,
        };
        if v < min_votes {
            break;
        }
        let (t, r) = (
            (best / acc.rho_bins) as isize,
            (best % acc.rho_bins) as isize,
        );
        lines.push(HoughLine {
            rho: acc.rho_of(r as usize),
            theta: acc.theta_of(t as usize),
            votes: v,
        });

        for dt in -ht..=ht {
            let mut tt = t + dt;
            let mut flip = false;
            if tt < 0 {
                tt += tb;
                flip = true;
            } else if tt >= tb {
                tt -= tb;
                flip = true;
            }
            for dr in -hr..=hr {
                let mut rr = r + dr;
                if flip {
                    rr = rb - 1 - rr;
                }
                if (0..rb).contains(&rr) {
                    votes[(tt * rb + rr) as usize] = 0;
                }
            }
        }
    }
    lines.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.theta.total_cmp(&b.theta))
            .then(a.rho.total_cmp(&b.rho))
    });
    Ok(lines)
}

/// Picks the near-vertical line closest to the ROI's vertical centreline.
/// `roi` must be in the same pixel frame as the lines.
pub fn select_pole_line(
    lines: &[HoughLine],
    roi: &BBox,
    max_candidate_deflection: f64,
) -> Result<HoughLine, HoughError> {
    let (cx, cy) = roi.center();
    lines
        .iter()
        .filter(|l| l.deflection() <= max_candidate_deflection)
        .map(|l| (l.distance_to(cx, cy), l))
        .min_by(|(da, a), (db, b)| da.total_cmp(db).then(b.votes.cmp(&a.votes)))
        .map(|(_, l)| *l)
        .ok_or(HoughError::NoPoleLine)
}

/// Angle between the line and the image horizontal, in `[0, 90]`.
///
/// For any segment of the line this equals
/// `atan(vertical extent / horizontal extent)`.
pub fn inclination_angle(line: &HoughLine) -> f64 {
    let theta = line.theta.rem_euclid(180.0);
    (90.0 - theta.min(180.0 - theta)).clamp(0.0, 90.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewInclination {
    pub heading: f64,
    pub inclination_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclinationResult {
    pub inclination_deg: f64,
    pub deflection_deg: f64,
    pub per_view: Vec<ViewInclination>,
    pub n_views_used: usize,
}

impl InclinationResult {
    /// Builds a result whose angles sum to exactly 90.
    ///
    /// The subtraction is carried out on whichever angle is `>= 45`, where
    /// `90 - a` is exact in binary floating point; the other angle is then
    /// derived from that exact difference.
    pub fn from_inclination(inclination_deg: f64, per_view: Vec<ViewInclination>) -> Self {
        let a = inclination_deg.clamp(0.0, 90.0);
        let (inclination_deg, deflection_deg) = if a >= 45.0 {
            (a, 90.0 - a)
        } else {
            let d = 90.0 - a;
            (90.0 - d, d)
        };
        let n_views_used = per_view.len();
        InclinationResult {
            inclination_deg,
            deflection_deg,
            per_view,
            n_views_used,
        }
    }
}

pub fn aggregate_pole_inclination(
    per_view: &[(f64, f64)],
) -> Result<InclinationResult, HoughError> {
    if per_view.is_empty() {
        return Err(HoughError::NoViews);
    }
    let mut sorted: Vec<f64> = per_view.iter().map(|(_, a)| *a).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let views = per_view
        .iter()
        .map(|&(heading, inclination_deg)| ViewInclination {
            heading,
            inclination_deg,
        })
        .collect();
    Ok(InclinationResult::from_inclination(median, views))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughParams {
    pub theta_res: f64,
    pub rho_res: f64,
    /// Minimum peak votes as a fraction of ROI height.
    pub min_votes_fraction: f64,
    pub nms_theta_bins: usize,
    pub nms_rho_bins: usize,
    pub max_peaks: usize,
    pub max_candidate_deflection: f64,
    pub roi_margin: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            theta_res: 0.25,
            rho_res: 1.0,
            min_votes_fraction: 0.5,
            nms_theta_bins: 17,
            nms_rho_bins: 5,
            max_peaks: 10,
            max_candidate_deflection: 30.0,
            roi_margin: 0.0,
        }
    }
}

/// Runs the full per-view chain: crop the edge mask to the ROI, vote, pick
/// peaks and select the pole line. Returns the line in crop coordinates and
/// its inclination.
pub fn measure_view(
    edges: &EdgeMask,
    roi: &BBox,
    params: &HoughParams,
) -> Result<(HoughLine, f64), HoughError> {
    let window = roi.pixel_window(params.roi_margin, edges.width(), edges.height())?;
    let crop = edges.crop(&window);
    let acc = hough_accumulate(&crop, params.theta_res, params.rho_res)?;
    let min_votes = (params.min_votes_fraction * roi.height()).ceil().max(1.0) as u32;
    let peaks = extract_peaks(
        &acc,
        params.max_peaks,
        min_votes,
        (params.nms_theta_bins, params.nms_rho_bins),
    )?;
    let local_roi = roi.translate(-(window.x0 as f64), -(window.y0 as f64));
    let line = select_pole_line(&peaks, &local_roi, params.max_candidate_deflection)?;
    Ok((line, inclination_angle(&line)))
}

/// Rasterizes the segment from `a` to `b` into `mask` (DDA, one pixel per
/// step along the major axis).
pub fn draw_segment(mask: &mut EdgeMask, a: (f64, f64), b: (f64, f64)) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let steps = dx.abs().max(dy.abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (a.0 + t * dx).round();
        let y = (a.1 + t * dy).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < mask.width() && (y as usize) < mask.height() {
            mask.set(x as usize, y as usize, true);
        }
    }
}
