//! Pole/vegetation proximity from monocular depth maps.
//!
//! Depth maps arrive as 16-bit binary PGM or grayscale PFM files written by
//! an external depth model. Values are in the model's relative units until
//! passed through a [`DepthCalibration`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("malformed depth file at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("box does not intersect the depth map")]
    EmptyRegion,
    #[error("no depth estimates")]
    NoEstimates,
    #[error("threshold must be positive, got {0}")]
    Threshold(f64),
    #[error("estimate for pole `{0}` has no actual distance")]
    MissingActual(String),
    #[error("degenerate calibration: need at least two distinct relative depths")]
    DegenerateFit,
    #[error("depth value {0} is negative or not finite")]
    Value(f64),
}

fn format_err(offset: usize, message: impl Into<String>) -> DepthError {
    DepthError::Format {
        offset,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(format_err(
                0,
                format!("{} values for a {width}x{height} map", values.len()),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(DepthError::Value(*v));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    Pgm16,
    Pfm,
}

impl DepthFormat {
    /// Guesses from the leading magic bytes.
    pub fn sniff(bytes: &[u8]) -> Option<DepthFormat> {
        match bytes.get(..2) {
            Some(b"P5") => Some(DepthFormat::Pgm16),
            Some(b"Pf") => Some(DepthFormat::Pfm),
            _ => None,
        }
    }
}

/// Cursor over the whitespace-separated ASCII header shared by PGM and PFM.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<(&'a str, usize), DepthError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(
                start,
                format!("truncated header: missing {what}"),
            ));
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| format_err(start, format!("non-ascii {what}")))?;
        Ok((tok, start))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, DepthError> {
        let (tok, at) = self.token(what)?;
        tok.parse()
            .map_err(|_| format_err(at, format!("bad {what} `{tok}`")))
    }

    /// Consumes the single whitespace byte that ends a binary header.
    fn end_header(&mut self) -> Result<usize, DepthError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(format_err(
                self.pos,
                "truncated header: missing separator before raster",
            )),
        }
    }
}

pub fn load_depth_map(bytes: &[u8], format: DepthFormat) -> Result<DepthMap, DepthError> {
    match format {
        DepthFormat::Pgm16 => load_pgm(bytes),
        DepthFormat::Pfm => load_pfm(bytes),
    }
}

fn load_pgm(bytes: &[u8]) -> Result<DepthMap, DepthError> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let (magic, _) = cur.token("magic")?;
    if magic != "P5" {
        return Err(format_err(0, format!("bad magic `{magic}`, expected P5")));
    }
    let width: usize = cur.number("width")?;
    let height: usize = cur.number("height")?;
    let maxval: u32 = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err(cur.pos, "zero dimension"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(format_err(
            cur.pos,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    let start = cur.end_header()?;
    let sample = if maxval > 255 { 2 } else { 1 };
    let need = width * height * sample;
    let body = &bytes[start..];
    if body.len() < need {
        return Err(format_err(
            start + body.len(),
            format!("truncated raster: {} of {need} bytes", body.len()),
        ));
    }
    let values = if sample == 2 {
        body[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    } else {
        body[..need].iter().map(|v| *v as f64).collect()
    };
    DepthMap::new(width, height, values)
}

fn load_pfm(bytes: &[u8]) -> Result<DepthMap, DepthError> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let (magic, _) = cur.token("magic")?;
    match magic {
        "Pf" => {}
        "PF" => return Err(format_err(0, "colour PFM (PF) is not a depth map")),
        other => return Err(format_err(0, format!("bad magic `{other}`, expected Pf"))),
    }
    let width: usize = cur.number("width")?;
    let height: usize = cur.number("height")?;
    let scale_at = cur.pos;
    let scale: f64 = cur.number("scale")?;
    if width == 0 || height == 0 {
        return Err(format_err(cur.pos, "zero dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(scale_at, "scale must be non-zero"));
    }
    let little_endian = scale < 0.0;
    let start = cur.end_header()?;
    let need = width * height * 4;
    let body = &bytes[start..];
    if body.len() < need {
        return Err(format_err(
            start + body.len(),
            format!("truncated raster: {} of {need} bytes", body.len()),
        ));
    }
    // PFM stores rows bottom-to-top.
    let mut values = vec![0.0; width * height];
    for (i, c) in body[..need].chunks_exact(4).enumerate() {
        let raw = [c[0], c[1], c[2], c[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, col) = (i / width, i % width);
        values[(height - 1 - row) * width + col] = v as f64;
    }
    DepthMap::new(width, height, values)
}

pub fn encode_pgm16(map: &DepthMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", map.width, map.height).into_bytes();
    for v in &map.values {
        out.extend_from_slice(&(v.round().clamp(0.0, 65535.0) as u16).to_be_bytes());
    }
    out
}

pub fn encode_pfm(map: &DepthMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    for row in (0..map.height).rev() {
        for v in &map.values[row * map.width..(row + 1) * map.width] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionStatistic {
    #[default]
    Median,
    Mean,
    Min,
}

pub fn region_depth(
    map: &DepthMap,
    bbox: &BBox,
    statistic: RegionStatistic,
) -> Result<f64, DepthError> {
    let window = bbox
        .pixel_window(0.0, map.width, map.height)
        .map_err(|_| DepthError::EmptyRegion)?;
    let mut vals: Vec<f64> = Vec::with_capacity(window.width * window.height);
    for y in window.y0..window.y0 + window.height {
        vals.extend_from_slice(
            &map.values[y * map.width + window.x0..y * map.width + window.x0 + window.width],
        );
    }
    Ok(match statistic {
        RegionStatistic::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
        RegionStatistic::Min => vals.iter().cloned().fold(f64::INFINITY, f64::min),
        RegionStatistic::Median => median(&mut vals),
    })
}

/// Median of a non-empty slice; mean of the middle pair for even lengths.
pub(crate) fn median(vals: &mut [f64]) -> f64 {
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        (vals[n / 2 - 1] + vals[n / 2]) / 2.0
    }
}

/// Separation between the pole and the vegetation along the depth axis.
pub fn relative_depth(pole_depth: f64, vegetation_depth: f64) -> f64 {
    (vegetation_depth - pole_depth).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthEstimate {
    pub pole_id: String,
    pub relative_depth: f64,
    pub actual_distance_m: Option<f64>,
    pub pole_box: BBox,
    pub vegetation_box: BBox,
}

/// Builds a [`DepthEstimate`] from one map and the two detector boxes.
pub fn estimate_from_map(
    pole_id: &str,
    map: &DepthMap,
    pole_box: BBox,
    vegetation_box: BBox,
    statistic: RegionStatistic,
    actual_distance_m: Option<f64>,
) -> Result<DepthEstimate, DepthError> {
    let pole = region_depth(map, &pole_box, statistic)?;
    let veg = region_depth(map, &vegetation_box, statistic)?;
    Ok(DepthEstimate {
        pole_id: pole_id.to_string(),
        relative_depth: relative_depth(pole, veg),
        actual_distance_m,
        pole_box,
        vegetation_box,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    /// Estimate satisfies the threshold when `relative_depth >= T`.
    #[default]
    Clearance,
    /// Estimate satisfies the threshold when `|D - A| <= T`.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthAccuracyReport {
    pub threshold: f64,
    pub n_within: usize,
    pub n_total: usize,
    pub accuracy: f64,
    pub mode: AccuracyMode,
}

pub fn depth_accuracy(
    estimates: &[DepthEstimate],
    threshold: f64,
    mode: AccuracyMode,
) -> Result<DepthAccuracyReport, DepthError> {
    if estimates.is_empty() {
        return Err(DepthError::NoEstimates);
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(DepthError::Threshold(threshold));
    }
    let mut n_within = 0;
    for e in estimates {
        let ok = match mode {
            AccuracyMode::Clearance => e.relative_depth >= threshold,
            AccuracyMode::Error => {
                let a = e
                    .actual_distance_m
                    .ok_or_else(|| DepthError::MissingActual(e.pole_id.clone()))?;
                (e.relative_depth - a).abs() <= threshold
            }
        };
        n_within += ok as usize;
    }
    let n_total = estimates.len();
    Ok(DepthAccuracyReport {
        threshold,
        n_within,
        n_total,
        accuracy: n_within as f64 / n_total as f64,
        mode,
    })
}

/// Least-squares affine map `actual ~ scale * relative + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthCalibration {
    pub scale: f64,
    pub offset: f64,
    pub r_squared: f64,
}

impl DepthCalibration {
    pub fn apply(&self, relative: f64) -> f64 {
        self.scale * relative + self.offset
    }
}

pub fn calibrate_depth(pairs: &[(f64, f64)]) -> Result<DepthCalibration, DepthError> {
    if pairs.len() < 2 {
        return Err(DepthError::DegenerateFit);
    }
    let n = pairs.len() as f64;
    let mean_d = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_a = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sdd: f64 = pairs.iter().map(|p| (p.0 - mean_d).powi(2)).sum();
    let sda: f64 = pairs.iter().map(|p| (p.0 - mean_d) * (p.1 - mean_a)).sum();
    if sdd <= f64::EPSILON * mean_d.abs().max(1.0) {
        return Err(DepthError::DegenerateFit);
    }
    let scale = sda / sdd;
    let offset = mean_a - scale * mean_d;
    let ss_res: f64 = pairs
        .iter()
        .map(|p| (p.1 - (scale * p.0 + offset)).powi(2))
        .sum();
    let ss_tot: f64 = pairs.iter().map(|p| (p.1 - mean_a).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(DepthCalibration {
        scale,
        offset,
        r_squared,
    })
}
