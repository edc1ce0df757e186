//! Raster primitives feeding the Hough stage.
//!
//! Everything here operates on raw planes: callers decode PNG/JPEG/PGM
//! upstream. Borders are clamped (replicated) everywhere so the frame of the
//! image never produces spurious edges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("raster has zero width or height")]
    EmptyRaster,
    #[error("raster {width}x{height} is smaller than the {min}x{min} minimum")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("pixel buffer has {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("luminance value {0} outside [0, 1]")]
    ValueRange(f64),
    #[error("invalid thresholds: require 0 <= low < high (low={low}, high={high})")]
    Thresholds { low: f64, high: f64 },
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max}): require min < max")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("box does not intersect the {width}x{height} image")]
    DisjointBox { width: usize, height: usize },
}

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbRaster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImagingError> {
        if data.len() != width * height * 3 {
            return Err(ImagingError::BufferSize {
                expected: width * height * 3,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Row-major luminance plane with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImagingError> {
        if data.len() != width * height {
            return Err(ImagingError::BufferSize {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some(&v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImagingError::ValueRange(v));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, ImagingError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn transpose(&self) -> GrayRaster {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.push(self.get(x, y));
            }
        }
        GrayRaster {
            width: self.height,
            height: self.width,
            data,
        }
    }

    pub fn rotate_180(&self) -> GrayRaster {
        let mut data = self.data.clone();
        data.reverse();
        GrayRaster {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Sobel responses. `magnitude[i] == hypot(gx[i], gy[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// Binary edge plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl EdgeMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImagingError> {
        if bits.len() != width * height {
            return Err(ImagingError::BufferSize {
                expected: width * height,
                actual: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Coordinates `(x, y)` of every set pixel, row-major.
    pub fn edge_points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    pub fn rotate_180(&self) -> EdgeMask {
        let mut bits = self.bits.clone();
        bits.reverse();
        EdgeMask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    pub fn crop(&self, window: &PixelWindow) -> EdgeMask {
        let mut out = EdgeMask::new(window.width, window.height);
        for y in 0..window.height {
            let src = (y + window.y0) * self.width + window.x0;
            out.bits[y * window.width..(y + 1) * window.width]
                .copy_from_slice(&self.bits[src..src + window.width]);
        }
        out
    }
}

/// Axis-aligned box in continuous pixel coordinates; pixel `(x, y)` covers
/// `[x, x+1) x [y, y+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ImagingError> {
        let b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(ImagingError::InvalidBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            });
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Integer pixel window covered by the box grown by `margin`, clipped to
    /// a `width x height` image.
    pub fn pixel_window(
        &self,
        margin: f64,
        width: usize,
        height: usize,
    ) -> Result<PixelWindow, ImagingError> {
        self.validate()?;
        let x0 = (self.x_min - margin).floor().max(0.0);
        let y0 = (self.y_min - margin).floor().max(0.0);
        let x1 = (self.x_max + margin).ceil().min(width as f64);
        let y1 = (self.y_max + margin).ceil().min(height as f64);
        if x0 >= x1 || y0 >= y1 {
            return Err(ImagingError::DisjointBox { width, height });
        }
        Ok(PixelWindow {
            x0: x0 as usize,
            y0: y0 as usize,
            width: (x1 - x0) as usize,
            height: (y1 - y0) as usize,
        })
    }
}

/// Integer sub-window of an image; `(x0, y0)` is the offset of the window's
/// origin in full-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelWindow {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelWindow {
    pub fn to_full(&self, x: usize, y: usize) -> (usize, usize) {
        (x + self.x0, y + self.y0)
    }

    pub fn to_local(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let lx = x.checked_sub(self.x0).filter(|lx| *lx < self.width)?;
        let ly = y.checked_sub(self.y0).filter(|ly| *ly < self.height)?;
        Some((lx, ly))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub raster: GrayRaster,
    pub window: PixelWindow,
}

pub fn to_grayscale(rgb: &RgbRaster) -> Result<GrayRaster, ImagingError> {
    if rgb.width == 0 || rgb.height == 0 {
        return Err(ImagingError::EmptyRaster);
    }
    if rgb.data.len() != rgb.width * rgb.height * 3 {
        return Err(ImagingError::BufferSize {
            expected: rgb.width * rgb.height * 3,
            actual: rgb.data.len(),
        });
    }
    let data = rgb
        .data
        .chunks_exact(3)
        .map(|p| {
            let y = (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0;
            y.clamp(0.0, 1.0)
        })
        .collect();
    GrayRaster::new(rgb.width, rgb.height, data)
}

pub fn sobel_gradients(img: &GrayRaster) -> Result<GradientField, ImagingError> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(ImagingError::TooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let n = w * h;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut magnitude = vec![0.0; n];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            gx[i] = sx;
            gy[i] = sy;
            magnitude[i] = sx.hypot(sy);
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    })
}

/// Separable Gaussian blur with a `2*radius+1` kernel and clamped borders.
pub fn gaussian_blur(img: &GrayRaster, sigma: f64, radius: usize) -> GrayRaster {
    if sigma <= 0.0 || radius == 0 {
        return img.clone();
    }
    let kernel: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let r = radius as isize;
    let (w, h) = (img.width, img.height);

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * img.get_clamped(x as isize + k as isize - r, y as isize);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mid = GrayRaster {
        width: w,
        height: h,
        data: tmp,
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * mid.get_clamped(x as isize, y as isize + k as isize - r);
            }
            out[y * w + x] = acc.clamp(0.0, 1.0);
        }
    }
    GrayRaster {
        width: w,
        height: h,
        data: out,
    }
}

/// Canny settings. Thresholds apply to the Sobel magnitude divided by 4,
/// i.e. an ideal unit step edge has normalized magnitude 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyParams {
    pub low: f64,
    pub high: f64,
    pub sigma: f64,
    pub kernel_radius: usize,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            low: 0.1,
            high: 0.2,
            sigma: 1.4,
            kernel_radius: 2,
        }
    }
}

/// Sobel magnitude of an ideal unit step; Canny thresholds apply to
/// `magnitude / SOBEL_UNIT_STEP`.
pub const SOBEL_UNIT_STEP: f64 = 4.0;
const TIE_EPS: f64 = 1e-12;

pub fn canny_edges(img: &GrayRaster, low: f64, high: f64) -> Result<EdgeMask, ImagingError> {
    canny_edges_with(
        img,
        &CannyParams {
            low,
            high,
            ..CannyParams::default()
        },
    )
}

pub fn canny_edges_with(img: &GrayRaster, params: &CannyParams) -> Result<EdgeMask, ImagingError> {
    let (low, high) = (params.low, params.high);
    if !(low >= 0.0 && low < high) {
        return Err(ImagingError::Thresholds { low, high });
    }
    let smoothed = gaussian_blur(img, params.sigma, params.kernel_radius);
    let grad = sobel_gradients(&smoothed)?;
    let mag: Vec<f64> = grad.magnitude.iter().map(|m| m / SOBEL_UNIT_STEP).collect();
    let thin = non_maximum_suppression(&grad, &mag);
    Ok(hysteresis(grad.width, grad.height, &mag, &thin, low, high))
}

/// Signed neighbour offset along the gradient direction, quantized to
/// 8 compass directions (4 axes).
fn gradient_step(gx: f64, gy: f64) -> (isize, isize) {
    let angle = gy.atan2(gx).to_degrees();
    let sector = ((angle / 45.0).round() as i64).rem_euclid(8);
    match sector {
        0 => (1, 0),
        1 => (1, 1),
        2 => (0, 1),
        3 => (-1, 1),
        4 => (-1, 0),
        5 => (-1, -1),
        6 => (0, -1),
        _ => (1, -1),
    }
}

/// Keeps a pixel when it is a local maximum across the gradient axis. Ties
/// go to the pixel on the low-intensity side (the one whose forward neighbour
/// along the gradient ties), which keeps plateaus one pixel thick and is
/// equivariant under 180 degree rotation.
fn non_maximum_suppression(grad: &GradientField, mag: &[f64]) -> Vec<bool> {
    let (w, h) = (grad.width as isize, grad.height as isize);
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            mag[(y * w + x) as usize]
        }
    };
    let mut keep = vec![false; mag.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = gradient_step(grad.gx[i], grad.gy[i]);
            let fwd = at(x + dx, y + dy);
            let back = at(x - dx, y - dy);
            keep[i] = m >= fwd - TIE_EPS && m > back + TIE_EPS;
        }
    }
    keep
}

fn hysteresis(w: usize, h: usize, mag: &[f64], thin: &[bool], low: f64, high: f64) -> EdgeMask {
    let mut out = EdgeMask::new(w, h);
    let mut stack: Vec<usize> = (0..mag.len())
        .filter(|&i| thin[i] && mag[i] >= high)
        .collect();
    for &i in &stack {
        out.bits[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !out.bits[j] && thin[j] && mag[j] >= low {
                    out.bits[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    out
}

pub fn crop_roi(img: &GrayRaster, bbox: &BBox, margin: f64) -> Result<Crop, ImagingError> {
    let window = bbox.pixel_window(margin, img.width, img.height)?;
    let mut data = Vec::with_capacity(window.width * window.height);
    for y in window.y0..window.y0 + window.height {
        let row = y * img.width;
        data.extend_from_slice(&img.data[row + window.x0..row + window.x0 + window.width]);
    }
    Ok(Crop {
        raster: GrayRaster {
            width: window.width,
            height: window.height,
            data,
        },
        window,
    })
}
