//! Frame and mask types plus the pixel-level primitives every stage shares.
//!
//! Coordinates: origin at the top-left pixel centre, x to the right, y down.
//! Pixel `(i, j)` has its centre at the integer point `(i, j)`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row-major 8-bit image with one (gray) or three (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: u8,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!("empty {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!("{channels} channels")));
        }
        if data.len() != width * height * channels as usize {
            return Err(Error::InvalidRaster(format!(
                "{} bytes for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image filled with `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Self {
            width,
            height,
            channels: 1,
            data: vec![value; width * height],
        }
    }

    /// Single-channel image with `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut r = Self::filled(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                r.data[y * width + x] = f(x, y);
            }
        }
        r
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Intensity of a gray pixel (first channel for colour images).
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        debug_assert_eq!(self.channels, 1);
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        let stride = self.width * self.channels as usize;
        &self.data[y * stride..(y + 1) * stride]
    }

    fn require_gray(&self) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::ChannelCount {
                expected: 1,
                actual: self.channels,
            });
        }
        Ok(())
    }
}

/// BT.601 luma, rounded half-up.
pub fn to_grayscale(frame: &Raster) -> Result<Raster> {
    if frame.channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            actual: frame.channels,
        });
    }
    let data = frame
        .data
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            (y + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(Raster {
        width: frame.width,
        height: frame.height,
        channels: 1,
        data,
    })
}

/// Converts to single channel, passing gray frames through untouched.
pub fn ensure_gray(frame: &Raster) -> Result<Raster> {
    match frame.channels {
        1 => Ok(frame.clone()),
        _ => to_grayscale(frame),
    }
}

/// Mirrors the frame about its vertical axis.
pub fn flip_horizontal(frame: &Raster) -> Raster {
    let c = frame.channels as usize;
    let stride = frame.width * c;
    let mut data = Vec::with_capacity(frame.data.len());
    for row in frame.data.chunks_exact(stride) {
        for px in row.chunks_exact(c).rev() {
            data.extend_from_slice(px);
        }
    }
    Raster {
        data,
        ..frame.clone_header()
    }
}

impl Raster {
    fn clone_header(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: Vec::new(),
        }
    }
}

/// Bilinear interpolation of a gray raster at a continuous point.
///
/// Returns the unrounded blend; callers round half-up once.
pub fn sample_bilinear(frame: &Raster, p: Point2) -> Result<f64> {
    frame.require_gray()?;
    let max_x = (frame.width - 1) as f64;
    let max_y = (frame.height - 1) as f64;
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= max_x && p.y <= max_y) {
        return Err(Error::OutOfBounds {
            x: p.x,
            y: p.y,
            width: frame.width,
            height: frame.height,
        });
    }
    Ok(bilinear_unchecked(frame, p.x, p.y))
}

/// Bilinear blend without bounds checks; `x`, `y` must be inside the raster.
#[inline]
pub(crate) fn bilinear_unchecked(frame: &Raster, x: f64, y: f64) -> f64 {
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(frame.width - 1);
    let y1 = (y0 + 1).min(frame.height - 1);
    let w = frame.width;
    let d = &frame.data;
    let p00 = d[y0 * w + x0] as f64;
    let p10 = d[y0 * w + x1] as f64;
    let p01 = d[y1 * w + x0] as f64;
    let p11 = d[y1 * w + x1] as f64;
    let top = p00 + fx * (p10 - p00);
    let bottom = p01 + fx * (p11 - p01);
    top + fy * (bottom - top)
}

/// Rounds a continuous intensity half-up into `0..=255`.
#[inline]
pub fn round_intensity(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Sub-pixel image coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// z-component of (b - a) x (c - a).
#[inline]
pub fn cross(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Per-pixel foreground flags, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "{} bits for {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like `get`, but anything outside the mask reads as background.
    #[inline]
    pub fn get_or_false(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.require_same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn require_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Intersection over union; two empty masks score 1.
    pub fn iou(&self, other: &Self) -> f64 {
        let mut inter = 0usize;
        let mut uni = 0usize;
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            uni += (a || b) as usize;
        }
        if uni == 0 {
            1.0
        } else {
            inter as f64 / uni as f64
        }
    }

    /// Pixel-wise F1 of `self` (prediction) against `truth`.
    pub fn f1(&self, truth: &Self) -> f64 {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&p, &t) in self.bits.iter().zip(&truth.bits) {
            match (p, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        if tp + fp + fn_ == 0 {
            return 1.0;
        }
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for row in out.bits.chunks_exact_mut(self.width) {
            row.reverse();
        }
        out
    }

    /// Run lengths of alternating background/foreground, starting with background.
    pub fn to_runs(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut cur = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b == cur {
                len += 1;
            } else {
                runs.push(len);
                cur = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_runs(width: usize, height: usize, runs: &[u32]) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        let mut cur = false;
        for &r in runs {
            bits.extend(std::iter::repeat(cur).take(r as usize));
            cur = !cur;
        }
        Self::from_bits(width, height, bits)
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    width: usize,
    height: usize,
    runs: Vec<u32>,
}

impl Serialize for BinaryMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MaskRepr {
            width: self.width,
            height: self.height,
            runs: self.to_runs(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MaskRepr::deserialize(d)?;
        BinaryMask::from_runs(r.width, r.height, &r.runs).map_err(serde::de::Error::custom)
    }
}
