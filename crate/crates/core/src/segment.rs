//! Paper-region segmentation behind a pluggable [`Segmenter`] interface,
//! plus the handedness flip applied before it.
//!
//! The shipped [`ClassicalSegmenter`] thresholds a downscaled frame,
//! keeps the largest bright 4-connected region, and then re-decides the
//! pixels along its border at full resolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ink::{label_components, Connectivity};
use crate::quad::{convex_hull, polygon_area};
use crate::raster::{flip_horizontal, BinaryMask, Point2, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterConfig {
    /// Segment on a frame reduced by this factor in each direction.
    pub downscale_factor: usize,
    /// A paper candidate must cover more than this fraction of the frame.
    pub min_region_fraction: f64,
    /// Percentile (50, 100) whose intensity seeds the bright/dark split.
    pub brightness_percentile: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            downscale_factor: 4,
            min_region_fraction: 0.08,
            brightness_percentile: 90.0,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.downscale_factor < 1 {
            return Err(Error::InvalidConfig("segmenter.downscale_factor must be >= 1".into()));
        }
        if !(self.min_region_fraction > 0.0 && self.min_region_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "segmenter.min_region_fraction must be in (0, 1)".into(),
            ));
        }
        if !(self.brightness_percentile > 50.0 && self.brightness_percentile < 100.0) {
            return Err(Error::InvalidConfig(
                "segmenter.brightness_percentile must be in (50, 100)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub mask: BinaryMask,
    /// Region area over the area of its convex hull.
    pub confidence: f64,
}

/// Anything that can find the paper in a gray frame.
pub trait Segmenter: Send + Sync {
    fn segment(&self, frame: &Raster) -> Result<SegmentationResult>;
}

/// Backend names accepted by the `segmenter` config key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterKind {
    #[default]
    Classical,
}

#[derive(Debug, Clone, Default)]
pub struct ClassicalSegmenter {
    pub config: SegmenterConfig,
}

impl Segmenter for ClassicalSegmenter {
    fn segment(&self, frame: &Raster) -> Result<SegmentationResult> {
        segment_paper(frame, &self.config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    #[default]
    Right,
}

/// Left-handed frames are mirrored so the hand enters from the same side.
pub fn apply_handedness(frame: &Raster, handedness: Handedness) -> Raster {
    match handedness {
        Handedness::Right => frame.clone(),
        Handedness::Left => flip_horizontal(frame),
    }
}

/// Below this percentile spread the frame is treated as a single surface.
const MIN_CONTRAST: f64 = 24.0;

pub fn segment_paper(frame: &Raster, cfg: &SegmenterConfig) -> Result<SegmentationResult> {
    cfg.validate()?;
    if frame.channels() != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            actual: frame.channels(),
        });
    }
    let (w, h) = frame.dims();
    let f = cfg.downscale_factor;
    let small = downscale_max(frame, f);
    let (sw, sh) = small.dims();

    let top = percentile(small.data(), 99.5);
    let bottom = percentile(small.data(), 0.5);
    if top - bottom < MIN_CONTRAST {
        if percentile(small.data(), 50.0) >= 128.0 {
            return Ok(SegmentationResult {
                mask: BinaryMask::full(w, h),
                confidence: 1.0,
            });
        }
        return Err(Error::NoPaperFound);
    }
    let hi = percentile(small.data(), cfg.brightness_percentile);
    let lo = percentile(small.data(), 100.0 - cfg.brightness_percentile);
    // A small sheet may not reach the seeding percentile; fall back to the extremes.
    let seed = if hi - lo >= MIN_CONTRAST { (hi + lo) / 2.0 } else { (top + bottom) / 2.0 };
    let t = isodata(small.data(), seed);

    let bright = BinaryMask::from_bits(sw, sh, small.data().iter().map(|&v| v as f64 > t).collect())?;
    let coarse = largest_filled_region(&bright).ok_or(Error::NoPaperFound)?;
    if (coarse.count() as f64) <= cfg.min_region_fraction * (sw * sh) as f64 {
        return Err(Error::NoPaperFound);
    }

    // Upscale, then re-decide a band of about one block around the border.
    let mut mask = BinaryMask::from_fn(w, h, |x, y| coarse.get(x / f, y / f));
    if f > 1 {
        let band = border_band(&coarse);
        for y in 0..h {
            for x in 0..w {
                if band.get(x / f, y / f) {
                    mask.set(x, y, frame.get(x, y) as f64 > t);
                }
            }
        }
        mask = largest_filled_region(&mask).ok_or(Error::NoPaperFound)?;
    }
    let confidence = hull_fill_ratio(&mask);
    Ok(SegmentationResult { mask, confidence })
}

/// Max over `f` x `f` blocks; thin dark strokes vanish from the reduced frame.
fn downscale_max(frame: &Raster, f: usize) -> Raster {
    let (w, h) = frame.dims();
    let (sw, sh) = (w.div_ceil(f), h.div_ceil(f));
    let mut out = Raster::filled(sw, sh, 0);
    for y in 0..h {
        let row = frame.row(y);
        for (x, &v) in row.iter().enumerate() {
            let i = (y / f) * sw + x / f;
            let d = &mut out.data_mut()[i];
            *d = (*d).max(v);
        }
    }
    out
}

/// Nearest-rank percentile of the intensities.
fn percentile(data: &[u8], pct: f64) -> f64 {
    let mut hist = [0usize; 256];
    for &v in data {
        hist[v as usize] += 1;
    }
    let rank = ((pct / 100.0) * data.len() as f64).ceil().max(1.0) as usize;
    let mut seen = 0;
    for (v, &c) in hist.iter().enumerate() {
        seen += c;
        if seen >= rank {
            return v as f64;
        }
    }
    255.0
}

/// Iterative intermeans threshold starting from `seed`.
fn isodata(data: &[u8], seed: f64) -> f64 {
    let mut hist = [0u64; 256];
    for &v in data {
        hist[v as usize] += 1;
    }
    let mut t = seed;
    for _ in 0..64 {
        let (mut n0, mut s0, mut n1, mut s1) = (0u64, 0u64, 0u64, 0u64);
        for (v, &c) in hist.iter().enumerate() {
            if v as f64 > t {
                n1 += c;
                s1 += c * v as u64;
            } else {
                n0 += c;
                s0 += c * v as u64;
            }
        }
        if n0 == 0 || n1 == 0 {
            break;
        }
        let next = (s0 as f64 / n0 as f64 + s1 as f64 / n1 as f64) / 2.0;
        if (next - t).abs() < 0.5 {
            t = next;
            break;
        }
        t = next;
    }
    t
}

/// Largest 4-connected region with its holes filled.
fn largest_filled_region(mask: &BinaryMask) -> Option<BinaryMask> {
    let lm = label_components(mask, Connectivity::Four);
    let best = (1..=lm.len() as u32).max_by(|&a, &b| {
        lm.stats(a)
            .area
            .cmp(&lm.stats(b).area)
            .then(b.cmp(&a))
    })?;
    let region = lm.select(|l| l == best);
    Some(fill_holes(&region))
}

/// Sets every background pixel not 4-reachable from the frame border.
pub(crate) fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    let push = |i: usize, outside: &mut Vec<bool>, stack: &mut Vec<usize>| {
        if !bits[i] && !outside[i] {
            outside[i] = true;
            stack.push(i);
        }
    };
    for x in 0..w {
        push(x, &mut outside, &mut stack);
        push((h - 1) * w + x, &mut outside, &mut stack);
    }
    for y in 0..h {
        push(y * w, &mut outside, &mut stack);
        push(y * w + w - 1, &mut outside, &mut stack);
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        if x > 0 {
            push(i - 1, &mut outside, &mut stack);
        }
        if x + 1 < w {
            push(i + 1, &mut outside, &mut stack);
        }
        if y > 0 {
            push(i - w, &mut outside, &mut stack);
        }
        if y + 1 < h {
            push(i + w, &mut outside, &mut stack);
        }
    }
    BinaryMask::from_bits(w, h, outside.iter().map(|o| !o).collect()).expect("same dimensions")
}

/// Coarse cells within one cell of a foreground/background transition.
fn border_band(coarse: &BinaryMask) -> BinaryMask {
    let (w, h) = coarse.dims();
    let mut edge = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = coarse.get(x, y);
            let differs = [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|&(dx, dy)| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && coarse.get(nx as usize, ny as usize) != v
                });
            if differs {
                edge.set(x, y, true);
            }
        }
    }
    crate::ink::dilate(&edge, &crate::ink::StructuringElement::default())
}

/// Pixel count over the area of the hull of the pixel squares.
fn hull_fill_ratio(mask: &BinaryMask) -> f64 {
    let (w, h) = mask.dims();
    let mut corners = Vec::new();
    for y in 0..h {
        let row = &mask.bits()[y * w..(y + 1) * w];
        let (Some(l), Some(r)) = (row.iter().position(|&b| b), row.iter().rposition(|&b| b)) else {
            continue;
        };
        let (yt, yb) = (y as f64 - 0.5, y as f64 + 0.5);
        for x in [l as f64 - 0.5, r as f64 + 0.5] {
            corners.push(Point2::new(x, yt));
            corners.push(Point2::new(x, yb));
        }
    }
    let Ok(hull) = convex_hull(&corners) else {
        return 0.0;
    };
    let area = polygon_area(hull);
    if area <= 0.0 {
        return 0.0;
    }
    (mask.count() as f64 / area).clamp(0.0, 1.0)
}
