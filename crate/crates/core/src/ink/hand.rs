//! Solid dark regions too wide to be pen strokes, taken as the hand.
//!
//! Local-mean thresholding only outlines a large uniform occluder, so the
//! hand is also looked for directly: pixels well below the page level that
//! survive an opening wider than any stroke.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ink::components::{label_components, Connectivity};
use crate::ink::morphology::{open_with, StructuringElement};
use crate::raster::{BinaryMask, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandConfig {
    pub enabled: bool,
    /// How far below the page level, in intensity units, the hand sits.
    pub contrast: u8,
    /// Regions narrower than this in either direction are strokes.
    pub min_width: usize,
    /// Regions with fewer pixels are ignored.
    pub min_area: usize,
}

impl Default for HandConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            contrast: 60,
            min_width: 25,
            min_area: 2000,
        }
    }
}

impl HandConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_width % 2 == 0 {
            return Err(Error::InvalidConfig("hand.min_width must be odd".into()));
        }
        Ok(())
    }
}

/// Page brightness: the 90th intensity percentile.
pub fn page_level(gray: &Raster) -> u8 {
    let mut hist = [0usize; 256];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    let target = (gray.data().len() as f64 * 0.9).ceil() as usize;
    let mut acc = 0;
    for (v, &n) in hist.iter().enumerate() {
        acc += n;
        if acc >= target {
            return v as u8;
        }
    }
    255
}

pub fn hand_mass(gray: &Raster, cfg: &HandConfig, exec: Exec) -> BinaryMask {
    let (w, h) = gray.dims();
    if !cfg.enabled || w < cfg.min_width || h < cfg.min_width {
        return BinaryMask::new(w, h);
    }
    let cut = page_level(gray).saturating_sub(cfg.contrast);
    // The hand carries on past the page edge, so the border is replicated
    // rather than read as background during the opening.
    let pad = cfg.min_width / 2;
    let (pw, ph) = (w + 2 * pad, h + 2 * pad);
    let data = gray.data();
    let dark = BinaryMask::from_fn(pw, ph, |x, y| {
        let sx = x.saturating_sub(pad).min(w - 1);
        let sy = y.saturating_sub(pad).min(h - 1);
        data[sy * w + sx] < cut
    });
    let se = StructuringElement::square(cfg.min_width).expect("odd side");
    let padded = open_with(&dark, &se, exec);
    // Dark regions are kept whole when enough of them survives the opening,
    // so thin slivers of the hand at the page edge go with the rest of it.
    let cropped = BinaryMask::from_fn(w, h, |x, y| dark.get(x + pad, y + pad));
    let lm = label_components(&cropped, Connectivity::Eight);
    let mut mass = vec![0usize; lm.len() + 1];
    for y in 0..h {
        for x in 0..w {
            if padded.get(x + pad, y + pad) {
                mass[lm.label(x, y) as usize] += 1;
            }
        }
    }
    lm.select(|l| mass[l as usize] >= cfg.min_area)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strokes_are_not_a_hand() {
        let g = Raster::from_fn(200, 200, |x, y| if (x / 10) % 4 == 0 || y % 37 < 8 { 30 } else { 220 });
        assert!(hand_mass(&g, &HandConfig::default(), Exec::Sequential).is_empty());
    }

    #[test]
    fn blob_is_found_whole() {
        let inside = |x: usize, y: usize| (60..140).contains(&x) && y >= 80;
        let g = Raster::from_fn(200, 200, |x, y| if inside(x, y) { 90 } else { 210 });
        let m = hand_mass(&g, &HandConfig::default(), Exec::Sequential);
        assert_eq!(m, BinaryMask::from_fn(200, 200, inside));
    }

    #[test]
    fn slanted_blob_reaches_the_border() {
        // A band leaving through the bottom edge at an angle.
        let inside = |x: usize, y: usize| {
            let d = x as f64 - 0.5 * y as f64;
            (40.0..110.0).contains(&d) && y >= 60
        };
        let g = Raster::from_fn(200, 200, |x, y| if inside(x, y) { 90 } else { 210 });
        let m = hand_mass(&g, &HandConfig::default(), Exec::Sequential);
        for x in 0..200 {
            if inside(x, 199) {
                assert!(m.get(x, 199), "x = {x}");
            }
        }
    }

    #[test]
    fn disabled_finds_nothing() {
        let g = Raster::filled(100, 100, 0);
        let cfg = HandConfig {
            enabled: false,
            ..Default::default()
        };
        assert!(hand_mass(&g, &cfg, Exec::Sequential).is_empty());
        assert!(HandConfig { min_width: 4, ..cfg }.validate().is_err());
    }

    #[test]
    fn level_is_a_high_percentile() {
        let g = Raster::from_fn(10, 10, |x, _| if x == 0 { 0 } else { 200 });
        assert_eq!(page_level(&g), 200);
    }
}
