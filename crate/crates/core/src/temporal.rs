//! Session state carried across frames: a smoothed paper quad, the
//! accumulated ink canvas, hand occlusion marking and page-swap detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ink::components::{verdicts, ComponentFilterConfig, LabelMap};
use crate::ink::morphology::{dilate_with, StructuringElement};
use crate::quad::{convex_hull, OrderedQuad};
use crate::raster::{cross, BinaryMask, Point2};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PageChangeConfig {
    /// Fraction of the remembered ink that must be missing.
    pub vanish_fraction: f64,
    /// Consecutive frames the ink must stay missing.
    pub frames: u32,
    /// Below this many visible remembered ink pixels a frame says nothing.
    pub min_ink: usize,
}

impl Default for PageChangeConfig {
    fn default() -> Self {
        Self {
            vanish_fraction: 0.6,
            frames: 15,
            min_ink: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub ema_alpha: f64,
    /// Largest corner jump, in pixels, accepted as paper motion.
    pub jump_threshold: f64,
    /// Jumped detections that agree with each other for this many frames
    /// in a row replace the held quad; 0 never does.
    pub reacquire_after: u32,
    pub page_change: PageChangeConfig,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            ema_alpha: 0.4,
            jump_threshold: 40.0,
            reacquire_after: 10,
            page_change: PageChangeConfig::default(),
        }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(Error::InvalidConfig("temporal.ema_alpha must be in (0, 1]".into()));
        }
        if !(self.jump_threshold >= 0.0) {
            return Err(Error::InvalidConfig("temporal.jump_threshold must be >= 0".into()));
        }
        let pc = &self.page_change;
        if !(pc.vanish_fraction > 0.0 && pc.vanish_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "temporal.page_change.vanish_fraction must be in (0, 1]".into(),
            ));
        }
        if pc.frames == 0 {
            return Err(Error::InvalidConfig("temporal.page_change.frames must be >= 1".into()));
        }
        Ok(())
    }
}

/// What `update_quad` did with a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadOutcome {
    Accepted,
    /// The detection jumped too far or would have broken convexity.
    Rejected,
    Lost,
}

/// Smoothed paper corners. `current` is `None` until the first detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTrack {
    pub current: Option<OrderedQuad>,
    pub ema_alpha: f64,
    pub last_good_age: u64,
    pub jump_threshold: f64,
    pub reacquire_after: u32,
    /// Latest jumped detection and how many agreeing ones preceded it.
    candidate: Option<(OrderedQuad, u32)>,
}

impl QuadTrack {
    pub fn new(cfg: &TemporalConfig) -> Self {
        Self {
            current: None,
            ema_alpha: cfg.ema_alpha,
            last_good_age: 0,
            jump_threshold: cfg.jump_threshold,
            reacquire_after: cfg.reacquire_after,
            candidate: None,
        }
    }

    pub fn with_quad(cfg: &TemporalConfig, quad: OrderedQuad) -> Self {
        Self {
            current: Some(quad),
            ..Self::new(cfg)
        }
    }

    pub fn update(&mut self, detected: Option<&OrderedQuad>) -> QuadOutcome {
        self.update_visible(detected, [true; 4])
    }

    /// Like [`QuadTrack::update`], but corners marked invisible are taken
    /// from the current quad, provided at least two corners are visible.
    /// A hand over a corner clips the detected region there; holding that
    /// corner keeps the clip from dragging the track along.
    pub fn update_visible(&mut self, detected: Option<&OrderedQuad>, visible: [bool; 4]) -> QuadOutcome {
        let shown = visible.iter().filter(|&&v| v).count();
        let patched;
        let detected = match (detected, self.current) {
            (Some(d), Some(cur)) if (2..4).contains(&shown) => {
                let (mut c, held) = (d.corners(), cur.corners());
                for i in 0..4 {
                    if !visible[i] {
                        c[i] = held[i];
                    }
                }
                patched = OrderedQuad::from_corners(c);
                Some(&patched)
            }
            _ => detected,
        };
        let Some(det) = detected else {
            self.candidate = None;
            self.last_good_age += 1;
            return QuadOutcome::Lost;
        };
        if !det.is_strictly_convex() {
            self.last_good_age += 1;
            return QuadOutcome::Rejected;
        }
        let next = match self.current {
            None => *det,
            Some(cur) => {
                if cur.max_corner_displacement(det) > self.jump_threshold {
                    let run = match self.candidate {
                        Some((c, n)) if c.max_corner_displacement(det) <= self.jump_threshold => n + 1,
                        _ => 1,
                    };
                    if self.reacquire_after == 0 || run < self.reacquire_after {
                        self.candidate = Some((*det, run));
                        self.last_good_age += 1;
                        return QuadOutcome::Rejected;
                    }
                    // The page really moved: start over from the detection.
                    self.candidate = None;
                    self.current = Some(*det);
                    self.last_good_age = 0;
                    return QuadOutcome::Accepted;
                }
                let a = self.ema_alpha;
                let mut c = cur.corners();
                for (p, d) in c.iter_mut().zip(det.corners()) {
                    *p = Point2::new(a * d.x + (1.0 - a) * p.x, a * d.y + (1.0 - a) * p.y);
                }
                OrderedQuad::from_corners(c)
            }
        };
        // Per-corner blends of two convex quads can fold; keep the old one then.
        if !next.is_strictly_convex() {
            self.last_good_age += 1;
            return QuadOutcome::Rejected;
        }
        self.candidate = None;
        self.current = Some(next);
        self.last_good_age = 0;
        QuadOutcome::Accepted
    }
}

/// Whether the page shows near each corner of `quad`: most probe points
/// stepping 4 to 12 px from the corner towards the centre lie on paper.
pub fn visible_corners(paper: &BinaryMask, quad: &OrderedQuad) -> [bool; 4] {
    let centre = quad.centroid();
    let (w, h) = paper.dims();
    quad.corners().map(|c| {
        let d = centre.sub(c);
        let len = c.dist(centre);
        if len < 1e-9 {
            return false;
        }
        let u = d.scale(1.0 / len);
        let hits = (4..=12)
            .filter(|&k| {
                let p = c.add(u.scale(k as f64));
                let (x, y) = (p.x.round(), p.y.round());
                x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h && paper.get(x as usize, y as usize)
            })
            .count();
        hits >= 7
    })
}

/// Functional form of [`QuadTrack::update`].
pub fn update_quad(track: &QuadTrack, detected: Option<&OrderedQuad>) -> QuadTrack {
    let mut next = *track;
    next.update(detected);
    next
}

/// Rectified page content accumulated over frames.
#[derive(Debug, Clone, PartialEq)]
pub struct InkCanvas {
    pub ink: BinaryMask,
    /// Frame index of the last unoccluded observation, `None` if never seen.
    pub last_seen: Vec<Option<u64>>,
    last_frame: Option<u64>,
}

impl InkCanvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            ink: BinaryMask::new(width, height),
            last_seen: vec![None; width * height],
            last_frame: None,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.ink.dims()
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Copies `frame_ink` into every unoccluded pixel.
    pub fn update(&mut self, frame_ink: &BinaryMask, occlusion: &BinaryMask, t: u64) -> Result<()> {
        frame_ink.require_same_dims(&self.ink)?;
        occlusion.require_same_dims(&self.ink)?;
        if let Some(last) = self.last_frame {
            if t <= last {
                return Err(Error::FrameOrder { last, got: t });
            }
        }
        let src = frame_ink.bits();
        let occ = occlusion.bits();
        let ink = self.ink.bits_mut();
        for i in 0..ink.len() {
            if !occ[i] {
                ink[i] = src[i];
                self.last_seen[i] = Some(t);
            }
        }
        self.last_frame = Some(t);
        Ok(())
    }

    /// Forget everything while keeping the frame counter.
    pub fn clear(&mut self) {
        self.ink.bits_mut().fill(false);
        self.last_seen.fill(None);
    }
}

/// Functional form of [`InkCanvas::update`].
pub fn update_canvas(canvas: &InkCanvas, frame_ink: &BinaryMask, occlusion: &BinaryMask, t: u64) -> Result<InkCanvas> {
    let mut next = canvas.clone();
    next.update(frame_ink, occlusion, t)?;
    Ok(next)
}

/// Region hidden by the hand: every palm or border-blob component, filled to
/// its convex hull, grown by `occlusion_margin`.
///
/// The fill matters because a dark hand thresholds to a ring: the local mean
/// inside a large uniform blob equals the blob itself.
pub fn occlusion_mask(lm: &LabelMap, cfg: &ComponentFilterConfig) -> BinaryMask {
    occlusion_mask_with(lm, cfg, Exec::default())
}

pub fn occlusion_mask_with(lm: &LabelMap, cfg: &ComponentFilterConfig, exec: Exec) -> BinaryMask {
    grow_occlusion(&hand_regions(lm, cfg), cfg.occlusion_margin, exec)
}

/// Palm and border-blob components filled to their convex hulls.
pub fn hand_regions(lm: &LabelMap, cfg: &ComponentFilterConfig) -> BinaryMask {
    let w = lm.width();
    let v = verdicts(lm, cfg);
    let mut mask = lm.select(|l| v[l as usize].is_hand());
    if mask.is_empty() {
        return mask;
    }
    let mut pts: Vec<Vec<Point2>> = vec![Vec::new(); v.len()];
    for (i, &l) in lm.labels().iter().enumerate() {
        if l != 0 && v[l as usize].is_hand() {
            pts[l as usize].push(Point2::new((i % w) as f64, (i / w) as f64));
        }
    }
    for (l, p) in pts.iter().enumerate().skip(1) {
        if !v[l].is_hand() {
            continue;
        }
        if let Ok(hull) = convex_hull(p) {
            fill_convex(&mut mask, &hull, &lm.stats(l as u32).bbox);
        }
    }
    mask
}

/// Square dilation by `margin` pixels.
pub fn grow_occlusion(mask: &BinaryMask, margin: usize, exec: Exec) -> BinaryMask {
    if margin == 0 || mask.is_empty() {
        return mask.clone();
    }
    let se = StructuringElement::square(2 * margin + 1).expect("odd side");
    dilate_with(mask, &se, exec)
}

/// Sets the pixels whose centres lie in a counter-clockwise-in-image hull.
fn fill_convex(mask: &mut BinaryMask, hull: &[Point2], bbox: &crate::ink::BoundingBox) {
    let n = hull.len();
    for y in bbox.min_y..=bbox.max_y {
        for x in bbox.min_x..=bbox.max_x {
            let p = Point2::new(x as f64, y as f64);
            if (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0.0) {
                mask.set(x, y, true);
            }
        }
    }
}

/// Watches for the remembered ink disappearing, as when the sheet is swapped.
#[derive(Debug, Clone, PartialEq)]
pub struct PageChangeDetector {
    cfg: PageChangeConfig,
    baseline: Option<BinaryMask>,
    streak: u32,
}

impl PageChangeDetector {
    pub fn new(cfg: PageChangeConfig) -> Self {
        Self {
            cfg,
            baseline: None,
            streak: 0,
        }
    }

    pub fn streak(&self) -> u32 {
        self.streak
    }

    /// Feed one accepted frame before it is written into `canvas`. Returns
    /// true when the page should be considered replaced.
    pub fn observe(&mut self, canvas: &InkCanvas, frame_ink: &BinaryMask, occlusion: &BinaryMask) -> bool {
        let reference = self.baseline.as_ref().unwrap_or(&canvas.ink);
        let vanished = match vanish_ratio(reference, frame_ink, occlusion, self.cfg.min_ink) {
            Some(r) => r >= self.cfg.vanish_fraction,
            None => false,
        };
        if !vanished {
            self.baseline = None;
            self.streak = 0;
            return false;
        }
        if self.baseline.is_none() {
            // The canvas is about to absorb the new sheet; remember the old one.
            self.baseline = Some(canvas.ink.clone());
        }
        self.streak += 1;
        if self.streak >= self.cfg.frames {
            self.baseline = None;
            self.streak = 0;
            return true;
        }
        false
    }
}

/// Share of visible `reference` ink missing from `frame_ink`, or `None` when
/// too little reference ink is visible.
fn vanish_ratio(reference: &BinaryMask, frame_ink: &BinaryMask, occlusion: &BinaryMask, min_ink: usize) -> Option<f64> {
    let (r, f, o) = (reference.bits(), frame_ink.bits(), occlusion.bits());
    let (mut visible, mut gone) = (0usize, 0usize);
    for i in 0..r.len() {
        if r[i] && !o[i] {
            visible += 1;
            gone += !f[i] as usize;
        }
    }
    (visible >= min_ink.max(1)).then(|| gone as f64 / visible as f64)
}
