//! Synthetic camera frames with exact ground truth: a page of known ink seen
//! through a known projective map, with lighting, noise and a passing hand.
//!
//! Projection here is a forward splat through a closed-form square-to-quad
//! map, so it shares no code with the inverse-mapping unwarp.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::quad::OrderedQuad;
use crate::raster::{BinaryMask, Point2, Raster};

/// Random handwriting-like strokes on a blank page.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrokeRecipe {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    #[serde(default = "StrokeRecipe::default_lines")]
    pub lines: usize,
    #[serde(default = "StrokeRecipe::default_thickness")]
    pub thickness: f64,
}

impl StrokeRecipe {
    fn default_lines() -> usize {
        9
    }

    fn default_thickness() -> f64 {
        14.0
    }

    pub fn new(width: usize, height: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            seed,
            lines: Self::default_lines(),
            thickness: Self::default_thickness(),
        }
    }

    /// Rows of wavy word-like strokes, kept clear of the page edge.
    pub fn render(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        let mut mask = BinaryMask::new(w, h);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let r = self.thickness / 2.0;
        let margin = 0.1 * w.min(h) as f64 + r;
        let usable_h = h as f64 - 2.0 * margin;
        if usable_h <= 0.0 || (w as f64) <= 2.0 * margin {
            return mask;
        }
        let pitch = usable_h / self.lines.max(1) as f64;
        for line in 0..self.lines {
            let base_y = margin + (line as f64 + 0.5) * pitch;
            let mut x = margin + rng.gen_range(0.0..pitch);
            let x_end = w as f64 - margin;
            while x < x_end {
                let word = rng.gen_range(0.08..0.3) * w as f64;
                let end = (x + word).min(x_end);
                let amp = rng.gen_range(0.15..0.35) * pitch;
                let freq = rng.gen_range(0.04..0.12);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut prev = Point2::new(x, base_y + amp * phase.sin());
                let mut sx = x;
                while sx < end {
                    sx = (sx + 2.0).min(end);
                    let p = Point2::new(sx, base_y + amp * (freq * (sx - x) + phase).sin());
                    stamp_segment(&mut mask, prev, p, r);
                    prev = p;
                }
                x = end + rng.gen_range(0.03..0.08) * w as f64;
            }
        }
        mask
    }
}

fn stamp_segment(mask: &mut BinaryMask, a: Point2, b: Point2, r: f64) {
    let (w, h) = mask.dims();
    let x0 = (a.x.min(b.x) - r).floor().max(0.0) as usize;
    let y0 = (a.y.min(b.y) - r).floor().max(0.0) as usize;
    let x1 = ((a.x.max(b.x) + r).ceil() as usize).min(w.saturating_sub(1));
    let y1 = ((a.y.max(b.y) + r).ceil() as usize).min(h.saturating_sub(1));
    let d = b.sub(a);
    let len2 = d.x * d.x + d.y * d.y;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Point2::new(x as f64, y as f64);
            let s = if len2 > 0.0 {
                (((p.x - a.x) * d.x + (p.y - a.y) * d.y) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            if p.dist(a.add(d.scale(s))) <= r {
                mask.set(x, y, true);
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InkSource {
    Recipe(StrokeRecipe),
    Mask(BinaryMask),
}

fn ink_from_source<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BinaryMask, D::Error> {
    Ok(match InkSource::deserialize(d)? {
        InkSource::Recipe(r) => r.render(),
        InkSource::Mask(m) => m,
    })
}

/// Hand position at a frame; positions between keys are interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandKey {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
}

/// Palm ellipse plus a forearm band running from the palm centre off-frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandSprite {
    pub palm_rx: f64,
    pub palm_ry: f64,
    pub arm_width: f64,
    /// Direction of the forearm from the palm, degrees, image coordinates.
    pub arm_angle: f64,
    pub intensity: u8,
}

impl Default for HandSprite {
    fn default() -> Self {
        Self {
            palm_rx: 45.0,
            palm_ry: 60.0,
            arm_width: 70.0,
            arm_angle: 60.0,
            intensity: 90,
        }
    }
}

impl HandSprite {
    pub fn covers(&self, centre: Point2, p: Point2) -> bool {
        let d = p.sub(centre);
        if (d.x / self.palm_rx).powi(2) + (d.y / self.palm_ry).powi(2) <= 1.0 {
            return true;
        }
        let (s, c) = self.arm_angle.to_radians().sin_cos();
        let along = d.x * c + d.y * s;
        let across = -d.x * s + d.y * c;
        along >= 0.0 && across.abs() <= self.arm_width / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "SceneSpec::default_frame_width")]
    pub frame_width: usize,
    #[serde(default = "SceneSpec::default_frame_height")]
    pub frame_height: usize,
    #[serde(deserialize_with = "ink_from_source")]
    pub page_ink: BinaryMask,
    pub true_quad: OrderedQuad,
    pub bg_intensity: u8,
    pub paper_intensity: u8,
    #[serde(default = "SceneSpec::default_ink_intensity")]
    pub ink_intensity: u8,
    /// Brightness change from the left frame edge to the right one.
    #[serde(default)]
    pub light_gradient: f64,
    #[serde(default)]
    pub hand_path: Vec<HandKey>,
    #[serde(default)]
    pub hand: HandSprite,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    fn default_frame_width() -> usize {
        640
    }

    fn default_frame_height() -> usize {
        480
    }

    fn default_ink_intensity() -> u8 {
        40
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("scene: {m}")));
        if self.frame_width == 0 || self.frame_height == 0 {
            return bad("empty frame");
        }
        if self.page_ink.width() == 0 || self.page_ink.height() == 0 {
            return bad("empty page");
        }
        if self.paper_intensity <= self.bg_intensity {
            return bad("paper must be brighter than the background");
        }
        if !self.true_quad.is_strictly_convex() || self.true_quad.signed_area() <= 0.0 {
            return bad("quad must be convex and clockwise on screen");
        }
        let extent = OrderedQuad::pixel_extent(self.frame_width, self.frame_height);
        if !self.true_quad.corners().iter().all(|&p| extent.contains(p)) {
            return bad("quad leaves the frame");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        if self.hand_path.windows(2).any(|k| k[1].frame <= k[0].frame) {
            return bad("hand_path frames must increase");
        }
        Ok(())
    }

    /// Palm centre at frame `t`, if the hand is in view.
    pub fn hand_at(&self, t: u64) -> Option<Point2> {
        let first = self.hand_path.first()?;
        let last = self.hand_path.last()?;
        if t < first.frame || t > last.frame {
            return None;
        }
        let i = self.hand_path.partition_point(|k| k.frame <= t);
        let a = self.hand_path[i - 1];
        if a.frame == t || i == self.hand_path.len() {
            return Some(Point2::new(a.x, a.y));
        }
        let b = self.hand_path[i];
        let s = (t - a.frame) as f64 / (b.frame - a.frame) as f64;
        Some(Point2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)))
    }
}

/// Exact answers for one rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub quad: OrderedQuad,
    /// Page ink in page coordinates.
    pub ink: BinaryMask,
    /// Hand silhouette, camera coordinates (pixel centres).
    pub occlusion: BinaryMask,
    /// Hand silhouette, page coordinates (page pixel centres mapped forward).
    pub page_occlusion: BinaryMask,
}

/// Closed-form projective map of the unit square onto a quad:
/// (0,0), (1,0), (1,1), (0,1) go to TL, TR, BR, BL.
#[derive(Debug, Clone, Copy)]
struct SquareToQuad {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    f: f64,
    g: f64,
    h: f64,
}

impl SquareToQuad {
    fn new(q: &OrderedQuad) -> Self {
        let [p0, p1, p2, p3] = q.corners();
        let sx = p0.x - p1.x + p2.x - p3.x;
        let sy = p0.y - p1.y + p2.y - p3.y;
        let (g, h) = if sx == 0.0 && sy == 0.0 {
            (0.0, 0.0)
        } else {
            let (dx1, dx2) = (p1.x - p2.x, p3.x - p2.x);
            let (dy1, dy2) = (p1.y - p2.y, p3.y - p2.y);
            let den = dx1 * dy2 - dx2 * dy1;
            ((sx * dy2 - dx2 * sy) / den, (dx1 * sy - sx * dy1) / den)
        };
        Self {
            a: p1.x - p0.x + g * p1.x,
            b: p3.x - p0.x + h * p3.x,
            c: p0.x,
            d: p1.y - p0.y + g * p1.y,
            e: p3.y - p0.y + h * p3.y,
            f: p0.y,
            g,
            h,
        }
    }

    fn map(&self, s: f64, t: f64) -> Point2 {
        let w = self.g * s + self.h * t + 1.0;
        Point2::new(
            (self.a * s + self.b * t + self.c) / w,
            (self.d * s + self.e * t + self.f) / w,
        )
    }
}

const SUPERSAMPLE: usize = 4;

/// Renders frames of one scene; the static page image is computed once.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    spec: SceneSpec,
    /// Noise-free page and background before lighting, as floats.
    base: Vec<f64>,
    /// Forward image of every page pixel centre.
    page_centres: Vec<Point2>,
}

impl SceneRenderer {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let (fw, fh) = (spec.frame_width, spec.frame_height);
        let (pw, ph) = spec.page_ink.dims();
        let fwd = SquareToQuad::new(&spec.true_quad);
        let to_cam = |u: f64, v: f64| fwd.map((u + 0.5) / pw as f64, (v + 0.5) / ph as f64);

        // Splat page sub-samples, counting all hits and ink hits per camera pixel.
        let mut hits = vec![0u32; fw * fh];
        let mut ink_hits = vec![0u32; fw * fh];
        let step = 1.0 / SUPERSAMPLE as f64;
        let ink = spec.page_ink.bits();
        for v in 0..ph {
            for u in 0..pw {
                let is_ink = ink[v * pw + u];
                for j in 0..SUPERSAMPLE {
                    for i in 0..SUPERSAMPLE {
                        let p = to_cam(
                            u as f64 - 0.5 + (i as f64 + 0.5) * step,
                            v as f64 - 0.5 + (j as f64 + 0.5) * step,
                        );
                        let (x, y) = ((p.x + 0.5).floor(), (p.y + 0.5).floor());
                        if x >= 0.0 && y >= 0.0 && (x as usize) < fw && (y as usize) < fh {
                            let k = y as usize * fw + x as usize;
                            hits[k] += 1;
                            ink_hits[k] += is_ink as u32;
                        }
                    }
                }
            }
        }

        let (bg, paper, pen) = (
            spec.bg_intensity as f64,
            spec.paper_intensity as f64,
            spec.ink_intensity as f64,
        );
        let quad = spec.true_quad;
        let mut base = vec![bg; fw * fh];
        for y in 0..fh {
            for x in 0..fw {
                let mut inside = 0;
                for j in 0..SUPERSAMPLE {
                    for i in 0..SUPERSAMPLE {
                        let p = Point2::new(
                            x as f64 - 0.5 + (i as f64 + 0.5) * step,
                            y as f64 - 0.5 + (j as f64 + 0.5) * step,
                        );
                        inside += quad.contains(p) as u32;
                    }
                }
                if inside == 0 {
                    continue;
                }
                let k = y * fw + x;
                let ink_frac = if hits[k] > 0 {
                    ink_hits[k] as f64 / hits[k] as f64
                } else {
                    0.0
                };
                let surface = paper + (pen - paper) * ink_frac;
                let cov = inside as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                base[k] = bg + (surface - bg) * cov;
            }
        }

        let page_centres = (0..pw * ph)
            .map(|i| to_cam((i % pw) as f64, (i / pw) as f64))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            base,
            page_centres,
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn render(&self, t: u64) -> (Raster, SceneTruth) {
        let spec = &self.spec;
        let (fw, fh) = (spec.frame_width, spec.frame_height);
        let (pw, ph) = spec.page_ink.dims();
        let hand = spec.hand_at(t);
        let covered = |p: Point2| hand.is_some_and(|c| spec.hand.covers(c, p));

        let occlusion = BinaryMask::from_fn(fw, fh, |x, y| covered(Point2::new(x as f64, y as f64)));
        let page_occlusion = match hand {
            None => BinaryMask::new(pw, ph),
            Some(_) => BinaryMask::from_fn(pw, ph, |u, v| covered(self.page_centres[v * pw + u])),
        };

        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(spec.seed, t));
        let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma > 0"));
        let span = (fw.max(2) - 1) as f64;
        let hand_level = spec.hand.intensity as f64;
        let data = (0..fw * fh)
            .map(|k| {
                let x = k % fw;
                let mut v = if occlusion.bits()[k] { hand_level } else { self.base[k] };
                v += spec.light_gradient * (x as f64 / span - 0.5);
                if let Some(n) = &noise {
                    v += n.sample(&mut rng);
                }
                v.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        let frame = Raster::new(fw, fh, 1, data).expect("validated dimensions");
        let truth = SceneTruth {
            quad: spec.true_quad,
            ink: spec.page_ink.clone(),
            occlusion,
            page_occlusion,
        };
        (frame, truth)
    }
}

fn frame_seed(seed: u64, t: u64) -> u64 {
    seed ^ t.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One-shot convenience over [`SceneRenderer`].
pub fn render_scene(spec: &SceneSpec, t: u64) -> Result<(Raster, SceneTruth)> {
    Ok(SceneRenderer::new(spec)?.render(t))
}

/// Nearest-neighbour resize of a mask, matching pixel extents.
pub fn resample_nearest(mask: &BinaryMask, width: usize, height: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(width, height, |x, y| {
        let sx = (((x as f64 + 0.5) * w as f64 / width as f64) as usize).min(w - 1);
        let sy = (((y as f64 + 0.5) * h as f64 / height as f64) as usize).min(h - 1);
        mask.get(sx, sy)
    })
}

/// Parameters for the randomised tilted-desk scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedScene {
    pub seed: u64,
    pub page_width: usize,
    pub page_height: usize,
    pub max_noise: f64,
    pub max_gradient: f64,
}

impl Default for TiltedScene {
    fn default() -> Self {
        Self {
            seed: 0,
            page_width: 640,
            page_height: 905,
            max_noise: 4.0,
            max_gradient: 40.0,
        }
    }
}

impl TiltedScene {
    /// A portrait sheet on a desk seen from roughly 45 degrees: the far edge
    /// is shorter, the page is foreshortened, rotated a little and shifted.
    pub fn build(&self) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (fw, fh) = (640.0, 480.0);
        let bottom = rng.gen_range(300.0..380.0);
        let top = bottom * rng.gen_range(0.62..0.8);
        let height = rng.gen_range(270.0..330.0);
        let skew = rng.gen_range(-20.0..20.0);
        let local = [
            Point2::new(-top / 2.0 + skew, -height / 2.0),
            Point2::new(top / 2.0 + skew, -height / 2.0),
            Point2::new(bottom / 2.0, height / 2.0),
            Point2::new(-bottom / 2.0, height / 2.0),
        ];
        let angle = rng.gen_range(-12.0f64..12.0).to_radians();
        let (s, c) = angle.sin_cos();
        let centre = Point2::new(
            fw / 2.0 + rng.gen_range(-40.0..40.0),
            fh / 2.0 + rng.gen_range(-25.0..25.0),
        );
        let corners = local.map(|p| Point2::new(centre.x + p.x * c - p.y * s, centre.y + p.x * s + p.y * c));
        let bg = rng.gen_range(30..90u8);
        let paper = rng.gen_range(185..235u8);
        SceneSpec {
            frame_width: fw as usize,
            frame_height: fh as usize,
            page_ink: StrokeRecipe::new(self.page_width, self.page_height, self.seed ^ 0x5EED).render(),
            true_quad: OrderedQuad::from_corners(corners),
            bg_intensity: bg,
            paper_intensity: paper,
            ink_intensity: rng.gen_range(20..60u8),
            light_gradient: rng.gen_range(-self.max_gradient..=self.max_gradient),
            hand_path: Vec::new(),
            hand: HandSprite::default(),
            noise_sigma: rng.gen_range(0.0..=self.max_noise),
            seed: self.seed,
        }
    }

    /// The same scene with a hand sweeping across the page over `frames`
    /// frames, entering and leaving from the lower right.
    pub fn build_with_hand(&self, frames: u64) -> SceneSpec {
        let mut spec = self.build();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0xA11D));
        let q = spec.true_quad;
        let c = q.centroid();
        let last = frames.saturating_sub(1);
        let a = (frames as f64 * 0.1) as u64;
        let b = (frames as f64 * 0.6) as u64;
        let lerp = |p: Point2, s: f64| Point2::new(c.x + s * (p.x - c.x), c.y + s * (p.y - c.y));
        let start = lerp(q.bl, rng.gen_range(0.4..0.7));
        let mid = lerp(q.tr, rng.gen_range(0.2..0.5));
        let end = lerp(q.br, rng.gen_range(0.3..0.6));
        spec.hand_path = vec![
            HandKey { frame: a, x: start.x, y: start.y },
            HandKey { frame: (a + b) / 2, x: mid.x, y: mid.y },
            HandKey { frame: b, x: end.x, y: end.y },
        ];
        spec.hand.arm_angle = rng.gen_range(35.0..70.0);
        debug_assert!(b < last || frames < 3);
        spec
    }
}
