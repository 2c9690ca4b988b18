//! The per-frame pipeline and the session state it threads through time.
//!
//! A frame goes through three phases:
//! [`detect`] (pure: flip, gray, segment, contour, hull, quad),
//! [`Session::advance`] (sequential: smooth the quad),
//! [`extract_ink`] (pure given the smoothed quad: unwarp, threshold,
//! cleanup, components, occlusion) and [`Session::commit`] (sequential:
//! canvas, page change, render). [`Session::process_frame`] runs them
//! back to back; [`Session::process_batch`] runs the pure phases across
//! frames in parallel and gives the same results.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ink::components::{filter_components, label_components, ComponentFilterConfig, Connectivity};
use crate::ink::morphology::{close_with, open_with, StructuringElement};
use crate::ink::threshold::{adaptive_threshold_with, ThresholdConfig};
use crate::ink::hand::{hand_mass, HandConfig};
use crate::ink::render_ink;
use crate::perspective::{target_geometry, unwarp_to, FixedAspect, TargetGeometry};
use crate::quad::{convex_hull, fit_quad, fit_quad_sides, largest_contour, refine_quad, trace_contours, OrderedQuad};
use crate::raster::{ensure_gray, BinaryMask, Point2, Raster};
use crate::segment::{apply_handedness, ClassicalSegmenter, Handedness, Segmenter, SegmenterConfig, SegmenterKind};
use crate::temporal::{grow_occlusion, hand_regions, InkCanvas, PageChangeDetector, QuadOutcome, QuadTrack, TemporalConfig, visible_corners};

/// Corner refinement searches this far, in pixels, from the fitted quad.
const REFINE_BAND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    PerFrame,
    #[default]
    Canvas,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    ImageSequence,
    RawVideo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub mode: OutputMode,
    pub format: OutputFormat,
    pub fixed_aspect: FixedAspect,
    /// Width of the rectified page in pixels; unset takes the width of the
    /// first page seen.
    pub page_width: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            mode: OutputMode::default(),
            format: OutputFormat::default(),
            fixed_aspect: FixedAspect::default(),
            page_width: None,
        }
    }
}

/// Cleanup applied to the thresholded page before component analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphologyConfig {
    /// Side of the square structuring element; 1 disables cleanup.
    pub size: usize,
    pub connectivity: Connectivity,
}

impl Default for MorphologyConfig {
    fn default() -> Self {
        Self {
            size: 3,
            connectivity: Connectivity::Eight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub handedness: Handedness,
    pub segmenter_backend: SegmenterKind,
    pub segmenter: SegmenterConfig,
    pub threshold: ThresholdConfig,
    pub morphology: MorphologyConfig,
    pub filter: ComponentFilterConfig,
    pub hand: HandConfig,
    pub temporal: TemporalConfig,
    pub output: OutputConfig,
    pub preview_port: Option<u16>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.segmenter.validate()?;
        self.threshold.validate()?;
        self.filter.validate()?;
        self.hand.validate()?;
        self.temporal.validate()?;
        if self.morphology.size % 2 == 0 {
            return Err(Error::InvalidConfig("morphology.size must be odd".into()));
        }
        if self.output.page_width.is_some_and(|w| w < self.threshold.window) {
            return Err(Error::InvalidConfig(
                "output.page_width must be at least threshold.window".into(),
            ));
        }
        if self.fixed_geometry().is_none() && self.output.format == OutputFormat::RawVideo {
            return Err(Error::InvalidConfig(
                "output.format raw-video needs a fixed aspect and page_width".into(),
            ));
        }
        Ok(())
    }

    fn segmenter_impl(&self) -> Box<dyn Segmenter> {
        match self.segmenter_backend {
            SegmenterKind::Classical => Box::new(ClassicalSegmenter {
                config: self.segmenter,
            }),
        }
    }

    /// Canvas size when it does not depend on the paper.
    pub fn fixed_geometry(&self) -> Option<TargetGeometry> {
        let width = self.output.page_width?;
        self.output.fixed_aspect.ratio()?;
        Some(self.output.fixed_aspect.geometry(width, 0))
    }

    /// Canvas size fixed by the first accepted page.
    fn canvas_geometry(&self, page: &OrderedQuad) -> TargetGeometry {
        let natural = target_geometry(page);
        let width = self
            .output
            .page_width
            .unwrap_or(natural.out_width)
            .max(self.threshold.window);
        let height = natural.out_height as f64 * width as f64 / natural.out_width as f64;
        self.output.fixed_aspect.geometry(width, height.round() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Event {
    DetectionLost,
    QuadRejected,
    PageBreak,
}

/// Stage names used in timing reports, in pipeline order.
pub const STAGES: [&str; 4] = ["detect", "track", "ink", "canvas"];

/// Wall time spent per stage on one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes(pub [Duration; 4]);

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.0.iter().sum()
    }
}

/// Intermediate products of one frame, kept only in diagnostics mode.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub gray: Option<Raster>,
    pub paper_mask: Option<BinaryMask>,
    pub contour: Vec<Point2>,
    pub hull: Vec<Point2>,
    pub detected_quad: Option<OrderedQuad>,
    pub smoothed_quad: Option<OrderedQuad>,
    pub last_good_age: u64,
    pub unwarped: Option<Raster>,
    pub thresholded: Option<BinaryMask>,
    pub cleaned: Option<BinaryMask>,
    pub occlusion: Option<BinaryMask>,
    pub kept: Option<BinaryMask>,
}

/// Result of the pure detection phase.
#[derive(Debug, Clone)]
pub struct Detection {
    pub gray: Raster,
    pub quad: Result<OrderedQuad>,
    /// Segmented page region, when segmentation succeeded.
    pub paper_mask: Option<BinaryMask>,
    /// Border and hull points, kept only in diagnostics mode.
    pub contour: Vec<Point2>,
    pub hull: Vec<Point2>,
    pub elapsed: Duration,
}

/// Flip, convert to gray and locate the page.
pub fn detect(frame: &Raster, cfg: &PipelineConfig, keep_intermediates: bool) -> Result<Detection> {
    let start = Instant::now();
    let gray = ensure_gray(&apply_handedness(frame, cfg.handedness))?;
    let mut det = Detection {
        gray,
        quad: Err(Error::NoPaperFound),
        paper_mask: None,
        contour: Vec::new(),
        hull: Vec::new(),
        elapsed: Duration::ZERO,
    };
    det.quad = locate(&mut det, cfg, keep_intermediates);
    det.elapsed = start.elapsed();
    Ok(det)
}

fn locate(det: &mut Detection, cfg: &PipelineConfig, keep: bool) -> Result<OrderedQuad> {
    let seg = cfg.segmenter_impl().segment(&det.gray)?;
    let contours = trace_contours(&seg.mask);
    let border = largest_contour(&contours)?.to_points();
    let hull = convex_hull(&border)?;
    let mut coarse = fit_quad(&hull)?;
    if let Some(q) = fit_quad_sides(&hull) {
        if q.area() > coarse.area() {
            coarse = q;
        }
    }
    let quad = refine_quad(&border, &coarse, REFINE_BAND);
    det.paper_mask = Some(seg.mask);
    if keep {
        det.contour = border;
        det.hull = hull;
    }
    Ok(quad)
}

/// Per-frame ink on the rectified page.
#[derive(Debug, Clone)]
pub struct InkFrame {
    pub unwarped: Raster,
    pub thresholded: BinaryMask,
    pub cleaned: BinaryMask,
    pub occlusion: BinaryMask,
    /// Components that survive filtering.
    pub ink: BinaryMask,
    pub elapsed: Duration,
}

pub fn extract_ink(gray: &Raster, quad: &OrderedQuad, geom: TargetGeometry, cfg: &PipelineConfig, exec: Exec) -> Result<InkFrame> {
    let start = Instant::now();
    let unwarped = unwarp_to(gray, quad, geom, exec)?;
    let thresholded = adaptive_threshold_with(&unwarped, &cfg.threshold, exec)?;
    let cleaned = if cfg.morphology.size > 1 {
        let se = StructuringElement::square(cfg.morphology.size)?;
        close_with(&open_with(&thresholded, &se, exec), &se, exec)
    } else {
        thresholded.clone()
    };
    let labels = label_components(&cleaned, cfg.morphology.connectivity);
    let occlusion = grow_occlusion(
        &hand_regions(&labels, &cfg.filter).union(&hand_mass(&unwarped, &cfg.hand, exec))?,
        cfg.filter.occlusion_margin,
        exec,
    );
    let ink = filter_components(&labels, &cfg.filter).difference(&occlusion)?;
    Ok(InkFrame {
        unwarped,
        thresholded,
        cleaned,
        occlusion,
        ink,
        elapsed: start.elapsed(),
    })
}

/// Everything a frame produced.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub index: u64,
    /// Rendered canvas; `None` until the canvas size is known.
    pub canvas: Option<Raster>,
    /// Rendered ink of the latest accepted frame.
    pub frame_ink: Option<Raster>,
    pub events: Vec<Event>,
    /// Smoothed quad used for this frame, if any.
    pub quad: Option<OrderedQuad>,
    pub times: StageTimes,
    pub diagnostics: Option<Box<Diagnostics>>,
}

/// Mutable state of one input stream.
#[derive(Debug)]
pub struct Session {
    cfg: PipelineConfig,
    exec: Exec,
    diagnostics: bool,
    track: QuadTrack,
    canvas: Option<InkCanvas>,
    page_change: PageChangeDetector,
    last_frame_ink: Option<Raster>,
    next_index: u64,
}

impl Session {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        Self::with_exec(cfg, Exec::default())
    }

    pub fn with_exec(cfg: PipelineConfig, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        let canvas = cfg.fixed_geometry().map(|g| InkCanvas::new(g.out_width, g.out_height));
        Ok(Self {
            track: QuadTrack::new(&cfg.temporal),
            page_change: PageChangeDetector::new(cfg.temporal.page_change),
            cfg,
            exec,
            diagnostics: false,
            canvas,
            last_frame_ink: None,
            next_index: 0,
        })
    }

    /// Keep per-stage intermediates in every [`FrameOutput`].
    pub fn set_diagnostics(&mut self, on: bool) {
        self.diagnostics = on;
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn quad_track(&self) -> &QuadTrack {
        &self.track
    }

    pub fn canvas(&self) -> Option<&InkCanvas> {
        self.canvas.as_ref()
    }

    pub fn geometry(&self) -> Option<TargetGeometry> {
        self.canvas.as_ref().map(|c| {
            let (w, h) = c.dims();
            TargetGeometry::new(w, h)
        })
    }

    pub fn frames_seen(&self) -> u64 {
        self.next_index
    }

    pub fn process_frame(&mut self, frame: &Raster) -> Result<FrameOutput> {
        let det = detect(frame, &self.cfg, self.diagnostics)?;
        let step = self.advance(&det);
        let ink = match step.geometry {
            Some(g) => Some(extract_ink(&det.gray, &step.quad.expect("accepted"), g, &self.cfg, self.exec)?),
            None => None,
        };
        self.commit(det, step, ink)
    }

    /// Same results as calling [`Session::process_frame`] on each frame in
    /// order; the pure phases run across frames at once.
    pub fn process_batch(&mut self, frames: &[Raster]) -> Result<Vec<FrameOutput>> {
        let keep = self.diagnostics;
        let cfg = self.cfg;
        let dets = self.exec.map(frames, |f| detect(f, &cfg, keep));
        let dets: Vec<Detection> = dets.into_iter().collect::<Result<_>>()?;
        let steps: Vec<TrackStep> = dets.iter().map(|d| self.advance(d)).collect();
        let jobs: Vec<(&Detection, &TrackStep)> = dets.iter().zip(&steps).collect();
        let inks = self.exec.map(&jobs, |(d, s)| {
            s.geometry
                .map(|g| extract_ink(&d.gray, &s.quad.expect("accepted"), g, &cfg, Exec::Sequential))
                .transpose()
        });
        let mut out = Vec::with_capacity(frames.len());
        for ((d, s), ink) in dets.into_iter().zip(steps).zip(inks) {
            out.push(self.commit(d, s, ink?)?);
        }
        Ok(out)
    }

    fn advance(&mut self, det: &Detection) -> TrackStep {
        let start = Instant::now();
        let visible = match (&det.paper_mask, self.track.current) {
            (Some(mask), Some(cur)) => visible_corners(mask, &cur),
            _ => [true; 4],
        };
        let outcome = self.track.update_visible(det.quad.as_ref().ok(), visible);
        let quad = self.track.current;
        let mut geometry = None;
        if outcome == QuadOutcome::Accepted {
            let q = quad.expect("accepted quad");
            if self.canvas.is_none() {
                let g = self.cfg.canvas_geometry(&q);
                self.canvas = Some(InkCanvas::new(g.out_width, g.out_height));
            }
            geometry = self.geometry();
        }
        TrackStep {
            outcome,
            quad,
            geometry,
            age: self.track.last_good_age,
            elapsed: start.elapsed(),
        }
    }

    fn commit(&mut self, det: Detection, step: TrackStep, ink: Option<InkFrame>) -> Result<FrameOutput> {
        let start = Instant::now();
        let t = self.next_index;
        self.next_index += 1;
        let mut events = Vec::new();
        match step.outcome {
            QuadOutcome::Lost => events.push(Event::DetectionLost),
            QuadOutcome::Rejected => events.push(Event::QuadRejected),
            QuadOutcome::Accepted => {}
        }
        if let (Some(ink), Some(canvas)) = (&ink, self.canvas.as_mut()) {
            if self.page_change.observe(canvas, &ink.ink, &ink.occlusion) {
                canvas.clear();
                events.push(Event::PageBreak);
            }
            canvas.update(&ink.ink, &ink.occlusion, t)?;
            self.last_frame_ink = Some(render_ink(&ink.ink));
        }
        let rendered = self.canvas.as_ref().map(|c| render_ink(&c.ink));
        let ink_time = ink.as_ref().map_or(Duration::ZERO, |i| i.elapsed);
        let diagnostics = self.diagnostics.then(|| {
            let mut d = Diagnostics {
                gray: Some(det.gray),
                paper_mask: det.paper_mask,
                contour: det.contour,
                hull: det.hull,
                detected_quad: det.quad.ok(),
                smoothed_quad: step.quad,
                last_good_age: step.age,
                ..Default::default()
            };
            if let Some(i) = ink {
                d.unwarped = Some(i.unwarped);
                d.thresholded = Some(i.thresholded);
                d.cleaned = Some(i.cleaned);
                d.occlusion = Some(i.occlusion);
                d.kept = Some(i.ink);
            }
            Box::new(d)
        });
        Ok(FrameOutput {
            index: t,
            canvas: rendered,
            frame_ink: self.last_frame_ink.clone(),
            events,
            quad: step.quad,
            times: StageTimes([det.elapsed, step.elapsed, ink_time, start.elapsed()]),
            diagnostics,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct TrackStep {
    outcome: QuadOutcome,
    quad: Option<OrderedQuad>,
    /// Set when this frame's ink should be extracted.
    geometry: Option<TargetGeometry>,
    age: u64,
    elapsed: Duration,
}

/// Mean and 95th percentile of a set of durations, in milliseconds.
pub fn summarize_ms(samples: &[Duration]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    let rank = ((0.95 * ms.len() as f64).ceil() as usize).clamp(1, ms.len());
    (mean, ms[rank - 1])
}
