//! Writers for rendered pages, events and diagnostics.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use papertab::pipeline::{Diagnostics, FrameOutput, OutputFormat, OutputMode, PipelineConfig};
use papertab::Raster;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::frames::{mask_image, write_png};
use crate::y4m::{Rate, Y4mWriter};

/// One rendered stream: numbered PNGs or a Y4M file.
enum Track {
    Pngs { dir: PathBuf, prefix: &'static str },
    Video { path: PathBuf, writer: Y4mWriter<BufWriter<File>>, blank: Raster },
}

impl Track {
    fn open(dir: &Path, name: &'static str, format: OutputFormat, cfg: &PipelineConfig, rate: Rate) -> CliResult<Self> {
        match format {
            OutputFormat::ImageSequence => Ok(Track::Pngs {
                dir: dir.to_path_buf(),
                prefix: name,
            }),
            OutputFormat::RawVideo => {
                let g = cfg
                    .fixed_geometry()
                    .ok_or_else(|| CliError::Config("raw-video output needs a fixed page size".into()))?;
                let path = dir.join(format!("{name}.y4m"));
                let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
                let writer = Y4mWriter::new(BufWriter::new(file), g.out_width, g.out_height, rate)
                    .map_err(|e| CliError::io(&path, e))?;
                Ok(Track::Video {
                    path,
                    writer,
                    blank: Raster::filled(g.out_width, g.out_height, 255),
                })
            }
        }
    }

    /// A frame with nothing to show is skipped in a PNG sequence and
    /// written blank in a video, which must not drop frames.
    fn write(&mut self, index: u64, frame: Option<&Raster>) -> CliResult<()> {
        match self {
            Track::Pngs { dir, prefix } => match frame {
                Some(f) => write_png(&dir.join(format!("{prefix}_{index:06}.png")), f),
                None => Ok(()),
            },
            Track::Video { path, writer, blank } => writer
                .write_frame(frame.unwrap_or(blank))
                .map_err(|e| CliError::io(&*path, e)),
        }
    }

    fn finish(self) -> CliResult<()> {
        if let Track::Video { path, writer, .. } = self {
            writer.finish().map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct EventRecord {
    frame: u64,
    event: papertab::pipeline::Event,
}

pub struct Outputs {
    canvas: Option<Track>,
    ink: Option<Track>,
    events_path: PathBuf,
    events: BufWriter<File>,
    diagnostics: Option<PathBuf>,
}

impl Outputs {
    pub fn create(dir: &Path, events: Option<&Path>, diagnostics: Option<&Path>, cfg: &PipelineConfig, rate: Rate) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        if let Some(d) = diagnostics {
            fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
        }
        let mode = cfg.output.mode;
        let format = cfg.output.format;
        let canvas = matches!(mode, OutputMode::Canvas | OutputMode::Both)
            .then(|| Track::open(dir, "canvas", format, cfg, rate))
            .transpose()?;
        let ink = matches!(mode, OutputMode::PerFrame | OutputMode::Both)
            .then(|| Track::open(dir, "ink", format, cfg, rate))
            .transpose()?;
        let events_path = events.map_or_else(|| dir.join("events.jsonl"), Path::to_path_buf);
        let file = File::create(&events_path).map_err(|e| CliError::io(&events_path, e))?;
        Ok(Self {
            canvas,
            ink,
            events: BufWriter::new(file),
            events_path,
            diagnostics: diagnostics.map(Path::to_path_buf),
        })
    }

    pub fn write(&mut self, out: &FrameOutput) -> CliResult<()> {
        if let Some(t) = &mut self.canvas {
            t.write(out.index, out.canvas.as_ref())?;
        }
        if let Some(t) = &mut self.ink {
            t.write(out.index, out.frame_ink.as_ref())?;
        }
        for &event in &out.events {
            let line = serde_json::to_string(&EventRecord { frame: out.index, event }).expect("plain record");
            writeln!(self.events, "{line}").map_err(|e| CliError::io(&self.events_path, e))?;
        }
        if let (Some(dir), Some(d)) = (&self.diagnostics, &out.diagnostics) {
            write_diagnostics(&dir.join(format!("frame_{:06}", out.index)), d)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.events.flush().map_err(|e| CliError::io(&self.events_path, e))?;
        for t in [self.canvas, self.ink].into_iter().flatten() {
            t.finish()?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Geometry<'a> {
    contour: &'a [papertab::Point2],
    hull: &'a [papertab::Point2],
    detected_quad: Option<papertab::quad::OrderedQuad>,
    smoothed_quad: Option<papertab::quad::OrderedQuad>,
    last_good_age: u64,
}

/// One directory per frame: an image per stage plus the geometry as JSON.
pub fn write_diagnostics(dir: &Path, d: &Diagnostics) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    if let Some(g) = &d.gray {
        write_png(&dir.join("1_gray.png"), g)?;
    }
    let masks = [
        ("2_paper_mask", &d.paper_mask),
        ("4_thresholded", &d.thresholded),
        ("5_cleaned", &d.cleaned),
        ("6_occlusion", &d.occlusion),
        ("7_kept", &d.kept),
    ];
    for (name, m) in masks {
        if let Some(m) = m {
            write_png(&dir.join(format!("{name}.png")), &mask_image(m))?;
        }
    }
    if let Some(u) = &d.unwarped {
        write_png(&dir.join("3_unwarped.png"), u)?;
    }
    let geometry = Geometry {
        contour: &d.contour,
        hull: &d.hull,
        detected_quad: d.detected_quad,
        smoothed_quad: d.smoothed_quad,
        last_good_age: d.last_good_age,
    };
    let path = dir.join("geometry.json");
    let text = serde_json::to_string_pretty(&geometry).expect("plain record");
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
