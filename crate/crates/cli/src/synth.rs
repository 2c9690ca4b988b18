//! Renders a scene description into a frame sequence.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use papertab::raster::flip_horizontal;
use papertab::synth::{SceneRenderer, SceneSpec};
use papertab::Raster;

use crate::config::{from_table, read_table};
use crate::error::{CliError, CliResult};
use crate::frames::write_png;
use crate::y4m::{Rate, Y4mWriter};

pub fn load_scene(path: &Path) -> CliResult<SceneSpec> {
    let spec: SceneSpec = from_table(read_table(path)?)?;
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

fn render(r: &SceneRenderer, t: u64, mirror: bool) -> Raster {
    let frame = r.render(t).0;
    if mirror {
        flip_horizontal(&frame)
    } else {
        frame
    }
}

/// Writes `frames` frames as numbered PNGs into a directory, or as Y4M
/// when `output` ends in `.y4m`.
pub fn synthesize(spec: &SceneSpec, frames: u64, output: &Path, mirror: bool) -> CliResult<()> {
    let r = SceneRenderer::new(spec)?;
    let video = output.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    if video {
        if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        let file = File::create(output).map_err(|e| CliError::io(output, e))?;
        let mut w = Y4mWriter::new(BufWriter::new(file), spec.frame_width, spec.frame_height, Rate::default())
            .map_err(|e| CliError::io(output, e))?;
        for t in 0..frames {
            w.write_frame(&render(&r, t, mirror)).map_err(|e| CliError::io(output, e))?;
        }
        w.finish().map_err(|e| CliError::io(output, e))?;
        return Ok(());
    }
    fs::create_dir_all(output).map_err(|e| CliError::io(output, e))?;
    let write = |t: u64| write_png(&output.join(format!("frame_{t:06}.png")), &render(&r, t, mirror));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..frames).into_par_iter().try_for_each(write)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..frames).try_for_each(write)
    }
}
