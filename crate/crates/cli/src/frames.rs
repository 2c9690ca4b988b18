//! Frame sources: a directory of numbered PNGs or a Y4M file.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use papertab::{BinaryMask, Raster};

use crate::error::{CliError, CliResult};
use crate::y4m::{Rate, Y4mReader};

pub enum FrameSource {
    Pngs { paths: Vec<PathBuf>, next: usize },
    Y4m { path: PathBuf, reader: Y4mReader<BufReader<File>> },
}

impl FrameSource {
    pub fn open(path: &Path) -> CliResult<Self> {
        if path.is_dir() {
            return Ok(FrameSource::Pngs {
                paths: numbered_pngs(path)?,
                next: 0,
            });
        }
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let reader = Y4mReader::new(BufReader::new(file)).map_err(|e| CliError::io(path, e))?;
        Ok(FrameSource::Y4m {
            path: path.to_path_buf(),
            reader,
        })
    }

    /// Frame rate to carry over to video outputs.
    pub fn rate(&self) -> Rate {
        match self {
            FrameSource::Pngs { .. } => Rate::default(),
            FrameSource::Y4m { reader, .. } => reader.rate(),
        }
    }

    pub fn next_frame(&mut self) -> CliResult<Option<Raster>> {
        match self {
            FrameSource::Pngs { paths, next } => {
                let Some(p) = paths.get(*next) else {
                    return Ok(None);
                };
                *next += 1;
                read_png(p).map(Some)
            }
            FrameSource::Y4m { path, reader } => reader.next_frame().map_err(|e| CliError::io(&*path, e)),
        }
    }
}

/// PNG files in `dir`, ordered by the number in their name.
pub fn numbered_pngs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if !path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
        let Ok(n) = digits.parse::<u64>() else {
            continue;
        };
        found.push((n, path));
    }
    if found.is_empty() {
        return Err(CliError::Input(format!("{}: no numbered PNG frames", dir.display())));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// 8-bit gray stays gray; anything else becomes RGB.
pub fn read_png(path: &Path) -> CliResult<Raster> {
    let img = image::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raster = match img {
        DynamicImage::ImageLuma8(g) => Raster::new(w, h, 1, g.into_raw()),
        other => Raster::new(w, h, 3, other.into_rgb8().into_raw()),
    };
    Ok(raster?)
}

pub fn write_png(path: &Path, frame: &Raster) -> CliResult<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let result = match frame.channels() {
        1 => image::GrayImage::from_raw(w, h, frame.data().to_vec()).map(|i| i.save(path)),
        _ => image::RgbImage::from_raw(w, h, frame.data().to_vec()).map(|i| i.save(path)),
    };
    match result {
        Some(Ok(())) => Ok(()),
        Some(Err(e)) => Err(CliError::Input(format!("{}: {e}", path.display()))),
        None => Err(CliError::Input(format!("{}: bad raster size", path.display()))),
    }
}

/// Set pixels white on black.
pub fn mask_image(mask: &BinaryMask) -> Raster {
    let data = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    Raster::new(mask.width(), mask.height(), 1, data).expect("mask dimensions are positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pngs_sort_numerically() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["f10.png", "f2.png", "f1.png", "cover.png"] {
            write_png(&dir.path().join(name), &Raster::filled(2, 2, 0)).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let names: Vec<String> = numbered_pngs(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["f1.png", "f2.png", "f10.png"]);
    }

    #[test]
    fn png_round_trip_keeps_channels() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Raster::from_fn(4, 3, |x, y| (x * 50 + y) as u8);
        let rgb = Raster::new(2, 1, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        for (name, r) in [("g.png", &gray), ("c.png", &rgb)] {
            let p = dir.path().join(name);
            write_png(&p, r).unwrap();
            assert_eq!(&read_png(&p).unwrap(), r);
        }
    }

    #[test]
    fn empty_directory_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = FrameSource::open(dir.path()).err().unwrap();
        assert_eq!(err.exit_code(), 1);
    }
}
