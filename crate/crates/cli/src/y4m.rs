//! Uncompressed YUV4MPEG2: only the luma plane carries content here.

use std::io::{self, BufRead, Read, Write};

use papertab::Raster;

/// Frame rate as a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate(pub u32, pub u32);

impl Default for Rate {
    fn default() -> Self {
        Rate(30, 1)
    }
}

pub struct Y4mReader<R> {
    inner: R,
    width: usize,
    height: usize,
    chroma: usize,
    rate: Rate,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn read_line<R: BufRead>(r: &mut R) -> io::Result<Option<String>> {
    let mut buf = Vec::new();
    if r.read_until(b'\n', &mut buf)? == 0 {
        return Ok(None);
    }
    if buf.pop() != Some(b'\n') {
        return Err(bad("truncated header line"));
    }
    String::from_utf8(buf).map(Some).map_err(|_| bad("header is not text"))
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> io::Result<Self> {
        let line = read_line(&mut inner)?.ok_or_else(|| bad("empty stream"))?;
        let mut tokens = line.split(' ');
        if tokens.next() != Some("YUV4MPEG2") {
            return Err(bad("not a YUV4MPEG2 stream"));
        }
        let (mut width, mut height, mut rate) = (0usize, 0usize, Rate::default());
        let mut colour = "420jpeg".to_string();
        for t in tokens.filter(|t| !t.is_empty()) {
            let (tag, val) = t.split_at(1);
            match tag {
                "W" => width = val.parse().map_err(|_| bad("bad width"))?,
                "H" => height = val.parse().map_err(|_| bad("bad height"))?,
                "C" => colour = val.to_string(),
                "F" => {
                    let (n, d) = val.split_once(':').ok_or_else(|| bad("bad frame rate"))?;
                    rate = Rate(n.parse().map_err(|_| bad("bad frame rate"))?, d.parse().map_err(|_| bad("bad frame rate"))?);
                }
                _ => {}
            }
        }
        if width == 0 || height == 0 {
            return Err(bad("missing frame size"));
        }
        let chroma = if colour.starts_with("420") {
            2 * width.div_ceil(2) * height.div_ceil(2)
        } else if colour.starts_with("mono") {
            0
        } else {
            return Err(bad(format!("unsupported colour space C{colour}")));
        };
        Ok(Self {
            inner,
            width,
            height,
            chroma,
            rate,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn rate(&self) -> Rate {
        self.rate
    }

    /// Luma of the next frame, or `None` at a clean end of stream.
    pub fn next_frame(&mut self) -> io::Result<Option<Raster>> {
        let Some(line) = read_line(&mut self.inner)? else {
            return Ok(None);
        };
        if !line.starts_with("FRAME") {
            return Err(bad("expected FRAME"));
        }
        let mut luma = vec![0u8; self.width * self.height];
        self.inner.read_exact(&mut luma)?;
        io::copy(&mut (&mut self.inner).take(self.chroma as u64), &mut io::sink()).and_then(|n| {
            if n == self.chroma as u64 {
                Ok(())
            } else {
                Err(io::ErrorKind::UnexpectedEof.into())
            }
        })?;
        Ok(Some(Raster::new(self.width, self.height, 1, luma).map_err(|e| bad(e.to_string()))?))
    }
}

/// Gray frames as 4:2:0 with neutral chroma.
pub struct Y4mWriter<W: Write> {
    inner: W,
    width: usize,
    height: usize,
    chroma: Vec<u8>,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut inner: W, width: usize, height: usize, rate: Rate) -> io::Result<Self> {
        writeln!(inner, "YUV4MPEG2 W{width} H{height} F{}:{} Ip A1:1 C420jpeg", rate.0, rate.1)?;
        Ok(Self {
            inner,
            width,
            height,
            chroma: vec![128; 2 * width.div_ceil(2) * height.div_ceil(2)],
        })
    }

    pub fn write_frame(&mut self, frame: &Raster) -> io::Result<()> {
        if frame.dims() != (self.width, self.height) || frame.channels() != 1 {
            return Err(bad(format!(
                "frame is {}x{}x{}, stream is {}x{} gray",
                frame.width(),
                frame.height(),
                frame.channels(),
                self.width,
                self.height
            )));
        }
        self.inner.write_all(b"FRAME\n")?;
        self.inner.write_all(frame.data())?;
        self.inner.write_all(&self.chroma)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let frames: Vec<Raster> = (0..3).map(|k| Raster::from_fn(5, 3, |x, y| (x * 40 + y * 7 + k) as u8)).collect();
        let mut w = Y4mWriter::new(Vec::new(), 5, 3, Rate(25, 1)).unwrap();
        for f in &frames {
            w.write_frame(f).unwrap();
        }
        let bytes = w.finish().unwrap();
        // header + 3 * (FRAME\n + 15 luma + 2 * 3 * 2 chroma)
        assert_eq!(bytes.len(), "YUV4MPEG2 W5 H3 F25:1 Ip A1:1 C420jpeg\n".len() + 3 * (6 + 15 + 12));
        let mut r = Y4mReader::new(&bytes[..]).unwrap();
        assert_eq!((r.dims(), r.rate()), ((5, 3), Rate(25, 1)));
        for f in &frames {
            assert_eq!(&r.next_frame().unwrap().unwrap(), f);
        }
        assert!(r.next_frame().unwrap().is_none());
    }

    #[test]
    fn mono_and_frame_params() {
        let bytes = b"YUV4MPEG2 W2 H2 Cmono\nFRAME Ixyz\n\x01\x02\x03\x04".to_vec();
        let mut r = Y4mReader::new(&bytes[..]).unwrap();
        assert_eq!(r.next_frame().unwrap().unwrap().data(), &[1, 2, 3, 4]);
    }

    #[test]
    fn malformed_streams() {
        assert!(Y4mReader::new(&b"P5\n"[..]).is_err());
        assert!(Y4mReader::new(&b"YUV4MPEG2 W4\n"[..]).is_err());
        assert!(Y4mReader::new(&b"YUV4MPEG2 W4 H4 C444\n"[..]).is_err());
        let mut r = Y4mReader::new(&b"YUV4MPEG2 W2 H2 Cmono\nFRAME\n\x01\x02"[..]).unwrap();
        assert!(r.next_frame().is_err());
        let mut w = Y4mWriter::new(Vec::new(), 2, 2, Rate::default()).unwrap();
        assert!(w.write_frame(&Raster::filled(3, 2, 0)).is_err());
    }
}
