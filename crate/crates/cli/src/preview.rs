//! Read-only MJPEG stream of the latest canvas over HTTP.
//!
//! The pipeline only swaps in a new snapshot; each client thread encodes
//! whatever is newest when it is ready, so slow viewers skip frames
//! instead of holding the pipeline up.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use papertab::Raster;

const BOUNDARY: &str = "papertabframe";

#[derive(Default)]
struct Latest {
    generation: u64,
    frame: Option<Arc<Raster>>,
    closed: bool,
}

#[derive(Default)]
struct Shared {
    latest: Mutex<Latest>,
    changed: Condvar,
}

pub struct Preview {
    shared: Arc<Shared>,
    addr: SocketAddr,
}

impl Preview {
    /// Listens on `port` (0 picks a free one) on the loopback interface.
    pub fn start(port: u16) -> io::Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared::default());
        let accept = Arc::clone(&shared);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let s = Arc::clone(&accept);
                thread::spawn(move || {
                    let _ = serve(stream, &s);
                });
            }
        });
        Ok(Self { shared, addr })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn publish(&self, frame: &Raster) {
        let mut l = self.shared.latest.lock().expect("preview lock");
        l.generation += 1;
        l.frame = Some(Arc::new(frame.clone()));
        self.shared.changed.notify_all();
    }
}

impl Drop for Preview {
    fn drop(&mut self) {
        if let Ok(mut l) = self.shared.latest.lock() {
            l.closed = true;
        }
        self.shared.changed.notify_all();
    }
}

fn encode(frame: &Raster) -> io::Result<Vec<u8>> {
    let colour = if frame.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, 85)
        .encode(frame.data(), frame.width() as u32, frame.height() as u32, colour)
        .map_err(io::Error::other)?;
    Ok(out)
}

fn serve(mut stream: TcpStream, shared: &Shared) -> io::Result<()> {
    // The request itself does not matter: every path gets the stream.
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    while reader.read_line(&mut line)? > 2 {
        line.clear();
    }
    write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: multipart/x-mixed-replace; boundary={BOUNDARY}\r\nCache-Control: no-cache\r\nConnection: close\r\n\r\n"
    )?;
    let mut seen = 0;
    loop {
        let frame = {
            let mut l = shared.latest.lock().expect("preview lock");
            while l.generation == seen && !l.closed {
                l = shared.changed.wait_timeout(l, Duration::from_millis(500)).expect("preview lock").0;
            }
            if l.generation == seen {
                return Ok(());
            }
            seen = l.generation;
            l.frame.clone()
        };
        let Some(frame) = frame else { continue };
        let jpeg = encode(&frame)?;
        write!(stream, "--{BOUNDARY}\r\nContent-Type: image/jpeg\r\nContent-Length: {}\r\n\r\n", jpeg.len())?;
        stream.write_all(&jpeg)?;
        stream.write_all(b"\r\n")?;
        stream.flush()?;
    }
}
