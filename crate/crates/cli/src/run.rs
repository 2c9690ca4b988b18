//! Streams frames through a session and writes what comes out.
//!
//! A reader thread decodes frames into a bounded queue. The main thread
//! takes them in small batches: detection and ink extraction run across
//! the batch on the worker pool, while quad tracking and the canvas update
//! stay in frame order.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread;
use std::time::Duration;

use papertab::pipeline::{summarize_ms, PipelineConfig, Session, StageTimes, STAGES};
use papertab::{Exec, Raster};

use crate::error::{CliError, CliResult};
use crate::frames::FrameSource;
use crate::output::Outputs;
use crate::preview::Preview;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub input: PathBuf,
    pub output: PathBuf,
    pub events: Option<PathBuf>,
    pub diagnostics: Option<PathBuf>,
    /// Frames handed to the workers at once; 0 sizes it to the pool.
    pub batch: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub frames: u64,
    pub events: u64,
    pub times: Vec<StageTimes>,
}

fn default_batch() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn spawn_reader(mut source: FrameSource, depth: usize) -> Receiver<CliResult<Raster>> {
    let (tx, rx) = sync_channel(depth);
    thread::spawn(move || loop {
        match source.next_frame() {
            Ok(Some(f)) => {
                if tx.send(Ok(f)).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        }
    });
    rx
}

pub fn run(cfg: &PipelineConfig, opts: &RunOptions) -> CliResult<RunReport> {
    let source = FrameSource::open(&opts.input)?;
    let rate = source.rate();
    let mut outputs = Outputs::create(&opts.output, opts.events.as_deref(), opts.diagnostics.as_deref(), cfg, rate)?;
    let preview = match cfg.preview_port {
        Some(port) => {
            let p = Preview::start(port).map_err(|e| CliError::Input(format!("preview port {port}: {e}")))?;
            eprintln!("preview at http://{}/", p.addr());
            Some(p)
        }
        None => None,
    };
    let mut session = Session::with_exec(*cfg, Exec::default())?;
    session.set_diagnostics(opts.diagnostics.is_some());
    let batch = if opts.batch == 0 { default_batch() } else { opts.batch };
    let frames = spawn_reader(source, 2 * batch);
    let mut report = RunReport::default();
    let mut pending = Vec::with_capacity(batch);
    loop {
        // Block for one frame, then take whatever else is already decoded.
        match frames.recv() {
            Ok(f) => pending.push(f?),
            Err(_) => break,
        }
        while pending.len() < batch {
            match frames.try_recv() {
                Ok(f) => pending.push(f?),
                Err(_) => break,
            }
        }
        for out in session.process_batch(&pending)? {
            outputs.write(&out)?;
            if let (Some(p), Some(c)) = (&preview, &out.canvas) {
                p.publish(c);
            }
            report.frames += 1;
            report.events += out.events.len() as u64;
            report.times.push(out.times);
        }
        pending.clear();
    }
    outputs.finish()?;
    Ok(report)
}

/// Mean and 95th percentile per stage and for the whole frame.
pub fn timing_summary(times: &[StageTimes]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "timing over {} frames (ms)", times.len());
    let _ = writeln!(s, "{:<8} {:>8} {:>8}", "stage", "mean", "p95");
    for (i, name) in STAGES.iter().enumerate() {
        let stage: Vec<Duration> = times.iter().map(|t| t.0[i]).collect();
        let (mean, p95) = summarize_ms(&stage);
        let _ = writeln!(s, "{name:<8} {mean:>8.2} {p95:>8.2}");
    }
    let total: Vec<Duration> = times.iter().map(StageTimes::total).collect();
    let (mean, p95) = summarize_ms(&total);
    let _ = writeln!(s, "{:<8} {mean:>8.2} {p95:>8.2}", "total");
    s
}

/// Reads the `total` row back out of [`timing_summary`] text.
pub fn parse_total(summary: &str) -> Option<(f64, f64)> {
    let line = summary.lines().find(|l| l.starts_with("total "))?;
    let mut nums = line.split_whitespace().skip(1).map(str::parse::<f64>);
    Some((nums.next()?.ok()?, nums.next()?.ok()?))
}
