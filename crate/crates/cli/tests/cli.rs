use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use papertab::ink::{label_components, Connectivity};
use papertab::quad::OrderedQuad;
use papertab::{BinaryMask, Raster};
use papertab_cli::frames::{numbered_pngs, read_png};
use papertab_cli::y4m::{Rate, Y4mReader, Y4mWriter};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_papertab");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn papertab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, scene: &str, frames: u32) -> PathBuf {
    let frames_dir = dir.path().join("frames");
    ok(papertab(&[
        "synth",
        "--scene",
        s(&fixture(scene)),
        "--frames",
        &frames.to_string(),
        "--output",
        s(&frames_dir),
    ]));
    frames_dir
}

fn events(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn as_mask(r: &Raster) -> BinaryMask {
    BinaryMask::from_bits(r.width(), r.height(), r.data().iter().map(|&v| v > 127).collect()).unwrap()
}

#[test]
fn png_session_writes_one_canvas_per_frame() {
    let dir = TempDir::new().unwrap();
    let frames = synth(&dir, "static_page.toml", 6);
    assert_eq!(numbered_pngs(&frames).unwrap().len(), 6);
    let out = dir.path().join("out");
    let res = ok(papertab(&["run", "--input", s(&frames), "--output", s(&out)]));
    assert!(String::from_utf8_lossy(&res.stderr).contains("timing over 6 frames"));

    let canvases = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("canvas_"))
        .count();
    assert_eq!(canvases, 6);
    let first = read_png(&out.join("canvas_000000.png")).unwrap();
    assert!(first.data().iter().all(|&v| v == 0 || v == 255));
    assert!(first.data().iter().any(|&v| v == 0), "the page has writing");
    assert!(events(&out.join("events.jsonl")).is_empty());
}

#[test]
fn per_frame_mode_writes_ink_only() {
    let dir = TempDir::new().unwrap();
    let frames = synth(&dir, "static_page.toml", 2);
    let out = dir.path().join("out");
    ok(papertab(&["run", "--input", s(&frames), "--output", s(&out), "--mode", "per-frame"]));
    assert!(out.join("ink_000000.png").exists());
    assert!(out.join("ink_000001.png").exists());
    assert!(!out.join("canvas_000000.png").exists());
}

#[test]
fn bad_config_value_names_the_key() {
    let dir = TempDir::new().unwrap();
    let frames = synth(&dir, "static_page.toml", 1);
    let res = papertab(&[
        "run",
        "--input",
        s(&frames),
        "--output",
        s(&dir.path().join("out")),
        "--config",
        s(&fixture("pipeline.toml")),
        "--set",
        "threshold.window=\"wide\"",
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("threshold.window"));

    let res = papertab(&["run", "--input", s(&frames), "--output", s(&dir.path().join("out")), "--set", "threshold.window=4"]);
    assert_eq!(res.status.code(), Some(2), "even window is rejected");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let res = papertab(&["run", "--input", s(&dir.path().join("nope")), "--output", s(&dir.path().join("out"))]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn raw_video_needs_a_fixed_page_size() {
    let dir = TempDir::new().unwrap();
    let frames = synth(&dir, "static_page.toml", 3);
    let out = dir.path().join("out");
    let res = papertab(&["run", "--input", s(&frames), "--output", s(&out), "--format", "raw-video", "--fixed-aspect", "none"]);
    assert_eq!(res.status.code(), Some(2));

    ok(papertab(&[
        "run",
        "--input",
        s(&frames),
        "--output",
        s(&out),
        "--format",
        "raw-video",
        "--fixed-aspect",
        "a4",
        "--page-width",
        "320",
    ]));
    let mut r = Y4mReader::new(std::io::BufReader::new(fs::File::open(out.join("canvas.y4m")).unwrap())).unwrap();
    assert_eq!(r.dims(), (320, 453));
    let mut n = 0;
    while let Some(f) = r.next_frame().unwrap() {
        assert_eq!(f.dims(), (320, 453));
        n += 1;
    }
    assert_eq!(n, 3);
}

#[test]
fn y4m_input_matches_png_input() {
    let dir = TempDir::new().unwrap();
    let video = dir.path().join("scene.y4m");
    ok(papertab(&["synth", "--scene", s(&fixture("static_page.toml")), "--frames", "2", "--output", s(&video)]));
    let frames = synth(&dir, "static_page.toml", 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(papertab(&["run", "--input", s(&video), "--output", s(&a)]));
    ok(papertab(&["run", "--input", s(&frames), "--output", s(&b)]));
    for name in ["canvas_000000.png", "canvas_000001.png"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn black_stream_reports_every_frame_lost() {
    let dir = TempDir::new().unwrap();
    let video = dir.path().join("black.y4m");
    let mut w = Y4mWriter::new(fs::File::create(&video).unwrap(), 64, 48, Rate::default()).unwrap();
    for _ in 0..5 {
        w.write_frame(&Raster::filled(64, 48, 0)).unwrap();
    }
    w.finish().unwrap();
    let out = dir.path().join("out");
    ok(papertab(&[
        "run",
        "--input",
        s(&video),
        "--output",
        s(&out),
        "--fixed-aspect",
        "a4",
        "--page-width",
        "64",
    ]));
    let ev = events(&out.join("events.jsonl"));
    assert_eq!(ev.len(), 5);
    for (i, e) in ev.iter().enumerate() {
        assert_eq!(e["frame"], i as u64);
        assert_eq!(e["event"], "detection-lost");
    }
    // With no page seen yet, the canvas is a blank sheet at the fixed size.
    let c = read_png(&out.join("canvas_000004.png")).unwrap();
    assert_eq!(c.dims(), (64, 91));
    assert!(c.data().iter().all(|&v| v == 255));
}

#[test]
fn diagnostics_hold_their_invariants() {
    let dir = TempDir::new().unwrap();
    let frames = synth(&dir, "hand_session.toml", 40);
    let diag = dir.path().join("diag");
    ok(papertab(&[
        "run",
        "--input",
        s(&frames),
        "--output",
        s(&dir.path().join("out")),
        "--diagnostics",
        s(&diag),
    ]));
    let mut kept_dims = None;
    for t in 0..40 {
        let d = diag.join(format!("frame_{t:06}"));
        let paper = as_mask(&read_png(&d.join("2_paper_mask.png")).unwrap());
        assert_eq!(label_components(&paper, Connectivity::Four).len(), 1, "frame {t}");

        let geometry: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("geometry.json")).unwrap()).unwrap();
        let smoothed: OrderedQuad = serde_json::from_value(geometry["smoothed_quad"].clone()).unwrap();
        assert!(smoothed.is_strictly_convex(), "frame {t}");

        let kept = read_png(&d.join("7_kept.png")).unwrap().dims();
        assert_eq!(*kept_dims.get_or_insert(kept), kept, "frame {t}");
    }
}
