//! End-to-end acceptance checks. Each prints one PASS/FAIL line; the
//! process exits non-zero if any fails.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use papertab::ink::{
    adaptive_threshold, close, dilate, erode, label_components, open, Connectivity, StructuringElement,
    ThresholdConfig,
};
use papertab::perspective::{apply_homography, homography_from_quad};
use papertab::pipeline::{PipelineConfig, Session};
use papertab::quad::{convex_hull, fit_quad, OrderedQuad};
use papertab::raster::cross;
use papertab::synth::{resample_nearest, SceneRenderer, TiltedScene};
use papertab::{BinaryMask, Exec, Point2, Raster};
use papertab_cli::run::parse_total;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_papertab");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// Homographies

fn random_quad(rng: &mut ChaCha8Rng) -> OrderedQuad {
    loop {
        let mut c = |x0: f64, y0: f64| Point2::new(x0 + rng.gen_range(0.0..200.0), y0 + rng.gen_range(0.0..150.0));
        let q = OrderedQuad::new(c(0.0, 0.0), c(440.0, 0.0), c(440.0, 330.0), c(0.0, 330.0));
        if q.is_strictly_convex() && q.area() > 1000.0 {
            return q;
        }
    }
}

fn homography_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut residual, mut deviation) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (a, b) = (random_quad(&mut rng), random_quad(&mut rng));
        let h = homography_from_quad(&a, &b).expect("non-degenerate pair");
        for (s, d) in a.corners().iter().zip(b.corners()) {
            residual = residual.max(apply_homography(&h, *s).expect("finite").dist(d));
        }
        // Both factors carry the unit bottom-right entry, so the product is
        // compared as a homography, under the same normalization.
        let product = h.compose(&h.inverse().expect("invertible")).expect("finite");
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((product.h[i][j] - want).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        residual <= 1e-9 && deviation <= 1e-9 && secs < 1.0,
        format!("1000 pairs, corner residual {residual:.1e} px, |H*inv(H) - I| {deviation:.1e}, {secs:.3} s"),
    )
}

// Oracle suites

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    let density = rng.gen_range(0.2..0.7);
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density))
}

/// Breadth-first flood fill labels, 0 for background.
fn flood_labels(m: &BinaryMask, eight: bool) -> Vec<u32> {
    let (w, h) = m.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !m.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if m.bits()[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    labels
}

/// Same partition of the pixels, up to renaming of labels.
fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut ab = BTreeMap::new();
    let mut ba = BTreeMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        (x == 0) == (y == 0) && *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x
    })
}

fn random_se(rng: &mut ChaCha8Rng) -> StructuringElement {
    loop {
        let (w, h) = (2 * rng.gen_range(0..3) + 1, 2 * rng.gen_range(0..3) + 1);
        let bits: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.6)).collect();
        if let Ok(se) = StructuringElement::new(w, h, bits, (rng.gen_range(0..w), rng.gen_range(0..h))) {
            return se;
        }
    }
}

fn set_erode(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let offs = se.offsets();
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        offs.iter().all(|&(dx, dy)| m.get_or_false(x as isize + dx, y as isize + dy))
    })
}

fn set_dilate(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let offs = se.offsets();
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        offs.iter().any(|&(dx, dy)| m.get_or_false(x as isize - dx, y as isize - dy))
    })
}

fn nested_loop_threshold(g: &Raster, cfg: &ThresholdConfig) -> BinaryMask {
    let (w, h) = g.dims();
    let r = (cfg.window / 2) as isize;
    BinaryMask::from_fn(w, h, |x, y| {
        let mut sum = 0u64;
        for dy in -r..=r {
            for dx in -r..=r {
                let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                sum += g.get(sx, sy) as u64;
            }
        }
        let mean = (sum / (cfg.window * cfg.window) as u64) as i64;
        (g.get(x, y) as i64) < mean - cfg.offset_c as i64
    })
}

fn oracle_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut labelling = 0;
    for _ in 0..1000 {
        let m = random_mask(&mut rng, 64, 64);
        let four = same_partition(label_components(&m, Connectivity::Four).labels(), &flood_labels(&m, false));
        let eight = same_partition(label_components(&m, Connectivity::Eight).labels(), &flood_labels(&m, true));
        labelling += (four && eight) as usize;
    }
    let mut morphology = 0;
    for _ in 0..200 {
        let m = random_mask(&mut rng, 32, 32);
        let se = random_se(&mut rng);
        let ok = erode(&m, &se) == set_erode(&m, &se)
            && dilate(&m, &se) == set_dilate(&m, &se)
            && open(&m, &se) == set_dilate(&set_erode(&m, &se), &se)
            && close(&m, &se) == set_erode(&set_dilate(&m, &se), &se);
        morphology += ok as usize;
    }
    let mut threshold = 0;
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(20..64), rng.gen_range(20..64));
        let g = Raster::from_fn(w, h, |_, _| rng.gen());
        let cfg = ThresholdConfig {
            window: 2 * rng.gen_range(1..10) + 1,
            offset_c: rng.gen_range(0..40),
        };
        threshold += (adaptive_threshold(&g, &cfg).expect("valid") == nested_loop_threshold(&g, &cfg)) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        labelling == 1000 && morphology == 200 && threshold == 100 && secs < 30.0,
        format!("labelling {labelling}/1000, morphology {morphology}/200, threshold {threshold}/100, {secs:.2} s"),
    )
}

// Hull and quad fit

/// Directed hull edges: every other point lies strictly to the left, or on
/// the segment between the two ends.
fn half_plane_edges(points: &[Point2]) -> Vec<(Point2, Point2)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    let mut edges = Vec::new();
    for &a in &pts {
        for &b in &pts {
            if a == b {
                continue;
            }
            let on_segment = |p: Point2| {
                p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
            };
            if pts.iter().all(|&p| {
                p == a || p == b || {
                    let c = cross(a, b, p);
                    c > 0.0 || (c == 0.0 && on_segment(p))
                }
            }) {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn polygon_area(p: &[Point2]) -> f64 {
    let n = p.len();
    0.5 * (0..n).map(|i| p[i].x * p[(i + 1) % n].y - p[(i + 1) % n].x * p[i].y).sum::<f64>().abs()
}

fn exhaustive_quad_area(hull: &[Point2]) -> f64 {
    let n = hull.len();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    best = best.max(polygon_area(&[hull[i], hull[j], hull[k], hull[l]]));
                }
            }
        }
    }
    best
}

fn hull_and_quad_fit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hulls = 0;
    for _ in 0..500 {
        let n = rng.gen_range(3..40);
        // Small integer grid: duplicates and collinear runs are common.
        let pts: Vec<Point2> = (0..n)
            .map(|_| Point2::new(rng.gen_range(0..12) as f64, rng.gen_range(0..12) as f64))
            .collect();
        let oracle = half_plane_edges(&pts);
        let ok = match convex_hull(&pts) {
            Ok(h) => {
                let mut edges: Vec<_> = (0..h.len()).map(|i| (h[i], h[(i + 1) % h.len()])).collect();
                let mut want = oracle.clone();
                let key = |e: &(Point2, Point2)| (e.0.x, e.0.y, e.1.x, e.1.y);
                edges.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite"));
                want.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite"));
                edges == want
            }
            // Fewer than three distinct or all collinear: no proper hull.
            Err(_) => oracle.len() <= 2,
        };
        hulls += ok as usize;
    }
    let (mut fits, mut worst) = (0, 0.0f64);
    let mut tried = 0;
    while tried < 500 {
        let n = rng.gen_range(4..=12);
        let pts: Vec<Point2> = (0..n)
            .map(|_| {
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = rng.gen_range(50.0..200.0);
                Point2::new(320.0 + r * t.cos(), 240.0 + r * t.sin())
            })
            .collect();
        let hull = convex_hull(&pts).expect("spread points");
        if hull.len() < 4 {
            continue;
        }
        tried += 1;
        let q = fit_quad(&hull).expect("at least four vertices");
        let err = (polygon_area(&q.corners()) - exhaustive_quad_area(&hull)).abs();
        worst = worst.max(err);
        fits += (err <= 1e-9) as usize;
    }
    outcome(
        hulls == 500 && fits == 500,
        format!("hull {hulls}/500 match the half-plane oracle, quad fit {fits}/500 at the exhaustive maximum (worst {worst:.1e})"),
    )
}

// Static scenes

fn ink_of(r: &Raster) -> BinaryMask {
    BinaryMask::from_fn(r.width(), r.height(), |x, y| r.get(x, y) == 0)
}

fn static_scenes() -> Outcome {
    let mut good = 0;
    let (mut worst_err, mut worst_f1) = (0.0f64, 1.0f64);
    for seed in 1000..1050 {
        let spec = TiltedScene { seed, ..Default::default() }.build();
        let (frame, truth) = SceneRenderer::new(&spec).expect("valid scene").render(0);
        let mut s = Session::new(PipelineConfig::default()).expect("default config");
        let out = s.process_frame(&frame).expect("gray frame");
        let err = out.quad.map_or(f64::INFINITY, |q| q.max_corner_displacement(&truth.quad));
        let f1 = out.frame_ink.as_ref().map_or(0.0, |r| {
            let ink = ink_of(r);
            ink.f1(&resample_nearest(&truth.ink, ink.width(), ink.height()))
        });
        worst_err = worst_err.max(err);
        worst_f1 = worst_f1.min(f1);
        good += (err <= 2.0 && f1 >= 0.9) as usize;
    }
    outcome(
        good >= 48,
        format!("{good}/50 scenes with corner error <= 2 px and ink F1 >= 0.9 (worst error {worst_err:.2} px, worst F1 {worst_f1:.3})"),
    )
}

// Occlusion

fn occlusion_sessions() -> Outcome {
    let square = StructuringElement::square(7).expect("odd");
    let (mut min_f1, mut hand_pixels, mut sessions_ok) = (1.0f64, 0usize, 0);
    for k in 0..10u64 {
        let spec = TiltedScene { seed: 200 + k, ..Default::default() }.build_with_hand(120);
        let r = SceneRenderer::new(&spec).expect("valid scene");
        let mut s = Session::with_exec(PipelineConfig::default(), Exec::default()).expect("default config");
        let mut leaked = 0;
        for t in 0..120 {
            let (frame, truth) = r.render(t);
            let out = s.process_frame(&frame).expect("gray frame");
            let Some(canvas) = out.canvas else { continue };
            let (w, h) = canvas.dims();
            // Hand pixels: under the silhouette and away from any true stroke.
            let hand = resample_nearest(&truth.page_occlusion, w, h);
            let near_ink = dilate(&resample_nearest(&truth.ink, w, h), &square);
            leaked += (0..w * h)
                .filter(|&i| hand.bits()[i] && canvas.data()[i] == 0 && !near_ink.bits()[i])
                .count();
        }
        let ink = &s.canvas().expect("page seen").ink;
        let f1 = ink.f1(&resample_nearest(&spec.page_ink, ink.width(), ink.height()));
        min_f1 = min_f1.min(f1);
        hand_pixels += leaked;
        sessions_ok += (f1 >= 0.85 && leaked == 0) as usize;
    }
    outcome(
        sessions_ok == 10,
        format!("{sessions_ok}/10 sessions, lowest final F1 {min_f1:.3}, hand pixels rendered as ink {hand_pixels}"),
    )
}

// Command-line runs

fn papertab(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn synth(scene: &str, frames: u64, out: &Path, mirror: bool) {
    let mut args = vec![
        "synth".to_string(),
        "--scene".into(),
        fixture(scene).display().to_string(),
        "--frames".into(),
        frames.to_string(),
        "--output".into(),
        out.display().to_string(),
    ];
    if mirror {
        args.push("--mirror".into());
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = papertab(&args);
    assert!(o.status.success(), "synth failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn run_cli(input: &Path, output: &Path, extra: &[&str]) -> Result<String, String> {
    let (i, o) = (input.display().to_string(), output.display().to_string());
    let mut args = vec!["run", "--input", &i, "--output", &o];
    args.extend_from_slice(extra);
    let out = papertab(&args);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    if out.status.success() {
        Ok(stderr)
    } else {
        Err(stderr)
    }
}

/// Every file under `dir`, relative path to contents.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable output") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("inside").to_path_buf();
                files.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    files
}

fn determinism(work: &Path) -> Outcome {
    let frames = work.join("det_frames");
    synth("hand_session.toml", 120, &frames, false);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = work.join(format!("det_out_{k}"));
        if let Err(e) = run_cli(&frames, &out, &["--mode", "both"]) {
            return outcome(false, format!("run failed: {e}"));
        }
        outputs.push(tree(&out));
    }
    let same = outputs[0] == outputs[1];
    outcome(
        same && outputs[0].len() > 120,
        format!("{} output files, identical across two runs: {same}", outputs[0].len()),
    )
}

fn latency(work: &Path) -> Outcome {
    let video = work.join("latency.y4m");
    synth("hand_session.toml", 300, &video, false);
    let summary = match run_cli(&video, &work.join("latency_out"), &[]) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let frames_ok = summary.contains("timing over 300 frames");
    match parse_total(&summary) {
        Some((mean, p95)) => outcome(
            frames_ok && mean <= 50.0 && p95 <= 80.0,
            format!("300 frames at 640x480, mean {mean:.2} ms, p95 {p95:.2} ms"),
        ),
        None => outcome(false, format!("no timing summary in: {summary}")),
    }
}

fn handedness(work: &Path) -> Outcome {
    let plain = work.join("hand_plain");
    let mirrored = work.join("hand_mirrored");
    synth("hand_session.toml", 60, &plain, false);
    synth("hand_session.toml", 60, &mirrored, true);
    let right = work.join("right_out");
    let left = work.join("left_out");
    let runs = [
        run_cli(&plain, &right, &["--handedness", "right", "--mode", "both"]),
        run_cli(&mirrored, &left, &["--handedness", "left", "--mode", "both"]),
    ];
    if let Some(Err(e)) = runs.iter().find(|r| r.is_err()) {
        return outcome(false, format!("run failed: {e}"));
    }
    let (a, b) = (tree(&right), tree(&left));
    let same = a == b;
    outcome(
        same && a.len() > 60,
        format!("{} output files, left-handed mirrored run identical to right-handed run: {same}", a.len()),
    )
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let checks: [(&str, Box<dyn Fn() -> Outcome>); 8] = [
        ("homography exactness", Box::new(homography_exactness)),
        ("oracle equivalence suites", Box::new(oracle_suites)),
        ("convex hull and quad fit", Box::new(hull_and_quad_fit)),
        ("static tilted scenes", Box::new(static_scenes)),
        ("occlusion persistence", Box::new(occlusion_sessions)),
        ("determinism", Box::new(|| determinism(work.path()))),
        ("latency budget", Box::new(|| latency(work.path()))),
        ("handedness", Box::new(|| handedness(work.path()))),
    ];
    let mut failed = 0;
    for (name, check) in checks.iter() {
        let start = Instant::now();
        let o = check();
        let took = start.elapsed().as_secs_f64();
        println!("[{}] {name}: {} ({took:.1} s)", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
