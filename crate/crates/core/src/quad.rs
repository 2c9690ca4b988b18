//! Paper mask to ordered corners: border tracing, largest contour, convex
//! hull, maximum-area quadrilateral and corner ordering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ink::{label_components, Connectivity};
use crate::raster::{cross, BinaryMask, Point2};

/// Closed outer border of one component, in tracing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<(i32, i32)>,
}

impl Contour {
    /// Shoelace area of the traced polygon through the pixel centres.
    pub fn area(&self) -> f64 {
        polygon_area(self.points.iter().map(|&(x, y)| Point2::new(x as f64, y as f64)))
    }

    pub fn to_points(&self) -> Vec<Point2> {
        self.points
            .iter()
            .map(|&(x, y)| Point2::new(x as f64, y as f64))
            .collect()
    }
}

/// Absolute shoelace area of a closed polygon.
pub fn polygon_area(points: impl IntoIterator<Item = Point2>) -> f64 {
    signed_area(&points.into_iter().collect::<Vec<_>>()).abs()
}

/// Positive when the vertices run TL -> TR -> BR in image coordinates.
pub fn signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    s / 2.0
}

// Clockwise on screen (y down): E, SE, S, SW, W, NW, N, NE.
const DIRS: [(i32, i32); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Outer borders of the 4-connected components of `mask`, one per
/// component in raster order of their first pixel. Each border is followed
/// clockwise through the 8-neighbourhood of pixels of that component only.
pub fn trace_contours(mask: &BinaryMask) -> Vec<Contour> {
    let lm = label_components(mask, Connectivity::Four);
    let (w, h) = (mask.width() as i32, mask.height() as i32);
    let labels = lm.labels();
    (1..=lm.len() as u32)
        .map(|l| {
            let (sx, sy) = lm.stats(l).seed;
            let inside = |x: i32, y: i32| {
                x >= 0 && y >= 0 && x < w && y < h && labels[(y * w + x) as usize] == l
            };
            trace_one(inside, (sx as i32, sy as i32), lm.stats(l).area)
        })
        .collect()
}

fn trace_one(inside: impl Fn(i32, i32) -> bool, start: (i32, i32), area: usize) -> Contour {
    let next_from = |p: (i32, i32), back: usize| {
        (1..=8).find_map(|k| {
            let d = (back + k) % 8;
            let q = (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
            inside(q.0, q.1).then_some((q, d))
        })
    };
    let mut points = vec![start];
    // The start pixel is the first in raster order, so its west neighbour is background.
    let Some((first, first_dir)) = next_from(start, 4) else {
        return Contour { points };
    };
    let (mut cur, mut dir) = (first, first_dir);
    let cap = 4 * area + 8;
    for _ in 0..cap {
        let back = (dir + if dir % 2 == 0 { 6 } else { 5 }) % 8;
        let (next, d) = next_from(cur, back).expect("arrived from a neighbour");
        if cur == start && next == first {
            break;
        }
        points.push(cur);
        cur = next;
        dir = d;
    }
    Contour { points }
}

/// Contour with the largest shoelace area; the earliest wins ties.
pub fn largest_contour(contours: &[Contour]) -> Result<&Contour> {
    let mut best: Option<(&Contour, f64)> = None;
    for c in contours {
        let a = c.area();
        if best.map_or(true, |(_, ba)| a > ba) {
            best = Some((c, a));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::EmptyInput)
}

/// Monotone-chain hull. Vertices come back with positive signed area in
/// image coordinates, starting from the smallest (x, y), with collinear
/// points dropped.
pub fn convex_hull(points: &[Point2]) -> Result<Vec<Point2>> {
    let mut pts: Vec<Point2> = points.to_vec();
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(Error::DegenerateHull);
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    Ok(hull)
}

/// Paper boundary with corners in TL, TR, BR, BL order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderedQuad {
    pub tl: Point2,
    pub tr: Point2,
    pub br: Point2,
    pub bl: Point2,
}

impl OrderedQuad {
    /// Takes the corners as given; see [`order_corners`] to canonicalise.
    pub const fn new(tl: Point2, tr: Point2, br: Point2, bl: Point2) -> Self {
        Self { tl, tr, br, bl }
    }

    /// Axis-aligned rectangle covering `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        )
    }

    /// Outer boundary of a `width` x `height` pixel grid.
    pub fn pixel_extent(width: usize, height: usize) -> Self {
        Self::rect(-0.5, -0.5, width as f64 - 0.5, height as f64 - 0.5)
    }

    pub fn corners(&self) -> [Point2; 4] {
        [self.tl, self.tr, self.br, self.bl]
    }

    pub fn from_corners(c: [Point2; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Self {
        Self::from_corners(self.corners().map(f))
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.corners())
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// All turns share a sign and none is zero.
    pub fn is_strictly_convex(&self) -> bool {
        let c = self.corners();
        if c.iter().any(|p| !p.is_finite()) {
            return false;
        }
        let turns: Vec<f64> = (0..4).map(|i| cross(c[i], c[(i + 1) % 4], c[(i + 2) % 4])).collect();
        turns.iter().all(|&t| t > 0.0) || turns.iter().all(|&t| t < 0.0)
    }

    pub fn centroid(&self) -> Point2 {
        let c = self.corners();
        Point2::new(
            c.iter().map(|p| p.x).sum::<f64>() / 4.0,
            c.iter().map(|p| p.y).sum::<f64>() / 4.0,
        )
    }

    /// Largest distance between matching corners.
    pub fn max_corner_displacement(&self, other: &OrderedQuad) -> f64 {
        self.corners()
            .iter()
            .zip(other.corners())
            .map(|(a, b)| a.dist(b))
            .fold(0.0, f64::max)
    }

    /// Whether a point lies inside or on the boundary.
    pub fn contains(&self, p: Point2) -> bool {
        let c = self.corners();
        let s: Vec<f64> = (0..4).map(|i| cross(c[i], c[(i + 1) % 4], p)).collect();
        s.iter().all(|&v| v >= 0.0) || s.iter().all(|&v| v <= 0.0)
    }

    /// Mirror image of the quad in a frame `width` pixels wide, reordered.
    pub fn flip_horizontal(&self, width: usize) -> Result<Self> {
        let w = width as f64 - 1.0;
        order_corners(self.corners().map(|p| Point2::new(w - p.x, p.y)))
    }
}

/// Hulls larger than this are simplified before the exhaustive search.
const MAX_EXHAUSTIVE_HULL: usize = 32;

/// The four hull vertices spanning the largest quadrilateral, ordered.
pub fn fit_quad(hull: &[Point2]) -> Result<OrderedQuad> {
    if hull.len() < 4 {
        return Err(Error::NotAQuad(hull.len()));
    }
    let reduced;
    let hull = if hull.len() > MAX_EXHAUSTIVE_HULL {
        reduced = simplify_closed(hull, MAX_EXHAUSTIVE_HULL);
        if reduced.len() < 4 {
            return Err(Error::NotAQuad(reduced.len()));
        }
        &reduced[..]
    } else {
        hull
    };
    let best = max_area_subset(hull);
    order_corners(best)
}

fn max_area_subset(hull: &[Point2]) -> [Point2; 4] {
    let n = hull.len();
    let mut best = [hull[0], hull[1], hull[2], hull[3]];
    let mut best_area = f64::NEG_INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                // area(i,j,k,l) = tri(i,j,k) + tri(i,k,l)
                let a1 = cross(hull[i], hull[j], hull[k]).abs();
                for l in k + 1..n {
                    let a = 0.5 * (a1 + cross(hull[i], hull[k], hull[l]).abs());
                    if a > best_area {
                        best_area = a;
                        best = [hull[i], hull[j], hull[k], hull[l]];
                    }
                }
            }
        }
    }
    best
}

/// Douglas-Peucker on a closed polygon with a growing tolerance until at
/// most `max_vertices` remain.
fn simplify_closed(poly: &[Point2], max_vertices: usize) -> Vec<Point2> {
    let mut eps = 0.5;
    loop {
        let out = simplify_eps(poly, eps);
        if out.len() <= max_vertices {
            return out;
        }
        eps *= 2.0;
    }
}

/// One Douglas-Peucker pass over a closed polygon.
fn simplify_eps(poly: &[Point2], eps: f64) -> Vec<Point2> {
    if poly.len() < 3 {
        return poly.to_vec();
    }
    // Split at vertex 0 and the vertex farthest from it.
    let far = (1..poly.len())
        .max_by(|&a, &b| poly[0].dist(poly[a]).total_cmp(&poly[0].dist(poly[b])))
        .unwrap_or(1);
    let mut keep = vec![false; poly.len()];
    keep[0] = true;
    keep[far] = true;
    dp_mark(poly, 0, far, eps, &mut keep);
    dp_mark_wrapping(poly, far, eps, &mut keep);
    poly.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect()
}

/// Tolerance used to straighten hull sides before [`fit_quad_sides`].
const SIDE_EPS: f64 = 2.0;

/// Quad spanned by the four longest sides of a simplified hull, with
/// corners at the intersections of consecutive sides.
///
/// Recovers a page whose corner is hidden (the hull then has a short
/// extra side cutting the corner off). Returns `None` when the hull is
/// already a quad, when the chosen sides meet at shallow angles, or when
/// a reconstructed corner lies implausibly far from the visible region.
pub fn fit_quad_sides(hull: &[Point2]) -> Option<OrderedQuad> {
    let poly = simplify_eps(hull, SIDE_EPS);
    let n = poly.len();
    if n <= 4 {
        return None;
    }
    let len = |i: usize| poly[i].dist(poly[(i + 1) % n]);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| len(b).total_cmp(&len(a)).then(a.cmp(&b)));
    let mut sides = idx[..4].to_vec();
    sides.sort_unstable();
    let shortest_kept = sides.iter().map(|&i| len(i)).fold(f64::INFINITY, f64::min);
    let longest_dropped = idx[4..].iter().map(|&i| len(i)).fold(0.0, f64::max);
    if longest_dropped >= 0.5 * shortest_kept {
        return None;
    }
    let mut corners = [Point2::default(); 4];
    for k in 0..4 {
        let (i, j) = (sides[k], sides[(k + 1) % 4]);
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (c, d) = (poly[j], poly[(j + 1) % n]);
        let (u, v) = (b.sub(a), d.sub(c));
        let den = u.x * v.y - u.y * v.x;
        if den.abs() < (20f64).to_radians().sin() * u.dist(Point2::default()) * v.dist(Point2::default()) {
            return None;
        }
        let t = ((c.x - a.x) * v.y - (c.y - a.y) * v.x) / den;
        let p = a.add(u.scale(t));
        // The corner sits past the end of side i and before the start of side j.
        let reach = p.dist(b).max(p.dist(c));
        if reach > 0.5 * len(i).min(len(j)) {
            return None;
        }
        corners[k] = p;
    }
    let q = order_corners(corners).ok()?;
    if !q.is_strictly_convex() {
        return None;
    }
    let outside = |p: Point2| {
        let c = q.corners();
        (0..4).map(|i| -cross(c[i], c[(i + 1) % 4], p) / c[i].dist(c[(i + 1) % 4])).fold(f64::NEG_INFINITY, f64::max)
    };
    poly.iter().all(|&p| outside(p) <= SIDE_EPS).then_some(q)
}

fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let len = a.dist(b);
    if len == 0.0 {
        p.dist(a)
    } else {
        cross(a, b, p).abs() / len
    }
}

fn dp_mark(poly: &[Point2], i: usize, j: usize, eps: f64, keep: &mut [bool]) {
    if j <= i + 1 {
        return;
    }
    let (idx, d) = (i + 1..j)
        .map(|k| (k, seg_dist(poly[k], poly[i], poly[j])))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty range");
    if d > eps {
        keep[idx] = true;
        dp_mark(poly, i, idx, eps, keep);
        dp_mark(poly, idx, j, eps, keep);
    }
}

fn dp_mark_wrapping(poly: &[Point2], far: usize, eps: f64, keep: &mut [bool]) {
    // Chain far..n-1 then back to 0, unrolled into a temporary.
    let chain: Vec<Point2> = poly[far..].iter().copied().chain(std::iter::once(poly[0])).collect();
    let mut k = vec![false; chain.len()];
    dp_mark(&chain, 0, chain.len() - 1, eps, &mut k);
    for (off, flag) in k.iter().enumerate() {
        if *flag && far + off < poly.len() {
            keep[far + off] = true;
        }
    }
}

/// Picks the corner minimising `key`; ties go to smaller y, then smaller x.
fn argmin_by(c: &[Point2; 4], key: impl Fn(&Point2) -> f64) -> usize {
    (0..4)
        .min_by(|&a, &b| {
            key(&c[a])
                .total_cmp(&key(&c[b]))
                .then(c[a].y.total_cmp(&c[b].y))
                .then(c[a].x.total_cmp(&c[b].x))
        })
        .expect("four corners")
}

/// TL = min(x+y), BR = max(x+y), TR = max(x-y), BL = min(x-y). When those
/// picks collide or do not run around the quad (e.g. a diamond), TL is kept
/// and the rest follow in boundary order.
pub fn order_corners(corners: [Point2; 4]) -> Result<OrderedQuad> {
    if corners.iter().any(|p| !p.is_finite()) {
        return Err(Error::NotConvex);
    }
    let tl = argmin_by(&corners, |p| p.x + p.y);
    let br = argmin_by(&corners, |p| -(p.x + p.y));
    let tr = argmin_by(&corners, |p| -(p.x - p.y));
    let bl = argmin_by(&corners, |p| p.x - p.y);
    let mut picked = [tl, tr, br, bl];
    picked.sort_unstable();
    if picked == [0, 1, 2, 3] {
        let q = OrderedQuad::new(corners[tl], corners[tr], corners[br], corners[bl]);
        if q.is_strictly_convex() && q.signed_area() > 0.0 {
            return Ok(q);
        }
    }
    // Boundary order by angle about the centroid; increasing angle runs TL -> TR -> BR in image coordinates.
    let cx = corners.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = corners.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&a, &b| {
        let ta = (corners[a].y - cy).atan2(corners[a].x - cx);
        let tb = (corners[b].y - cy).atan2(corners[b].x - cx);
        ta.total_cmp(&tb)
    });
    let rot = idx.iter().position(|&i| i == tl).expect("tl is a corner");
    let q = OrderedQuad::new(
        corners[idx[rot]],
        corners[idx[(rot + 1) % 4]],
        corners[idx[(rot + 2) % 4]],
        corners[idx[(rot + 3) % 4]],
    );
    if q.is_strictly_convex() && q.signed_area() > 0.0 {
        Ok(q)
    } else {
        Err(Error::NotConvex)
    }
}

/// Sub-pixel refinement of a coarse quad against the full-resolution border.
///
/// Each side is re-fitted by total least squares to the border pixels lying
/// within `band` of it, away from the corners, then pushed out half a pixel
/// (border pixel centres sit inside the true edge). Corners are the
/// intersections of adjacent sides. Sides with too little support keep the
/// coarse line. The coarse quad is returned when the result is not convex
/// or moves any corner farther than `band`.
pub fn refine_quad(border: &[Point2], coarse: &OrderedQuad, band: f64) -> OrderedQuad {
    let c = coarse.corners();
    let centre = coarse.centroid();
    let mut lines = [(Point2::default(), Point2::default()); 4];
    for i in 0..4 {
        let a = c[i];
        let b = c[(i + 1) % 4];
        let len = a.dist(b);
        let dir = b.sub(a).scale(1.0 / len);
        let support: Vec<Point2> = border
            .iter()
            .copied()
            .filter(|&p| {
                let t = (p.x - a.x) * dir.x + (p.y - a.y) * dir.y;
                t > 0.1 * len && t < 0.9 * len && seg_dist(p, a, b) <= band
            })
            .collect();
        let (mut origin, mut d) = (a, dir);
        if support.len() >= 8 && support.len() as f64 >= 0.25 * len {
            let n = support.len() as f64;
            let mx = support.iter().map(|p| p.x).sum::<f64>() / n;
            let my = support.iter().map(|p| p.y).sum::<f64>() / n;
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for p in &support {
                let (dx, dy) = (p.x - mx, p.y - my);
                sxx += dx * dx;
                sxy += dx * dy;
                syy += dy * dy;
            }
            let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
            let mut fd = Point2::new(theta.cos(), theta.sin());
            if fd.x * dir.x + fd.y * dir.y < 0.0 {
                fd = fd.scale(-1.0);
            }
            origin = Point2::new(mx, my);
            d = fd;
        }
        // Outward normal: away from the centre.
        let mut nrm = Point2::new(-d.y, d.x);
        let to_centre = centre.sub(origin);
        if nrm.x * to_centre.x + nrm.y * to_centre.y > 0.0 {
            nrm = nrm.scale(-1.0);
        }
        lines[i] = (origin.add(nrm.scale(0.5)), d);
    }
    let mut out = [Point2::default(); 4];
    for i in 0..4 {
        // corner i joins side i-1 and side i
        let (p1, d1) = lines[(i + 3) % 4];
        let (p2, d2) = lines[i];
        let den = d1.x * d2.y - d1.y * d2.x;
        if den.abs() < 1e-9 {
            return *coarse;
        }
        let t = ((p2.x - p1.x) * d2.y - (p2.y - p1.y) * d2.x) / den;
        out[i] = p1.add(d1.scale(t));
    }
    let q = OrderedQuad::from_corners(out);
    if !q.is_strictly_convex() || q.max_corner_displacement(coarse) > band {
        return *coarse;
    }
    q
}
