//! Four-point perspective transform and the destination-driven unwarp that
//! produces the top-down page.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::quad::OrderedQuad;
use crate::raster::{cross, Point2, Raster};

/// Intensity written where the warp samples outside the camera frame.
pub const PAPER_WHITE: u8 = 255;

/// Projective map, normalised so `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub h: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Scales so the bottom-right entry is 1.
    pub fn from_matrix(h: [[f64; 3]; 3]) -> Result<Self> {
        let s = h[2][2];
        if !s.is_finite() || s.abs() < 1e-300 || h.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        let h = h.map(|row| row.map(|v| v / s));
        let out = Homography { h };
        // |det| relative to its Hadamard bound, so large pixel offsets in
        // the last column do not make a well-conditioned map look singular.
        let bound: f64 = (0..3)
            .map(|j| (0..3).map(|i| out.h[i][j].powi(2)).sum::<f64>().sqrt())
            .product();
        if out.determinant().abs() < 1e-12 * bound {
            return Err(Error::SingularSystem);
        }
        Ok(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.h;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.h;
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularSystem);
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Homography::from_matrix(adj.map(|row| row.map(|v| v / det)))
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Homography::from_matrix(matmul(&self.h, &other.h))
    }
}

pub(crate) fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Three of the four points (nearly) on one line.
fn has_collinear_triple(c: &[Point2; 4]) -> bool {
    let span = c
        .iter()
        .flat_map(|a| c.iter().map(move |b| a.dist(*b)))
        .fold(0.0, f64::max);
    if span == 0.0 || !span.is_finite() {
        return true;
    }
    let tol = 1e-12 * span * span;
    (0..4).any(|skip| {
        let t: Vec<Point2> = (0..4).filter(|&i| i != skip).map(|i| c[i]).collect();
        cross(t[0], t[1], t[2]).abs() <= tol
    })
}

/// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
fn conditioning(c: &[Point2; 4]) -> [[f64; 3]; 3] {
    let cx = c.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = c.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean = c.iter().map(|p| p.dist(Point2::new(cx, cy))).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean;
    [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]]
}

fn transform(t: &[[f64; 3]; 3], p: Point2) -> Point2 {
    Point2::new(
        t[0][0] * p.x + t[0][1] * p.y + t[0][2],
        t[1][0] * p.x + t[1][1] * p.y + t[1][2],
    )
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve8(mut a: [[f64; 8]; 8], mut b: [f64; 8]) -> Result<[f64; 8]> {
    for col in 0..8 {
        let piv = (col..8)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::SingularSystem);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..8 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 8];
    for row in (0..8).rev() {
        let s: f64 = (row + 1..8).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Homography taking each corner of `src` to the same corner of `dst`.
///
/// Both point sets are conditioned (centred, scaled) before the 8x8 system
/// is solved, then the result is mapped back.
pub fn homography_from_quad(src: &OrderedQuad, dst: &OrderedQuad) -> Result<Homography> {
    let s = src.corners();
    let d = dst.corners();
    if has_collinear_triple(&s) || has_collinear_triple(&d) {
        return Err(Error::SingularSystem);
    }
    let ts = conditioning(&s);
    let td = conditioning(&d);
    let mut a = [[0.0; 8]; 8];
    let mut b = [0.0; 8];
    for i in 0..4 {
        let p = transform(&ts, s[i]);
        let q = transform(&td, d[i]);
        a[2 * i] = [p.x, p.y, 1.0, 0.0, 0.0, 0.0, -p.x * q.x, -p.y * q.x];
        b[2 * i] = q.x;
        a[2 * i + 1] = [0.0, 0.0, 0.0, p.x, p.y, 1.0, -p.x * q.y, -p.y * q.y];
        b[2 * i + 1] = q.y;
    }
    let x = solve8(a, b)?;
    let hn = [[x[0], x[1], x[2]], [x[3], x[4], x[5]], [x[6], x[7], 1.0]];
    // td^-1 for a similarity [[s,0,tx],[0,s,ty]] is [[1/s,0,-tx/s],[0,1/s,-ty/s]].
    let inv_td = [
        [1.0 / td[0][0], 0.0, -td[0][2] / td[0][0]],
        [0.0, 1.0 / td[1][1], -td[1][2] / td[1][1]],
        [0.0, 0.0, 1.0],
    ];
    Homography::from_matrix(matmul(&inv_td, &matmul(&hn, &ts)))
}

/// Projective image of `p`.
pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2> {
    let m = &h.h;
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    if w.abs() < 1e-12 {
        return Err(Error::PointAtInfinity);
    }
    Ok(Point2::new(
        (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
        (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
    ))
}

/// Output raster size for an unwarp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetGeometry {
    pub out_width: usize,
    pub out_height: usize,
}

impl TargetGeometry {
    pub fn new(out_width: usize, out_height: usize) -> Self {
        Self {
            out_width: out_width.max(1),
            out_height: out_height.max(1),
        }
    }

    /// The output rectangle as a quad in output pixel coordinates.
    pub fn extent(&self) -> OrderedQuad {
        OrderedQuad::pixel_extent(self.out_width, self.out_height)
    }
}

/// Page shape forced onto the output, height over width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedAspect {
    None,
    #[default]
    A4,
    Letter,
}

impl FixedAspect {
    pub fn ratio(self) -> Option<f64> {
        match self {
            FixedAspect::None => None,
            FixedAspect::A4 => Some(std::f64::consts::SQRT_2),
            FixedAspect::Letter => Some(11.0 / 8.5),
        }
    }

    /// `width` wide and as tall as the aspect requires; `None` keeps `fallback_height`.
    pub fn geometry(self, width: usize, fallback_height: usize) -> TargetGeometry {
        match self.ratio() {
            Some(r) => TargetGeometry::new(width, (width as f64 * r).round() as usize),
            None => TargetGeometry::new(width, fallback_height),
        }
    }
}

/// Longer of each pair of opposite sides, rounded.
pub fn target_geometry(quad: &OrderedQuad) -> TargetGeometry {
    let w = quad.tr.dist(quad.tl).max(quad.br.dist(quad.bl));
    let h = quad.bl.dist(quad.tl).max(quad.br.dist(quad.tr));
    TargetGeometry::new(w.round() as usize, h.round() as usize)
}

/// Top-down view of `quad`, sized by [`target_geometry`].
pub fn unwarp(frame: &Raster, quad: &OrderedQuad) -> Result<Raster> {
    unwarp_to(frame, quad, target_geometry(quad), Exec::default())
}

/// Resamples the region inside `quad` onto a `geom`-sized raster.
///
/// Every output pixel is mapped into the frame and sampled bilinearly.
/// Samples that land within the frame's pixel footprint are clamped to the
/// nearest valid sample position; samples beyond it read as paper white.
pub fn unwarp_to(frame: &Raster, quad: &OrderedQuad, geom: TargetGeometry, exec: Exec) -> Result<Raster> {
    if frame.channels() != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            actual: frame.channels(),
        });
    }
    let h = homography_from_quad(&geom.extent(), quad)?;
    let (fw, fh) = frame.dims();
    let (max_x, max_y) = ((fw - 1) as f64, (fh - 1) as f64);
    let mut out = Raster::filled(geom.out_width, geom.out_height, PAPER_WHITE);
    let w = geom.out_width;
    let m = h.h;
    let src = frame.data();
    exec.for_each_row(out.data_mut(), w, |y, row| {
        let yf = y as f64;
        for (x, px) in row.iter_mut().enumerate() {
            // Same arithmetic as `apply_homography` and `bilinear_unchecked`,
            // with truncating casts standing in for `floor` on non-negative
            // values; `floor` is a libm call on baseline x86-64.
            let xf = x as f64;
            let d = m[2][0] * xf + m[2][1] * yf + m[2][2];
            if d.abs() < 1e-12 {
                continue;
            }
            let sx = (m[0][0] * xf + m[0][1] * yf + m[0][2]) / d;
            let sy = (m[1][0] * xf + m[1][1] * yf + m[1][2]) / d;
            if !(sx >= -0.5 && sy >= -0.5 && sx <= max_x + 0.5 && sy <= max_y + 0.5) {
                continue;
            }
            let (sx, sy) = (sx.clamp(0.0, max_x), sy.clamp(0.0, max_y));
            let (x0, y0) = (sx as usize, sy as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let x1 = (x0 + 1).min(fw - 1);
            let r0 = &src[y0 * fw..(y0 + 1) * fw];
            let r1 = &src[(y0 + 1).min(fh - 1) * fw..][..fw];
            let (p00, p10, p01, p11) = (r0[x0] as f64, r0[x1] as f64, r1[x0] as f64, r1[x1] as f64);
            let top = p00 + fx * (p10 - p00);
            let bottom = p01 + fx * (p11 - p01);
            // Non-negative, so the saturating cast rounds half-up like `round_intensity`.
            *px = (top + fy * (bottom - top) + 0.5) as u8;
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{SMatrix, SVector};
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn unit() -> OrderedQuad {
        OrderedQuad::rect(0., 0., 1., 1.)
    }

    fn assert_close(a: &Homography, b: &[[f64; 3]; 3], tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.h[i][j] - b[i][j]).abs() <= tol, "{:?} vs {:?}", a.h, b);
            }
        }
    }

    /// Unconditioned DLT solved with nalgebra's LU, independent of `solve8`.
    fn oracle(src: &OrderedQuad, dst: &OrderedQuad) -> [[f64; 3]; 3] {
        let s = src.corners();
        let d = dst.corners();
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (x, y, u, v) = (s[i].x, s[i].y, d[i].x, d[i].y);
            let r1 = [x, y, 1., 0., 0., 0., -x * u, -y * u];
            let r2 = [0., 0., 0., x, y, 1., -x * v, -y * v];
            for k in 0..8 {
                a[(2 * i, k)] = r1[k];
                a[(2 * i + 1, k)] = r2[k];
            }
            b[2 * i] = u;
            b[2 * i + 1] = v;
        }
        let x = a.lu().solve(&b).expect("non-singular");
        [[x[0], x[1], x[2]], [x[3], x[4], x[5]], [x[6], x[7], 1.0]]
    }

    #[test]
    fn identity_when_src_equals_dst() {
        let q = OrderedQuad::new(p(3., 4.), p(120., 10.), p(110., 90.), p(-5., 70.));
        let h = homography_from_quad(&q, &q).unwrap();
        assert_close(&h, &Homography::IDENTITY.h, 1e-12);
    }

    #[test]
    fn pure_scale() {
        let h = homography_from_quad(&unit(), &OrderedQuad::rect(0., 0., 2., 2.)).unwrap();
        assert_close(&h, &[[2., 0., 0.], [0., 2., 0.], [0., 0., 1.]], 1e-12);
        let q = apply_homography(&h, p(3., 4.)).unwrap();
        assert!((q.x - 6.0).abs() < 1e-12 && (q.y - 8.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_matches_oracle() {
        let trap = OrderedQuad::new(p(0., 0.), p(1., 0.), p(0.8, 1.), p(0.2, 1.));
        let h = homography_from_quad(&unit(), &trap).unwrap();
        assert_close(&h, &oracle(&unit(), &trap), 1e-12);
        for (s, d) in unit().corners().iter().zip(trap.corners()) {
            let m = apply_homography(&h, *s).unwrap();
            assert!(m.dist(d) <= 1e-9);
        }
    }

    #[test]
    fn singular_inputs() {
        let collinear = OrderedQuad::new(p(0., 0.), p(1., 0.), p(2., 0.), p(0., 1.));
        assert_eq!(homography_from_quad(&collinear, &unit()), Err(Error::SingularSystem));
        assert_eq!(homography_from_quad(&unit(), &collinear), Err(Error::SingularSystem));
    }

    #[test]
    fn point_at_infinity() {
        let h = Homography::from_matrix([[1., 0., 0.], [0., 1., 0.], [1., 0., 1.]]).unwrap();
        assert_eq!(apply_homography(&h, p(-1., 5.)), Err(Error::PointAtInfinity));
        assert_eq!(apply_homography(&Homography::IDENTITY, p(2.5, -1.)).unwrap(), p(2.5, -1.));
    }

    #[test]
    fn geometry_examples() {
        let r = OrderedQuad::rect(0., 0., 100., 50.);
        assert_eq!(target_geometry(&r), TargetGeometry::new(100, 50));
        // the same rectangle turned 90° about the origin, then ordered canonically
        let turned = r.corners().map(|c| p(-c.y, c.x));
        let rot = crate::quad::order_corners(turned).unwrap();
        assert_eq!(target_geometry(&rot), TargetGeometry::new(50, 100));
        let trap = OrderedQuad::new(p(0., 0.), p(100., 0.), p(80., 60.), p(20., 60.));
        // sides: |(20,60)| = 63.245..
        assert_eq!(target_geometry(&trap), TargetGeometry::new(100, 63));
        let dot = OrderedQuad::new(p(0., 0.), p(0.1, 0.), p(0.1, 0.1), p(0., 0.1));
        assert_eq!(target_geometry(&dot), TargetGeometry::new(1, 1));
    }

    #[test]
    fn fixed_aspect() {
        assert_eq!(FixedAspect::A4.geometry(400, 7), TargetGeometry::new(400, 566));
        assert_eq!(FixedAspect::Letter.geometry(850, 7), TargetGeometry::new(850, 1100));
        assert_eq!(FixedAspect::None.geometry(400, 7), TargetGeometry::new(400, 7));
    }

    #[test]
    fn unwarp_full_frame_is_identity() {
        let f = Raster::from_fn(37, 23, |x, y| ((x * 7 + y * 13) % 256) as u8);
        let out = unwarp(&f, &OrderedQuad::pixel_extent(37, 23)).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn unwarp_rotated_quad_rotates_back() {
        let (w, h) = (30usize, 20usize);
        let f = Raster::from_fn(w, h, |x, y| ((x * 11 + y * 29) % 256) as u8);
        let e = OrderedQuad::pixel_extent(w, h);
        // page top edge runs up the left side of the frame
        let quad = OrderedQuad::new(e.bl, e.tl, e.tr, e.br);
        let out = unwarp(&f, &quad).unwrap();
        assert_eq!(out.dims(), (h, w));
        // direct rotation: output (u, v) reads frame (v, h - 1 - u)
        let rotated = Raster::from_fn(h, w, |u, v| f.get(v, h - 1 - u));
        for (a, b) in out.data().iter().zip(rotated.data()) {
            assert!((*a as i16 - *b as i16).abs() <= 1);
        }
    }

    #[test]
    fn unwarp_outside_is_white() {
        let f = Raster::filled(10, 10, 0);
        let quad = OrderedQuad::rect(4.5, 4.5, 14.5, 14.5);
        let out = unwarp(&f, &quad).unwrap();
        assert_eq!(out.get(0, 0), 0);
        assert_eq!(out.get(9, 9), PAPER_WHITE);
    }

    #[test]
    fn exec_modes_agree() {
        let f = Raster::from_fn(64, 48, |x, y| ((x * x + y * 3) % 256) as u8);
        let q = OrderedQuad::new(p(5., 3.), p(60., 8.), p(55., 44.), p(2., 40.));
        let g = TargetGeometry::new(50, 40);
        assert_eq!(
            unwarp_to(&f, &q, g, Exec::Sequential).unwrap(),
            unwarp_to(&f, &q, g, Exec::Parallel).unwrap()
        );
    }

    #[test]
    fn unwarp_matches_pointwise_sampling() {
        let f = Raster::from_fn(64, 48, |x, y| ((x * 37 + y * y * 5) % 256) as u8);
        let q = OrderedQuad::new(p(-3.2, 4.1), p(58.7, -1.5), p(66.0, 45.3), p(4.4, 50.9));
        let g = TargetGeometry::new(71, 53);
        let out = unwarp_to(&f, &q, g, Exec::Sequential).unwrap();
        let h = homography_from_quad(&g.extent(), &q).unwrap();
        let (mx, my) = (63.0, 47.0);
        for y in 0..g.out_height {
            for x in 0..g.out_width {
                let s = apply_homography(&h, p(x as f64, y as f64)).unwrap();
                let want = if s.x >= -0.5 && s.y >= -0.5 && s.x <= mx + 0.5 && s.y <= my + 0.5 {
                    let v = crate::raster::sample_bilinear(&f, p(s.x.clamp(0.0, mx), s.y.clamp(0.0, my))).unwrap();
                    crate::raster::round_intensity(v)
                } else {
                    PAPER_WHITE
                };
                assert_eq!(out.get(x, y), want, "({x}, {y})");
            }
        }
    }

    fn arb_quad() -> impl Strategy<Value = OrderedQuad> {
        (
            0.0f64..600.0,
            0.0f64..400.0,
            60.0f64..400.0,
            60.0f64..300.0,
            proptest::collection::vec(-25.0f64..25.0, 8),
        )
            .prop_map(|(x, y, w, h, j)| {
                OrderedQuad::new(
                    p(x + j[0], y + j[1]),
                    p(x + w + j[2], y + j[3]),
                    p(x + w + j[4], y + h + j[5]),
                    p(x + j[6], y + h + j[7]),
                )
            })
    }

    proptest! {
        #[test]
        fn corners_round_trip(a in arb_quad(), b in arb_quad()) {
            let h = homography_from_quad(&a, &b).unwrap();
            for (s, d) in a.corners().iter().zip(b.corners()) {
                prop_assert!(apply_homography(&h, *s).unwrap().dist(d) <= 1e-9);
            }
            let inv = h.inverse().unwrap();
            let id = matmul(&h.h, &inv.h);
            let s = id[2][2];
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    // The last column carries offsets in pixels, up to ~1000 here.
                    let tol = if j == 2 && i < 2 { 1e-9 * 1000.0 } else { 1e-9 };
                    prop_assert!((id[i][j] / s - want).abs() <= tol, "{i}{j}: {:e}", id[i][j] / s - want);
                }
            }
        }

        #[test]
        fn composition(a in arb_quad(), b in arb_quad(), c in arb_quad()) {
            let ab = homography_from_quad(&a, &b).unwrap();
            let bc = homography_from_quad(&b, &c).unwrap();
            let ac = homography_from_quad(&a, &c).unwrap();
            let composed = bc.compose(&ab).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let tol = 1e-9 * ac.h[i][j].abs().max(1.0);
                    prop_assert!((composed.h[i][j] - ac.h[i][j]).abs() <= tol,
                        "{:?} vs {:?}", composed.h, ac.h);
                }
            }
        }
    }
}
