//! Binary erosion, dilation, opening and closing. Pixels outside the mask
//! read as background.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::BinaryMask;

/// Boolean kernel with an origin. Sides are odd.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    origin: (usize, usize),
}

impl StructuringElement {
    pub fn new(width: usize, height: usize, bits: Vec<bool>, origin: (usize, usize)) -> Result<Self> {
        if width % 2 == 0
            || height % 2 == 0
            || bits.len() != width * height
            || !bits.iter().any(|&b| b)
            || origin.0 >= width
            || origin.1 >= height
        {
            return Err(Error::BadStructuringElement);
        }
        Ok(Self {
            width,
            height,
            bits,
            origin,
        })
    }

    /// Full `side` x `side` square centred on its middle pixel.
    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side, vec![true; side * side], (side / 2, side / 2))
    }

    /// Filled disc of the given radius.
    pub fn disc(radius: usize) -> Self {
        let side = 2 * radius + 1;
        let r2 = (radius * radius + radius) as isize;
        let bits = (0..side * side)
            .map(|i| {
                let dx = (i % side) as isize - radius as isize;
                let dy = (i / side) as isize - radius as isize;
                dx * dx + dy * dy <= r2
            })
            .collect();
        Self {
            width: side,
            height: side,
            bits,
            origin: (radius, radius),
        }
    }

    /// Offsets of the set members relative to the origin.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let mut v = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.bits[y * self.width + x] {
                    v.push((x as isize - self.origin.0 as isize, y as isize - self.origin.1 as isize));
                }
            }
        }
        v
    }

    /// Offset ranges `(min_dx, max_dx, min_dy, max_dy)` when every bit is set.
    fn rect_span(&self) -> Option<(isize, isize, isize, isize)> {
        self.bits.iter().all(|&b| b).then(|| {
            let (ox, oy) = (self.origin.0 as isize, self.origin.1 as isize);
            (-ox, self.width as isize - 1 - ox, -oy, self.height as isize - 1 - oy)
        })
    }

    /// Point reflection through the origin.
    pub fn reflected(&self) -> Self {
        let mut bits = self.bits.clone();
        bits.reverse();
        Self {
            width: self.width,
            height: self.height,
            bits,
            origin: (self.width - 1 - self.origin.0, self.height - 1 - self.origin.1),
        }
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self::square(3).expect("3x3 square is valid")
    }
}

/// p survives when every offset `p + b` lands on foreground.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    erode_with(mask, se, Exec::default())
}

/// p is set when some `p - b` is foreground.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate_with(mask, se, Exec::default())
}

pub fn open(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    open_with(mask, se, Exec::default())
}

pub fn close(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    close_with(mask, se, Exec::default())
}

pub fn erode_with(mask: &BinaryMask, se: &StructuringElement, exec: Exec) -> BinaryMask {
    if let Some((x0, x1, y0, y1)) = se.rect_span() {
        return rect_sweep(mask, (x0, x1), (y0, y1), true, exec);
    }
    sweep(mask, &se.offsets(), true, exec)
}

pub fn dilate_with(mask: &BinaryMask, se: &StructuringElement, exec: Exec) -> BinaryMask {
    if let Some((x0, x1, y0, y1)) = se.rect_span() {
        return rect_sweep(mask, (-x1, -x0), (-y1, -y0), false, exec);
    }
    let reflected: Vec<_> = se.offsets().into_iter().map(|(x, y)| (-x, -y)).collect();
    sweep(mask, &reflected, false, exec)
}

pub fn open_with(mask: &BinaryMask, se: &StructuringElement, exec: Exec) -> BinaryMask {
    dilate_with(&erode_with(mask, se, exec), se, exec)
}

pub fn close_with(mask: &BinaryMask, se: &StructuringElement, exec: Exec) -> BinaryMask {
    erode_with(&dilate_with(mask, se, exec), se, exec)
}

/// Window spans above this slide a running count instead of summing offsets.
const SLIDE_FROM: u16 = 7;

/// Separable pass for full rectangles: a horizontal window count per row,
/// then a vertical window count over those results.
fn rect_sweep(mask: &BinaryMask, dx: (isize, isize), dy: (isize, isize), all: bool, exec: Exec) -> BinaryMask {
    let (w, h) = mask.dims();
    let src = mask.bits();
    let span_x = (dx.1 - dx.0 + 1) as u16;
    let span_y = (dy.1 - dy.0 + 1) as u16;
    let hit = move |count: u16, span: u16| if all { count == span } else { count > 0 };
    let mut horiz = vec![false; w * h];
    exec.for_each_row(&mut horiz, w, |y, row| {
        let line = &src[y * w..(y + 1) * w];
        if span_x > SLIDE_FROM {
            let at = |i: isize| (0..w as isize).contains(&i) && line[i as usize];
            let mut c: u16 = (dx.0..=dx.1).map(|d| at(d) as u16).sum();
            for (x, o) in row.iter_mut().enumerate() {
                *o = hit(c, span_x);
                let x = x as isize;
                c = c - at(x + dx.0) as u16 + at(x + dx.1 + 1) as u16;
            }
        } else {
            let mut acc = vec![0u16; w];
            window_sum(&mut acc, |d| shifted(line, d), dx);
            for (o, &c) in row.iter_mut().zip(&acc) {
                *o = hit(c, span_x);
            }
        }
    });
    let mut out = vec![false; w * h];
    if span_y > SLIDE_FROM {
        // Tall windows: one running count per column, slid down the image.
        let row = |r: isize| &horiz[r as usize * w..(r as usize + 1) * w];
        let mut acc = vec![0u16; w];
        for r in dy.0.max(0)..=dy.1.min(h as isize - 1) {
            add_row(&mut acc, row(r), true);
        }
        for (y, o) in out.chunks_mut(w).enumerate() {
            for (o, &c) in o.iter_mut().zip(&acc) {
                *o = hit(c, span_y);
            }
            let (leave, enter) = (y as isize + dy.0, y as isize + dy.1 + 1);
            if (0..h as isize).contains(&leave) {
                add_row(&mut acc, row(leave), false);
            }
            if (0..h as isize).contains(&enter) {
                add_row(&mut acc, row(enter), true);
            }
        }
    } else {
        exec.for_each_row(&mut out, w, |y, row| {
            let mut acc = vec![0u16; w];
            window_sum(&mut acc, |d| {
                let r = y as isize + d;
                if (0..h as isize).contains(&r) {
                    let r = r as usize;
                    (0, &horiz[r * w..(r + 1) * w])
                } else {
                    (0, &[][..])
                }
            }, dy);
            for (o, &c) in row.iter_mut().zip(&acc) {
                *o = hit(c, span_y);
            }
        });
    }
    BinaryMask::from_bits(w, h, out).expect("same dimensions")
}

fn add_row(acc: &mut [u16], row: &[bool], enter: bool) {
    for (a, &b) in acc.iter_mut().zip(row) {
        if enter {
            *a += b as u16;
        } else {
            *a -= b as u16;
        }
    }
}

/// The part of `row` seen at offset `d`: output index `start + i` reads `slice[i]`.
fn shifted(row: &[bool], d: isize) -> (usize, &[bool]) {
    let n = row.len() as isize;
    let start = (-d).clamp(0, n);
    let end = (n - d).clamp(0, n);
    if start >= end {
        return (0, &[]);
    }
    (start as usize, &row[(start + d) as usize..(end + d) as usize])
}

/// Adds the slice `part(d)` into `acc` for every `d` in the inclusive range.
fn window_sum<'a>(acc: &mut [u16], part: impl Fn(isize) -> (usize, &'a [bool]), range: (isize, isize)) {
    for d in range.0..=range.1 {
        let (start, slice) = part(d);
        for (a, &b) in acc[start..start + slice.len()].iter_mut().zip(slice) {
            *a += b as u16;
        }
    }
}

/// `all == true`: AND over the probe offsets (erosion); otherwise OR (dilation).
fn sweep(mask: &BinaryMask, offsets: &[(isize, isize)], all: bool, exec: Exec) -> BinaryMask {
    let (w, h) = mask.dims();
    let src = mask.bits();
    let min_dx = offsets.iter().map(|o| o.0).min().unwrap_or(0);
    let max_dx = offsets.iter().map(|o| o.0).max().unwrap_or(0);
    let min_dy = offsets.iter().map(|o| o.1).min().unwrap_or(0);
    let max_dy = offsets.iter().map(|o| o.1).max().unwrap_or(0);
    let rel: Vec<isize> = offsets.iter().map(|&(dx, dy)| dy * w as isize + dx).collect();
    let mut out = vec![false; w * h];
    exec.for_each_row(&mut out, w, |y, row| {
        let yi = y as isize;
        let rows_inside = yi + min_dy >= 0 && yi + max_dy < h as isize;
        for (x, o) in row.iter_mut().enumerate() {
            let xi = x as isize;
            let base = (yi * w as isize + xi) as isize;
            *o = if rows_inside && xi + min_dx >= 0 && xi + max_dx < w as isize {
                if all {
                    rel.iter().all(|&r| src[(base + r) as usize])
                } else {
                    rel.iter().any(|&r| src[(base + r) as usize])
                }
            } else {
                let probe = |&(dx, dy): &(isize, isize)| mask.get_or_false(xi + dx, yi + dy);
                if all {
                    offsets.iter().all(probe)
                } else {
                    offsets.iter().any(probe)
                }
            };
        }
    });
    BinaryMask::from_bits(w, h, out).expect("same dimensions")
}
