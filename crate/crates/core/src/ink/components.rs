use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentStats {
    pub area: usize,
    pub bbox: BoundingBox,
    pub border_contact: bool,
    /// First pixel of the component in raster order.
    pub seed: (usize, usize),
}

/// Per-pixel component labels; 0 is background, components are `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    stats: Vec<ComponentStats>,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Stats for label `l` (1-based).
    pub fn stats(&self, l: u32) -> &ComponentStats {
        &self.stats[l as usize - 1]
    }

    pub fn all_stats(&self) -> &[ComponentStats] {
        &self.stats
    }

    /// Mask of the pixels whose label satisfies `keep`.
    pub fn select(&self, mut keep: impl FnMut(u32) -> bool) -> BinaryMask {
        let table: Vec<bool> = std::iter::once(false)
            .chain((1..=self.stats.len() as u32).map(&mut keep))
            .collect();
        let bits = self.labels.iter().map(|&l| table[l as usize]).collect();
        BinaryMask::from_bits(self.width, self.height, bits).expect("same dimensions")
    }

    /// Recounts every statistic from the label grid.
    pub fn check_consistency(&self) -> Result<()> {
        let n = self.stats.len();
        let mut area = vec![0usize; n];
        let mut seen = vec![false; n];
        for (i, &l) in self.labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let k = l as usize - 1;
            if k >= n {
                return Err(Error::InvalidRaster(format!("label {l} out of range")));
            }
            let (x, y) = (i % self.width, i / self.width);
            let s = &self.stats[k];
            if !seen[k] && s.seed != (x, y) {
                return Err(Error::InvalidRaster(format!("label {l} seed mismatch")));
            }
            seen[k] = true;
            area[k] += 1;
            if x < s.bbox.min_x || x > s.bbox.max_x || y < s.bbox.min_y || y > s.bbox.max_y {
                return Err(Error::InvalidRaster(format!("label {l} outside bbox")));
            }
        }
        for (k, s) in self.stats.iter().enumerate() {
            if area[k] != s.area {
                return Err(Error::InvalidRaster(format!("label {} area", k + 1)));
            }
            let touches = s.bbox.min_x == 0
                || s.bbox.min_y == 0
                || s.bbox.max_x + 1 == self.width
                || s.bbox.max_y + 1 == self.height;
            if touches != s.border_contact {
                return Err(Error::InvalidRaster(format!("label {} border flag", k + 1)));
            }
        }
        Ok(())
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let ra = find(parent, a);
    let rb = find(parent, b);
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Two-pass union-find labelling. Labels follow the raster order of each
/// component's first pixel.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMap {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut prov = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            let mut cur = 0u32;
            let mut link = |n: u32, parent: &mut Vec<u32>| {
                if n != 0 {
                    cur = if cur == 0 { find(parent, n) } else { union(parent, cur, n) };
                }
            };
            if x > 0 {
                link(prov[i - 1], &mut parent);
            }
            if y > 0 {
                link(prov[i - w], &mut parent);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        link(prov[i - w - 1], &mut parent);
                    }
                    if x + 1 < w {
                        link(prov[i - w + 1], &mut parent);
                    }
                }
            }
            if cur == 0 {
                cur = parent.len() as u32;
                parent.push(cur);
            }
            prov[i] = cur;
        }
    }

    let mut remap = vec![0u32; parent.len()];
    let mut stats: Vec<ComponentStats> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if prov[i] == 0 {
                continue;
            }
            let root = find(&mut parent, prov[i]) as usize;
            if remap[root] == 0 {
                stats.push(ComponentStats {
                    area: 0,
                    bbox: BoundingBox {
                        min_x: x,
                        min_y: y,
                        max_x: x,
                        max_y: y,
                    },
                    border_contact: false,
                    seed: (x, y),
                });
                remap[root] = stats.len() as u32;
            }
            let l = remap[root];
            prov[i] = l;
            let s = &mut stats[l as usize - 1];
            s.area += 1;
            s.bbox.min_x = s.bbox.min_x.min(x);
            s.bbox.max_x = s.bbox.max_x.max(x);
            s.bbox.max_y = y;
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                s.border_contact = true;
            }
        }
    }
    LabelMap {
        width: w,
        height: h,
        labels: prov,
        stats,
    }
}

/// Rules separating pen strokes from specks and from the writer's hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentFilterConfig {
    /// Components smaller than this are noise.
    pub min_area: usize,
    /// Components larger than this fraction of the image are a palm.
    pub max_area_fraction: f64,
    /// Drop large components that touch the image border.
    pub reject_border_blobs: bool,
    /// Border-touching components up to this area survive (stroke ends, fingertips aside).
    pub finger_exemption: usize,
    /// Growth applied to rejected hand components when marking occlusion.
    pub occlusion_margin: usize,
}

impl Default for ComponentFilterConfig {
    fn default() -> Self {
        Self {
            min_area: 12,
            max_area_fraction: 0.25,
            reject_border_blobs: true,
            finger_exemption: 400,
            occlusion_margin: 5,
        }
    }
}

impl ComponentFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_area < 1 {
            return Err(Error::InvalidConfig("filter.min_area must be >= 1".into()));
        }
        if !(self.max_area_fraction > 0.0 && self.max_area_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "filter.max_area_fraction must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Why a component was kept or dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Speck,
    Palm,
    BorderBlob,
}

impl Verdict {
    /// Rejected as part of the hand rather than as noise.
    pub fn is_hand(self) -> bool {
        matches!(self, Verdict::Palm | Verdict::BorderBlob)
    }
}

pub fn classify(s: &ComponentStats, image_area: usize, cfg: &ComponentFilterConfig) -> Verdict {
    if s.area < cfg.min_area {
        Verdict::Speck
    } else if s.area as f64 > cfg.max_area_fraction * image_area as f64 {
        Verdict::Palm
    } else if cfg.reject_border_blobs && s.border_contact && s.area > cfg.finger_exemption {
        Verdict::BorderBlob
    } else {
        Verdict::Keep
    }
}

/// Per-label verdicts, index 0 unused.
pub fn verdicts(lm: &LabelMap, cfg: &ComponentFilterConfig) -> Vec<Verdict> {
    let area = lm.width * lm.height;
    std::iter::once(Verdict::Speck)
        .chain(lm.stats.iter().map(|s| classify(s, area, cfg)))
        .collect()
}

/// Union of the components that pass every rule.
pub fn filter_components(lm: &LabelMap, cfg: &ComponentFilterConfig) -> BinaryMask {
    let v = verdicts(lm, cfg);
    lm.select(|l| v[l as usize] == Verdict::Keep)
}
