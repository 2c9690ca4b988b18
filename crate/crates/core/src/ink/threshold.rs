use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::{BinaryMask, Raster};

/// Local-mean binarization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Side of the square averaging window; odd, at least 3.
    pub window: usize,
    /// How far below the local mean a pixel must fall to count as ink.
    pub offset_c: u32,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            window: 31,
            offset_c: 12,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "threshold.window must be odd and >= 3, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

pub fn adaptive_threshold(gray: &Raster, cfg: &ThresholdConfig) -> Result<BinaryMask> {
    adaptive_threshold_with(gray, cfg, Exec::default())
}

/// A pixel is ink when it is strictly darker than its local mean minus
/// `offset_c`. The mean covers a `window`-sided square with edge pixels
/// replicated past the border, and is truncated toward zero.
pub fn adaptive_threshold_with(gray: &Raster, cfg: &ThresholdConfig, exec: Exec) -> Result<BinaryMask> {
    cfg.validate()?;
    if gray.channels() != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            actual: gray.channels(),
        });
    }
    let (w, h) = gray.dims();
    if cfg.window > w.min(h) {
        return Err(Error::WindowTooLarge {
            window: cfg.window,
            width: w,
            height: h,
        });
    }
    let r = cfg.window / 2;
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    // Integral image over the replicate-padded frame, one extra leading row/column of zeros.
    let iw = pw + 1;
    let mut integral = vec![0u64; iw * (ph + 1)];
    let data = gray.data();
    for py in 0..ph {
        let sy = py.saturating_sub(r).min(h - 1);
        let src = &data[sy * w..(sy + 1) * w];
        let mut run = 0u64;
        for px in 0..pw {
            let sx = px.saturating_sub(r).min(w - 1);
            run += src[sx] as u64;
            integral[(py + 1) * iw + px + 1] = integral[py * iw + px + 1] + run;
        }
    }
    let area = (cfg.window * cfg.window) as u64;
    let win = cfg.window;
    let offset = cfg.offset_c as i64;
    let mut bits = vec![false; w * h];
    exec.for_each_row(&mut bits, w, |y, row| {
        let top = y * iw;
        let bottom = (y + win) * iw;
        for (x, out) in row.iter_mut().enumerate() {
            let sum = integral[bottom + x + win] + integral[top + x]
                - integral[top + x + win]
                - integral[bottom + x];
            let mean = (sum / area) as i64;
            *out = (data[y * w + x] as i64) < mean - offset;
        }
    });
    BinaryMask::from_bits(w, h, bits)
}
