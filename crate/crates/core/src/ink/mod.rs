//! Rectified page to clean binary ink: local-mean thresholding, open/close
//! cleanup and component filtering that drops specks and the writer's hand.

pub mod components;
pub mod hand;
pub mod morphology;
pub mod threshold;

pub use components::{
    classify, filter_components, label_components, verdicts, BoundingBox, ComponentFilterConfig,
    ComponentStats, Connectivity, LabelMap, Verdict,
};
pub use hand::{hand_mass, HandConfig};
pub use morphology::{close, dilate, erode, open, StructuringElement};
pub use threshold::{adaptive_threshold, ThresholdConfig};

use crate::raster::{BinaryMask, Raster};

/// Ink is black on a white page.
pub fn render_ink(mask: &BinaryMask) -> Raster {
    let data = mask.bits().iter().map(|&b| if b { 0 } else { 255 }).collect();
    Raster::new(mask.width(), mask.height(), 1, data).expect("mask dimensions are positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_levels() {
        assert!(render_ink(&BinaryMask::new(3, 2)).data().iter().all(|&v| v == 255));
        assert!(render_ink(&BinaryMask::full(3, 2)).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn render_then_threshold_round_trips() {
        // Sparse strokes: every window keeps well over half of its pixels white.
        let m = BinaryMask::from_fn(40, 30, |x, y| x % 5 == 2 && y % 3 != 0);
        let page = render_ink(&m);
        for window in [3, 9, 29] {
            for offset_c in [0, 60, 127] {
                let back = adaptive_threshold(&page, &ThresholdConfig { window, offset_c }).unwrap();
                assert_eq!(back, m, "window {window} offset {offset_c}");
            }
        }
    }
}
