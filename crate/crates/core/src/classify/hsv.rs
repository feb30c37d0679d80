//! Pixel-level HSV threshold detector with cluster-size filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{filter_components_by_size, BinaryMask, Connectivity, Hsv, ImageHsv};

/// Inclusive channel ranges on an 8-bit scale plus cluster-size bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsvThresholdConfig {
    pub h_range: [f64; 2],
    pub s_range: [f64; 2],
    pub v_range: [f64; 2],
    pub min_size: usize,
    pub max_size: usize,
}

impl HsvThresholdConfig {
    /// Low-saturation, bright pixels in clusters of 1,200 to 45,000 pixels.
    pub fn white_flowers() -> Self {
        Self {
            h_range: [0.0, 255.0],
            s_range: [0.0, 32.0],
            v_range: [139.0, 255.0],
            min_size: 1200,
            max_size: 45_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("h", self.h_range),
            ("s", self.s_range),
            ("v", self.v_range),
        ] {
            if !(lo <= hi) {
                return Err(Error::invalid(format!(
                    "{name} range [{lo}, {hi}] is empty"
                )));
            }
        }
        if self.min_size > self.max_size {
            return Err(Error::invalid(format!(
                "min_size {} exceeds max_size {}",
                self.min_size, self.max_size
            )));
        }
        Ok(())
    }

    /// Channel test only, before size filtering.
    pub fn passes(&self, p: Hsv) -> bool {
        let inside = |v: f64, [lo, hi]: [f64; 2]| lo <= v && v <= hi;
        inside(p.h / 360.0 * 255.0, self.h_range)
            && inside(p.s * 255.0, self.s_range)
            && inside(p.v * 255.0, self.v_range)
    }
}

impl Default for HsvThresholdConfig {
    fn default() -> Self {
        Self::white_flowers()
    }
}

pub fn hsv_threshold_pixels(img: &ImageHsv, cfg: &HsvThresholdConfig) -> BinaryMask {
    let data = img.pixels().iter().map(|&p| cfg.passes(p)).collect();
    BinaryMask::new(img.width(), img.height(), data).expect("mask matches image")
}

pub fn hsv_threshold_detect(img: &ImageHsv, cfg: &HsvThresholdConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    filter_components_by_size(
        &hsv_threshold_pixels(img, cfg),
        cfg.min_size,
        cfg.max_size,
        Connectivity::Eight,
    )
}
