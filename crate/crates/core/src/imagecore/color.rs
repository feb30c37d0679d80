use serde::{Deserialize, Serialize};

use super::{ImageHsv, ImageRgb};

/// One HSV sample: hue in degrees `[0,360)`, saturation and value in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Hexcone RGB -> HSV. Grey pixels (s = 0) get hue 0.
pub fn rgb_to_hsv_pixel([r, g, b]: [u8; 3]) -> Hsv {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max / 255.0;
    if delta == 0.0 {
        return Hsv { h: 0.0, s: 0.0, v };
    }
    let s = delta / max;
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = 60.0 * sector;
    if h >= 360.0 {
        h -= 360.0;
    }
    Hsv { h, s, v }
}

pub fn rgb_to_hsv(img: &ImageRgb) -> ImageHsv {
    ImageHsv {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&p| rgb_to_hsv_pixel(p)).collect(),
    }
}

/// Inverse hexcone conversion, rounded to the nearest 8-bit level.
pub fn hsv_to_rgb(p: Hsv) -> [u8; 3] {
    let v = p.v.clamp(0.0, 1.0) * 255.0;
    let s = p.s.clamp(0.0, 1.0);
    let c = v * s;
    let hp = p.h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r1 + m, g1 + m, b1 + m].map(|ch| ch.round().clamp(0.0, 255.0) as u8)
}

pub fn hsv_to_rgb_image(img: &ImageHsv) -> ImageRgb {
    ImageRgb {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&p| hsv_to_rgb(p)).collect(),
    }
}
