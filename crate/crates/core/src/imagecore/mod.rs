//! Pixel-level primitives shared by every stage of the pipeline.
//!
//! Images are stored row-major. Real-valued single-channel data (gray levels,
//! saturation, entropy) lives in [`GrayField`]; colour images are 8-bit RGB
//! ([`ImageRgb`]) or floating-point HSV ([`ImageHsv`]).

mod color;
mod components;
mod entropy;
mod histogram;
pub mod io;

pub use color::{hsv_to_rgb, hsv_to_rgb_image, rgb_to_hsv, rgb_to_hsv_pixel, Hsv};
pub use components::{connected_components, filter_components_by_size, Components, Connectivity};
pub use entropy::{local_entropy, ENTROPY_LEVELS};
pub use histogram::{
    equalize_histogram, equalize_values, match_histogram, match_values, otsu_threshold, Histogram,
};

use crate::error::{Error, Result};

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer has {} entries, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![rgb; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.data[y * self.width + x] = rgb;
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.data
    }

    /// Luma (Rec. 601) scaled to [0,1].
    pub fn to_gray(&self) -> GrayField {
        let data = self
            .data
            .iter()
            .map(|&[r, g, b]| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0)
            .collect();
        GrayField {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// HSV image with `h` in degrees `[0,360)` and `s`, `v` in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageHsv {
    width: usize,
    height: usize,
    data: Vec<Hsv>,
}

impl ImageHsv {
    pub fn new(width: usize, height: usize, data: Vec<Hsv>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("hsv buffer does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Hsv {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[Hsv] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [Hsv] {
        &mut self.data
    }

    pub fn value_channel(&self) -> GrayField {
        self.channel(|p| p.v)
    }

    pub fn saturation_channel(&self) -> GrayField {
        self.channel(|p| p.s)
    }

    fn channel(&self, f: impl Fn(&Hsv) -> f64) -> GrayField {
        GrayField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// Per-pixel boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("mask buffer does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

/// Row-major 2-D field of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("field buffer does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }
}

/// Applies `v' = clamp(v - (mean(v) - target_mean), 0, 1)` to every pixel.
pub fn shift_value_channel(img: &ImageHsv, target_mean: f64) -> Result<ImageHsv> {
    if !(0.0..=1.0).contains(&target_mean) {
        return Err(Error::invalid(format!(
            "target mean {target_mean} outside [0,1]"
        )));
    }
    let mut out = img.clone();
    if img.data.is_empty() {
        return Ok(out);
    }
    let mean = img.data.iter().map(|p| p.v).sum::<f64>() / img.data.len() as f64;
    let delta = mean - target_mean;
    for p in &mut out.data {
        p.v = (p.v - delta).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Pixel-weighted mean colour over every pixel of every image.
pub fn mean_rgb<'a, I>(imgs: I) -> Result<[f64; 3]>
where
    I: IntoIterator<Item = &'a ImageRgb>,
{
    let mut sums = [0u64; 3];
    let mut n = 0u64;
    let mut any = false;
    for img in imgs {
        any = true;
        for px in &img.data {
            for c in 0..3 {
                sums[c] += px[c] as u64;
            }
        }
        n += img.data.len() as u64;
    }
    if !any {
        return Err(Error::invalid("mean_rgb needs at least one image"));
    }
    if n == 0 {
        return Err(Error::invalid("mean_rgb over images with no pixels"));
    }
    Ok(sums.map(|s| s as f64 / n as f64))
}
