//! Region proposals: square portraits cropped around superpixels, background
//! treatment, resizing, mean-centring and mirror augmentation.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{io::write_png, ImageRgb};
use crate::superpixel::SuperpixelLabeling;

pub const DEFAULT_PORTRAIT_SIZE: usize = 227;
pub const DEFAULT_BLUR_SIGMA: f64 = 8.0;

/// Average training-set colour, each channel in `[0,255]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMean(pub [f64; 3]);

impl DatasetMean {
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|c| !(0.0..=255.0).contains(c)) {
            return Err(Error::invalid(format!(
                "dataset mean {rgb:?} outside [0,255]"
            )));
        }
        Ok(Self(rgb))
    }
}

/// How the background around a superpixel is treated inside its portrait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortraitMode {
    Original,
    Blur,
    #[default]
    MeanPad,
}

impl std::str::FromStr for PortraitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Self::Original),
            "blur" => Ok(Self::Blur),
            "mean_pad" | "meanpad" => Ok(Self::MeanPad),
            other => Err(Error::invalid(format!("unknown portrait mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitConfig {
    pub size: usize,
    pub mode: PortraitMode,
    /// Gaussian sigma (native pixels) used by [`PortraitMode::Blur`].
    pub blur_sigma: f64,
}

impl Default for PortraitConfig {
    fn default() -> Self {
        Self {
            size: DEFAULT_PORTRAIT_SIZE,
            mode: PortraitMode::MeanPad,
            blur_sigma: DEFAULT_BLUR_SIGMA,
        }
    }
}

/// Square crop window in image coordinates; may extend past the borders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SquareRegion {
    pub x0: isize,
    pub y0: isize,
    pub side: usize,
    pub out_of_image: bool,
}

/// Smallest square containing the superpixel's bounding box, centred on it.
pub fn enclosing_square(lab: &SuperpixelLabeling, id: u32) -> Result<SquareRegion> {
    let bbox = lab.stat(id)?.bbox;
    let (bw, bh) = (bbox.width(), bbox.height());
    let side = bw.max(bh);
    let x0 = bbox.x0 as isize - ((side - bw) / 2) as isize;
    let y0 = bbox.y0 as isize - ((side - bh) / 2) as isize;
    let out_of_image = x0 < 0
        || y0 < 0
        || x0 + side as isize > lab.width() as isize
        || y0 + side as isize > lab.height() as isize;
    Ok(SquareRegion {
        x0,
        y0,
        side,
        out_of_image,
    })
}

/// Mirror variant of a portrait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mirror {
    /// Unchanged.
    Original,
    /// Flipped about the vertical axis (left-right).
    Vertical,
    /// Flipped about the horizontal axis (top-bottom).
    Horizontal,
    Both,
}

impl Mirror {
    pub const ALL: [Mirror; 4] = [
        Mirror::Original,
        Mirror::Vertical,
        Mirror::Horizontal,
        Mirror::Both,
    ];

    pub fn code(self) -> char {
        match self {
            Mirror::Original => 'o',
            Mirror::Vertical => 'v',
            Mirror::Horizontal => 'h',
            Mirror::Both => 'b',
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "o" => Some(Mirror::Original),
            "v" => Some(Mirror::Vertical),
            "h" => Some(Mirror::Horizontal),
            "b" => Some(Mirror::Both),
            _ => None,
        }
    }
}

/// Square RGB raster with real-valued channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Portrait {
    pub size: usize,
    pub pixels: Vec<[f64; 3]>,
    pub image_id: String,
    pub superpixel_id: u32,
    pub mode: PortraitMode,
    pub variant: Mirror,
    pub centered: bool,
}

impl Portrait {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.size + x]
    }

    pub fn with_image_id(mut self, id: impl Into<String>) -> Self {
        self.image_id = id.into();
        self
    }

    /// Applies `m` on top of the current orientation.
    pub fn mirrored(&self, m: Mirror) -> Portrait {
        let n = self.size;
        let (flip_x, flip_y) = match m {
            Mirror::Original => (false, false),
            Mirror::Vertical => (true, false),
            Mirror::Horizontal => (false, true),
            Mirror::Both => (true, true),
        };
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in 0..n {
            let sy = if flip_y { n - 1 - y } else { y };
            for x in 0..n {
                let sx = if flip_x { n - 1 - x } else { x };
                pixels.push(self.pixels[sy * n + sx]);
            }
        }
        Portrait {
            pixels,
            variant: compose(self.variant, m),
            ..self.clone()
        }
    }

    /// Rounds to 8-bit RGB, adding `mean` back first if the portrait is centred.
    pub fn to_image(&self, mean: &DatasetMean) -> ImageRgb {
        let offset = if self.centered { mean.0 } else { [0.0; 3] };
        let data = self
            .pixels
            .iter()
            .map(|p| [0, 1, 2].map(|c| (p[c] + offset[c]).round().clamp(0.0, 255.0) as u8))
            .collect();
        ImageRgb::new(self.size, self.size, data).expect("square buffer")
    }
}

fn compose(a: Mirror, b: Mirror) -> Mirror {
    let bits = |m: Mirror| match m {
        Mirror::Original => 0u8,
        Mirror::Vertical => 1,
        Mirror::Horizontal => 2,
        Mirror::Both => 3,
    };
    match bits(a) ^ bits(b) {
        0 => Mirror::Original,
        1 => Mirror::Vertical,
        2 => Mirror::Horizontal,
        _ => Mirror::Both,
    }
}

/// Native-resolution crop before resizing, with the superpixel footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeCrop {
    pub side: usize,
    pub pixels: Vec<[f64; 3]>,
    pub footprint: Vec<bool>,
}

/// Crops the enclosing square and applies the background treatment at native
/// scale. Pixels outside the image are always the dataset mean.
pub fn native_crop(
    img: &ImageRgb,
    lab: &SuperpixelLabeling,
    id: u32,
    mode: PortraitMode,
    mean: &DatasetMean,
    blur_sigma: f64,
) -> Result<NativeCrop> {
    if img.width() != lab.width() || img.height() != lab.height() {
        return Err(Error::invalid("image and labeling dimensions differ"));
    }
    let sq = enclosing_square(lab, id)?;
    let n = sq.side;
    let mut pixels = vec![mean.0; n * n];
    let mut footprint = vec![false; n * n];
    for cy in 0..n {
        let y = sq.y0 + cy as isize;
        if y < 0 || y >= img.height() as isize {
            continue;
        }
        for cx in 0..n {
            let x = sq.x0 + cx as isize;
            if x < 0 || x >= img.width() as isize {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            let i = cy * n + cx;
            footprint[i] = lab.label(x, y) == id;
            if footprint[i] || mode != PortraitMode::MeanPad {
                pixels[i] = img.get(x, y).map(f64::from);
            }
        }
    }
    if mode == PortraitMode::Blur {
        let blurred = gaussian_blur(&pixels, n, blur_sigma);
        for i in 0..n * n {
            if !footprint[i] {
                pixels[i] = blurred[i];
            }
        }
    }
    Ok(NativeCrop {
        side: n,
        pixels,
        footprint,
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur of a square raster with replicated borders.
pub(crate) fn gaussian_blur(pixels: &[[f64; 3]], n: usize, sigma: f64) -> Vec<[f64; 3]> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![[0.0; 3]; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut acc = [0.0; 3];
            for (t, w) in k.iter().enumerate() {
                let p = pixels[y * n + clamp(x as isize + t as isize - r)];
                for c in 0..3 {
                    acc[c] += w * p[c];
                }
            }
            tmp[y * n + x] = acc;
        }
    }
    let mut out = vec![[0.0; 3]; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut acc = [0.0; 3];
            for (t, w) in k.iter().enumerate() {
                let p = tmp[clamp(y as isize + t as isize - r) * n + x];
                for c in 0..3 {
                    acc[c] += w * p[c];
                }
            }
            out[y * n + x] = acc;
        }
    }
    out
}

/// Bilinear resize of a square raster (pixel centres aligned, edges clamped).
pub fn resize_bilinear(pixels: &[[f64; 3]], n: usize, size: usize) -> Vec<[f64; 3]> {
    if n == size {
        return pixels.to_vec();
    }
    let scale = n as f64 / size as f64;
    let sample = |v: usize| {
        let s = ((v as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..size).map(sample).collect();
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let (y0, y1, fy) = sample(y);
        for &(x0, x1, fx) in &cols {
            let p00 = pixels[y0 * n + x0];
            let p01 = pixels[y0 * n + x1];
            let p10 = pixels[y1 * n + x0];
            let p11 = pixels[y1 * n + x1];
            out.push([0, 1, 2].map(|c| {
                let top = p00[c] + (p01[c] - p00[c]) * fx;
                let bottom = p10[c] + (p11[c] - p10[c]) * fx;
                top + (bottom - top) * fy
            }));
        }
    }
    out
}

/// Crop, background treatment and resize to `cfg.size`. The result is not yet
/// mean-centred.
pub fn make_portrait(
    img: &ImageRgb,
    lab: &SuperpixelLabeling,
    id: u32,
    cfg: &PortraitConfig,
    mean: &DatasetMean,
) -> Result<Portrait> {
    if cfg.size == 0 {
        return Err(Error::invalid("portrait size must be at least 1"));
    }
    let crop = native_crop(img, lab, id, cfg.mode, mean, cfg.blur_sigma)?;
    Ok(Portrait {
        size: cfg.size,
        pixels: resize_bilinear(&crop.pixels, crop.side, cfg.size),
        image_id: String::new(),
        superpixel_id: id,
        mode: cfg.mode,
        variant: Mirror::Original,
        centered: false,
    })
}

pub fn mean_center(p: &Portrait, mean: &DatasetMean) -> Result<Portrait> {
    if p.centered {
        return Err(Error::InvalidState(format!(
            "portrait of superpixel {} is already mean-centred",
            p.superpixel_id
        )));
    }
    Ok(Portrait {
        pixels: p
            .pixels
            .iter()
            .map(|px| [px[0] - mean.0[0], px[1] - mean.0[1], px[2] - mean.0[2]])
            .collect(),
        centered: true,
        ..p.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPortrait {
    pub portrait: Portrait,
    pub positive: bool,
}

/// Replaces every positive sample by its four mirror variants; negatives pass
/// through unchanged.
pub fn augment_mirror(samples: &[LabeledPortrait]) -> Vec<LabeledPortrait> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        if s.positive {
            out.extend(Mirror::ALL.iter().map(|&m| LabeledPortrait {
                portrait: s.portrait.mirrored(m),
                positive: true,
            }));
        } else {
            out.push(s.clone());
        }
    }
    out
}

/// Writes each portrait as PNG plus `index.csv`
/// (`image_id,superpixel_id,label,path,variant`).
pub fn export_portraits(
    samples: &[LabeledPortrait],
    mean: &DatasetMean,
    dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = Vec::new();
    writeln!(index, "image_id,superpixel_id,label,path,variant").expect("write to vec");
    for s in samples {
        let p = &s.portrait;
        let name = format!(
            "{}_{}_{}.png",
            p.image_id,
            p.superpixel_id,
            p.variant.code()
        );
        write_png(&p.to_image(mean), dir.join(&name))?;
        writeln!(
            index,
            "{},{},{},{},{}",
            p.image_id,
            p.superpixel_id,
            u8::from(s.positive),
            name,
            p.variant.code()
        )
        .expect("write to vec");
    }
    let path = dir.join("index.csv");
    std::fs::write(&path, index).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
