//! Pre-processing that adapts images from an unseen orchard to the training
//! distribution: background removal, saturation matching and value shift.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::imagecore::{
    connected_components, equalize_values, filter_components_by_size, hsv_to_rgb, local_entropy,
    match_values, otsu_threshold, rgb_to_hsv, BinaryMask, Connectivity, Histogram, ImageRgb,
};
use crate::proposals::DatasetMean;

/// Bins of the saturation reference histogram stored in bundles.
pub const SATURATION_REFERENCE_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    /// Number of background modes (largest low-texture clusters).
    pub modes: usize,
    /// Euclidean RGB distance below which a cluster or pixel joins the background.
    pub distance_threshold: f64,
    pub entropy_window: usize,
    pub min_cluster: usize,
    pub max_cluster: usize,
    /// Extends background regions into adjacent pixels close to a mode colour.
    pub grow: bool,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            modes: 2,
            distance_threshold: 40.0,
            entropy_window: 9,
            min_cluster: 1200,
            max_cluster: usize::MAX,
            grow: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundModel {
    /// Mean RGB of each mode, largest cluster first.
    pub modes: Vec<[f64; 3]>,
    pub distance_threshold: f64,
}

impl BackgroundModel {
    pub fn nearest_distance(&self, rgb: [f64; 3]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                ((m[0] - rgb[0]).powi(2) + (m[1] - rgb[1]).powi(2) + (m[2] - rgb[2]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct BackgroundEstimate {
    pub low_texture: BinaryMask,
    pub background: BinaryMask,
    pub model: Option<BackgroundModel>,
    pub warnings: Vec<String>,
}

/// Low-texture pixels: quantised local entropy below its Otsu threshold.
pub fn low_texture_mask(img: &ImageRgb, window: usize) -> Result<BinaryMask> {
    let ent = local_entropy(&img.to_gray(), window)?;
    let max_entropy = ((window * window) as f64).log2().max(f64::MIN_POSITIVE);
    let levels: Vec<usize> = ent
        .values()
        .iter()
        .map(|&e| ((e / max_entropy) * 255.0).round().clamp(0.0, 255.0) as usize)
        .collect();
    let mut counts = vec![0.0; 256];
    for &l in &levels {
        counts[l] += 1.0;
    }
    let hist = Histogram::new((0..=256).map(|i| i as f64).collect(), counts)?;
    let data = match otsu_threshold(&hist) {
        Ok(t) => levels.iter().map(|&l| l < t).collect(),
        Err(Error::DegenerateInput(_)) => vec![false; levels.len()],
        Err(e) => return Err(e),
    };
    BinaryMask::new(img.width(), img.height(), data)
}

fn mean_color(img: &ImageRgb, pixels: &[usize]) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for &i in pixels {
        let p = img.pixels()[i];
        for c in 0..3 {
            acc[c] += p[c] as f64;
        }
    }
    acc.map(|v| v / pixels.len().max(1) as f64)
}

/// Finds background clusters as described by `cfg`.
pub fn estimate_background(img: &ImageRgb, cfg: &BackgroundConfig) -> Result<BackgroundEstimate> {
    if cfg.modes == 0 {
        return Err(Error::invalid("background model needs at least one mode"));
    }
    let low_texture = low_texture_mask(img, cfg.entropy_window)?;
    let kept = filter_components_by_size(
        &low_texture,
        cfg.min_cluster,
        cfg.max_cluster,
        Connectivity::Eight,
    )?;
    let comps = connected_components(&kept, Connectivity::Eight);
    let members = comps.members();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| members[b].len().cmp(&members[a].len()).then(a.cmp(&b)));
    let mut warnings = Vec::new();
    let mut background = BinaryMask::empty(img.width(), img.height());
    if order.is_empty() {
        warnings.push(
            "no low-texture clusters survived size filtering; background left untouched"
                .to_string(),
        );
        return Ok(BackgroundEstimate {
            low_texture,
            background,
            model: None,
            warnings,
        });
    }
    if order.len() < cfg.modes {
        warnings.push(format!(
            "only {} low-texture clusters available for {} background modes",
            order.len(),
            cfg.modes
        ));
    }
    let model = BackgroundModel {
        modes: order
            .iter()
            .take(cfg.modes)
            .map(|&c| mean_color(img, &members[c]))
            .collect(),
        distance_threshold: cfg.distance_threshold,
    };
    let bg = background.as_mut_slice();
    for m in &members {
        if model.nearest_distance(mean_color(img, m)) < cfg.distance_threshold {
            for &i in m {
                bg[i] = true;
            }
        }
    }
    if cfg.grow {
        let (w, h) = (img.width(), img.height());
        let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| bg[i]).collect();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let neighbours = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbours.into_iter().flatten() {
                if !bg[j]
                    && model.nearest_distance(img.pixels()[j].map(f64::from))
                        < cfg.distance_threshold
                {
                    bg[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(BackgroundEstimate {
        low_texture,
        background,
        model: Some(model),
        warnings,
    })
}

/// Saturation reference histogram and mean value of a set of images.
pub fn channel_references<'a>(
    imgs: impl IntoIterator<Item = &'a ImageRgb>,
) -> Result<(Histogram, f64)> {
    let mut hist = Histogram::uniform(SATURATION_REFERENCE_BINS, 0.0, 1.0)?;
    let (mut v_sum, mut n) = (0.0, 0usize);
    for img in imgs {
        for p in rgb_to_hsv(img).pixels() {
            hist.add(p.s, 1.0);
            v_sum += p.v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("channel references need at least one pixel"));
    }
    Ok((hist.normalize()?, v_sum / n as f64))
}

/// Equalises then matches saturation to `reference` and shifts the mean value
/// to `value_mean`, on pixels where `keep` is false. Hue is left unchanged.
pub fn harmonize_channels(
    img: &ImageRgb,
    skip: &BinaryMask,
    reference: &Histogram,
    value_mean: f64,
) -> Result<ImageRgb> {
    if !skip.same_shape(img.width(), img.height()) {
        return Err(Error::invalid("mask and image dimensions differ"));
    }
    if !(0.0..=1.0).contains(&value_mean) {
        return Err(Error::invalid(format!(
            "value mean {value_mean} outside [0,1]"
        )));
    }
    let hsv = rgb_to_hsv(img);
    let idx: Vec<usize> = (0..img.len()).filter(|&i| !skip.as_slice()[i]).collect();
    if idx.is_empty() {
        return Ok(img.clone());
    }
    let sat: Vec<f64> = idx.iter().map(|&i| hsv.pixels()[i].s).collect();
    let matched = match_values(&equalize_values(&sat, 256)?, reference)?;
    let v_mean = idx.iter().map(|&i| hsv.pixels()[i].v).sum::<f64>() / idx.len() as f64;
    let shift = value_mean - v_mean;
    let mut out = img.clone();
    for (k, &i) in idx.iter().enumerate() {
        let mut p = hsv.pixels()[i];
        p.s = matched[k];
        p.v = (p.v + shift).clamp(0.0, 1.0);
        out.pixels_mut()[i] = hsv_to_rgb(p);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TransferOutput {
    pub image: ImageRgb,
    pub background: BackgroundEstimate,
}

pub fn transfer_preprocess(
    img: &ImageRgb,
    bundle: &ModelBundle,
    cfg: &BackgroundConfig,
) -> Result<TransferOutput> {
    let reference = bundle.saturation_reference.as_ref().ok_or_else(|| {
        Error::InvalidState("bundle has no saturation reference histogram".into())
    })?;
    let value_mean = bundle
        .value_reference_mean
        .ok_or_else(|| Error::InvalidState("bundle has no value reference mean".into()))?;
    transfer_with_references(img, &bundle.dataset_mean, reference, value_mean, cfg)
}

pub fn transfer_with_references(
    img: &ImageRgb,
    mean: &DatasetMean,
    reference: &Histogram,
    value_mean: f64,
    cfg: &BackgroundConfig,
) -> Result<TransferOutput> {
    let background = estimate_background(img, cfg)?;
    let mut replaced = img.clone();
    let fill = mean.0.map(|c| c.round().clamp(0.0, 255.0) as u8);
    for (p, &b) in replaced
        .pixels_mut()
        .iter_mut()
        .zip(background.background.as_slice())
    {
        if b {
            *p = fill;
        }
    }
    let image = harmonize_channels(&replaced, &background.background, reference, value_mean)?;
    Ok(TransferOutput { image, background })
}
