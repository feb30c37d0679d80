//! Per-image prediction: segmentation, features, reduction and classification.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::{Classifier, ModelBundle};
use crate::classify::{bh_likelihood, hsv_threshold_detect, svm_decision};
use crate::error::{Error, Result};
use crate::features::{
    hsv_histogram_features_all, ExternalFeatures, FeatureKey, FeatureSourceSpec,
};
use crate::imagecore::{rgb_to_hsv, ImageRgb};
use crate::proposals::Mirror;
use crate::reduce::pca_project;
use crate::superpixel::{coverage, slic_segment, SlicConfig, SuperpixelLabeling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub superpixel_id: u32,
    pub score: f64,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelFailure {
    pub superpixel_id: u32,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct DetectOutput {
    pub labeling: SuperpixelLabeling,
    /// One detection per superpixel that could be scored, in id order.
    pub detections: Vec<Detection>,
    pub failures: Vec<SuperpixelFailure>,
}

impl DetectOutput {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Raw feature vector of every superpixel for the given variant, in id order.
pub fn extract_features(
    img: &ImageRgb,
    lab: &SuperpixelLabeling,
    image_id: &str,
    spec: &FeatureSourceSpec,
    external: Option<&ExternalFeatures>,
    variant: Mirror,
) -> Result<Vec<Result<Vec<f64>>>> {
    match spec {
        FeatureSourceSpec::HsvHist { normalization } => {
            // histograms over the superpixel's own pixels are mirror-invariant
            let hsv = rgb_to_hsv(img);
            Ok(hsv_histogram_features_all(&hsv, lab, *normalization)?
                .into_iter()
                .map(|f| Ok(f.values))
                .collect())
        }
        FeatureSourceSpec::External { name, dim } => {
            let src = external.ok_or_else(|| {
                Error::NotFound(format!("external feature set `{name}` was not supplied"))
            })?;
            if src.dim() != *dim {
                return Err(Error::Format(format!(
                    "external features have dimension {} but the model expects {dim}",
                    src.dim()
                )));
            }
            Ok((0..lab.count() as u32)
                .map(|id| {
                    src.get(&FeatureKey::new(image_id, id).with_variant(variant))
                        .map(|f| f.values)
                })
                .collect())
        }
    }
}

/// Classifier score of one (already reduced) feature vector.
pub fn score_features(bundle: &ModelBundle, reduced: &[f64]) -> Result<f64> {
    match &bundle.classifier {
        Classifier::Svm { model, .. } => svm_decision(model, reduced),
        Classifier::Bh { model } => bh_likelihood(model, reduced),
        Classifier::HsvThreshold { .. } => Err(Error::InvalidState(
            "threshold detector does not score feature vectors".into(),
        )),
    }
}

pub fn reduce_features(bundle: &ModelBundle, raw: &[f64]) -> Result<Vec<f64>> {
    match &bundle.pca {
        Some(p) => pca_project(p, raw),
        None => Ok(raw.to_vec()),
    }
}

/// Runs the bundle on an existing segmentation.
pub fn detect_with_labeling(
    img: &ImageRgb,
    lab: &SuperpixelLabeling,
    bundle: &ModelBundle,
    image_id: &str,
    external: Option<&ExternalFeatures>,
) -> Result<DetectOutput> {
    bundle.validate()?;
    if img.width() != lab.width() || img.height() != lab.height() {
        return Err(Error::invalid("image and labeling dimensions differ"));
    }
    let threshold = bundle.classifier.threshold();
    let mut detections = Vec::with_capacity(lab.count());
    let mut failures = Vec::new();
    let mut push = |id: u32, score: f64| {
        detections.push(Detection {
            image_id: image_id.to_string(),
            superpixel_id: id,
            score,
            predicted: score >= threshold,
        })
    };
    match &bundle.classifier {
        Classifier::HsvThreshold { config, .. } => {
            let mask = hsv_threshold_detect(&rgb_to_hsv(img), config)?;
            for (id, (c, s)) in coverage(lab, &mask).iter().zip(lab.stats()).enumerate() {
                push(id as u32, *c as f64 / s.pixel_count as f64);
            }
        }
        _ => {
            let feats = extract_features(
                img,
                lab,
                image_id,
                &bundle.features,
                external,
                Mirror::Original,
            )?;
            for (id, f) in feats.into_iter().enumerate() {
                let scored =
                    f.and_then(|raw| score_features(bundle, &reduce_features(bundle, &raw)?));
                match scored {
                    Ok(s) => push(id as u32, s),
                    Err(e @ Error::NotFound(_)) => failures.push(SuperpixelFailure {
                        superpixel_id: id as u32,
                        message: e.to_string(),
                    }),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(DetectOutput {
        labeling: lab.clone(),
        detections,
        failures,
    })
}

/// Segments `img` with `slic` and classifies every superpixel.
pub fn detect_image(
    img: &ImageRgb,
    bundle: &ModelBundle,
    slic: &SlicConfig,
    image_id: &str,
    external: Option<&ExternalFeatures>,
) -> Result<DetectOutput> {
    let lab = slic_segment(img, slic)?;
    detect_with_labeling(img, &lab, bundle, image_id, external)
}

pub fn detections_csv(dets: &[Detection]) -> String {
    let mut s = String::from("image_id,superpixel_id,score,predicted\n");
    for d in dets {
        writeln!(
            s,
            "{},{},{},{}",
            d.image_id,
            d.superpixel_id,
            d.score,
            u8::from(d.predicted)
        )
        .expect("write to string");
    }
    s
}

pub fn write_detections(path: impl AsRef<Path>, dets: &[Detection]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, detections_csv(dets)).map_err(|e| Error::io(path, e))
}

/// Tints predicted superpixels and outlines their boundaries.
pub fn overlay(img: &ImageRgb, lab: &SuperpixelLabeling, dets: &[Detection]) -> Result<ImageRgb> {
    const FILL: [f64; 3] = [255.0, 0.0, 200.0];
    const STROKE: [u8; 3] = [255, 255, 0];
    const ALPHA: f64 = 0.45;
    if img.width() != lab.width() || img.height() != lab.height() {
        return Err(Error::invalid("image and labeling dimensions differ"));
    }
    let mut positive = vec![false; lab.count()];
    for d in dets.iter().filter(|d| d.predicted) {
        if let Some(p) = positive.get_mut(d.superpixel_id as usize) {
            *p = true;
        }
    }
    let mut out = img.clone();
    let (w, h) = (img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            let l = lab.label(x, y);
            if !positive[l as usize] {
                continue;
            }
            let edge = (x + 1 < w && lab.label(x + 1, y) != l)
                || (y + 1 < h && lab.label(x, y + 1) != l)
                || (x > 0 && lab.label(x - 1, y) != l)
                || (y > 0 && lab.label(x, y - 1) != l);
            let px = if edge {
                STROKE
            } else {
                let p = img.get(x, y);
                [0, 1, 2].map(|c| ((1.0 - ALPHA) * p[c] as f64 + ALPHA * FILL[c]).round() as u8)
            };
            out.set(x, y, px);
        }
    }
    Ok(out)
}
