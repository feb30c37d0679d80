//! Training, held-out evaluation and method comparison over a manifest.

use serde::{Deserialize, Serialize};

use super::bundle::{Classifier, ModelBundle, Provenance, BUNDLE_VERSION};
use super::detect::{detect_with_labeling, extract_features, Detection};
use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::transfer::channel_references;
use crate::classify::{
    bh_likelihood, bh_train, f1_at, grid_search, hsv_threshold_detect, svm_decision, svm_train,
    GridCell, GridResult, GridSpec, HsvThresholdConfig, Hyper, Metric, SearchOptions, SvmParams,
};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, CrossValidation, EvalReport, LabeledSet, PrCurve, Sample};
use crate::features::{BlockNormalization, ExternalFeatures, FeatureSourceSpec};
use crate::imagecore::{mean_rgb, rgb_to_hsv, ImageRgb};
use crate::proposals::{DatasetMean, Mirror, PortraitConfig};
use crate::reduce::{pca_fit, pca_project, PcaModel, DEFAULT_PCA_COMPONENTS};
use crate::superpixel::{
    assign_labels_from_mask, coverage, slic_segment, SlicConfig, SuperpixelLabeling,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Svm,
    Bh,
    HsvThreshold,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Bh => "bh",
            ClassifierKind::HsvThreshold => "hsvthresh",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(Self::Svm),
            "bh" => Ok(Self::Bh),
            "hsvthresh" | "hsv" => Ok(Self::HsvThreshold),
            other => Err(Error::invalid(format!(
                "unknown classifier `{other}` (svm, bh, hsvthresh)"
            ))),
        }
    }
}

/// How a configured grid picks its cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSelection {
    /// k-fold cross-validation inside the training split.
    #[default]
    CrossValidation,
    /// Train on the training split, score on the validation split.
    Validation,
}

impl std::str::FromStr for GridSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" | "cross_validation" => Ok(Self::CrossValidation),
            "validation" | "holdout" => Ok(Self::Validation),
            other => Err(Error::invalid(format!(
                "unknown grid selection `{other}` (cv, validation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub slic: SlicConfig,
    pub portrait: PortraitConfig,
    pub features: FeatureSourceSpec,
    /// Principal components kept; `None` feeds raw features to the classifier.
    pub pca_k: Option<usize>,
    pub classifier: ClassifierKind,
    pub c: f64,
    pub gamma: f64,
    pub sigma: f64,
    /// Replaces `c`/`gamma` (or `sigma`) with the best cell of this grid.
    pub grid: Option<GridSpec>,
    pub selection: GridSelection,
    pub search: SearchOptions,
    pub augment: bool,
    pub pca_on_augmented: bool,
    /// Fraction of a superpixel's pixels that must lie in the flower mask for
    /// it to count as positive.
    pub label_fraction: f64,
    pub hsv: HsvThresholdConfig,
    pub min_overlap: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            slic: SlicConfig::default(),
            portrait: PortraitConfig::default(),
            features: FeatureSourceSpec::HsvHist {
                normalization: BlockNormalization::PerBlock,
            },
            pca_k: Some(DEFAULT_PCA_COMPONENTS),
            classifier: ClassifierKind::Svm,
            c: 10.0,
            gamma: 1.0,
            sigma: 1.0,
            grid: None,
            selection: GridSelection::CrossValidation,
            search: SearchOptions::default(),
            augment: true,
            pca_on_augmented: false,
            label_fraction: 0.5,
            hsv: HsvThresholdConfig::default(),
            min_overlap: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Feature source actually used: the Bhattacharyya classifier needs
    /// histograms that sum to one.
    pub fn effective_features(&self) -> FeatureSourceSpec {
        match self.classifier {
            ClassifierKind::Bh => FeatureSourceSpec::HsvHist {
                normalization: BlockNormalization::Joint,
            },
            _ => self.features.clone(),
        }
    }

    pub fn effective_pca_k(&self) -> Option<usize> {
        match self.classifier {
            ClassifierKind::Svm => self.pca_k,
            _ => None,
        }
    }
}

/// One segmented and labelled image.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub id: String,
    pub image: ImageRgb,
    pub labeling: SuperpixelLabeling,
    pub labels: Vec<bool>,
}

pub fn prepare_entry(
    manifest: &DatasetManifest,
    e: &ManifestEntry,
    slic: &SlicConfig,
    label_fraction: f64,
) -> Result<PreparedImage> {
    let image = manifest.load_image(e)?;
    let mask = match &e.mask {
        Some(_) => manifest.load_mask(e)?,
        None => {
            return Err(Error::NotFound(format!(
                "image `{}` has no flower mask",
                e.id
            )))
        }
    };
    let labeling = slic_segment(&image, slic)?;
    let labels = assign_labels_from_mask(&labeling, &mask, label_fraction)?;
    Ok(PreparedImage {
        id: e.id.clone(),
        image,
        labeling,
        labels,
    })
}

pub fn prepare_split(
    manifest: &DatasetManifest,
    split: Option<Split>,
    slic: &SlicConfig,
    label_fraction: f64,
) -> Result<Vec<PreparedImage>> {
    let out: Vec<PreparedImage> = manifest
        .images
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .map(|e| {
            log::info!("segmenting {}", e.id);
            prepare_entry(manifest, e, slic, label_fraction)
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "manifest `{}` has no images in the requested split",
            manifest.name
        )));
    }
    Ok(out)
}

/// Raw features of every superpixel as a labelled set. With `augment`, each
/// positive carries its three mirrored variants.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub set: LabeledSet,
    /// (image index, superpixel id) of every sample.
    pub origin: Vec<(usize, u32)>,
}

pub fn feature_table(
    images: &[PreparedImage],
    spec: &FeatureSourceSpec,
    external: Option<&ExternalFeatures>,
    augment: bool,
) -> Result<FeatureTable> {
    let mut points = Vec::new();
    let mut samples = Vec::new();
    let mut origin = Vec::new();
    for (ii, img) in images.iter().enumerate() {
        let base = extract_features(
            &img.image,
            &img.labeling,
            &img.id,
            spec,
            external,
            Mirror::Original,
        )?;
        let mirrored = match (augment, spec) {
            (true, FeatureSourceSpec::External { .. }) => Some(
                [Mirror::Vertical, Mirror::Horizontal, Mirror::Both]
                    .iter()
                    .map(|&m| {
                        extract_features(&img.image, &img.labeling, &img.id, spec, external, m)
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let mut mirrored =
            mirrored.map(|v| v.into_iter().map(|f| f.into_iter()).collect::<Vec<_>>());
        for (id, f) in base.into_iter().enumerate() {
            let point = points.len();
            points.push(f?);
            let positive = img.labels[id];
            let mut extra: Vec<Result<Vec<f64>>> = Vec::new();
            if let Some(its) = mirrored.as_mut() {
                extra = its
                    .iter_mut()
                    .map(|it| it.next().expect("one feature per superpixel"))
                    .collect();
            }
            let augmented = if augment && positive {
                match spec {
                    // histograms of the superpixel's pixels do not change under mirroring
                    FeatureSourceSpec::HsvHist { .. } => vec![point; 3],
                    FeatureSourceSpec::External { .. } => {
                        let mut idx = Vec::with_capacity(3);
                        for f in extra {
                            idx.push(points.len());
                            points.push(f?);
                        }
                        idx
                    }
                }
            } else {
                Vec::new()
            };
            samples.push(Sample {
                point,
                positive,
                augmented,
            });
            origin.push((ii, id as u32));
        }
    }
    Ok(FeatureTable {
        set: LabeledSet { points, samples },
        origin,
    })
}

/// Fits PCA on the set (augmented copies only if asked) and projects every point.
pub fn reduce_set(
    set: &LabeledSet,
    k: usize,
    on_augmented: bool,
) -> Result<(PcaModel, LabeledSet)> {
    let fit_rows: Vec<Vec<f64>> = if on_augmented {
        let all: Vec<usize> = (0..set.len()).collect();
        set.expand(&all)
            .0
            .iter()
            .map(|&p| set.points[p].clone())
            .collect()
    } else {
        set.samples
            .iter()
            .map(|s| set.points[s.point].clone())
            .collect()
    };
    let pca = pca_fit(&fit_rows, k)?;
    let points = set
        .points
        .iter()
        .map(|p| pca_project(&pca, p))
        .collect::<Result<_>>()?;
    Ok((
        pca,
        LabeledSet {
            points,
            samples: set.samples.clone(),
        },
    ))
}

fn training_rows(set: &LabeledSet) -> (Vec<Vec<f64>>, Vec<bool>) {
    let all: Vec<usize> = (0..set.len()).collect();
    let (pts, labels) = set.expand(&all);
    (pts.iter().map(|&p| set.points[p].clone()).collect(), labels)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub bundle: ModelBundle,
    pub grid: Option<GridResult>,
}

/// Trains a bundle on the training split of `manifest`.
pub fn train_pipeline(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    external: Option<&ExternalFeatures>,
) -> Result<TrainOutput> {
    if !(cfg.min_overlap > 0.0 && cfg.min_overlap <= 1.0) {
        return Err(Error::invalid(format!(
            "min_overlap {} outside (0,1]",
            cfg.min_overlap
        )));
    }
    let images = prepare_split(manifest, Some(Split::Train), &cfg.slic, cfg.label_fraction)?;
    match (&cfg.grid, cfg.selection) {
        (Some(grid), GridSelection::Validation)
            if cfg.classifier != ClassifierKind::HsvThreshold =>
        {
            let held_out = prepare_split(
                manifest,
                Some(Split::Validation),
                &cfg.slic,
                cfg.label_fraction,
            )?;
            if held_out.is_empty() {
                return Err(Error::invalid(
                    "validation-split grid selection needs validation images",
                ));
            }
            select_on_validation(
                &images,
                &held_out,
                manifest.dataset_mean,
                grid,
                cfg,
                external,
            )
        }
        _ => train_prepared(&images, manifest.dataset_mean, cfg, external),
    }
}

/// Fits one bundle per grid cell on `train`, scores each on `held_out` and
/// keeps the best. Each cell reports a single "fold": the validation score.
fn select_on_validation(
    train: &[PreparedImage],
    held_out: &[PreparedImage],
    mean_override: Option<[f64; 3]>,
    grid: &GridSpec,
    cfg: &TrainConfig,
    external: Option<&ExternalFeatures>,
) -> Result<TrainOutput> {
    let with = |hyper: Hyper| {
        let mut c = TrainConfig {
            grid: None,
            ..cfg.clone()
        };
        match hyper {
            Hyper::Svm { c: bc, gamma } => (c.c, c.gamma) = (bc, gamma),
            Hyper::Bh { sigma } => c.sigma = sigma,
        }
        c
    };
    let mut cells = Vec::new();
    for hyper in grid.hypers() {
        let out = train_prepared(train, mean_override, &with(hyper), external)?;
        let ev = evaluate_prepared(&out.bundle, held_out, external)?;
        let truth: Vec<bool> = ev
            .detections
            .iter()
            .map(|d| {
                let img = held_out
                    .iter()
                    .find(|p| p.id == d.image_id)
                    .expect("detection of a prepared image");
                img.labels[d.superpixel_id as usize]
            })
            .collect();
        let score = match cfg.search.metric {
            Metric::F1 => f1_at(ev.detections.iter().map(|d| d.predicted), &truth),
            Metric::AucPr => Some(ev.report.auc_pr),
        };
        let mut notes: Vec<String> = ev
            .failures
            .iter()
            .map(|(id, m)| format!("{id}: {m}"))
            .collect();
        if score.is_none() {
            notes.push("validation split has no positive samples".into());
        }
        log::debug!("validation grid cell {hyper:?}: {score:?}");
        cells.push(GridCell {
            hyper,
            score: score.unwrap_or(f64::NAN),
            per_fold: vec![score],
            flagged: !notes.is_empty(),
            notes,
        });
    }
    let res = GridResult::select(cfg.search.metric, cells)?;
    let best = res.best_cell().clone();
    let mut out = train_prepared(train, mean_override, &with(best.hyper), external)?;
    out.bundle.provenance.grid_cell = Some(best.hyper);
    out.bundle.provenance.grid_score = Some(best.score);
    out.grid = Some(res);
    Ok(out)
}

pub fn train_prepared(
    images: &[PreparedImage],
    mean_override: Option<[f64; 3]>,
    cfg: &TrainConfig,
    external: Option<&ExternalFeatures>,
) -> Result<TrainOutput> {
    let dataset_mean = DatasetMean::new(match mean_override {
        Some(m) => m,
        None => mean_rgb(images.iter().map(|p| &p.image))?,
    })?;
    let (saturation, value_mean) = channel_references(images.iter().map(|p| &p.image))?;
    let positives = images
        .iter()
        .flat_map(|p| &p.labels)
        .filter(|&&l| l)
        .count();
    let total: usize = images.iter().map(|p| p.labels.len()).sum();
    if positives == 0 || positives == total {
        return Err(Error::DegenerateInput(format!(
            "training labels are single-class ({positives} positives of {total} superpixels)"
        )));
    }
    let features = cfg.effective_features();
    let mut provenance = Provenance {
        seed: cfg.seed,
        grid_cell: None,
        grid_score: None,
        augmentation: cfg.augment,
        pca_on_augmented: cfg.pca_on_augmented,
        training_images: images.len(),
        positive_superpixels: positives,
        negative_superpixels: total - positives,
        training_points: total,
    };
    let mut grid_out = None;
    let (pca, classifier) = match cfg.classifier {
        ClassifierKind::HsvThreshold => {
            cfg.hsv.validate()?;
            (
                None,
                Classifier::HsvThreshold {
                    config: cfg.hsv.clone(),
                    min_overlap: cfg.min_overlap,
                },
            )
        }
        kind => {
            let table = feature_table(images, &features, external, cfg.augment)?;
            let (pca, set) = match cfg.effective_pca_k() {
                Some(k) => {
                    let (p, s) = reduce_set(&table.set, k, cfg.pca_on_augmented)?;
                    (Some(p), s)
                }
                None => (None, table.set),
            };
            let mut c = cfg.c;
            let mut gamma = cfg.gamma;
            let mut sigma = cfg.sigma;
            if let Some(grid) = &cfg.grid {
                let opts = SearchOptions {
                    seed: cfg.seed,
                    ..cfg.search.clone()
                };
                let res = grid_search(&set, grid, &opts)?;
                let best = res.best_cell();
                match best.hyper {
                    Hyper::Svm { c: bc, gamma: bg } => (c, gamma) = (bc, bg),
                    Hyper::Bh { sigma: bs } => sigma = bs,
                }
                provenance.grid_cell = Some(best.hyper);
                provenance.grid_score = Some(best.score);
                grid_out = Some(res);
            }
            let (x, y) = training_rows(&set);
            provenance.training_points = x.len();
            let classifier = match kind {
                ClassifierKind::Svm => {
                    let params = SvmParams {
                        c,
                        gamma,
                        tol: cfg.search.tol,
                        max_iter: cfg.search.max_iter,
                        seed: cfg.seed,
                    };
                    Classifier::Svm {
                        model: svm_train(&x, &y, &params)?,
                        threshold: 0.0,
                    }
                }
                _ => Classifier::Bh {
                    model: bh_train(&x, &y, sigma)?,
                },
            };
            (pca, classifier)
        }
    };
    let bundle = ModelBundle {
        version: BUNDLE_VERSION,
        slic: cfg.slic.clone(),
        portrait: cfg.portrait.clone(),
        dataset_mean,
        features,
        pca,
        classifier,
        saturation_reference: Some(saturation),
        value_reference_mean: Some(value_mean),
        provenance,
    };
    bundle.validate()?;
    Ok(TrainOutput {
        bundle,
        grid: grid_out,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub curve: PrCurve,
    pub detections: Vec<Detection>,
    /// Superpixels that could not be scored, as (image id, message).
    pub failures: Vec<(String, String)>,
}

/// Scores every superpixel of the prepared images with `bundle`.
pub fn evaluate_prepared(
    bundle: &ModelBundle,
    images: &[PreparedImage],
    external: Option<&ExternalFeatures>,
) -> Result<Evaluation> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut detections = Vec::new();
    let mut failures = Vec::new();
    for img in images {
        let out = detect_with_labeling(&img.image, &img.labeling, bundle, &img.id, external)?;
        for d in &out.detections {
            scores.push(d.score);
            labels.push(img.labels[d.superpixel_id as usize]);
        }
        failures.extend(out.failures.into_iter().map(|f| {
            (
                img.id.clone(),
                format!("superpixel {}: {}", f.superpixel_id, f.message),
            )
        }));
        detections.extend(out.detections);
    }
    let (report, curve) = EvalReport::from_scores(&scores, &labels)?;
    Ok(Evaluation {
        report,
        curve,
        detections,
        failures,
    })
}

/// Evaluates `bundle` on one split, segmenting with the bundle's SLIC settings.
pub fn evaluate_bundle(
    bundle: &ModelBundle,
    manifest: &DatasetManifest,
    split: Split,
    label_fraction: f64,
    external: Option<&ExternalFeatures>,
) -> Result<Evaluation> {
    let images = prepare_split(manifest, Some(split), &bundle.slic, label_fraction)?;
    evaluate_prepared(bundle, &images, external)
}

/// Cross-validation of one method on prepared images. Hyperparameters come
/// from `cfg`, or from a grid search over the whole set when `cfg.grid` is set.
pub fn crossval_method(
    images: &[PreparedImage],
    cfg: &TrainConfig,
    folds: usize,
    seed: u64,
    external: Option<&ExternalFeatures>,
) -> Result<CrossValidation> {
    match cfg.classifier {
        ClassifierKind::HsvThreshold => {
            cfg.hsv.validate()?;
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for img in images {
                let mask = hsv_threshold_detect(&rgb_to_hsv(&img.image), &cfg.hsv)?;
                for (c, s) in coverage(&img.labeling, &mask)
                    .iter()
                    .zip(img.labeling.stats())
                {
                    scores.push(vec![*c as f64 / s.pixel_count as f64]);
                }
                labels.extend(&img.labels);
            }
            // the detector has nothing to fit, each fold just reads its scores
            let set = LabeledSet::from_pairs(scores, &labels)?;
            cross_validate(&set, folds, seed, |s, fd| {
                Ok(fd.validate_points.iter().map(|&p| s.points[p][0]).collect())
            })
        }
        kind => {
            let table = feature_table(images, &cfg.effective_features(), external, cfg.augment)?;
            let set = match cfg.effective_pca_k() {
                Some(k) => reduce_set(&table.set, k, cfg.pca_on_augmented)?.1,
                None => table.set,
            };
            let (mut c, mut gamma, mut sigma) = (cfg.c, cfg.gamma, cfg.sigma);
            if let Some(grid) = &cfg.grid {
                let opts = SearchOptions {
                    seed,
                    ..cfg.search.clone()
                };
                match grid_search(&set, grid, &opts)?.best_cell().hyper {
                    Hyper::Svm { c: bc, gamma: bg } => (c, gamma) = (bc, bg),
                    Hyper::Bh { sigma: bs } => sigma = bs,
                }
            }
            cross_validate(&set, folds, seed, |s, fd| {
                let x: Vec<Vec<f64>> = fd
                    .train_points
                    .iter()
                    .map(|&p| s.points[p].clone())
                    .collect();
                match kind {
                    ClassifierKind::Svm => {
                        let params = SvmParams {
                            c,
                            gamma,
                            tol: cfg.search.tol,
                            max_iter: cfg.search.max_iter,
                            seed,
                        };
                        let m = svm_train(&x, &fd.train_labels, &params)?;
                        fd.validate_points
                            .iter()
                            .map(|&p| svm_decision(&m, &s.points[p]))
                            .collect()
                    }
                    _ => {
                        let m = bh_train(&x, &fd.train_labels, sigma)?;
                        fd.validate_points
                            .iter()
                            .map(|&p| bh_likelihood(&m, &s.points[p]))
                            .collect()
                    }
                }
            })
        }
    }
}
