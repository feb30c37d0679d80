//! End-to-end orchestration: training, prediction, transfer pre-processing,
//! bundle persistence, manifests and synthetic scenes.

mod bundle;
mod detect;
mod manifest;
mod synth;
mod train;
mod transfer;

pub use bundle::{load_bundle, save_bundle, Classifier, ModelBundle, Provenance, BUNDLE_VERSION};
pub use detect::{
    detect_image, detect_with_labeling, detections_csv, extract_features, overlay, reduce_features,
    score_features, write_detections, DetectOutput, Detection, SuperpixelFailure,
};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use synth::{
    synth_dataset, synth_orchard, synth_scene, Disc, PanelSpec, SceneSpec, SceneTruth,
};
pub use train::{
    crossval_method, evaluate_bundle, evaluate_prepared, feature_table, prepare_entry,
    prepare_split, reduce_set, train_pipeline, train_prepared, ClassifierKind, Evaluation,
    FeatureTable, GridSelection, PreparedImage, TrainConfig, TrainOutput,
};
pub use transfer::{
    channel_references, estimate_background, harmonize_channels, low_texture_mask,
    transfer_preprocess, transfer_with_references, BackgroundConfig, BackgroundEstimate,
    BackgroundModel, TransferOutput, SATURATION_REFERENCE_BINS,
};
