//! Versioned, checksummed model bundles holding everything prediction needs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{BhModel, HsvThresholdConfig, Hyper, SvmModel};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::features::FeatureSourceSpec;
use crate::imagecore::Histogram;
use crate::proposals::{DatasetMean, PortraitConfig};
use crate::reduce::PcaModel;
use crate::superpixel::SlicConfig;

pub const BUNDLE_VERSION: u32 = 1;
const MAGIC: &str = "FLOWERDET-BUNDLE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Classifier {
    Svm {
        model: SvmModel,
        threshold: f64,
    },
    Bh {
        model: BhModel,
    },
    /// Pixel mask detector; a superpixel is positive when at least
    /// `min_overlap` of its pixels pass.
    HsvThreshold {
        config: HsvThresholdConfig,
        min_overlap: f64,
    },
}

impl Classifier {
    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Svm { .. } => "svm",
            Classifier::Bh { .. } => "bh",
            Classifier::HsvThreshold { .. } => "hsvthresh",
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Classifier::Svm { threshold, .. } => *threshold,
            Classifier::Bh { model } => model.threshold,
            Classifier::HsvThreshold { min_overlap, .. } => *min_overlap,
        }
    }

    /// Feature dimension consumed, if the classifier uses feature vectors.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Classifier::Svm { model, .. } => model.dim(),
            Classifier::Bh { model } => Some(model.dim()),
            Classifier::HsvThreshold { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub grid_cell: Option<Hyper>,
    pub grid_score: Option<f64>,
    pub augmentation: bool,
    pub pca_on_augmented: bool,
    pub training_images: usize,
    pub positive_superpixels: usize,
    pub negative_superpixels: usize,
    /// Samples the classifier saw, augmented copies included.
    pub training_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub slic: SlicConfig,
    pub portrait: PortraitConfig,
    pub dataset_mean: DatasetMean,
    pub features: FeatureSourceSpec,
    pub pca: Option<PcaModel>,
    pub classifier: Classifier,
    /// Normalised saturation histogram of the training images.
    pub saturation_reference: Option<Histogram>,
    /// Mean value channel of the training images, in `[0,1]`.
    pub value_reference_mean: Option<f64>,
    pub provenance: Provenance,
}

impl ModelBundle {
    /// Checks that extractor, PCA and classifier dimensions chain together.
    pub fn validate(&self) -> Result<()> {
        let Some(expected) = self.classifier.input_dim() else {
            return Ok(());
        };
        let mut dim = self.features.dim();
        if let Some(pca) = &self.pca {
            if pca.input_dim() != dim {
                return Err(Error::InvalidState(format!(
                    "PCA expects {}-dimensional input but the feature source yields {dim}",
                    pca.input_dim()
                )));
            }
            dim = pca.k();
        }
        if expected != dim {
            return Err(Error::InvalidState(format!(
                "classifier expects {expected}-dimensional input but receives {dim}"
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let body = serde_json::to_string_pretty(self)? + "\n";
        let mut out = format!(
            "{MAGIC} v{} sha256={}\n",
            self.version,
            sha256_hex(body.as_bytes())
        )
        .into_bytes();
        out.extend_from_slice(body.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptFile {
            path: path.to_path_buf(),
            reason,
        };
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("missing header line".into()))?;
        let header =
            std::str::from_utf8(&bytes[..nl]).map_err(|_| corrupt("header is not UTF-8".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(corrupt("not a model bundle".into()));
        }
        let found: u32 = parts
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| corrupt("malformed version field".into()))?;
        if found != BUNDLE_VERSION {
            return Err(Error::UnsupportedVersion {
                found,
                supported: BUNDLE_VERSION,
            });
        }
        let checksum = parts
            .next()
            .and_then(|c| c.strip_prefix("sha256="))
            .ok_or_else(|| corrupt("missing checksum".into()))?;
        let body = &bytes[nl + 1..];
        if sha256_hex(body) != checksum {
            return Err(corrupt("checksum mismatch (truncated or modified)".into()));
        }
        let bundle: ModelBundle =
            serde_json::from_slice(body).map_err(|e| corrupt(e.to_string()))?;
        if bundle.version != found {
            return Err(corrupt(format!(
                "header version {found} disagrees with body version {}",
                bundle.version
            )));
        }
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn save_bundle(b: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, b.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_bytes(&bytes, path)
}
