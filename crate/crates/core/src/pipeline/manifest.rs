//! Dataset manifests: image/mask pairs with train/validation splits.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::io::{read_mask, read_rgb};
use crate::imagecore::{BinaryMask, ImageRgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Path relative to the manifest directory.
    pub image: PathBuf,
    /// Binary flower mask (PGM), relative to the manifest directory.
    pub mask: Option<PathBuf>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub images: Vec<ManifestEntry>,
    /// Mean RGB of the training images, filled in by training if absent.
    #[serde(default)]
    pub dataset_mean: Option<[f64; 3]>,
    #[serde(default)]
    pub slic_config_hash: Option<String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            images: Vec::new(),
            dataset_mean: None,
            slic_config_hash: None,
            base_dir: base_dir.into(),
        }
    }

    /// Loads and validates a manifest; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Checks id uniqueness and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.images {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Format(format!(
                    "duplicate image id `{}` in manifest",
                    e.id
                )));
            }
            for p in std::iter::once(&e.image).chain(e.mask.as_ref()) {
                let full = self.base_dir.join(p);
                if !full.is_file() {
                    return Err(Error::NotFound(format!(
                        "manifest file {} does not exist",
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.images.iter().filter(move |e| e.split == split)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn load_image(&self, e: &ManifestEntry) -> Result<ImageRgb> {
        read_rgb(self.resolve(&e.image))
    }

    pub fn load_mask(&self, e: &ManifestEntry) -> Result<BinaryMask> {
        let p = e
            .mask
            .as_ref()
            .ok_or_else(|| Error::NotFound(format!("image `{}` has no flower mask", e.id)))?;
        read_mask(self.resolve(p))
    }
}
