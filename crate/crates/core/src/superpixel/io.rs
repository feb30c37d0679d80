//! Labeling persistence: a binary raster of big-endian 32-bit ids with a
//! PGM-style header (`PL32\n<w> <h>\n<max id>\n`), plus a JSON sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{slic_segment, SlicConfig, SuperpixelLabeling};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::imagecore::ImageRgb;

const MAGIC: &str = "PL32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub id: u32,
    pub pixel_count: usize,
    pub centroid: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rgb: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingSidecar {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<SlicConfig>,
    pub superpixels: Vec<SidecarEntry>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the raster to `path` and the sidecar to `<path>.json`.
pub fn write_labeling(
    lab: &SuperpixelLabeling,
    path: impl AsRef<Path>,
    config: Option<&SlicConfig>,
    image: Option<&ImageRgb>,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(32 + 4 * lab.labels().len());
    let max_id = lab.count().saturating_sub(1);
    write!(buf, "{MAGIC}\n{} {}\n{max_id}\n", lab.width(), lab.height()).expect("write to vec");
    for &l in lab.labels() {
        buf.extend_from_slice(&l.to_be_bytes());
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))?;

    let colors = image.map(|img| lab.mean_colors(img)).transpose()?;
    let sidecar = LabelingSidecar {
        width: lab.width(),
        height: lab.height(),
        count: lab.count(),
        config: config.cloned(),
        superpixels: lab
            .stats()
            .iter()
            .enumerate()
            .map(|(id, s)| SidecarEntry {
                id: id as u32,
                pixel_count: s.pixel_count,
                centroid: s.centroid,
                mean_rgb: colors.as_ref().map(|c| c[id]),
            })
            .collect(),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
}

pub fn read_labeling(path: impl AsRef<Path>) -> Result<SuperpixelLabeling> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: &str| Error::CorruptFile {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    // header is three newline-terminated ASCII lines
    let mut cursor = 0;
    let mut lines = Vec::new();
    for _ in 0..3 {
        let end = bytes[cursor..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("truncated header"))?;
        lines.push(
            std::str::from_utf8(&bytes[cursor..cursor + end])
                .map_err(|_| corrupt("non-ascii header"))?,
        );
        cursor += end + 1;
    }
    if lines[0] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let dims: Vec<usize> = lines[1]
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| corrupt("bad dimensions")))
        .collect::<Result<_>>()?;
    let [w, h] = dims[..] else {
        return Err(corrupt("bad dimensions"));
    };
    let max_id: u32 = lines[2].trim().parse().map_err(|_| corrupt("bad max id"))?;
    let body = &bytes[cursor..];
    if body.len() != 4 * w * h {
        return Err(corrupt("raster length does not match dimensions"));
    }
    let labels: Vec<u32> = body
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if labels.iter().any(|&l| l > max_id) {
        return Err(corrupt("id exceeds declared maximum"));
    }
    SuperpixelLabeling::from_labels(w, h, labels).map_err(|e| corrupt(&e.to_string()))
}

/// On-disk cache of segmentations keyed by image content and SLIC config.
#[derive(Debug, Clone)]
pub struct LabelingCache {
    dir: PathBuf,
}

impl LabelingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn key(img: &ImageRgb, cfg: &SlicConfig) -> Result<String> {
        let mut bytes = Vec::with_capacity(16 + 3 * img.len());
        bytes.extend_from_slice(&(img.width() as u64).to_le_bytes());
        bytes.extend_from_slice(&(img.height() as u64).to_le_bytes());
        bytes.extend(img.pixels().iter().flatten());
        let image_hash = sha256_hex(&bytes);
        let cfg_hash = sha256_hex(&serde_json::to_vec(cfg)?);
        Ok(format!("{}-{}", &image_hash[..16], &cfg_hash[..16]))
    }

    pub fn get_or_segment(&self, img: &ImageRgb, cfg: &SlicConfig) -> Result<SuperpixelLabeling> {
        let path = self.dir.join(format!("{}.pl32", Self::key(img, cfg)?));
        if path.exists() {
            if let Ok(lab) = read_labeling(&path) {
                if lab.width() == img.width() && lab.height() == img.height() {
                    return Ok(lab);
                }
            }
            log::warn!("ignoring unreadable cache entry {}", path.display());
        }
        let lab = slic_segment(img, cfg)?;
        write_labeling(&lab, &path, Some(cfg), Some(img))?;
        Ok(lab)
    }
}
