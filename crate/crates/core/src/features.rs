//! Feature vectors: the built-in 100-bin HSV histogram and ingestion of
//! externally computed (e.g. CNN) features.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{Hsv, ImageHsv};
use crate::proposals::Mirror;
use crate::superpixel::SuperpixelLabeling;

pub const HUE_BINS: usize = 50;
pub const SATURATION_BINS: usize = 40;
pub const VALUE_BINS: usize = 10;
pub const HSV_FEATURE_DIM: usize = HUE_BINS + SATURATION_BINS + VALUE_BINS;

/// Identifies the sample a feature vector belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureKey {
    pub image_id: String,
    pub superpixel_id: u32,
    pub variant: Mirror,
}

impl FeatureKey {
    pub fn new(image_id: impl Into<String>, superpixel_id: u32) -> Self {
        Self {
            image_id: image_id.into(),
            superpixel_id,
            variant: Mirror::Original,
        }
    }

    pub fn with_variant(mut self, variant: Mirror) -> Self {
        self.variant = variant;
        self
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.image_id,
            self.superpixel_id,
            self.variant.code()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTag {
    HsvHist,
    External(String),
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub tag: FeatureTag,
    pub key: FeatureKey,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// How the three channel blocks of the HSV histogram are normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockNormalization {
    /// Each block sums to 1, then the whole vector is rescaled to sum 1.
    #[default]
    PerBlock,
    /// The raw 100 counts are normalised together.
    Joint,
}

#[inline]
fn bin(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    (((v - lo) / (hi - lo) * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Raw (unnormalised) 100-bin counts of a pixel set.
pub fn hsv_counts<'a>(pixels: impl IntoIterator<Item = &'a Hsv>) -> [f64; HSV_FEATURE_DIM] {
    let mut counts = [0.0; HSV_FEATURE_DIM];
    for p in pixels {
        counts[bin(p.h, 0.0, 360.0, HUE_BINS)] += 1.0;
        counts[HUE_BINS + bin(p.s, 0.0, 1.0, SATURATION_BINS)] += 1.0;
        counts[HUE_BINS + SATURATION_BINS + bin(p.v, 0.0, 1.0, VALUE_BINS)] += 1.0;
    }
    counts
}

/// Normalises raw counts into a histogram feature summing to 1.
pub fn normalize_hsv_counts(counts: &[f64], norm: BlockNormalization) -> Result<Vec<f64>> {
    if counts.len() != HSV_FEATURE_DIM {
        return Err(Error::invalid(format!(
            "expected {HSV_FEATURE_DIM} counts, got {}",
            counts.len()
        )));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidState(
            "histogram of an empty pixel set".into(),
        ));
    }
    let mut out = counts.to_vec();
    if norm == BlockNormalization::PerBlock {
        for block in [
            0..HUE_BINS,
            HUE_BINS..HUE_BINS + SATURATION_BINS,
            HUE_BINS + SATURATION_BINS..HSV_FEATURE_DIM,
        ] {
            let s: f64 = out[block.clone()].iter().sum();
            out[block].iter_mut().for_each(|v| *v /= s);
        }
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Ok(out)
}

/// HSV histogram feature of one superpixel.
pub fn hsv_histogram_features(
    img: &ImageHsv,
    lab: &SuperpixelLabeling,
    id: u32,
    norm: BlockNormalization,
) -> Result<FeatureVector> {
    if img.width() != lab.width() || img.height() != lab.height() {
        return Err(Error::invalid("image and labeling dimensions differ"));
    }
    let bbox = lab.stat(id)?.bbox;
    let mut pixels = Vec::new();
    for y in bbox.y0..=bbox.y1 {
        for x in bbox.x0..=bbox.x1 {
            if lab.label(x, y) == id {
                pixels.push(img.get(x, y));
            }
        }
    }
    Ok(FeatureVector {
        values: normalize_hsv_counts(&hsv_counts(&pixels), norm)?,
        tag: FeatureTag::HsvHist,
        key: FeatureKey::new("", id),
    })
}

/// HSV histogram features of every superpixel, in id order, in a single pass.
pub fn hsv_histogram_features_all(
    img: &ImageHsv,
    lab: &SuperpixelLabeling,
    norm: BlockNormalization,
) -> Result<Vec<FeatureVector>> {
    if img.width() != lab.width() || img.height() != lab.height() {
        return Err(Error::invalid("image and labeling dimensions differ"));
    }
    let mut counts = vec![[0.0; HSV_FEATURE_DIM]; lab.count()];
    for (p, &l) in img.pixels().iter().zip(lab.labels()) {
        let c = &mut counts[l as usize];
        c[bin(p.h, 0.0, 360.0, HUE_BINS)] += 1.0;
        c[HUE_BINS + bin(p.s, 0.0, 1.0, SATURATION_BINS)] += 1.0;
        c[HUE_BINS + SATURATION_BINS + bin(p.v, 0.0, 1.0, VALUE_BINS)] += 1.0;
    }
    counts
        .iter()
        .enumerate()
        .map(|(id, c)| {
            Ok(FeatureVector {
                values: normalize_hsv_counts(c, norm)?,
                tag: FeatureTag::HsvHist,
                key: FeatureKey::new("", id as u32),
            })
        })
        .collect()
}

/// Feature vectors read from a CSV file, served by key.
///
/// Format: first line `#dim=<N>`, then `image_id,superpixel_id[,variant],v1..vN`
/// where the optional variant is one of `o`, `v`, `h`, `b`.
#[derive(Debug, Clone)]
pub struct ExternalFeatures {
    name: String,
    dim: usize,
    vectors: HashMap<FeatureKey, Vec<f64>>,
}

impl ExternalFeatures {
    pub fn parse(name: impl Into<String>, text: &str, expected_dim: usize) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let dim = match lines.next() {
            Some((_, header)) => header
                .trim()
                .strip_prefix("#dim=")
                .and_then(|d| d.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("expected `#dim=<N>` header, found `{header}`"),
                })?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty feature file".into(),
                })
            }
        };
        if dim != expected_dim {
            return Err(Error::Format(format!(
                "feature file declares dim={dim} but {expected_dim} was expected"
            )));
        }
        let mut vectors = HashMap::new();
        for (i, raw) in lines {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
            let parse_err = |message: String| Error::Parse { line, message };
            let (variant, values) = if fields.len() == dim + 2 {
                (Mirror::Original, &fields[2..])
            } else if fields.len() == dim + 3 {
                let v = Mirror::from_code(fields[2])
                    .ok_or_else(|| parse_err(format!("unknown variant `{}`", fields[2])))?;
                (v, &fields[3..])
            } else {
                return Err(parse_err(format!(
                    "expected {} fields, found {}",
                    dim + 2,
                    fields.len()
                )));
            };
            let superpixel_id = fields[1]
                .parse::<u32>()
                .map_err(|_| parse_err(format!("bad superpixel id `{}`", fields[1])))?;
            let values = values
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(format!("bad value `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let key = FeatureKey::new(fields[0], superpixel_id).with_variant(variant);
            if vectors.contains_key(&key) {
                return Err(parse_err(format!("duplicate key {key}")));
            }
            vectors.insert(key, values);
        }
        Ok(Self {
            name: name.into(),
            dim,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, key: &FeatureKey) -> bool {
        self.vectors.contains_key(key)
    }

    pub fn get(&self, key: &FeatureKey) -> Result<FeatureVector> {
        let values = self
            .vectors
            .get(key)
            .ok_or_else(|| Error::NotFound(format!("no external feature for {key}")))?;
        Ok(FeatureVector {
            values: values.clone(),
            tag: FeatureTag::External(self.name.clone()),
            key: key.clone(),
        })
    }

    /// Keys in sorted order.
    pub fn keys(&self) -> Vec<&FeatureKey> {
        let mut k: Vec<_> = self.vectors.keys().collect();
        k.sort();
        k
    }
}

pub fn load_external_features(
    path: impl AsRef<Path>,
    expected_dim: usize,
) -> Result<ExternalFeatures> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ExternalFeatures::parse(name, &text, expected_dim)
}

/// Where feature vectors come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureSourceSpec {
    HsvHist { normalization: BlockNormalization },
    External { name: String, dim: usize },
}

impl FeatureSourceSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::HsvHist { .. } => HSV_FEATURE_DIM,
            Self::External { dim, .. } => *dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hsv(h: f64, s: f64, v: f64) -> Hsv {
        Hsv { h, s, v }
    }

    fn single_region(pixels: Vec<Hsv>) -> (ImageHsv, SuperpixelLabeling) {
        let n = pixels.len();
        let img = ImageHsv::new(n, 1, pixels).unwrap();
        let lab = SuperpixelLabeling::from_labels(n, 1, vec![0; n]).unwrap();
        (img, lab)
    }

    #[test]
    fn constant_region_has_three_bins() {
        let (img, lab) = single_region(vec![hsv(200.0, 0.3, 0.7); 9]);
        let f = hsv_histogram_features(&img, &lab, 0, BlockNormalization::PerBlock).unwrap();
        assert_eq!(f.dim(), 100);
        let nz: Vec<usize> = (0..100).filter(|&i| f.values[i] > 0.0).collect();
        assert_eq!(nz, vec![27, 50 + 12, 90 + 7]);
        assert!((f.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_hues_split_the_hue_block() {
        let (img, lab) = single_region(vec![hsv(0.0, 0.5, 0.5), hsv(180.0, 0.5, 0.5)]);
        let f = hsv_histogram_features(&img, &lab, 0, BlockNormalization::PerBlock).unwrap();
        let hue_mass: f64 = f.values[..HUE_BINS].iter().sum();
        assert!((hue_mass - 1.0 / 3.0).abs() < 1e-12);
        assert!((f.values[0] - 0.5 * hue_mass).abs() < 1e-12);
        assert!((f.values[25] - 0.5 * hue_mass).abs() < 1e-12);
    }

    #[test]
    fn last_hue_bin_and_edges() {
        assert_eq!(bin(352.8, 0.0, 360.0, 50), 49);
        assert_eq!(bin(352.79, 0.0, 360.0, 50), 48);
        assert_eq!(bin(1.0, 0.0, 1.0, 40), 39);
        assert_eq!(bin(1.0, 0.0, 1.0, 10), 9);
    }

    #[test]
    fn joint_matches_per_block_for_pixel_histograms() {
        // each pixel contributes exactly one count per block, so both rules agree
        let (img, lab) = single_region(vec![
            hsv(10.0, 0.1, 0.9),
            hsv(300.0, 0.8, 0.2),
            hsv(10.0, 0.5, 0.5),
        ]);
        let a = hsv_histogram_features(&img, &lab, 0, BlockNormalization::PerBlock).unwrap();
        let b = hsv_histogram_features(&img, &lab, 0, BlockNormalization::Joint).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let skewed = {
            let mut c = [0.0; HSV_FEATURE_DIM];
            c[0] = 4.0;
            c[50] = 1.0;
            c[90] = 1.0;
            c
        };
        let p = normalize_hsv_counts(&skewed, BlockNormalization::PerBlock).unwrap();
        let j = normalize_hsv_counts(&skewed, BlockNormalization::Joint).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((j[0] - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn all_superpixels_in_one_pass_agree() {
        let pixels: Vec<Hsv> = (0..24)
            .map(|i| hsv(i as f64 * 15.0, (i % 5) as f64 / 5.0, (i % 7) as f64 / 7.0))
            .collect();
        let img = ImageHsv::new(6, 4, pixels).unwrap();
        let lab = SuperpixelLabeling::from_labels(
            6,
            4,
            (0..24)
                .map(|i| u32::from(i % 6 >= 3) + 2 * u32::from(i >= 12))
                .collect(),
        )
        .unwrap();
        let all = hsv_histogram_features_all(&img, &lab, BlockNormalization::PerBlock).unwrap();
        for id in 0..4u32 {
            let one = hsv_histogram_features(&img, &lab, id, BlockNormalization::PerBlock).unwrap();
            assert_eq!(one.values, all[id as usize].values);
        }
    }

    fn arb_hsv() -> impl Strategy<Value = Hsv> {
        (0.0..360.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(h, s, v)| hsv(h, s, v))
    }

    proptest! {
        #[test]
        fn order_invariant_and_normalized(mut pixels in prop::collection::vec(arb_hsv(), 1..40), seed in any::<u64>()) {
            let (img, lab) = single_region(pixels.clone());
            let a = hsv_histogram_features(&img, &lab, 0, BlockNormalization::PerBlock).unwrap();
            prop_assert!((a.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.values.iter().all(|&v| v >= 0.0));
            let k = (seed % pixels.len() as u64) as usize;
            pixels.rotate_left(k);
            pixels.reverse();
            let (img, lab) = single_region(pixels);
            let b = hsv_histogram_features(&img, &lab, 0, BlockNormalization::PerBlock).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn mixture_of_partition(pixels in prop::collection::vec(arb_hsv(), 2..40), split in 1usize..39) {
            let split = split.min(pixels.len() - 1);
            let whole = normalize_hsv_counts(&hsv_counts(&pixels), BlockNormalization::PerBlock).unwrap();
            let a = normalize_hsv_counts(&hsv_counts(&pixels[..split]), BlockNormalization::PerBlock).unwrap();
            let b = normalize_hsv_counts(&hsv_counts(&pixels[split..]), BlockNormalization::PerBlock).unwrap();
            let wa = split as f64 / pixels.len() as f64;
            for i in 0..HSV_FEATURE_DIM {
                prop_assert!((whole[i] - (wa * a[i] + (1.0 - wa) * b[i])).abs() < 1e-12);
            }
        }
    }

    fn csv(dim: usize, rows: &[&str]) -> String {
        let mut s = format!("#dim={dim}\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn external_lookup_4096() {
        let values: Vec<String> = (0..4096).map(|i| format!("{}", i as f64 * 0.25)).collect();
        let row = format!("img7,12,{}", values.join(","));
        let src = ExternalFeatures::parse("fc6", &csv(4096, &[&row]), 4096).unwrap();
        let f = src.get(&FeatureKey::new("img7", 12)).unwrap();
        assert_eq!(f.dim(), 4096);
        assert_eq!(f.values[4095], 1023.75);
        assert_eq!(f.tag, FeatureTag::External("fc6".into()));
        assert_eq!(src.get(&FeatureKey::new("img7", 12)).unwrap(), f);
        assert!(matches!(
            src.get(&FeatureKey::new("img7", 13)),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn external_errors() {
        assert!(matches!(
            ExternalFeatures::parse("x", &csv(4096, &[]), 100),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            ExternalFeatures::parse("x", &csv(2, &["a,1,0.5,0.5", "a,1,0.1,0.2"]), 2),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            ExternalFeatures::parse("x", &csv(2, &["a,1,0.5,0.5", "a,2,0.1,zz"]), 2),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            ExternalFeatures::parse("x", &csv(2, &["a,1,0.5"]), 2),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            ExternalFeatures::parse("x", "dim=2\n", 2),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn external_variants() {
        let src =
            ExternalFeatures::parse("x", &csv(2, &["a,1,0.5,0.5", "a,1,v,1,2", "a,1,b,3,4"]), 2)
                .unwrap();
        assert_eq!(src.len(), 3);
        let key = FeatureKey::new("a", 1).with_variant(Mirror::Both);
        assert_eq!(src.get(&key).unwrap().values, vec![3.0, 4.0]);
        assert!(ExternalFeatures::parse("x", &csv(2, &["a,1,q,1,2"]), 2).is_err());
    }
}
