//! Synthetic orchard scenes with exact flower masks.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::imagecore::io::{write_mask_pgm, write_png};
use crate::imagecore::{hsv_to_rgb, BinaryMask, Hsv, ImageRgb};

/// Flat rectangle behind the scene, given as fractions of the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub rgb: [u8; 3],
    /// Noise standard deviation on the panel, in 8-bit levels.
    pub noise: f64,
}

impl Default for PanelSpec {
    fn default() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 0.5,
            rgb: [45, 95, 200],
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Inclusive range for the number of flowers per image.
    pub disc_count: [usize; 2],
    pub radius: [f64; 2],
    /// Mean foliage hue in degrees.
    pub background_hue: f64,
    /// Branch strokes per 10,000 pixels.
    pub clutter_density: f64,
    /// Pale sky gaps seen through the canopy, per 10,000 pixels.
    pub sky_density: f64,
    /// Fraction of flowers rendered in shade.
    pub shade_fraction: f64,
    /// Per-image brightness factor range.
    pub illumination: [f64; 2],
    /// Gaussian noise standard deviation, in 8-bit levels.
    pub noise: f64,
    pub panel: Option<PanelSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            disc_count: [3, 8],
            radius: [5.0, 10.0],
            background_hue: 105.0,
            clutter_density: 2.0,
            sky_density: 1.5,
            shade_fraction: 0.25,
            illumination: [0.85, 1.15],
            noise: 4.0,
            panel: None,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("scene must have positive size"));
        }
        if self.disc_count[0] > self.disc_count[1] {
            return Err(Error::invalid("disc_count range is reversed"));
        }
        if !(self.radius[0] > 0.0 && self.radius[0] <= self.radius[1]) {
            return Err(Error::invalid("radius range must be positive and ordered"));
        }
        if !(self.illumination[0] > 0.0 && self.illumination[0] <= self.illumination[1]) {
            return Err(Error::invalid(
                "illumination range must be positive and ordered",
            ));
        }
        if !(self.noise >= 0.0 && self.clutter_density >= 0.0 && self.sky_density >= 0.0) {
            return Err(Error::invalid(
                "noise and clutter densities must be non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.shade_fraction) {
            return Err(Error::invalid("shade fraction must lie in [0,1]"));
        }
        if let Some(p) = &self.panel {
            let ok = (0.0..=1.0).contains(&p.x0)
                && (0.0..=1.0).contains(&p.y0)
                && p.x0 < p.x1
                && p.y0 < p.y1
                && p.x1 <= 1.0
                && p.y1 <= 1.0;
            if !ok || !(p.noise >= 0.0) {
                return Err(Error::invalid(
                    "panel rectangle must lie within [0,1] and be non-empty",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Disc {
    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (dx, dy) = (x as f64 + 0.5 - self.cx, y as f64 + 0.5 - self.cy);
        dx * dx + dy * dy <= self.r * self.r
    }
}

/// Generated scene and its ground truth.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub image: ImageRgb,
    pub flowers: BinaryMask,
    /// Visible panel pixels (not covered by flowers or branches).
    pub panel: Option<BinaryMask>,
    pub discs: Vec<Disc>,
}

/// Smooth random field in roughly `[-1, 1]` built from a few plane waves.
struct Field {
    waves: Vec<(f64, f64, f64)>,
}

impl Field {
    fn new(rng: &mut ChaCha8Rng, wavelength: [f64; 2]) -> Self {
        let waves = (0..4)
            .map(|_| {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / rng.random_range(wavelength[0]..wavelength[1]);
                (
                    k * theta.cos(),
                    k * theta.sin(),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Self { waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(kx, ky, ph)| (kx * x + ky * y + ph).sin())
            .sum::<f64>()
            / 2.0
    }
}

fn paint_disc(
    buf: &mut [Hsv],
    w: usize,
    h: usize,
    cx: f64,
    cy: f64,
    r: f64,
    mut color: impl FnMut(f64) -> Option<Hsv>,
) {
    let x0 = (cx - r).floor().max(0.0) as usize;
    let y0 = (cy - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(w);
    let y1 = ((cy + r).ceil() as usize).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let d2 = dx * dx + dy * dy;
            if d2 <= r * r {
                if let Some(c) = color(d2.sqrt() / r) {
                    buf[y * w + x] = c;
                }
            }
        }
    }
}

pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<SceneTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width, spec.height);
    let fields: Vec<Field> = (0..3).map(|_| Field::new(&mut rng, [20.0, 70.0])).collect();
    let mut buf: Vec<Hsv> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            Hsv {
                h: (spec.background_hue + 12.0 * fields[0].at(x, y)).rem_euclid(360.0),
                s: (0.6 + 0.15 * fields[1].at(x, y)).clamp(0.0, 1.0),
                v: (0.38 + 0.12 * fields[2].at(x, y)).clamp(0.0, 1.0),
            }
        })
        .collect();

    // leaves: small blobs of varied green give the foliage its texture
    let leaves = (w * h) / 60;
    for _ in 0..leaves {
        let (cx, cy) = (
            rng.random_range(0.0..w as f64),
            rng.random_range(0.0..h as f64),
        );
        let r = rng.random_range(1.5..4.5);
        let c = Hsv {
            h: (spec.background_hue + rng.random_range(-25.0..25.0)).rem_euclid(360.0),
            s: rng.random_range(0.4..0.9),
            v: rng.random_range(0.15..0.6),
        };
        paint_disc(&mut buf, w, h, cx, cy, r, |_| Some(c));
    }

    let gaps = (spec.sky_density * (w * h) as f64 / 10_000.0).round() as usize;
    for _ in 0..gaps {
        let (cx, cy) = (
            rng.random_range(0.0..w as f64),
            rng.random_range(0.0..h as f64),
        );
        let c = Hsv {
            h: rng.random_range(195.0..225.0),
            s: rng.random_range(0.05..0.3),
            v: rng.random_range(0.8..1.0),
        };
        for _ in 0..rng.random_range(3..=6) {
            let (dx, dy) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let r = rng.random_range(2.0..6.0);
            paint_disc(&mut buf, w, h, cx + dx, cy + dy, r, |_| Some(c));
        }
    }

    let mut panel_px = vec![false; w * h];
    if let Some(p) = &spec.panel {
        let (px0, px1) = (
            (p.x0 * w as f64).round() as usize,
            (p.x1 * w as f64).round() as usize,
        );
        let (py0, py1) = (
            (p.y0 * h as f64).round() as usize,
            (p.y1 * h as f64).round() as usize,
        );
        let c = crate::imagecore::rgb_to_hsv_pixel(p.rgb);
        for y in py0..py1 {
            for x in px0..px1 {
                buf[y * w + x] = c;
                panel_px[y * w + x] = true;
            }
        }
    }

    let strokes = (spec.clutter_density * (w * h) as f64 / 10_000.0).round() as usize;
    for _ in 0..strokes {
        let (mut x, mut y) = (
            rng.random_range(0.0..w as f64),
            rng.random_range(0.0..h as f64),
        );
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let len = rng.random_range(15.0..60.0);
        let width = rng.random_range(1.0..2.2);
        let c = Hsv {
            h: rng.random_range(20.0..35.0),
            s: rng.random_range(0.45..0.7),
            v: rng.random_range(0.22..0.42),
        };
        for _ in 0..(len as usize) {
            paint_disc(&mut buf, w, h, x, y, width, |_| Some(c));
            for_each_in(w, h, x, y, width, |i| panel_px[i] = false);
            x += theta.cos();
            y += theta.sin();
        }
    }

    let n_discs = rng.random_range(spec.disc_count[0]..=spec.disc_count[1]);
    let mut discs: Vec<Disc> = Vec::with_capacity(n_discs);
    let mut attempts = 0;
    while discs.len() < n_discs && attempts < 2000 {
        attempts += 1;
        let r = rng.random_range(spec.radius[0]..=spec.radius[1]);
        if 2.0 * r + 2.0 > w.min(h) as f64 {
            continue;
        }
        let cx = rng.random_range(r + 1.0..=w as f64 - r - 1.0);
        let cy = rng.random_range(r + 1.0..=h as f64 - r - 1.0);
        if discs
            .iter()
            .all(|d| ((d.cx - cx).powi(2) + (d.cy - cy).powi(2)).sqrt() >= d.r + r + 2.0)
        {
            discs.push(Disc { cx, cy, r });
        }
    }
    if discs.len() < n_discs {
        log::warn!("placed only {} of {n_discs} flowers", discs.len());
    }
    let mut flowers = vec![false; w * h];
    for d in &discs {
        let hue = rng.random_range(325.0..360.0f64) % 360.0;
        let sat = rng.random_range(0.02..0.3);
        let shade = if rng.random_bool(spec.shade_fraction) {
            rng.random_range(0.6..0.8)
        } else {
            1.0
        };
        let val = rng.random_range(0.85..1.0) * shade;
        let stamen = Hsv {
            h: rng.random_range(45.0..60.0),
            s: rng.random_range(0.5..0.7),
            v: rng.random_range(0.75..0.9) * shade,
        };
        paint_disc(&mut buf, w, h, d.cx, d.cy, d.r, |t| {
            Some(if t < 0.25 {
                stamen
            } else {
                Hsv {
                    h: hue,
                    s: (sat * (0.6 + 0.6 * t)).min(1.0),
                    v: val * (1.0 - 0.12 * t * t),
                }
            })
        });
        for_each_in(w, h, d.cx, d.cy, d.r, |i| {
            flowers[i] = true;
            panel_px[i] = false;
        });
    }

    let light = rng.random_range(spec.illumination[0]..=spec.illumination[1]);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let panel_noise = spec.panel.as_ref().map_or(0.0, |p| p.noise);
    let data = buf
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let rgb = hsv_to_rgb(Hsv {
                v: (p.v * light).min(1.0),
                ..p
            });
            let sd = if panel_px[i] { panel_noise } else { spec.noise };
            rgb.map(|c| {
                (c as f64 + sd * noise.sample(&mut rng))
                    .round()
                    .clamp(0.0, 255.0) as u8
            })
        })
        .collect();
    Ok(SceneTruth {
        image: ImageRgb::new(w, h, data)?,
        flowers: BinaryMask::new(w, h, flowers)?,
        panel: spec
            .panel
            .as_ref()
            .map(|_| BinaryMask::new(w, h, panel_px))
            .transpose()?,
        discs,
    })
}

fn for_each_in(w: usize, h: usize, cx: f64, cy: f64, r: f64, mut f: impl FnMut(usize)) {
    let x0 = (cx - r).floor().max(0.0) as usize;
    let y0 = (cy - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil().max(0.0) as usize).min(w);
    let y1 = ((cy + r).ceil().max(0.0) as usize).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                f(y * w + x);
            }
        }
    }
}

pub fn synth_orchard(spec: &SceneSpec, seed: u64) -> Result<(ImageRgb, BinaryMask)> {
    let s = synth_scene(spec, seed)?;
    Ok((s.image, s.flowers))
}

/// Writes `count` training and `validation_count` validation scenes plus a
/// manifest into `out_dir`.
pub fn synth_dataset(
    spec: &SceneSpec,
    count: usize,
    validation_count: usize,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<(DatasetManifest, PathBuf)> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = DatasetManifest::new("synthetic", out);
    for i in 0..count + validation_count {
        let id = format!("scene_{i:04}");
        let (img, mask) = synth_orchard(spec, rng.random())?;
        let (ip, mp) = (format!("{id}.png"), format!("{id}_mask.pgm"));
        write_png(&img, out.join(&ip))?;
        write_mask_pgm(&mask, out.join(&mp))?;
        manifest.images.push(ManifestEntry {
            id,
            image: ip.into(),
            mask: Some(mp.into()),
            split: if i < count {
                Split::Train
            } else {
                Split::Validation
            },
        });
    }
    let path = out.join("manifest.json");
    manifest.save(&path)?;
    Ok((manifest, path))
}
