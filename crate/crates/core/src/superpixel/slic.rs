use serde::{Deserialize, Serialize};

use super::labeling::{enforce_connectivity, SuperpixelLabeling};
use crate::error::{Error, Result};
use crate::imagecore::ImageRgb;

/// Pixels per superpixel that turns a 5184x3456 frame into ~915 superpixels.
pub const DEFAULT_PIXELS_PER_SUPERPIXEL: f64 = 5184.0 * 3456.0 / 915.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicConfig {
    /// Desired number of superpixels; `None` derives it from the image area
    /// using [`DEFAULT_PIXELS_PER_SUPERPIXEL`].
    pub target_count: Option<usize>,
    pub compactness: f64,
    pub max_iterations: usize,
    /// Stop once no centre moves by this many pixels or more. Zero runs the
    /// full iteration budget.
    pub convergence_epsilon: f64,
    /// Fragments smaller than this fraction of the mean superpixel area are
    /// merged into a neighbour.
    pub min_region_fraction: f64,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            target_count: None,
            compactness: 10.0,
            max_iterations: 10,
            convergence_epsilon: 0.0,
            min_region_fraction: 0.25,
        }
    }
}

impl SlicConfig {
    pub fn with_count(count: usize) -> Self {
        Self {
            target_count: Some(count),
            ..Self::default()
        }
    }

    pub fn resolved_count(&self, width: usize, height: usize) -> usize {
        self.target_count.unwrap_or_else(|| {
            ((width * height) as f64 / DEFAULT_PIXELS_PER_SUPERPIXEL)
                .ceil()
                .max(1.0) as usize
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_count == Some(0) {
            return Err(Error::invalid("superpixel count must be at least 1"));
        }
        if !(self.compactness > 0.0) {
            return Err(Error::invalid("compactness must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.convergence_epsilon >= 0.0) {
            return Err(Error::invalid("convergence epsilon must be non-negative"));
        }
        if !(self.min_region_fraction > 0.0 && self.min_region_fraction < 1.0) {
            return Err(Error::invalid("min_region_fraction must lie in (0,1)"));
        }
        Ok(())
    }
}

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB (D65) to CIELAB.
pub fn rgb_to_lab([r, g, b]: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    let x = (0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b) / 0.950_47;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175 * b;
    let z = (0.019_333_9 * r + 0.119_192 * g + 0.950_304_1 * b) / 1.088_83;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

#[inline]
fn sq(v: f64) -> f64 {
    v * v
}

/// Regular grid of `nx * ny ≈ k` seed positions.
fn grid_seeds(w: usize, h: usize, k: usize) -> Vec<(usize, usize)> {
    let step = ((w * h) as f64 / k as f64).sqrt();
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let mut seeds = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = (((i as f64 + 0.5) * sx).floor() as usize).min(w - 1);
            let y = (((j as f64 + 0.5) * sy).floor() as usize).min(h - 1);
            seeds.push((x, y));
        }
    }
    seeds
}

/// Moves a seed to the lowest-gradient pixel of its 3x3 neighbourhood. The
/// seed stays put unless a strictly lower gradient exists.
fn perturb_seed(lab: &[[f64; 3]], w: usize, h: usize, (sx, sy): (usize, usize)) -> (usize, usize) {
    let at = |x: isize, y: isize| {
        lab[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
    };
    let grad = |x: usize, y: usize| {
        let (x, y) = (x as isize, y as isize);
        let (l, r, u, d) = (at(x - 1, y), at(x + 1, y), at(x, y - 1), at(x, y + 1));
        (0..3)
            .map(|c| sq(r[c] - l[c]) + sq(d[c] - u[c]))
            .sum::<f64>()
    };
    let mut best = (grad(sx, sy), sx, sy);
    for y in sy.saturating_sub(1)..=(sy + 1).min(h - 1) {
        for x in sx.saturating_sub(1)..=(sx + 1).min(w - 1) {
            let g = grad(x, y);
            if g < best.0 {
                best = (g, x, y);
            }
        }
    }
    (best.1, best.2)
}

/// SLIC superpixels: k-means over (L, a, b, x, y) with distance
/// `sqrt(dc² + (ds / S)² m²)`, restricted to a `2S x 2S` window around each
/// centre, followed by connectivity enforcement.
pub fn slic_segment(img: &ImageRgb, cfg: &SlicConfig) -> Result<SuperpixelLabeling> {
    cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    if n == 0 {
        return Err(Error::invalid("cannot segment an empty image"));
    }
    let k = cfg.resolved_count(w, h);
    if k > n {
        return Err(Error::invalid(format!(
            "requested {k} superpixels for an image of {n} pixels"
        )));
    }
    let lab: Vec<[f64; 3]> = img.pixels().iter().map(|&p| rgb_to_lab(p)).collect();
    let step = (n as f64 / k as f64).sqrt();
    let spatial_weight = sq(cfg.compactness / step);

    let mut centers: Vec<Center> = grid_seeds(w, h, k)
        .into_iter()
        .map(|s| {
            let (x, y) = perturb_seed(&lab, w, h, s);
            Center {
                lab: lab[y * w + x],
                x: x as f64,
                y: y as f64,
            }
        })
        .collect();

    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..cfg.max_iterations {
        labels.fill(u32::MAX);
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - step).ceil().max(0.0) as usize;
            let x1 = ((c.x + step).floor() as usize).min(w - 1);
            let y0 = (c.y - step).ceil().max(0.0) as usize;
            let y1 = ((c.y + step).floor() as usize).min(h - 1);
            for y in y0..=y1 {
                let dy2 = sq(y as f64 - c.y);
                let row = y * w;
                for x in x0..=x1 {
                    let p = &lab[row + x];
                    let dc2 = sq(p[0] - c.lab[0]) + sq(p[1] - c.lab[1]) + sq(p[2] - c.lab[2]);
                    let d = dc2 + (sq(x as f64 - c.x) + dy2) * spatial_weight;
                    if d < dist[row + x] {
                        dist[row + x] = d;
                        labels[row + x] = ci as u32;
                    }
                }
            }
        }
        // pixels outside every window go to the spatially nearest centre
        for i in 0..n {
            if labels[i] == u32::MAX {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let nearest = centers
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        let da = sq(a.1.x - x) + sq(a.1.y - y);
                        let db = sq(b.1.x - x) + sq(b.1.y - y);
                        da.total_cmp(&db)
                    })
                    .map(|(i, _)| i)
                    .expect("at least one centre");
                labels[i] = nearest as u32;
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            let p = &lab[i];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += p[2];
            s[3] += (i % w) as f64;
            s[4] += (i / w) as f64;
            s[5] += 1.0;
        }
        let mut movement = 0.0f64;
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] == 0.0 {
                continue;
            }
            let next = Center {
                lab: [s[0] / s[5], s[1] / s[5], s[2] / s[5]],
                x: s[3] / s[5],
                y: s[4] / s[5],
            };
            movement = movement.max((sq(next.x - c.x) + sq(next.y - c.y)).sqrt());
            *c = next;
        }
        if movement < cfg.convergence_epsilon {
            break;
        }
    }

    // drop centres that ended up empty before building the labeling
    let mut used: Vec<u32> = labels.clone();
    used.sort_unstable();
    used.dedup();
    let compact: Vec<u32> = labels
        .iter()
        .map(|l| used.binary_search(l).expect("label in use") as u32)
        .collect();
    let raw = SuperpixelLabeling::from_labels(w, h, compact)?;
    Ok(enforce_connectivity(&raw, cfg.min_region_fraction))
}
