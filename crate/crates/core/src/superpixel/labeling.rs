use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{BinaryMask, ImageRgb};

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelStats {
    pub pixel_count: usize,
    /// Mean pixel position `(x, y)`.
    pub centroid: [f64; 2],
    pub bbox: BoundingBox,
}

/// Assignment of every pixel to exactly one superpixel id in `[0, count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelLabeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    stats: Vec<SuperpixelStats>,
}

impl SuperpixelLabeling {
    /// Builds a labeling from raw ids, which must cover `0..K` with no gaps.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::invalid("label buffer does not match dimensions"));
        }
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut acc = vec![
            (
                0usize,
                0.0f64,
                0.0f64,
                usize::MAX,
                usize::MAX,
                0usize,
                0usize
            );
            count
        ];
        for (i, &l) in labels.iter().enumerate() {
            let (x, y) = (i % width, i / width);
            let a = &mut acc[l as usize];
            a.0 += 1;
            a.1 += x as f64;
            a.2 += y as f64;
            a.3 = a.3.min(x);
            a.4 = a.4.min(y);
            a.5 = a.5.max(x);
            a.6 = a.6.max(y);
        }
        let mut stats = Vec::with_capacity(count);
        for (id, a) in acc.into_iter().enumerate() {
            if a.0 == 0 {
                return Err(Error::invalid(format!("superpixel id {id} has no pixels")));
            }
            stats.push(SuperpixelStats {
                pixel_count: a.0,
                centroid: [a.1 / a.0 as f64, a.2 / a.0 as f64],
                bbox: BoundingBox {
                    x0: a.3,
                    y0: a.4,
                    x1: a.5,
                    y1: a.6,
                },
            });
        }
        Ok(Self {
            width,
            height,
            labels,
            stats,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.stats.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn stats(&self) -> &[SuperpixelStats] {
        &self.stats
    }

    pub fn stat(&self, id: u32) -> Result<&SuperpixelStats> {
        self.stats.get(id as usize).ok_or_else(|| {
            Error::invalid(format!(
                "superpixel id {id} out of range (count {})",
                self.count()
            ))
        })
    }

    /// Pixel indices of every superpixel, in raster order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .stats
            .iter()
            .map(|s| Vec::with_capacity(s.pixel_count))
            .collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn mean_colors(&self, img: &ImageRgb) -> Result<Vec<[f64; 3]>> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::invalid("image and labeling dimensions differ"));
        }
        let mut sums = vec![[0u64; 3]; self.count()];
        for (&l, px) in self.labels.iter().zip(img.pixels()) {
            for c in 0..3 {
                sums[l as usize][c] += px[c] as u64;
            }
        }
        Ok(sums
            .iter()
            .zip(&self.stats)
            .map(|(s, st)| s.map(|v| v as f64 / st.pixel_count as f64))
            .collect())
    }

    /// Pixels whose right or lower neighbour carries a different id.
    pub fn boundary_mask(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        let mut data = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let l = self.labels[y * w + x];
                let right = x + 1 < w && self.labels[y * w + x + 1] != l;
                let down = y + 1 < h && self.labels[(y + 1) * w + x] != l;
                data[y * w + x] = right || down;
            }
        }
        BinaryMask::new(w, h, data).expect("dimensions match")
    }

    /// True when every id's pixels form one 4-connected region.
    pub fn is_connected(&self) -> bool {
        let (_, comp_label, _) = four_components(self.width, self.height, &self.labels);
        comp_label.len() == self.count()
    }
}

/// 4-connected components of equal-label pixels: per-pixel component index,
/// the label of each component and each component's size.
fn four_components(w: usize, h: usize, labels: &[u32]) -> (Vec<usize>, Vec<u32>, Vec<usize>) {
    let mut comp = vec![usize::MAX; w * h];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let l = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == usize::MAX && labels[j] == l {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        comp_label.push(l);
        comp_size.push(size);
    }
    (comp, comp_label, comp_size)
}

/// Makes every superpixel a single 4-connected region.
///
/// The largest fragment of each id keeps the id and other large fragments get
/// fresh ids. Fragments (including whole superpixels) smaller than
/// `min_region_fraction * pixels / count` are merged, smallest first, into the
/// largest adjacent region; equal sizes resolve to the lower id. Ids are
/// compacted afterwards, preserving their relative order.
pub fn enforce_connectivity(
    lab: &SuperpixelLabeling,
    min_region_fraction: f64,
) -> SuperpixelLabeling {
    let (w, h) = (lab.width, lab.height);
    let n = w * h;
    if n == 0 || lab.count() == 0 {
        return lab.clone();
    }
    let (comp, comp_orig, comp_size) = four_components(w, h, &lab.labels);
    let ncomp = comp_orig.len();

    // provisional labels: main fragment keeps its id, other fragments are
    // appended after the existing ids in raster order of discovery
    let k = lab.count();
    let mut main = vec![usize::MAX; k];
    for c in 0..ncomp {
        let l = comp_orig[c] as usize;
        if main[l] == usize::MAX || comp_size[c] > comp_size[main[l]] {
            main[l] = c;
        }
    }
    let mut label = vec![0u64; ncomp];
    let mut next = k as u64;
    for c in 0..ncomp {
        let l = comp_orig[c] as usize;
        if main[l] == c {
            label[c] = l as u64;
        } else {
            label[c] = next;
            next += 1;
        }
    }

    let mut pairs = HashSet::new();
    for y in 0..h {
        for x in 0..w {
            let a = comp[y * w + x];
            if x + 1 < w {
                let b = comp[y * w + x + 1];
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
            if y + 1 < h {
                let b = comp[(y + 1) * w + x];
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ncomp];
    for (a, b) in pairs {
        neighbors[a].insert(b);
        neighbors[b].insert(a);
    }

    let threshold = min_region_fraction * n as f64 / k as f64;
    let mut size = comp_size.clone();
    let mut parent: Vec<usize> = (0..ncomp).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..ncomp)
        .filter(|&c| (size[c] as f64) < threshold)
        .map(|c| (size[c], c))
        .collect();
    while let Some((s, c)) = queue.pop_first() {
        debug_assert_eq!(s, size[c]);
        let Some(&target) = neighbors[c]
            .iter()
            .max_by(|&&a, &&b| size[a].cmp(&size[b]).then(label[b].cmp(&label[a])))
        else {
            continue;
        };
        if (size[target] as f64) < threshold {
            queue.remove(&(size[target], target));
        }
        parent[c] = target;
        size[target] += size[c];
        let moved = std::mem::take(&mut neighbors[c]);
        for nb in moved {
            neighbors[nb].remove(&c);
            if nb != target {
                neighbors[nb].insert(target);
                neighbors[target].insert(nb);
            }
        }
        if (size[target] as f64) < threshold {
            queue.insert((size[target], target));
        }
    }

    let root = |mut c: usize| {
        while parent[c] != c {
            c = parent[c];
        }
        c
    };
    let comp_final: Vec<u64> = (0..ncomp).map(|c| label[root(c)]).collect();
    let mut used: Vec<u64> = comp_final.clone();
    used.sort_unstable();
    used.dedup();
    let labels = comp
        .iter()
        .map(|&c| used.binary_search(&comp_final[c]).expect("label in use") as u32)
        .collect();
    SuperpixelLabeling::from_labels(w, h, labels).expect("compacted ids are contiguous")
}

/// Fraction of ground-truth boundary pixels lying within `tolerance` pixels
/// (Chebyshev distance) of a superpixel boundary.
pub fn boundary_recall(
    lab: &SuperpixelLabeling,
    truth: &BinaryMask,
    tolerance: usize,
) -> Result<f64> {
    if !truth.same_shape(lab.width, lab.height) {
        return Err(Error::invalid(
            "boundary mask and labeling dimensions differ",
        ));
    }
    let ours = lab.boundary_mask();
    let (w, h) = (lab.width, lab.height);
    let mut total = 0usize;
    let mut hit = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !truth.get(x, y) {
                continue;
            }
            total += 1;
            let found = (y.saturating_sub(tolerance)..=(y + tolerance).min(h - 1)).any(|yy| {
                (x.saturating_sub(tolerance)..=(x + tolerance).min(w - 1))
                    .any(|xx| ours.get(xx, yy))
            });
            if found {
                hit += 1;
            }
        }
    }
    Ok(if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    })
}

/// Marks a superpixel positive when at least `area_fraction` of its pixels
/// lie inside `flower_mask`.
pub fn assign_labels_from_mask(
    lab: &SuperpixelLabeling,
    flower_mask: &BinaryMask,
    area_fraction: f64,
) -> Result<Vec<bool>> {
    if !flower_mask.same_shape(lab.width, lab.height) {
        return Err(Error::invalid(format!(
            "mask is {}x{}, labeling is {}x{}",
            flower_mask.width(),
            flower_mask.height(),
            lab.width,
            lab.height
        )));
    }
    if !(area_fraction > 0.0 && area_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "area fraction {area_fraction} outside (0,1]"
        )));
    }
    let covered = coverage(lab, flower_mask);
    Ok(covered
        .iter()
        .zip(&lab.stats)
        .map(|(&c, s)| c as f64 >= area_fraction * s.pixel_count as f64)
        .collect())
}

/// Number of mask pixels inside each superpixel.
pub(crate) fn coverage(lab: &SuperpixelLabeling, mask: &BinaryMask) -> Vec<usize> {
    let mut covered = vec![0usize; lab.count()];
    for (&l, &m) in lab.labels.iter().zip(mask.as_slice()) {
        if m {
            covered[l as usize] += 1;
        }
    }
    covered
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab_from(rows: &[&str]) -> SuperpixelLabeling {
        let h = rows.len();
        let w = rows[0].len();
        let labels = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c.to_digit(10).unwrap()))
            .collect();
        SuperpixelLabeling::from_labels(w, h, labels).unwrap()
    }

    #[test]
    fn stats_and_gaps() {
        let l = lab_from(&["0011", "0011"]);
        assert_eq!(l.count(), 2);
        assert_eq!(l.stats()[1].pixel_count, 4);
        assert_eq!(l.stats()[1].centroid, [2.5, 0.5]);
        assert_eq!(
            l.stats()[1].bbox,
            BoundingBox {
                x0: 2,
                y0: 0,
                x1: 3,
                y1: 1
            }
        );
        assert!(SuperpixelLabeling::from_labels(2, 1, vec![0, 2]).is_err());
    }

    #[test]
    fn connected_labeling_is_unchanged() {
        let l = lab_from(&["000111", "000111", "222111", "222333"]);
        assert!(l.is_connected());
        assert_eq!(enforce_connectivity(&l, 0.25), l);
    }

    #[test]
    fn single_pixel_orphan_absorbed() {
        let l = lab_from(&["00000", "00100", "00000", "11111"]);
        // id 1 has an orphan pixel at (2,1) inside region 0
        let out = enforce_connectivity(&l, 0.25);
        assert!(out.is_connected());
        assert_eq!(out.label(2, 1), out.label(0, 0));
        assert_eq!(out.count(), 2);
        assert_eq!(out.stats()[1].pixel_count, 5);
    }

    #[test]
    fn fragment_goes_to_larger_neighbour() {
        // id 2 orphan at (2,0) touches region 0 (size 6) and region 1 (size 11)
        let l = lab_from(&[
            "002111", //
            "001111", //
            "001111", //
            "222222", //
        ]);
        let out = enforce_connectivity(&l, 0.5);
        assert!(out.is_connected());
        assert_eq!(out.label(2, 0), out.label(3, 0));
    }

    #[test]
    fn fragment_tie_goes_to_lower_id() {
        // orphan of id 2 at (2,0) between regions 0 and 1 of equal size 7
        let l = lab_from(&[
            "00211", //
            "00011", //
            "00111", //
            "22222", //
            "22222", //
        ]);
        let out = enforce_connectivity(&l, 0.5);
        assert_eq!(out.label(2, 0), out.label(0, 0));
    }

    #[test]
    fn large_fragments_get_new_ids() {
        let l = lab_from(&["001100", "001100", "001100"]);
        // id 0 is split in two 6-pixel pieces; both survive a small threshold
        let out = enforce_connectivity(&l, 0.1);
        assert_eq!(out.count(), 3);
        assert!(out.is_connected());
        assert_eq!(out.label(0, 0), 0);
        assert_eq!(out.label(2, 0), 1);
        assert_eq!(out.label(4, 0), 2);
    }

    #[test]
    fn label_assignment_rule() {
        let l =
            SuperpixelLabeling::from_labels(10, 20, (0..200).map(|i| (i / 100) as u32).collect())
                .unwrap();
        let mut m = BinaryMask::empty(10, 20);
        for i in 0..50 {
            m.as_mut_slice()[i] = true;
        }
        assert_eq!(
            assign_labels_from_mask(&l, &m, 0.5).unwrap(),
            vec![true, false]
        );
        assert_eq!(
            assign_labels_from_mask(&l, &m, 0.51).unwrap(),
            vec![false, false]
        );
        let full = BinaryMask::new(10, 20, vec![true; 200]).unwrap();
        assert_eq!(
            assign_labels_from_mask(&l, &full, 0.5).unwrap(),
            vec![true, true]
        );
        assert!(assign_labels_from_mask(&l, &BinaryMask::empty(10, 10), 0.5).is_err());
        assert!(assign_labels_from_mask(&l, &m, 0.0).is_err());
    }
}
