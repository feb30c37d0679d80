use serde::{Deserialize, Serialize};

use super::entropy::quantize_unit;
use super::GrayField;
use crate::error::{Error, Result};

const NORMALIZED_TOL: f64 = 1e-9;

/// Histogram over contiguous bins `[edges[i], edges[i+1])`; the last bin is
/// closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<f64>,
    normalized: bool,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        if edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(Error::invalid(
                "histogram needs bins+1 edges and at least one bin",
            ));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(
                "histogram edges must be strictly increasing",
            ));
        }
        if counts.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::invalid("histogram counts must be non-negative"));
        }
        Ok(Self {
            edges,
            counts,
            normalized: false,
        })
    }

    /// `bins` equal-width empty bins over `[lo, hi]`.
    pub fn uniform(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 || !(lo < hi) {
            return Err(Error::invalid(
                "uniform histogram needs bins > 0 and lo < hi",
            ));
        }
        let step = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + step * i as f64).collect();
        edges.push(hi);
        Ok(Self {
            edges,
            counts: vec![0.0; bins],
            normalized: false,
        })
    }

    /// Histogram whose bins are unit intervals `[i, i+1)`; used to view a
    /// feature vector as a histogram.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        let edges = (0..=masses.len()).map(|i| i as f64).collect();
        let mut h = Self::new(edges, masses.to_vec())?;
        h.normalized = (h.total() - 1.0).abs() <= NORMALIZED_TOL;
        Ok(h)
    }

    pub fn from_values(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        let mut h = Self::uniform(bins, lo, hi)?;
        for &v in values {
            h.add(v, 1.0);
        }
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    /// Bin holding `v`; values outside the edges are clamped to the end bins.
    pub fn bin_index(&self, v: f64) -> usize {
        let last = self.counts.len() - 1;
        if !(v > self.edges[0]) {
            return 0;
        }
        if v >= self.edges[last] {
            return last;
        }
        // edges[i] <= v < edges[i+1]
        self.edges.partition_point(|&e| e <= v) - 1
    }

    pub fn add(&mut self, v: f64, weight: f64) {
        let i = self.bin_index(v);
        self.counts[i] += weight;
        self.normalized = false;
    }

    pub fn normalize(&self) -> Result<Self> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::DegenerateInput(
                "cannot normalize an empty histogram".into(),
            ));
        }
        Ok(Self {
            edges: self.edges.clone(),
            counts: self.counts.iter().map(|c| c / total).collect(),
            normalized: true,
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized && (self.total() - 1.0).abs() <= NORMALIZED_TOL
    }

    /// Cumulative mass at the right edge of each bin, divided by the total.
    pub fn cdf(&self) -> Vec<f64> {
        let total = self.total();
        let mut acc = 0.0;
        self.counts
            .iter()
            .map(|c| {
                acc += c;
                if total > 0.0 {
                    acc / total
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn same_binning(&self, other: &Histogram) -> bool {
        self.edges == other.edges
    }
}

/// Otsu's threshold over the bin indices of `hist`.
///
/// Returns `t` such that bins `< t` form the low class and bins `>= t` the
/// high class, maximizing between-class variance. Ties resolve to the lowest
/// `t`.
pub fn otsu_threshold(hist: &Histogram) -> Result<usize> {
    let non_empty = hist.counts.iter().filter(|&&c| c > 0.0).count();
    if non_empty < 2 {
        return Err(Error::DegenerateInput(
            "otsu threshold needs at least two non-empty bins".into(),
        ));
    }
    let total: f64 = hist.counts.iter().sum();
    let sum_all: f64 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| i as f64 * c)
        .sum();
    let mut w0 = 0.0;
    let mut s0 = 0.0;
    let mut best = (f64::NEG_INFINITY, 1usize);
    for t in 1..hist.counts.len() {
        w0 += hist.counts[t - 1];
        s0 += (t - 1) as f64 * hist.counts[t - 1];
        let w1 = total - w0;
        let var = if w0 > 0.0 && w1 > 0.0 {
            let d = s0 / w0 - (sum_all - s0) / w1;
            w0 * w1 * d * d
        } else {
            0.0
        };
        if var > best.0 {
            best = (var, t);
        }
    }
    Ok(best.1)
}

/// Histogram equalization: each value is quantized to `levels` levels and
/// replaced by the empirical CDF of its level.
pub fn equalize_values(values: &[f64], levels: usize) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::invalid("equalization needs at least two levels"));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let q: Vec<usize> = values.iter().map(|&v| quantize_unit(v, levels)).collect();
    let mut counts = vec![0usize; levels];
    for &l in &q {
        counts[l] += 1;
    }
    let n = values.len() as f64;
    let mut acc = 0usize;
    let cdf: Vec<f64> = counts
        .iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect();
    Ok(q.into_iter().map(|l| cdf[l]).collect())
}

pub fn equalize_histogram(channel: &GrayField, levels: usize) -> Result<GrayField> {
    let out = equalize_values(&channel.data, levels)?;
    GrayField::new(channel.width, channel.height, out)
}

/// Histogram specification: each value is sent to the centre of the first
/// reference bin whose CDF reaches the value's empirical CDF.
pub fn match_values(values: &[f64], reference: &Histogram) -> Result<Vec<f64>> {
    if !reference.is_normalized() {
        return Err(Error::invalid("reference histogram must be normalized"));
    }
    if reference.bins() < 2 {
        return Err(Error::invalid(
            "reference histogram needs at least two bins",
        ));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // distinct values with the empirical CDF at each
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match distinct.last_mut() {
            Some(last) if last.0 == v => last.1 = f,
            _ => distinct.push((v, f)),
        }
    }
    let ref_cdf = reference.cdf();
    let last = ref_cdf.len() - 1;
    let mut mapped = Vec::with_capacity(distinct.len());
    let mut j = 0usize;
    for &(_, f) in &distinct {
        while j < last && ref_cdf[j] < f - 1e-12 {
            j += 1;
        }
        mapped.push(reference.bin_center(j));
    }
    Ok(values
        .iter()
        .map(|v| {
            let k = distinct
                .binary_search_by(|(d, _)| d.total_cmp(v))
                .expect("value present in its own distinct set");
            mapped[k]
        })
        .collect())
}

pub fn match_histogram(source: &GrayField, reference: &Histogram) -> Result<GrayField> {
    let out = match_values(&source.data, reference)?;
    GrayField::new(source.width, source.height, out)
}
