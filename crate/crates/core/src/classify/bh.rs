//! Bhattacharyya-likelihood classifier over normalised histograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{f1_optimal, pr_curve};
use crate::imagecore::Histogram;

const NORM_TOL: f64 = 1e-9;

/// `sqrt(1 - sum(sqrt(p_i q_i)))` on raw masses, without validation.
pub fn bh_distance_masses(p: &[f64], q: &[f64]) -> f64 {
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    (1.0 - bc).max(0.0).sqrt()
}

fn check_masses(p: &[f64]) -> Result<()> {
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORM_TOL || p.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid(format!(
            "histogram is not normalised (sum {s})"
        )));
    }
    Ok(())
}

pub fn bh_distance(p: &Histogram, q: &Histogram) -> Result<f64> {
    if !p.same_binning(q) {
        return Err(Error::invalid("histograms have different binning"));
    }
    check_masses(p.counts())?;
    check_masses(q.counts())?;
    Ok(bh_distance_masses(p.counts(), q.counts()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhModel {
    pub positive_histograms: Vec<Vec<f64>>,
    pub sigma: f64,
    pub threshold: f64,
}

#[inline]
fn kernel(d: f64, sigma: f64) -> f64 {
    (-d * d / (2.0 * sigma * sigma)).exp()
}

impl BhModel {
    pub fn new(positive_histograms: Vec<Vec<f64>>, sigma: f64, threshold: f64) -> Result<Self> {
        if positive_histograms.is_empty() {
            return Err(Error::invalid(
                "Bhattacharyya model needs at least one positive histogram",
            ));
        }
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("sigma={sigma} must be positive")));
        }
        let dim = positive_histograms[0].len();
        for h in &positive_histograms {
            if h.len() != dim {
                return Err(Error::invalid("positive histograms differ in length"));
            }
            check_masses(h)?;
        }
        Ok(Self {
            positive_histograms,
            sigma,
            threshold,
        })
    }

    pub fn dim(&self) -> usize {
        self.positive_histograms.first().map_or(0, Vec::len)
    }

    pub fn predict(&self, h: &[f64]) -> Result<bool> {
        Ok(bh_likelihood(self, h)? >= self.threshold)
    }
}

/// Mean Gaussian kernel of the Bhattacharyya distance to the stored positives.
pub fn bh_likelihood(m: &BhModel, h: &[f64]) -> Result<f64> {
    if m.positive_histograms.is_empty() {
        return Err(Error::invalid(
            "Bhattacharyya model has no positive histograms",
        ));
    }
    if h.len() != m.dim() {
        return Err(Error::invalid(format!(
            "histogram length {} does not match model {}",
            h.len(),
            m.dim()
        )));
    }
    check_masses(h)?;
    let sum: f64 = m
        .positive_histograms
        .iter()
        .map(|p| kernel(bh_distance_masses(h, p), m.sigma))
        .sum();
    Ok(sum / m.positive_histograms.len() as f64)
}

/// Fits a model on training histograms. The threshold maximises F1 on the
/// training set, scoring each positive without its own kernel term.
pub fn bh_train(histograms: &[Vec<f64>], labels: &[bool], sigma: f64) -> Result<BhModel> {
    if histograms.len() != labels.len() {
        return Err(Error::invalid("histograms and labels differ in length"));
    }
    let positives: Vec<Vec<f64>> = histograms
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(h, _)| h.clone())
        .collect();
    let mut model = BhModel::new(positives, sigma, 0.0)?;
    let m = model.positive_histograms.len() as f64;
    let scores: Vec<f64> = histograms
        .iter()
        .zip(labels)
        .map(|(h, &l)| {
            let full = bh_likelihood(&model, h)?;
            Ok(if l && m > 1.0 {
                (full * m - 1.0) / (m - 1.0)
            } else {
                full
            })
        })
        .collect::<Result<_>>()?;
    model.threshold = f1_optimal(&pr_curve(&scores, labels)?).threshold;
    Ok(model)
}
