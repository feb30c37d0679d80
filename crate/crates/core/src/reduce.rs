//! Principal component analysis for feature reduction.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PCA_COMPONENTS: usize = 69;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` unit-length components of dimension `N`, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    /// Full covariance spectrum, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Set when the fitted data had zero total variance.
    pub degenerate: bool,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Keeps only the first `k` components.
    pub fn truncated(&self, k: usize) -> Result<PcaModel> {
        if k > self.k() {
            return Err(Error::invalid(format!(
                "cannot truncate {} components to {k}",
                self.k()
            )));
        }
        Ok(PcaModel {
            components: self.components[..k].to_vec(),
            ..self.clone()
        })
    }

    /// Maps a reduced vector back to input space.
    pub fn reconstruct(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        if reduced.len() != self.k() {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                self.k(),
                reduced.len()
            )));
        }
        let mut out = self.mean.clone();
        for (c, &a) in self.components.iter().zip(reduced) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += a * v;
            }
        }
        Ok(out)
    }
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
pub(crate) fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Sample mean and covariance (divisor `n - 1`).
pub fn covariance(rows: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
    }
    let dim = rows[0].len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::invalid("samples must share one non-zero dimension"));
    }
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);
    let cov = centered.tr_mul(&centered) / (n - 1) as f64;
    Ok((mean, cov))
}

pub fn pca_fit(rows: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let (mean, cov) = covariance(rows)?;
    let dim = mean.len();
    let max_k = dim.min(rows.len() - 1);
    if k > max_k {
        return Err(Error::invalid(format!(
            "k={k} exceeds min(N={dim}, samples-1={})",
            rows.len() - 1
        )));
    }
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let components = order[..k]
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            c.iter_mut().for_each(|v| *v /= norm);
            canonical_sign(&mut c);
            c
        })
        .collect();
    let degenerate = trace <= 0.0;
    if degenerate {
        log::warn!("PCA fitted on zero-variance data; components are arbitrary");
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        degenerate,
    })
}

pub fn pca_project(m: &PcaModel, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != m.input_dim() {
        return Err(Error::invalid(format!(
            "feature dimension {} does not match PCA input {}",
            f.len(),
            m.input_dim()
        )));
    }
    Ok(m.components
        .iter()
        .map(|c| {
            c.iter()
                .zip(f)
                .zip(&m.mean)
                .map(|((c, x), mu)| c * (x - mu))
                .sum()
        })
        .collect())
}

/// Share of total variance captured by the top `k` eigenvalues. Zero-variance
/// models report 1.
pub fn variance_ratio(m: &PcaModel, k: usize) -> Result<f64> {
    if k > m.eigenvalues.len() {
        return Err(Error::invalid(format!(
            "k'={k} exceeds the {} stored eigenvalues",
            m.eigenvalues.len()
        )));
    }
    let total: f64 = m.eigenvalues.iter().sum();
    if total <= 0.0 {
        return Ok(1.0);
    }
    Ok((m.eigenvalues[..k].iter().sum::<f64>() / total).min(1.0))
}
