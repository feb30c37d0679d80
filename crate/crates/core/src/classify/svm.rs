//! Soft-margin RBF support vector machine trained by SMO with second-order
//! working-set selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[inline]
pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Kernel matrix access for the solver.
pub trait Gram {
    fn len(&self) -> usize;
    fn diag(&self, i: usize) -> f64;
    fn fill_row(&self, i: usize, out: &mut [f64]);
}

/// RBF kernel evaluated on demand over a list of points.
pub struct RbfGram<'a> {
    points: Vec<&'a [f64]>,
    gamma: f64,
}

impl<'a> RbfGram<'a> {
    pub fn new(points: Vec<&'a [f64]>, gamma: f64) -> Self {
        Self { points, gamma }
    }
}

impl Gram for RbfGram<'_> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn diag(&self, _i: usize) -> f64 {
        1.0
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        let p = self.points[i];
        for (o, q) in out.iter_mut().zip(&self.points) {
            *o = rbf(p, q, self.gamma);
        }
    }
}

/// Fully materialised symmetric kernel matrix.
pub struct DenseGram {
    n: usize,
    data: Vec<f64>,
}

impl DenseGram {
    pub fn rbf(points: &[Vec<f64>], gamma: f64) -> Self {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
            for j in i + 1..n {
                let k = rbf(&points[i], &points[j], gamma);
                data[i * n + j] = k;
                data[j * n + i] = k;
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn subset<'a>(&'a self, idx: &'a [usize]) -> SubGram<'a> {
        SubGram { base: self, idx }
    }
}

impl Gram for DenseGram {
    fn len(&self) -> usize {
        self.n
    }

    fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[i * self.n..(i + 1) * self.n]);
    }
}

/// Rows and columns of a [`DenseGram`] selected by index (repeats allowed).
pub struct SubGram<'a> {
    base: &'a DenseGram,
    idx: &'a [usize],
}

impl Gram for SubGram<'_> {
    fn len(&self) -> usize {
        self.idx.len()
    }

    fn diag(&self, i: usize) -> f64 {
        self.base.diag(self.idx[i])
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        let row = &self.base.data[self.idx[i] * self.base.n..][..self.base.n];
        for (o, &t) in out.iter_mut().zip(self.idx) {
            *o = row[t];
        }
    }
}

/// Least-recently-used cache of kernel rows.
struct RowCache {
    rows: Vec<Option<Vec<f64>>>,
    stamp: Vec<u64>,
    live: Vec<usize>,
    capacity: usize,
    clock: u64,
}

impl RowCache {
    fn new(n: usize, budget_bytes: usize) -> Self {
        let capacity = (budget_bytes / (8 * n.max(1))).clamp(2, n.max(2));
        Self {
            rows: vec![None; n],
            stamp: vec![0; n],
            live: Vec::new(),
            capacity,
            clock: 0,
        }
    }

    fn ensure<G: Gram>(&mut self, g: &G, i: usize, keep: usize) {
        self.clock += 1;
        self.stamp[i] = self.clock;
        if self.rows[i].is_some() {
            return;
        }
        let mut buf = if self.live.len() >= self.capacity {
            let (pos, _) = self
                .live
                .iter()
                .enumerate()
                .filter(|(_, &r)| r != keep)
                .min_by_key(|(_, &r)| self.stamp[r])
                .expect("capacity is at least two");
            let victim = self.live.swap_remove(pos);
            self.rows[victim].take().expect("live row present")
        } else {
            vec![0.0; g.len()]
        };
        g.fill_row(i, &mut buf);
        self.rows[i] = Some(buf);
        self.live.push(i);
    }

    fn pair<G: Gram>(&mut self, g: &G, i: usize, j: usize) -> (&[f64], &[f64]) {
        self.ensure(g, i, usize::MAX);
        self.ensure(g, j, i);
        (
            self.rows[i].as_deref().expect("row loaded"),
            self.rows[j].as_deref().expect("row loaded"),
        )
    }

    fn row<G: Gram>(&mut self, g: &G, i: usize) -> &[f64] {
        self.ensure(g, i, usize::MAX);
        self.rows[i].as_deref().expect("row loaded")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoParams {
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
    /// Permutes the candidate scan order, which decides ties.
    pub seed: u64,
    pub cache_bytes: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000_000,
            seed: 0,
            cache_bytes: 256 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision offset: f(x) = sum(alpha_i y_i K(x_i, x)) - rho.
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub violation: f64,
    pub converged: bool,
    /// Dual objective 0.5 a'Qa - e'a.
    pub objective: f64,
}

/// Solves the soft-margin dual for labels `y` (true = +1) on kernel `g`.
pub fn smo_solve<G: Gram>(g: &G, y: &[bool], p: &SmoParams) -> Result<SmoSolution> {
    let n = g.len();
    if y.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} points", y.len())));
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == n {
        return Err(Error::invalid("SVM training needs both classes"));
    }
    if !(p.c > 0.0) || !(p.tol > 0.0) {
        return Err(Error::invalid(format!(
            "C={} and tol={} must be positive",
            p.c, p.tol
        )));
    }
    let c = p.c;
    let ys: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let diag: Vec<f64> = (0..n).map(|i| g.diag(i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(p.seed));
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = RowCache::new(n, p.cache_bytes);
    let mut iterations = 0;
    let mut violation;
    let converged;

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut sel_i = None;
        for &t in &order {
            let up = if ys[t] > 0.0 {
                alpha[t] < c
            } else {
                alpha[t] > 0.0
            };
            if up {
                let v = -ys[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    sel_i = Some(t);
                }
            }
        }
        let Some(i) = sel_i else {
            violation = 0.0;
            converged = true;
            break;
        };
        let row_i = cache.row(g, i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut best = f64::INFINITY;
        let mut sel_j = None;
        for &t in &order {
            let low = if ys[t] > 0.0 {
                alpha[t] > 0.0
            } else {
                alpha[t] < c
            };
            if !low {
                continue;
            }
            let v = ys[t] * grad[t];
            if v > gmax2 {
                gmax2 = v;
            }
            let b = gmax + v;
            if b > 0.0 {
                let mut a = diag[i] + diag[t] - 2.0 * row_i[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -b * b / a;
                if obj < best {
                    best = obj;
                    sel_j = Some(t);
                }
            }
        }
        violation = gmax + gmax2;
        let Some(j) = sel_j.filter(|_| violation >= p.tol) else {
            converged = true;
            break;
        };
        if iterations >= p.max_iter {
            converged = false;
            break;
        }
        iterations += 1;

        let (row_i, row_j) = cache.pair(g, i, j);
        let (yi, yj) = (ys[i], ys[j]);
        let qij = yi * yj * row_i[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let quad = (diag[i] + diag[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = ((ai - old_i) * yi, (aj - old_j) * yj);
        for t in 0..n {
            grad[t] += ys[t] * (row_i[t] * di + row_j[t] * dj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = alpha
        .iter()
        .zip(&grad)
        .map(|(a, g)| a * (g - 1.0))
        .sum::<f64>()
        / 2.0;
    Ok(SmoSolution {
        alpha,
        rho,
        iterations,
        violation,
        converged,
        objective,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i for each support vector.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub cost: f64,
    pub kernel: KernelKind,
}

impl SvmModel {
    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        let d = SmoParams::default();
        Self {
            c: 1.0,
            gamma: 1.0,
            tol: d.tol,
            max_iter: d.max_iter,
            seed: 0,
        }
    }
}

impl SvmParams {
    pub fn smo(&self) -> SmoParams {
        SmoParams {
            c: self.c,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            ..SmoParams::default()
        }
    }
}

/// Trained model plus solver diagnostics; produced even without convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub model: SvmModel,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub violation: f64,
    pub converged: bool,
    pub objective: f64,
}

fn check_inputs(x: &[Vec<f64>], y: &[bool], p: &SvmParams) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} vectors but {} labels",
            x.len(),
            y.len()
        )));
    }
    let dim = x.first().map_or(0, Vec::len);
    if x.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("training vectors differ in dimension"));
    }
    if !(p.gamma > 0.0) {
        return Err(Error::invalid(format!(
            "gamma={} must be positive",
            p.gamma
        )));
    }
    Ok(())
}

pub fn svm_fit(x: &[Vec<f64>], y: &[bool], p: &SvmParams) -> Result<SvmFit> {
    check_inputs(x, y, p)?;
    let gram = RbfGram::new(x.iter().map(Vec::as_slice).collect(), p.gamma);
    let sol = smo_solve(&gram, y, &p.smo())?;
    let mut support_vectors = Vec::new();
    let mut dual_coeffs = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x[t].clone());
            dual_coeffs.push(if y[t] { a } else { -a });
        }
    }
    Ok(SvmFit {
        model: SvmModel {
            support_vectors,
            dual_coeffs,
            bias: -sol.rho,
            gamma: p.gamma,
            cost: p.c,
            kernel: KernelKind::Rbf,
        },
        alpha: sol.alpha,
        iterations: sol.iterations,
        violation: sol.violation,
        converged: sol.converged,
        objective: sol.objective,
    })
}

/// Trains and fails with [`Error::NonConvergence`] if the budget runs out.
pub fn svm_train(x: &[Vec<f64>], y: &[bool], p: &SvmParams) -> Result<SvmModel> {
    let fit = svm_fit(x, y, p)?;
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.iterations,
            violation: fit.violation,
        });
    }
    Ok(fit.model)
}

pub fn svm_decision(m: &SvmModel, f: &[f64]) -> Result<f64> {
    if let Some(d) = m.dim() {
        if d != f.len() {
            return Err(Error::invalid(format!(
                "feature dimension {} does not match model {d}",
                f.len()
            )));
        }
    }
    Ok(m.support_vectors
        .iter()
        .zip(&m.dual_coeffs)
        .map(|(sv, c)| c * rbf(sv, f, m.gamma))
        .sum::<f64>()
        + m.bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(c: f64, gamma: f64) -> SvmParams {
        SvmParams {
            c,
            gamma,
            tol: 1e-6,
            ..Default::default()
        }
    }

    #[test]
    fn two_point_symmetry() {
        let x = vec![vec![0.0], vec![1.0]];
        let fit = svm_fit(&x, &[false, true], &params(10.0, 1.0)).unwrap();
        assert!((fit.alpha[0] - fit.alpha[1]).abs() < 1e-9);
        // hard-margin closed form: alpha = 1 / (1 - e^-1)
        assert!((fit.alpha[0] - 1.0 / (1.0 - (-1.0f64).exp())).abs() < 1e-6);
        let m = &fit.model;
        assert!(svm_decision(m, &[0.0]).unwrap() < 0.0);
        assert!(svm_decision(m, &[1.0]).unwrap() > 0.0);
        assert!(svm_decision(m, &[0.5]).unwrap().abs() < 1e-6);
    }

    #[test]
    fn xor_is_separated() {
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let y = [true, true, false, false];
        let m = svm_train(&x, &y, &params(10.0, 0.5)).unwrap();
        for (v, &l) in x.iter().zip(&y) {
            assert_eq!(svm_decision(&m, v).unwrap() > 0.0, l);
        }
    }

    #[test]
    fn identical_points_opposite_labels() {
        for c in [0.5, 3.0, 40.0] {
            let x = vec![vec![0.3, 0.3], vec![0.3, 0.3]];
            let fit = svm_fit(&x, &[true, false], &params(c, 1.0)).unwrap();
            assert!(fit.converged);
            assert_eq!(fit.alpha, vec![c, c]);
            let f = svm_decision(&fit.model, &x[0]).unwrap();
            let correct = usize::from(f > 0.0) + usize::from(f < 0.0);
            assert!(correct <= 1);
        }
    }

    #[test]
    fn single_class_and_dimension_errors() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            svm_train(&x, &[true, true], &params(1.0, 1.0)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(svm_train(
            &[vec![0.0], vec![1.0, 2.0]],
            &[true, false],
            &params(1.0, 1.0)
        )
        .is_err());
        let m = svm_train(&x, &[true, false], &params(1.0, 1.0)).unwrap();
        assert!(svm_decision(&m, &[1.0, 2.0]).is_err());
    }

    fn ring_data(n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = i as f64 * 2.399;
            let r = if i % 3 == 0 { 0.4 } else { 1.0 } + 0.15 * ((i * 7) % 5) as f64 / 5.0;
            x.push(vec![r * a.cos(), r * a.sin()]);
            y.push(i % 3 == 0);
        }
        (x, y)
    }

    #[test]
    fn kkt_conditions_and_explicit_decision() {
        let (x, y) = ring_data(60);
        let p = SvmParams {
            tol: 1e-4,
            ..params(5.0, 2.0)
        };
        let fit = svm_fit(&x, &y, &p).unwrap();
        assert!(fit.converged);
        let sum: f64 = fit
            .alpha
            .iter()
            .zip(&y)
            .map(|(a, &l)| if l { *a } else { -a })
            .sum();
        assert!(sum.abs() < 1e-9);
        assert!(fit.alpha.iter().all(|&a| (0.0..=p.c).contains(&a)));
        for (t, &a) in fit.alpha.iter().enumerate() {
            let f = svm_decision(&fit.model, &x[t]).unwrap();
            let explicit: f64 = (0..x.len())
                .map(|s| {
                    let sign = if y[s] { 1.0 } else { -1.0 };
                    let d2: f64 = x[s].iter().zip(&x[t]).map(|(u, v)| (u - v).powi(2)).sum();
                    fit.alpha[s] * sign * (-p.gamma * d2).exp()
                })
                .sum::<f64>()
                + fit.model.bias;
            assert!((f - explicit).abs() < 1e-9);
            if a > 0.0 && a < p.c {
                let target = if y[t] { 1.0 } else { -1.0 };
                assert!((f - target).abs() <= p.tol, "free SV {t}: f={f}");
            }
        }
    }

    #[test]
    fn dense_subset_and_cache_agree_with_direct() {
        let (x, y) = ring_data(40);
        let idx: Vec<usize> = (0..40).filter(|i| i % 4 != 1).chain([0, 3, 3]).collect();
        let dense = DenseGram::rbf(&x, 1.5);
        let sub = dense.subset(&idx);
        let labels: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
        let p = SmoParams {
            c: 3.0,
            tol: 1e-5,
            ..Default::default()
        };
        let a = smo_solve(&sub, &labels, &p).unwrap();
        let pts: Vec<&[f64]> = idx.iter().map(|&i| x[i].as_slice()).collect();
        let on_demand = RbfGram::new(pts, 1.5);
        let tiny_cache = SmoParams {
            cache_bytes: 0,
            ..p.clone()
        };
        let b = smo_solve(&on_demand, &labels, &tiny_cache).unwrap();
        assert_eq!(a.iterations, b.iterations);
        for (u, v) in a.alpha.iter().zip(&b.alpha) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_per_seed_and_budget_reported() {
        let (x, y) = ring_data(50);
        let p = params(100.0, 5.0);
        assert_eq!(svm_fit(&x, &y, &p).unwrap(), svm_fit(&x, &y, &p).unwrap());
        let starved = SvmParams { max_iter: 3, ..p };
        match svm_train(&x, &y, &starved) {
            Err(Error::NonConvergence {
                iterations,
                violation,
            }) => {
                assert_eq!(iterations, 3);
                assert!(violation > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
