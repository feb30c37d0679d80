//! Exhaustive hyperparameter search scored by internal k-fold cross-validation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bh::{bh_likelihood, bh_train};
use super::svm::{smo_solve, DenseGram, RbfGram, SmoParams};
use crate::error::{Error, Result};
use crate::eval::{auc_pr, fold_data, kfold_split, pr_curve, FoldData, LabeledSet};

pub const DEFAULT_C: [f64; 7] = [1.0, 3.0, 10.0, 30.0, 100.0, 180.0, 300.0];
pub const DEFAULT_GAMMA: [f64; 7] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];
pub const DEFAULT_SIGMA: [f64; 4] = [1.0, 2.0, 5.0, 10.0];

/// Largest kernel matrix materialised during an SVM search.
const DENSE_GRAM_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridSpec {
    Svm { c: Vec<f64>, gamma: Vec<f64> },
    Bh { sigma: Vec<f64> },
}

impl GridSpec {
    pub fn svm_default() -> Self {
        Self::Svm {
            c: DEFAULT_C.to_vec(),
            gamma: DEFAULT_GAMMA.to_vec(),
        }
    }

    pub fn bh_default() -> Self {
        Self::Bh {
            sigma: DEFAULT_SIGMA.to_vec(),
        }
    }

    /// Parses `C=1,3,10;gamma=0.1,1` or `sigma=1,5`. Keys are case-insensitive
    /// and groups may also be separated by `:`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut c = None;
        let mut gamma = None;
        let mut sigma = None;
        for group in s.split([';', ':']).filter(|g| !g.trim().is_empty()) {
            let (key, values) = group
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("grid group `{group}` lacks `=`")))?;
            let values = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad grid value `{v}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            match key.trim().to_ascii_lowercase().as_str() {
                "c" => c = Some(values),
                "gamma" | "g" => gamma = Some(values),
                "sigma" | "s" => sigma = Some(values),
                other => return Err(Error::invalid(format!("unknown grid key `{other}`"))),
            }
        }
        let spec = match (c, gamma, sigma) {
            (Some(c), Some(gamma), None) => Self::Svm { c, gamma },
            (None, None, Some(sigma)) => Self::Bh { sigma },
            _ => {
                return Err(Error::invalid(
                    "grid needs both C and gamma, or sigma alone",
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every cell of the grid in ascending hyperparameter order, duplicates removed.
    pub fn hypers(&self) -> Vec<Hyper> {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        match self {
            Self::Svm { c, gamma } => {
                let gammas = sorted(gamma);
                sorted(c)
                    .into_iter()
                    .flat_map(|c| gammas.iter().map(move |&gamma| Hyper::Svm { c, gamma }))
                    .collect()
            }
            Self::Bh { sigma } => sorted(sigma)
                .into_iter()
                .map(|sigma| Hyper::Bh { sigma })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lists: Vec<&Vec<f64>> = match self {
            Self::Svm { c, gamma } => vec![c, gamma],
            Self::Bh { sigma } => vec![sigma],
        };
        for l in lists {
            if l.is_empty() || l.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid("grid lists must be non-empty and positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    F1,
    AucPr,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::AucPr => "auc_pr",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "f1" => Ok(Metric::F1),
            "aucpr" => Ok(Metric::AucPr),
            _ => Err(Error::invalid(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Hyper {
    Svm { c: f64, gamma: f64 },
    Bh { sigma: f64 },
}

impl Hyper {
    fn sort_key(&self) -> (f64, f64) {
        match *self {
            Hyper::Svm { c, gamma } => (c, gamma),
            Hyper::Bh { sigma } => (sigma, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hyper: Hyper,
    /// Pooled cross-validation score; NaN if the cell could not be scored.
    pub score: f64,
    /// Per-fold metric, `None` for folds without positives.
    pub per_fold: Vec<Option<f64>>,
    /// Set when a fold lacked positives or the solver hit its budget.
    pub flagged: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub metric: Metric,
    /// Cells in ascending hyperparameter order.
    pub cells: Vec<GridCell>,
    pub best: usize,
}

impl GridResult {
    /// Sorts `cells` by hyperparameter and picks the highest score; ties go to
    /// the earliest cell. NaN scores never win.
    pub fn select(metric: Metric, mut cells: Vec<GridCell>) -> Result<Self> {
        cells.sort_by(|a, b| {
            let (ka, kb) = (a.hyper.sort_key(), b.hyper.sort_key());
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        });
        let mut best: Option<usize> = None;
        for (i, cell) in cells.iter().enumerate() {
            if cell.score.is_nan() {
                continue;
            }
            if best.is_none_or(|b| cell.score > cells[b].score) {
                best = Some(i);
            }
        }
        let best =
            best.ok_or_else(|| Error::DegenerateInput("no grid cell could be scored".into()))?;
        Ok(GridResult {
            metric,
            cells,
            best,
        })
    }

    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }

    /// `C,gamma,fold,metric,value` (or `sigma,fold,metric,value`) rows; the
    /// pooled score uses fold `pooled`.
    pub fn to_csv(&self) -> String {
        let svm = matches!(self.cells.first().map(|c| c.hyper), Some(Hyper::Svm { .. }));
        let mut s = String::from(if svm {
            "C,gamma,fold,metric,value\n"
        } else {
            "sigma,fold,metric,value\n"
        });
        let metric = self.metric.name();
        for cell in &self.cells {
            let prefix = match cell.hyper {
                Hyper::Svm { c, gamma } => format!("{c},{gamma}"),
                Hyper::Bh { sigma } => format!("{sigma}"),
            };
            for (f, v) in cell.per_fold.iter().enumerate() {
                let v = v.map_or_else(|| "NA".to_string(), |v| v.to_string());
                writeln!(s, "{prefix},{f},{metric},{v}").expect("write to string");
            }
            writeln!(s, "{prefix},pooled,{metric},{}", cell.score).expect("write to string");
        }
        s
    }
}

/// F1 of the decisions `score >= threshold`; `None` without positives.
pub fn f1_at(decisions: impl Iterator<Item = bool>, labels: &[bool]) -> Option<f64> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (d, &l) in decisions.zip(labels) {
        match (d, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp + fn_ > 0).then(|| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// F1 is taken at the classifier's own decision threshold; AUC-PR is
/// threshold-free.
fn metric_value(
    metric: Metric,
    scores: &[f64],
    decisions: &[bool],
    labels: &[bool],
) -> Option<f64> {
    match metric {
        Metric::F1 => f1_at(decisions.iter().copied(), labels),
        Metric::AucPr => pr_curve(scores, labels).ok().map(|c| auc_pr(&c)),
    }
}

/// Options shared by every SVM cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub folds: usize,
    pub metric: Metric,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        let smo = SmoParams::default();
        Self {
            folds: 5,
            metric: Metric::F1,
            seed: 0,
            tol: smo.tol,
            max_iter: smo.max_iter,
        }
    }
}

struct FoldScores {
    scores: Vec<f64>,
    threshold: f64,
    note: Option<String>,
}

fn svm_fold(
    dense: Option<&DenseGram>,
    set: &LabeledSet,
    fd: &FoldData,
    gamma: f64,
    smo: &SmoParams,
) -> Result<FoldScores> {
    let sol = match dense {
        Some(d) => smo_solve(&d.subset(&fd.train_points), &fd.train_labels, smo)?,
        None => {
            let pts = fd
                .train_points
                .iter()
                .map(|&p| set.points[p].as_slice())
                .collect();
            smo_solve(&RbfGram::new(pts, gamma), &fd.train_labels, smo)?
        }
    };
    let sv: Vec<(usize, f64)> = sol
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(t, &a)| (fd.train_points[t], if fd.train_labels[t] { a } else { -a }))
        .collect();
    let scores = fd
        .validate_points
        .iter()
        .map(|&v| {
            sv.iter()
                .map(|&(p, coef)| {
                    coef * match dense {
                        Some(d) => d.get(p, v),
                        None => super::svm::rbf(&set.points[p], &set.points[v], gamma),
                    }
                })
                .sum::<f64>()
                - sol.rho
        })
        .collect();
    let note = (!sol.converged).then(|| {
        format!(
            "fold {}: solver stopped after {} iterations with violation {:.3e}",
            fd.fold, sol.iterations, sol.violation
        )
    });
    Ok(FoldScores {
        scores,
        threshold: 0.0,
        note,
    })
}

fn bh_fold(set: &LabeledSet, fd: &FoldData, sigma: f64) -> Result<FoldScores> {
    let train: Vec<Vec<f64>> = fd
        .train_points
        .iter()
        .map(|&p| set.points[p].clone())
        .collect();
    let model = bh_train(&train, &fd.train_labels, sigma)?;
    let scores = fd
        .validate_points
        .iter()
        .map(|&v| bh_likelihood(&model, &set.points[v]))
        .collect::<Result<_>>()?;
    Ok(FoldScores {
        scores,
        threshold: model.threshold,
        note: None,
    })
}

fn score_cell(
    hyper: Hyper,
    set: &LabeledSet,
    folds: &[Vec<usize>],
    data: &[FoldData],
    opts: &SearchOptions,
    mut run: impl FnMut(&FoldData) -> Result<FoldScores>,
) -> GridCell {
    let labels = set.labels();
    let mut pooled = vec![f64::NAN; set.len()];
    let mut decisions = vec![false; set.len()];
    let mut per_fold = Vec::with_capacity(folds.len());
    let mut notes = Vec::new();
    let mut flagged = false;
    for (fd, idx) in data.iter().zip(folds) {
        let fs = match run(fd) {
            Ok(fs) => fs,
            Err(e) => {
                return GridCell {
                    hyper,
                    score: f64::NAN,
                    per_fold: vec![None; folds.len()],
                    flagged: true,
                    notes: vec![format!("fold {}: {e}", fd.fold)],
                }
            }
        };
        if let Some(n) = fs.note {
            flagged = true;
            notes.push(n);
        }
        let fold_labels: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        let fold_decisions: Vec<bool> = fs.scores.iter().map(|&s| s >= fs.threshold).collect();
        let v = metric_value(opts.metric, &fs.scores, &fold_decisions, &fold_labels);
        if v.is_none() {
            flagged = true;
            notes.push(format!("fold {}: no positive samples", fd.fold));
        }
        per_fold.push(v);
        for ((&i, s), d) in idx.iter().zip(fs.scores).zip(fold_decisions) {
            pooled[i] = s;
            decisions[i] = d;
        }
    }
    let score = metric_value(opts.metric, &pooled, &decisions, &labels).unwrap_or(f64::NAN);
    GridCell {
        hyper,
        score,
        per_fold,
        flagged,
        notes,
    }
}

/// Scores every grid cell by pooled k-fold cross-validation on `set`.
/// The best cell maximises the score; ties go to the smallest C, then gamma
/// (or smallest sigma).
pub fn grid_search(set: &LabeledSet, grid: &GridSpec, opts: &SearchOptions) -> Result<GridResult> {
    grid.validate()?;
    if opts.folds < 2 {
        return Err(Error::invalid(format!(
            "grid search needs at least 2 folds, got {}",
            opts.folds
        )));
    }
    let folds = kfold_split(set.len(), opts.folds, opts.seed)?;
    let data = fold_data(set, opts.folds, opts.seed)?;
    let mut cells = Vec::new();
    match grid {
        GridSpec::Svm { c, gamma } => {
            let mut gammas = gamma.clone();
            gammas.sort_by(f64::total_cmp);
            gammas.dedup();
            let mut cs = c.clone();
            cs.sort_by(f64::total_cmp);
            cs.dedup();
            for &g in &gammas {
                let dense =
                    dense_gram_fits(set.points.len()).then(|| DenseGram::rbf(&set.points, g));
                for &cv in &cs {
                    let smo = SmoParams {
                        c: cv,
                        tol: opts.tol,
                        max_iter: opts.max_iter,
                        seed: opts.seed,
                        ..SmoParams::default()
                    };
                    let hyper = Hyper::Svm { c: cv, gamma: g };
                    let cell = score_cell(hyper, set, &folds, &data, opts, |fd| {
                        svm_fold(dense.as_ref(), set, fd, g, &smo)
                    });
                    log::debug!("grid cell C={cv} gamma={g}: {}", cell.score);
                    cells.push(cell);
                }
            }
        }
        GridSpec::Bh { sigma } => {
            let mut sigmas = sigma.clone();
            sigmas.sort_by(f64::total_cmp);
            sigmas.dedup();
            for &s in &sigmas {
                let cell = score_cell(Hyper::Bh { sigma: s }, set, &folds, &data, opts, |fd| {
                    bh_fold(set, fd, s)
                });
                log::debug!("grid cell sigma={s}: {}", cell.score);
                cells.push(cell);
            }
        }
    }
    GridResult::select(opts.metric, cells)
}

/// Whether an SVM search over `points` materialises its kernel matrix.
pub fn dense_gram_fits(points: usize) -> bool {
    points.saturating_mul(points).saturating_mul(8) <= DENSE_GRAM_BYTES
}
