//! Precision-recall evaluation, k-fold splitting and cross-validation.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Points ordered by descending threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub positives: usize,
    pub negatives: usize,
}

/// Sweeps every distinct score as a threshold (`score >= t` predicts positive).
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::invalid("PR curve needs at least one positive label"));
    }
    let negatives = labels.len() - positives;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: t,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
            tp,
            fp,
            fn_: positives - tp,
        });
    }
    Ok(PrCurve {
        points,
        positives,
        negatives,
    })
}

/// Area under the PR curve as a right-continuous step function:
/// each recall increment is weighted by the precision where it is reached.
pub fn auc_pr(c: &PrCurve) -> f64 {
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for p in &c.points {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    area.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Optimum {
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Best F1 over the curve; ties prefer higher recall, then higher threshold.
pub fn f1_optimal(c: &PrCurve) -> F1Optimum {
    let mut best: Option<F1Optimum> = None;
    for p in &c.points {
        let cand = F1Optimum {
            f1: f1_score(p.precision, p.recall),
            recall: p.recall,
            precision: p.precision,
            threshold: p.threshold,
        };
        best = Some(match best {
            None => cand,
            Some(b) => {
                let better = cand.f1 > b.f1
                    || (cand.f1 == b.f1
                        && (cand.recall > b.recall
                            || (cand.recall == b.recall && cand.threshold > b.threshold)));
                if better {
                    cand
                } else {
                    b
                }
            }
        });
    }
    best.unwrap_or(F1Optimum {
        f1: 0.0,
        recall: 0.0,
        precision: 0.0,
        threshold: f64::INFINITY,
    })
}

/// Seeded random partition of `0..n` into `k` folds whose sizes differ by at
/// most one. Indices within a fold are ascending.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// One labelled sample with optional augmented copies that are only used when
/// the sample belongs to a training portion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub point: usize,
    pub positive: bool,
    pub augmented: Vec<usize>,
}

/// Feature points plus samples referencing them by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub points: Vec<Vec<f64>>,
    pub samples: Vec<Sample>,
}

impl LabeledSet {
    /// Builds a set without augmentation.
    pub fn from_pairs(points: Vec<Vec<f64>>, labels: &[bool]) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid("points and labels differ in length"));
        }
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &positive)| Sample {
                point: i,
                positive,
                augmented: Vec::new(),
            })
            .collect();
        Ok(Self { points, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.positive).collect()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.positive).count()
    }

    /// Training points (originals followed by their augmented copies) and labels.
    pub fn expand(&self, sample_indices: &[usize]) -> (Vec<usize>, Vec<bool>) {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for &i in sample_indices {
            let s = &self.samples[i];
            points.push(s.point);
            labels.push(s.positive);
            for &a in &s.augmented {
                points.push(a);
                labels.push(s.positive);
            }
        }
        (points, labels)
    }
}

/// Inputs handed to a fold trainer.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold: usize,
    pub train_points: Vec<usize>,
    pub train_labels: Vec<bool>,
    pub validate_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub size: usize,
    pub positives: usize,
    /// `None` when the fold has no positive sample.
    pub auc_pr: Option<f64>,
    pub best_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_pr: f64,
    pub best_f1: f64,
    pub recall_at_best: f64,
    pub precision_at_best: f64,
    pub threshold_at_best: f64,
    pub positives: usize,
    pub negatives: usize,
    pub per_fold: Vec<FoldMetrics>,
    /// Mean over folds that have positives.
    pub mean_fold_auc_pr: Option<f64>,
    pub mean_fold_f1: Option<f64>,
}

impl EvalReport {
    /// Report for a single held-out evaluation.
    pub fn from_scores(scores: &[f64], labels: &[bool]) -> Result<(Self, PrCurve)> {
        let curve = pr_curve(scores, labels)?;
        Ok((Self::from_curve(&curve, Vec::new()), curve))
    }

    fn from_curve(curve: &PrCurve, per_fold: Vec<FoldMetrics>) -> Self {
        let best = f1_optimal(curve);
        let mean = |f: fn(&FoldMetrics) -> Option<f64>| {
            let vals: Vec<f64> = per_fold.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        Self {
            auc_pr: auc_pr(curve),
            best_f1: best.f1,
            recall_at_best: best.recall,
            precision_at_best: best.precision,
            threshold_at_best: best.threshold,
            positives: curve.positives,
            negatives: curve.negatives,
            mean_fold_auc_pr: mean(|m| m.auc_pr),
            mean_fold_f1: mean(|m| m.best_f1),
            per_fold,
        }
    }
}

/// Result of a cross-validation run: pooled report, pooled curve and the
/// validation score of every sample.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub report: EvalReport,
    pub curve: PrCurve,
    pub scores: Vec<f64>,
}

/// Splits into folds once and returns the per-fold trainer inputs. Fails if a
/// training complement lacks a class.
pub fn fold_data(set: &LabeledSet, k: usize, seed: u64) -> Result<Vec<FoldData>> {
    let folds = kfold_split(set.len(), k, seed)?;
    let mut in_fold = vec![0usize; set.len()];
    for (f, idx) in folds.iter().enumerate() {
        for &i in idx {
            in_fold[i] = f;
        }
    }
    folds
        .iter()
        .enumerate()
        .map(|(f, validate)| {
            let train: Vec<usize> = (0..set.len()).filter(|&i| in_fold[i] != f).collect();
            let (train_points, train_labels) = set.expand(&train);
            let pos = train_labels.iter().filter(|&&l| l).count();
            if pos == 0 || pos == train_labels.len() {
                return Err(Error::DegenerateInput(format!(
                    "training complement of fold {f} contains a single class"
                )));
            }
            Ok(FoldData {
                fold: f,
                train_points,
                train_labels,
                validate_points: validate.iter().map(|&i| set.samples[i].point).collect(),
            })
        })
        .collect()
}

/// k-fold cross-validation with pooled scores. `trainer` returns one score per
/// validation point.
pub fn cross_validate<F>(
    set: &LabeledSet,
    k: usize,
    seed: u64,
    mut trainer: F,
) -> Result<CrossValidation>
where
    F: FnMut(&LabeledSet, &FoldData) -> Result<Vec<f64>>,
{
    let folds = kfold_split(set.len(), k, seed)?;
    let data = fold_data(set, k, seed)?;
    let mut scores = vec![f64::NAN; set.len()];
    let mut per_fold = Vec::with_capacity(k);
    for (fd, idx) in data.iter().zip(&folds) {
        let s = trainer(set, fd)?;
        if s.len() != idx.len() {
            return Err(Error::InvalidState(format!(
                "trainer returned {} scores for {} validation samples",
                s.len(),
                idx.len()
            )));
        }
        let labels: Vec<bool> = idx.iter().map(|&i| set.samples[i].positive).collect();
        let positives = labels.iter().filter(|&&l| l).count();
        let (auc, f1) = match pr_curve(&s, &labels) {
            Ok(c) => (Some(auc_pr(&c)), Some(f1_optimal(&c).f1)),
            Err(_) => (None, None),
        };
        per_fold.push(FoldMetrics {
            fold: fd.fold,
            size: idx.len(),
            positives,
            auc_pr: auc,
            best_f1: f1,
        });
        for (&i, v) in idx.iter().zip(s) {
            scores[i] = v;
        }
    }
    let curve = pr_curve(&scores, &set.labels())?;
    Ok(CrossValidation {
        report: EvalReport::from_curve(&curve, per_fold),
        curve,
        scores,
    })
}

pub fn curve_csv(c: &PrCurve) -> String {
    let mut s = String::from("threshold,recall,precision,tp,fp,fn\n");
    for p in &c.points {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            p.threshold, p.recall, p.precision, p.tp, p.fp, p.fn_
        )
        .expect("write to string");
    }
    s
}

/// PR plot with one polyline per method and a legend carrying AUC-PR.
pub fn pr_svg(curves: &[(&str, &PrCurve)]) -> String {
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
    ];
    let (w, h, m) = (480.0, 400.0, 50.0);
    let (pw, ph) = (w - 2.0 * m, h - 2.0 * m);
    let x = |r: f64| m + r * pw;
    let y = |p: f64| h - m - p * ph;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#,
            x(v),
            h - m + 16.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            m - 6.0,
            y(v) + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Recall</text>"#,
        w / 2.0,
        h - 12.0
    )
    .unwrap();
    writeln!(s, r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">Precision</text>"#, h / 2.0, h / 2.0).unwrap();
    for (i, (name, c)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = Vec::with_capacity(c.points.len() + 1);
        if let Some(first) = c.points.first() {
            pts.push(format!("{:.2},{:.2}", x(0.0), y(first.precision)));
        }
        pts.extend(
            c.points
                .iter()
                .map(|p| format!("{:.2},{:.2}", x(p.recall), y(p.precision))),
        );
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        let ly = m + 16.0 + 16.0 * i as f64;
        writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, x(0.05), x(0.12)).unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{} (AUC-PR {:.3})</text>"#,
            x(0.14),
            ly + 4.0,
            xml_escape(name),
            auc_pr(c)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes `report.json`, `curve.csv` (or `curve_<name>.csv` per method) and `pr.svg`.
pub fn write_report(
    dir: impl AsRef<Path>,
    reports: &[(&str, &EvalReport, &PrCurve)],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: String, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    let json: serde_json::Map<String, serde_json::Value> = reports
        .iter()
        .map(|(n, r, _)| Ok((n.to_string(), serde_json::to_value(r)?)))
        .collect::<Result<_>>()?;
    write(
        "report.json".into(),
        serde_json::to_string_pretty(&json)? + "\n",
    )?;
    for (n, _, c) in reports {
        let name = if reports.len() == 1 {
            "curve.csv".to_string()
        } else {
            format!("curve_{n}.csv")
        };
        write(name, curve_csv(c))?;
    }
    let curves: Vec<(&str, &PrCurve)> = reports.iter().map(|(n, _, c)| (*n, *c)).collect();
    write("pr.svg".into(), pr_svg(&curves))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Recount oracle: for each distinct score, count directly.
    fn recount(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
        let mut distinct: Vec<f64> = scores.to_vec();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        distinct
            .into_iter()
            .map(|t| {
                let tp = scores
                    .iter()
                    .zip(labels)
                    .filter(|(s, &l)| **s >= t && l)
                    .count();
                let fp = scores
                    .iter()
                    .zip(labels)
                    .filter(|(s, &l)| **s >= t && !l)
                    .count();
                (t, tp, fp)
            })
            .collect()
    }

    #[test]
    fn three_score_fixture() {
        let c = pr_curve(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        let got: Vec<(f64, f64, f64)> = c
            .points
            .iter()
            .map(|p| (p.threshold, p.recall, p.precision))
            .collect();
        assert_eq!(
            got,
            vec![(0.9, 0.5, 1.0), (0.8, 0.5, 0.5), (0.7, 1.0, 2.0 / 3.0)]
        );
        assert!((auc_pr(&c) - 5.0 / 6.0).abs() < 1e-12);
        let best = f1_optimal(&c);
        assert!((best.f1 - 0.8).abs() < 1e-12);
        assert_eq!(best.threshold, 0.7);
    }

    #[test]
    fn perfect_and_constant() {
        let c = pr_curve(&[3.0, 2.0, 1.0, 0.0], &[true, true, false, false]).unwrap();
        assert!(c
            .points
            .iter()
            .any(|p| p.recall == 1.0 && p.precision == 1.0));
        assert_eq!(auc_pr(&c), 1.0);
        assert_eq!(f1_optimal(&c).f1, 1.0);

        let labels: Vec<bool> = (0..25).map(|i| i == 0).collect();
        let c = pr_curve(&[0.5; 25], &labels).unwrap();
        assert_eq!(c.points.len(), 1);
        assert!((c.points[0].precision - 0.04).abs() < 1e-15);
        assert!((auc_pr(&c) - 0.04).abs() < 1e-15);
        assert!((f1_optimal(&c).f1 - 0.08 / 1.04).abs() < 1e-12);
        assert!(pr_curve(&[1.0], &[false]).is_err());
    }

    #[test]
    fn f1_ties_prefer_recall() {
        // F1 = 2/3 at both (R=0.5,P=1) and (R=1,P=0.5)
        let c = pr_curve(&[4.0, 3.0, 2.0, 1.0], &[true, false, false, true]).unwrap();
        let best = f1_optimal(&c);
        assert!((best.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(best.recall, 1.0);
    }

    #[test]
    fn kfold_sizes() {
        let folds = kfold_split(133_918, 10, 7).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [vec![13_391; 2], vec![13_392; 8]].concat());
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..133_918).collect::<Vec<_>>());

        let folds = kfold_split(10, 10, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        assert_eq!(
            kfold_split(50, 5, 3).unwrap(),
            kfold_split(50, 5, 3).unwrap()
        );
        assert_ne!(
            kfold_split(50, 5, 3).unwrap(),
            kfold_split(50, 5, 4).unwrap()
        );
        assert!(kfold_split(3, 4, 0).is_err());
    }

    fn threshold_scorer(set: &LabeledSet, fd: &FoldData) -> Result<Vec<f64>> {
        Ok(fd
            .validate_points
            .iter()
            .map(|&p| set.points[p][0])
            .collect())
    }

    #[test]
    fn cross_validation_separable_and_coverage() {
        let points: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let labels: Vec<bool> = (0..40).map(|i| i >= 30).collect();
        let set = LabeledSet::from_pairs(points, &labels).unwrap();
        let cv = cross_validate(&set, 4, 9, threshold_scorer).unwrap();
        assert_eq!(cv.report.auc_pr, 1.0);
        assert_eq!(cv.report.per_fold.len(), 4);

        let set = LabeledSet::from_pairs(
            (0..4).map(|i| vec![i as f64]).collect(),
            &[true, false, true, false],
        )
        .unwrap();
        let seed = (0..100).find(|&s| fold_data(&set, 2, s).is_ok()).unwrap();
        let mut seen = vec![0; 4];
        cross_validate(&set, 2, seed, |s, fd| {
            for &p in &fd.validate_points {
                seen[p] += 1;
            }
            threshold_scorer(s, fd)
        })
        .unwrap();
        assert_eq!(seen, vec![1; 4]);
    }

    #[test]
    fn degenerate_fold_is_named() {
        let set = LabeledSet::from_pairs(
            (0..4).map(|i| vec![i as f64]).collect(),
            &[true, false, false, false],
        )
        .unwrap();
        let err = cross_validate(&set, 4, 0, threshold_scorer).unwrap_err();
        assert!(err.to_string().contains("fold"), "{err}");
    }

    #[test]
    fn augmentation_only_in_training() {
        let points = vec![vec![0.0], vec![1.0], vec![2.0], vec![1.0]];
        let samples = vec![
            Sample {
                point: 0,
                positive: false,
                augmented: vec![],
            },
            Sample {
                point: 1,
                positive: true,
                augmented: vec![3, 3, 3],
            },
            Sample {
                point: 2,
                positive: false,
                augmented: vec![],
            },
        ];
        let set = LabeledSet { points, samples };
        let cv = cross_validate(&set, 3, 5, |s, fd| {
            let expected_train = if fd.validate_points.contains(&1) {
                2
            } else {
                5
            };
            assert_eq!(fd.train_points.len(), expected_train);
            assert!(!fd.validate_points.contains(&3));
            threshold_scorer(s, fd)
        });
        // the fold holding the only positive leaves a one-class training set
        assert!(cv.is_err());
    }

    #[test]
    fn shuffled_labels_give_prior_precision() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 2000;
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let set = LabeledSet::from_pairs(points, &labels).unwrap();
        let cv = cross_validate(&set, 10, 3, threshold_scorer).unwrap();
        let prior = set.positives() as f64 / n as f64;
        let sigma = (prior * (1.0 - prior) / n as f64).sqrt();
        let at_full = cv.curve.points.last().unwrap();
        assert!((at_full.precision - prior).abs() <= 3.0 * sigma);
        assert!((cv.report.auc_pr - prior).abs() < 0.05);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let (r, c) = EvalReport::from_scores(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        write_report(dir.path(), &[("hsv+svm", &r, &c)]).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        let svg = std::fs::read_to_string(dir.path().join("pr.svg")).unwrap();
        assert!(svg.contains("AUC-PR 0.833"));
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(json["hsv+svm"]["best_f1"], serde_json::json!(0.8));
    }

    proptest! {
        #[test]
        fn curve_matches_recount(data in prop::collection::vec((0u8..12, any::<bool>()), 1..40)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 4.0).collect();
            let mut labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            labels[0] = true;
            let c = pr_curve(&scores, &labels).unwrap();
            let oracle = recount(&scores, &labels);
            prop_assert_eq!(c.points.len(), oracle.len());
            for (p, (t, tp, fp)) in c.points.iter().zip(oracle) {
                prop_assert_eq!(p.threshold, t);
                prop_assert_eq!((p.tp, p.fp), (tp, fp));
                prop_assert_eq!(p.tp + p.fn_, c.positives);
                prop_assert!(p.tp + p.fp >= 1);
                prop_assert_eq!(p.precision, tp as f64 / (tp + fp) as f64);
            }
            prop_assert!(c.points.windows(2).all(|w| w[0].recall <= w[1].recall));
            let a = auc_pr(&c);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn monotone_transform_invariance(data in prop::collection::vec((-50.0..50.0f64, any::<bool>()), 1..40)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let mut labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            labels[0] = true;
            let warped: Vec<f64> = scores.iter().map(|s| (s / 10.0).exp() * 3.0 - 1.0).collect();
            let a = pr_curve(&scores, &labels).unwrap();
            let b = pr_curve(&warped, &labels).unwrap();
            prop_assert_eq!(auc_pr(&a), auc_pr(&b));
            let (fa, fb) = (f1_optimal(&a), f1_optimal(&b));
            prop_assert_eq!((fa.f1, fa.recall, fa.precision), (fb.f1, fb.recall, fb.precision));
        }

        #[test]
        fn pooled_report_ignores_fold_order(seed in 0u64..1000) {
            let points: Vec<Vec<f64>> = (0..30).map(|i| vec![((i * 37) % 30) as f64]).collect();
            let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
            let set = LabeledSet::from_pairs(points, &labels).unwrap();
            let fwd = cross_validate(&set, 5, seed, threshold_scorer).unwrap();
            // scores are independent of the fold a sample lands in, so any split agrees
            let other = cross_validate(&set, 5, seed + 1, threshold_scorer).unwrap();
            prop_assert_eq!(fwd.report.auc_pr, other.report.auc_pr);
            prop_assert_eq!(fwd.scores, other.scores);
        }
    }
}
