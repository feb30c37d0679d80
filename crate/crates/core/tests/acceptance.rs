//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Pass criterion numbers as arguments to run a subset.

use std::time::Instant;

use flowerdet::classify::{
    hsv_threshold_detect, smo_solve, svm_decision, svm_train, DenseGram, GridSpec,
    HsvThresholdConfig, SearchOptions, SmoParams, SvmParams,
};
use flowerdet::eval::{auc_pr, f1_optimal, pr_curve};
use flowerdet::imagecore::{otsu_threshold, rgb_to_hsv, Histogram};
use flowerdet::pipeline::{
    channel_references, detect_image, detections_csv, evaluate_bundle, load_bundle, save_bundle,
    synth_dataset, synth_scene, train_pipeline, transfer_with_references, BackgroundConfig,
    ClassifierKind, DatasetManifest, ModelBundle, PanelSpec, SceneSpec, Split, TrainConfig,
    BUNDLE_VERSION, SATURATION_REFERENCE_BINS,
};
use flowerdet::proposals::{
    augment_mirror, DatasetMean, LabeledPortrait, Mirror, Portrait, PortraitMode,
};
use flowerdet::reduce::pca_fit;
use flowerdet::superpixel::{boundary_recall, slic_segment, SlicConfig};
use flowerdet::{BinaryMask, Error, ImageRgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- criterion 1

/// Euclidean projection onto {0 <= a <= c, y'a = 0} by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let clip = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c))
            .collect()
    };
    let g = |lam: f64| -> f64 { clip(lam).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    // g is non-increasing in lam
    while hi - lo > 1e-14 * span {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clip(0.5 * (lo + hi))
}

/// Minimises 0.5 a'Qa - e'a over the SVM dual feasible set with FISTA.
fn qp_oracle(q: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let obj = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            s += 0.5 * a[i] * q[i].iter().zip(a).map(|(qij, aj)| qij * aj).sum::<f64>() - a[i];
        }
        s
    };
    // Gershgorin bound on the largest eigenvalue
    let l = q
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = obj(&x);
    for _ in 0..20_000 {
        let grad: Vec<f64> = (0..n)
            .map(|i| q[i].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() - 1.0)
            .collect();
        let step: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi - gi / l).collect();
        let xn = project(&step, y, c);
        let moved = xn
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = xn
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / tn * (a - b))
            .collect();
        x = xn;
        t = tn;
        best = best.min(obj(&x));
        if moved < 1e-12 {
            break;
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for inst in 0..200 {
        let n = rng.random_range(2..=30);
        let d = rng.random_range(1..=3);
        let c = if rng.random_bool(0.5) { 1.0 } else { 10.0 };
        let gamma = if rng.random_bool(0.5) { 0.5 } else { 2.0 };
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        y[0] = true;
        y[1] = false;
        let g = DenseGram::rbf(&x, gamma);
        let sol = smo_solve(
            &g,
            &y,
            &SmoParams {
                c,
                ..SmoParams::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let ys: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
        check(
            sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)),
            format!("instance {inst}: alpha outside [0,C]"),
        )?;
        let balance: f64 = sol.alpha.iter().zip(&ys).map(|(a, y)| a * y).sum();
        check(
            balance.abs() <= 1e-6,
            format!("instance {inst}: |sum alpha y| = {balance:e}"),
        )?;
        let q: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| ys[i] * ys[j] * g.get(i, j)).collect())
            .collect();
        let oracle = qp_oracle(&q, &ys, c);
        let rel = (sol.objective - oracle).abs() / oracle.abs().max(1.0);
        worst = worst.max(rel);
        check(
            rel <= 1e-4,
            format!(
                "instance {inst}: SMO {} vs oracle {oracle} (rel {rel:e})",
                sol.objective
            ),
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "200 instances, worst relative gap {worst:.2e}, {secs:.1}s"
    ))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let x = vec![
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
    ];
    let y = [true, true, false, false];
    let p = SvmParams {
        c: 10.0,
        gamma: 0.5,
        ..SvmParams::default()
    };
    let m = svm_train(&x, &y, &p).map_err(|e| e.to_string())?;
    let correct = x
        .iter()
        .zip(&y)
        .filter(|(xi, &yi)| (svm_decision(&m, xi).unwrap() >= 0.0) == yi)
        .count();
    check(correct == 4, format!("{correct}/4 correct"))?;
    Ok("4/4 XOR points correct".into())
}

// ---------------------------------------------------------------- criterion 3

/// Cyclic Jacobi eigendecomposition; returns (eigenvalues, eigenvectors as columns).
fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_pair, mut worst_ortho) = (0.0f64, 0.0f64);
    for set in 0..100 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=8);
        let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                scales
                    .iter()
                    .map(|s| s * rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let kmax = d.min(n - 1);
        let m = pca_fit(&rows, kmax).map_err(|e| e.to_string())?;

        let mean: Vec<f64> = (0..d)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        rows.iter()
                            .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                            .sum::<f64>()
                            / (n - 1) as f64
                    })
                    .collect()
            })
            .collect();
        let (vals, vecs) = jacobi(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        for (r, &o) in order.iter().enumerate().take(kmax) {
            let ev = (vals[o] - m.eigenvalues[r]).abs();
            worst_pair = worst_pair.max(ev);
            check(
                ev <= 1e-8,
                format!("set {set}: eigenvalue {r} differs by {ev:e}"),
            )?;
            let mut u: Vec<f64> = vecs.iter().map(|row| row[o]).collect();
            let big = u
                .iter()
                .enumerate()
                .fold(0, |b, (i, x)| if x.abs() > u[b].abs() { i } else { b });
            if u[big] < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
            let diff = u
                .iter()
                .zip(&m.components[r])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst_pair = worst_pair.max(diff);
            check(
                diff <= 1e-8,
                format!("set {set}: eigenvector {r} differs by {diff:e}"),
            )?;
        }
        for i in 0..kmax {
            for j in 0..kmax {
                let dot: f64 = m.components[i]
                    .iter()
                    .zip(&m.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let e = (dot - (i == j) as u8 as f64).abs();
                worst_ortho = worst_ortho.max(e);
                check(
                    e <= 1e-8,
                    format!("set {set}: components {i},{j} dot {dot}"),
                )?;
            }
        }
        let mut prev = f64::INFINITY;
        for k in 0..=kmax {
            let mk = m.truncated(k).map_err(|e| e.to_string())?;
            let err: f64 = rows
                .iter()
                .map(|r| {
                    let z = flowerdet::reduce::pca_project(&mk, r).unwrap();
                    mk.reconstruct(&z)
                        .unwrap()
                        .iter()
                        .zip(r)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum();
            check(
                err <= prev + 1e-9,
                format!("set {set}: reconstruction error rose at k={k}"),
            )?;
            prev = err;
        }
    }
    Ok(format!(
        "100 sets, worst eigenpair deviation {worst_pair:.1e}, orthonormality {worst_ortho:.1e}"
    ))
}

// ---------------------------------------------------------------- criterion 4

/// Brute-force recount at every distinct score: (threshold, tp, fp).
fn recount(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    ts.iter()
        .map(|&t| {
            let tp = scores
                .iter()
                .zip(labels)
                .filter(|(s, l)| **s >= t && **l)
                .count();
            let fp = scores
                .iter()
                .zip(labels)
                .filter(|(s, l)| **s >= t && !**l)
                .count();
            (t, tp, fp)
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let c = pr_curve(&[0.9, 0.8, 0.7], &[true, false, true]).map_err(|e| e.to_string())?;
    let auc = auc_pr(&c);
    let best = f1_optimal(&c);
    check(
        (auc - 5.0 / 6.0).abs() <= 1e-12,
        format!("fixture AUC {auc}"),
    )?;
    check(
        (best.f1 - 0.8).abs() <= 1e-12,
        format!("fixture best F1 {}", best.f1),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for set in 0..50 {
        let n = rng.random_range(2..=60);
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0..20) as f64) / 4.0)
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        let c = pr_curve(&scores, &labels).map_err(|e| e.to_string())?;
        let oracle = recount(&scores, &labels);
        let pos = labels.iter().filter(|&&l| l).count() as f64;
        check(
            c.points.len() == oracle.len(),
            format!("set {set}: {} points vs {}", c.points.len(), oracle.len()),
        )?;
        let (mut area, mut prev_r, mut best_f1) = (0.0, 0.0, 0.0f64);
        for (p, &(t, tp, fp)) in c.points.iter().zip(&oracle) {
            check(
                p.threshold == t && p.tp == tp && p.fp == fp,
                format!("set {set}: point at {t} disagrees"),
            )?;
            let (r, pr) = (tp as f64 / pos, tp as f64 / (tp + fp) as f64);
            area += (r - prev_r) * pr;
            prev_r = r;
            if tp > 0 {
                best_f1 = best_f1.max(2.0 * pr * r / (pr + r));
            }
        }
        check(
            (auc_pr(&c) - area).abs() <= 1e-12,
            format!("set {set}: AUC {} vs {area}", auc_pr(&c)),
        )?;
        check(
            (f1_optimal(&c).f1 - best_f1).abs() <= 1e-12,
            format!("set {set}: F1 {} vs {best_f1}", f1_optimal(&c).f1),
        )?;
    }
    Ok(format!(
        "fixture AUC {auc:.4}, best F1 {:.1}; 50 random sets match recount",
        best.f1
    ))
}

// ---------------------------------------------------------------- criterion 5

/// Exact argmax of between-class variance using integer arithmetic.
fn otsu_oracle(counts: &[u64]) -> usize {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    let sum_all: u128 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();
    // variance ∝ (total*s0 - sum_all*w0)^2 / (w0*w1)
    let mut best: Option<(u128, u128, usize)> = None;
    for t in 1..counts.len() {
        let w0: u128 = counts[..t].iter().map(|&c| c as u128).sum();
        let s0: u128 = counts[..t]
            .iter()
            .enumerate()
            .map(|(i, &c)| i as u128 * c as u128)
            .sum();
        let w1 = total - w0;
        let (num, den) = if w0 == 0 || w1 == 0 {
            (0, 1)
        } else {
            let d = (total * s0).abs_diff(sum_all * w0);
            (d * d, w0 * w1)
        };
        match best {
            Some((bn, bd, _)) if num * bd <= bn * den => {}
            _ => best = Some((num, den, t)),
        }
    }
    best.map_or(1, |b| b.2)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for h in 0..100 {
        let density = rng.random_range(0.05..1.0);
        let mut counts: Vec<u64> = (0..256)
            .map(|_| {
                if rng.random_bool(density) {
                    rng.random_range(0..1000)
                } else {
                    0
                }
            })
            .collect();
        counts[rng.random_range(0..128)] += 1;
        counts[rng.random_range(128..256)] += 1;
        let hist = Histogram::new(
            (0..=256).map(|i| i as f64).collect(),
            counts.iter().map(|&c| c as f64).collect(),
        )
        .map_err(|e| e.to_string())?;
        let got = otsu_threshold(&hist).map_err(|e| e.to_string())?;
        let want = otsu_oracle(&counts);
        check(
            got == want,
            format!("histogram {h}: otsu {got}, brute force {want}"),
        )?;
    }
    Ok("100 random histograms agree exactly".into())
}

// ---------------------------------------------------------------- criterion 6

fn half_image(w: usize, h: usize) -> (ImageRgb, BinaryMask) {
    let mut img = ImageRgb::filled(w, h, [30, 140, 40]);
    let mut truth = BinaryMask::empty(w, h);
    for y in 0..h {
        for x in w / 2..w {
            img.set(x, y, [230, 225, 235]);
        }
        truth.set(w / 2 - 1, y, true);
        truth.set(w / 2, y, true);
    }
    (img, truth)
}

fn criterion_6() -> Outcome {
    let mut notes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut scenes: Vec<(ImageRgb, usize)> = Vec::new();
    for i in 0..6 {
        let spec = SceneSpec {
            width: rng.random_range(48..=160),
            height: rng.random_range(48..=160),
            ..SceneSpec::default()
        };
        let img = synth_scene(&spec, i).map_err(|e| e.to_string())?.image;
        let k = rng.random_range(4..=200);
        scenes.push((img, k));
    }
    for k in [4, 16] {
        scenes.push((half_image(64, 64).0, k));
    }
    let mut worst_dev = 0.0f64;
    for (i, (img, k)) in scenes.iter().enumerate() {
        let cfg = SlicConfig::with_count(*k);
        let a = slic_segment(img, &cfg).map_err(|e| e.to_string())?;
        let b = slic_segment(img, &cfg).map_err(|e| e.to_string())?;
        check(
            a.labels() == b.labels(),
            format!("scene {i}: repeated runs differ"),
        )?;
        check(
            a.labels().len() == img.len(),
            format!("scene {i}: label count"),
        )?;
        let mut seen = vec![0usize; a.count()];
        for &l in a.labels() {
            check(
                (l as usize) < a.count(),
                format!("scene {i}: label {l} out of range"),
            )?;
            seen[l as usize] += 1;
        }
        check(
            seen.iter().all(|&c| c > 0),
            format!("scene {i}: empty superpixel id"),
        )?;
        let dev = (a.count() as f64 - *k as f64).abs() / *k as f64;
        worst_dev = worst_dev.max(dev);
        check(
            dev <= 0.2,
            format!("scene {i}: {} superpixels for K={k}", a.count()),
        )?;
    }
    for k in [4, 16] {
        let (img, truth) = half_image(64, 64);
        let lab = slic_segment(&img, &SlicConfig::with_count(k)).map_err(|e| e.to_string())?;
        let r = boundary_recall(&lab, &truth, 2).map_err(|e| e.to_string())?;
        check(r >= 0.95, format!("half image K={k}: boundary recall {r}"))?;
        notes.push(format!("recall(K={k})={r:.3}"));
    }
    Ok(format!(
        "{} runs partitioned and repeatable, worst count deviation {:.0}%, {}",
        scenes.len(),
        worst_dev * 100.0,
        notes.join(", ")
    ))
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let (pos, neg) = (3691usize, 87797usize);
    let tiny = |positive: bool| LabeledPortrait {
        portrait: Portrait {
            size: 1,
            pixels: vec![[0.0; 3]],
            image_id: String::new(),
            superpixel_id: 0,
            mode: PortraitMode::MeanPad,
            variant: Mirror::Original,
            centered: false,
        },
        positive,
    };
    let samples: Vec<LabeledPortrait> = (0..pos + neg).map(|i| tiny(i < pos)).collect();
    let out = augment_mirror(&samples);
    let p = out.iter().filter(|s| s.positive).count();
    let n = out.len() - p;
    check(p == 14_764, format!("{p} positives after augmentation"))?;
    check(n == neg, format!("{n} negatives after augmentation"))?;
    Ok(format!("{pos} -> {p} positives, {n} negatives unchanged"))
}

// ---------------------------------------------------------------- criterion 8

fn benchmark_config(kind: ClassifierKind) -> TrainConfig {
    TrainConfig {
        slic: SlicConfig::with_count(200),
        classifier: kind,
        grid: Some(match kind {
            ClassifierKind::Bh => GridSpec::bh_default(),
            _ => GridSpec::svm_default(),
        }),
        search: SearchOptions {
            folds: 5,
            ..SearchOptions::default()
        },
        seed: 42,
        ..TrainConfig::default()
    }
}

fn threshold_f1(
    ev: &flowerdet::pipeline::Evaluation,
    manifest: &DatasetManifest,
    bundle: &ModelBundle,
) -> Result<f64, String> {
    let imgs =
        flowerdet::pipeline::prepare_split(manifest, Some(Split::Validation), &bundle.slic, 0.5)
            .map_err(|e| e.to_string())?;
    let labels: Vec<bool> = imgs.into_iter().flat_map(|p| p.labels).collect();
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (d, &l) in ev.detections.iter().zip(&labels) {
        match (d.predicted, l) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    Ok(2.0 * tp / (2.0 * tp + fp + fn_))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (manifest, _) =
        synth_dataset(&SceneSpec::default(), 30, 10, 42, dir.path()).map_err(|e| e.to_string())?;
    let svm = train_pipeline(&manifest, &benchmark_config(ClassifierKind::Svm), None)
        .map_err(|e| e.to_string())?;
    let svm_ev = evaluate_bundle(&svm.bundle, &manifest, Split::Validation, 0.5, None)
        .map_err(|e| e.to_string())?;
    let svm_f1 = threshold_f1(&svm_ev, &manifest, &svm.bundle)?;
    let bh = train_pipeline(&manifest, &benchmark_config(ClassifierKind::Bh), None)
        .map_err(|e| e.to_string())?;
    let bh_ev = evaluate_bundle(&bh.bundle, &manifest, Split::Validation, 0.5, None)
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "HSV+SVM F1 {svm_f1:.3} AUC-PR {:.3} (cell {:?}); HSV+Bh AUC-PR {:.3}; {} test positives; {secs:.0}s",
        svm_ev.report.auc_pr,
        svm.bundle.provenance.grid_cell,
        bh_ev.report.auc_pr,
        svm_ev.report.positives
    );
    check(svm_f1 >= 0.90, format!("F1 below 0.90: {summary}"))?;
    check(
        svm_ev.report.auc_pr >= 0.95,
        format!("AUC-PR below 0.95: {summary}"),
    )?;
    check(
        bh_ev.report.auc_pr < svm_ev.report.auc_pr,
        format!("Bh not below SVM: {summary}"),
    )?;
    check(secs < 600.0, format!("too slow: {summary}"))?;
    Ok(summary)
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let reference_imgs: Vec<ImageRgb> = (0..4)
        .map(|s| synth_scene(&SceneSpec::default(), 900 + s).map(|t| t.image))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (reference, vmean) =
        channel_references(reference_imgs.iter()).map_err(|e| e.to_string())?;
    let mean = DatasetMean::new(
        flowerdet::imagecore::mean_rgb(reference_imgs.iter()).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let ref_cdf = reference.cdf();
    let (mut worst_panel, mut worst_flower, mut worst_ks) = (1.0f64, 0.0f64, 0.0f64);
    for seed in 0..8 {
        let spec = SceneSpec {
            panel: Some(PanelSpec::default()),
            ..SceneSpec::default()
        };
        let s = synth_scene(&spec, seed).map_err(|e| e.to_string())?;
        let panel = s.panel.as_ref().expect("panel requested");
        check(
            panel.count() * 4 >= s.image.len(),
            format!("seed {seed}: panel under 25%"),
        )?;
        let out = transfer_with_references(
            &s.image,
            &mean,
            &reference,
            vmean,
            &BackgroundConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let bg = out.background.background.as_slice();
        let removed = panel
            .as_slice()
            .iter()
            .zip(bg)
            .filter(|(p, b)| **p && **b)
            .count() as f64
            / panel.count() as f64;
        let lost = s
            .flowers
            .as_slice()
            .iter()
            .zip(bg)
            .filter(|(f, b)| **f && **b)
            .count() as f64
            / s.flowers.count().max(1) as f64;
        worst_panel = worst_panel.min(removed);
        worst_flower = worst_flower.max(lost);
        check(
            removed >= 0.99,
            format!("seed {seed}: {:.2}% of panel removed", removed * 100.0),
        )?;
        check(
            lost < 0.01,
            format!("seed {seed}: {:.2}% of flower pixels removed", lost * 100.0),
        )?;

        let processed: Vec<f64> = rgb_to_hsv(&out.image)
            .pixels()
            .iter()
            .zip(bg)
            .filter(|(_, b)| !**b)
            .map(|(p, _)| p.s)
            .collect();
        let hist = Histogram::from_values(&processed, SATURATION_REFERENCE_BINS, 0.0, 1.0)
            .map_err(|e| e.to_string())?;
        let ks = hist
            .normalize()
            .map_err(|e| e.to_string())?
            .cdf()
            .iter()
            .zip(&ref_cdf)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_ks = worst_ks.max(ks);
    }
    let bin = 1.0 / SATURATION_REFERENCE_BINS as f64;
    check(
        worst_ks <= bin,
        format!("KS distance {worst_ks:.4} exceeds bin width {bin:.4}"),
    )?;
    Ok(format!(
        "8 panel scenes: >= {:.2}% panel removed, <= {:.2}% flower removed, KS {worst_ks:.4} <= {bin:.4}",
        worst_panel * 100.0,
        worst_flower * 100.0
    ))
}

// --------------------------------------------------------------- criterion 10

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SceneSpec {
        width: 64,
        height: 64,
        disc_count: [2, 4],
        radius: [5.0, 8.0],
        ..SceneSpec::default()
    };
    let (manifest, _) = synth_dataset(&spec, 6, 1, 10, dir.path()).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        slic: SlicConfig::with_count(60),
        pca_k: Some(12),
        grid: Some(GridSpec::parse("C=1,10;gamma=0.1,1").map_err(|e| e.to_string())?),
        search: SearchOptions {
            folds: 3,
            ..SearchOptions::default()
        },
        seed: 7,
        ..TrainConfig::default()
    };
    let mut bytes = Vec::new();
    let mut csvs = Vec::new();
    let test = manifest
        .entries(Split::Validation)
        .next()
        .expect("one validation image")
        .clone();
    let img = manifest.load_image(&test).map_err(|e| e.to_string())?;
    for run in 0..2 {
        let b = train_pipeline(&manifest, &cfg, None)
            .map_err(|e| e.to_string())?
            .bundle;
        let p = dir.path().join(format!("run{run}.bundle"));
        save_bundle(&b, &p).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(&p).map_err(|e| e.to_string())?);
        let loaded = load_bundle(&p).map_err(|e| e.to_string())?;
        check(loaded == b, "bundle round trip is not field-exact")?;
        let det =
            detect_image(&img, &loaded, &loaded.slic, &test.id, None).map_err(|e| e.to_string())?;
        csvs.push(detections_csv(&det.detections));
    }
    check(
        bytes[0] == bytes[1],
        "bundles differ between identical runs",
    )?;
    check(
        csvs[0] == csvs[1],
        "detection CSVs differ between identical runs",
    )?;

    let p = dir.path().join("broken.bundle");
    std::fs::write(&p, &bytes[0][..bytes[0].len() / 2]).map_err(|e| e.to_string())?;
    check(
        matches!(load_bundle(&p), Err(Error::CorruptFile { .. })),
        "truncated bundle not reported as corrupt",
    )?;
    let mut flipped = bytes[0].clone();
    let n = flipped.len();
    flipped[n - 10] ^= 0x01;
    std::fs::write(&p, &flipped).map_err(|e| e.to_string())?;
    check(
        matches!(load_bundle(&p), Err(Error::CorruptFile { .. })),
        "checksum mismatch not reported as corrupt",
    )?;
    let text = String::from_utf8(bytes[0].clone()).map_err(|e| e.to_string())?;
    let future = text.replacen(
        &format!(" v{BUNDLE_VERSION} "),
        &format!(" v{} ", BUNDLE_VERSION + 1),
        1,
    );
    std::fs::write(&p, future).map_err(|e| e.to_string())?;
    match load_bundle(&p) {
        Err(Error::UnsupportedVersion { found, supported })
            if found == BUNDLE_VERSION + 1 && supported == BUNDLE_VERSION => {}
        other => return Err(format!("future version gave {other:?}")),
    }
    Ok(format!("bundles ({} bytes) and detection CSVs byte-identical; corrupt or future-version bundles rejected", bytes[0].len()))
}

// --------------------------------------------------------------- criterion 11

fn criterion_11() -> Outcome {
    let (w, h) = (400, 300);
    let mut img = ImageRgb::filled(w, h, [40, 120, 50]);
    let mut fill = |x0: usize, y0: usize, cw: usize, ch: usize| {
        let mut m = BinaryMask::empty(w, h);
        for y in y0..y0 + ch {
            for x in x0..x0 + cw {
                img.set(x, y, [240, 238, 245]);
                m.set(x, y, true);
            }
        }
        m
    };
    let small = fill(5, 5, 40, 25);
    let medium = fill(60, 5, 50, 40);
    let large = fill(130, 50, 250, 200);
    assert_eq!(
        (small.count(), medium.count(), large.count()),
        (1000, 2000, 50_000)
    );
    let out = hsv_threshold_detect(&rgb_to_hsv(&img), &HsvThresholdConfig::white_flowers())
        .map_err(|e| e.to_string())?;
    check(out == medium, format!("kept {} pixels", out.count()))?;
    Ok("only the 2,000-pixel cluster survives".into())
}

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "SVM dual matches QP oracle", criterion_1),
        (2, "RBF-SVM separates XOR", criterion_2),
        (3, "PCA matches Jacobi oracle", criterion_3),
        (4, "PR/AUC/F1 exactness", criterion_4),
        (5, "Otsu equals brute force", criterion_5),
        (6, "SLIC contracts", criterion_6),
        (7, "augmentation arithmetic", criterion_7),
        (8, "end-to-end synthetic benchmark", criterion_8),
        (9, "transfer chain on panel scenes", criterion_9),
        (10, "determinism and persistence", criterion_10),
        (11, "HSV baseline fixture", criterion_11),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {n:>2} ({name}): {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {n:>2} ({name}): {msg} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
