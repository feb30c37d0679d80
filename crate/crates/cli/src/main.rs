use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowerdet::classify::{grid_search, GridSpec, Metric, SearchOptions};
use flowerdet::eval::write_report;
use flowerdet::features::{
    load_external_features, BlockNormalization, ExternalFeatures, FeatureSourceSpec,
};
use flowerdet::imagecore::io::{read_rgb, write_png};
use flowerdet::imagecore::mean_rgb;
use flowerdet::pipeline::{
    crossval_method, detect_image, evaluate_bundle, feature_table, load_bundle, overlay,
    prepare_entry, prepare_split, reduce_set, save_bundle, synth_dataset, train_pipeline,
    transfer_preprocess, write_detections, BackgroundConfig, ClassifierKind, DatasetManifest,
    GridSelection, SceneSpec, Split, TrainConfig,
};
use flowerdet::proposals::{
    augment_mirror, export_portraits, make_portrait, DatasetMean, LabeledPortrait, PortraitConfig,
    PortraitMode,
};
use flowerdet::superpixel::{slic_segment, write_labeling, SlicConfig};
use flowerdet::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "flowerdet",
    version,
    about = "Superpixel flower detection: training, prediction and evaluation"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one image into superpixels.
    Segment {
        #[arg(long)]
        image: PathBuf,
        /// Target number of superpixels.
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        compactness: f64,
        /// Label raster; a JSON sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model bundle on the training split of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "mean_pad")]
        portrait: PortraitMode,
        /// Folds used by the grid search.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value = "f1")]
        metric: Metric,
        /// Score grid cells by `cv` on the training split or on the `validation` split.
        #[arg(long, default_value = "cv")]
        select_on: GridSelection,
        #[arg(long)]
        no_augment: bool,
        /// Write the grid table (CSV) here.
        #[arg(long)]
        grid_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect flowers in one image.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Image id used for external feature lookup and in the output.
        #[arg(long)]
        image_id: Option<String>,
        /// External feature file for bundles trained on external features.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Apply background removal and colour harmonisation first.
        #[arg(long)]
        transfer: bool,
        #[arg(long, default_value_t = 2)]
        bg_modes: usize,
        #[arg(long, default_value_t = 40.0)]
        bg_threshold: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Evaluate a bundle on one split of a manifest.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "validation")]
        split: Split,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        label_fraction: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Cross-validate one or more methods on every image of a manifest.
    Crossval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Methods to compare; repeat the flag for several.
        #[arg(long = "method", default_values = ["svm"])]
        methods: Vec<ClassifierKind>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        no_augment: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a hyperparameter grid by k-fold cross-validation.
    Gridsearch {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value = "f1")]
        metric: Metric,
        #[arg(long)]
        no_augment: bool,
        /// CSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic orchard scenes with flower masks and a manifest.
    Synth {
        /// Scene parameters as JSON; defaults are used for missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Training images.
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        validation_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Export labelled superpixel portraits (PNG plus index.csv).
    Portraits {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long)]
        superpixels: Option<usize>,
        #[arg(long, default_value = "mean_pad")]
        mode: PortraitMode,
        #[arg(long, default_value_t = flowerdet::proposals::DEFAULT_PORTRAIT_SIZE)]
        size: usize,
        #[arg(long)]
        augment: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// `hsv`, `hsv-joint` or `external:<file>`.
    #[arg(long, default_value = "hsv")]
    features: String,
    /// Principal components kept, or `none`.
    #[arg(long, default_value = "69")]
    pca_k: String,
    #[arg(long, default_value = "svm")]
    classifier: ClassifierKind,
    /// `default`, `none`, or e.g. `C=1,10;gamma=0.01,0.1` / `sigma=1,2`.
    #[arg(long, default_value = "none")]
    grid: String,
    #[arg(long, default_value_t = 10.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Superpixels per image (default derives from image size).
    #[arg(long)]
    superpixels: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    compactness: f64,
    #[arg(long, default_value_t = 0.5)]
    label_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Core(Error),
    Partial(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult = Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_DATA,
    }
}

impl ModelArgs {
    fn slic(&self) -> SlicConfig {
        SlicConfig {
            target_count: self.superpixels,
            compactness: self.compactness,
            ..SlicConfig::default()
        }
    }

    fn external(&self) -> Result<Option<ExternalFeatures>, Failure> {
        match self.features.strip_prefix("external:") {
            Some(path) => Ok(Some(read_external(Path::new(path))?)),
            None => Ok(None),
        }
    }

    fn grid(&self) -> Result<Option<GridSpec>, Failure> {
        let grid = match self.grid.as_str() {
            "none" => return Ok(None),
            "default" => match self.classifier {
                ClassifierKind::Bh => GridSpec::bh_default(),
                _ => GridSpec::svm_default(),
            },
            s => GridSpec::parse(s)?,
        };
        let matches = matches!(
            (&grid, self.classifier),
            (GridSpec::Svm { .. }, ClassifierKind::Svm) | (GridSpec::Bh { .. }, ClassifierKind::Bh)
        );
        if !matches {
            return Err(Failure::Usage(format!(
                "grid `{}` does not fit classifier `{}`",
                self.grid,
                self.classifier.name()
            )));
        }
        Ok(Some(grid))
    }

    fn config(&self, external: Option<&ExternalFeatures>) -> Result<TrainConfig, Failure> {
        let features = match (self.features.as_str(), external) {
            ("hsv", _) => FeatureSourceSpec::HsvHist {
                normalization: BlockNormalization::PerBlock,
            },
            ("hsv-joint", _) => FeatureSourceSpec::HsvHist {
                normalization: BlockNormalization::Joint,
            },
            (_, Some(x)) => FeatureSourceSpec::External {
                name: x.name().to_string(),
                dim: x.dim(),
            },
            (other, None) => {
                return Err(Failure::Usage(format!("unknown feature source `{other}`")))
            }
        };
        let pca_k = match self.pca_k.as_str() {
            "none" => None,
            s => Some(
                s.parse()
                    .map_err(|_| Failure::Usage(format!("bad --pca-k `{s}`")))?,
            ),
        };
        Ok(TrainConfig {
            slic: self.slic(),
            features,
            pca_k,
            classifier: self.classifier,
            c: self.c,
            gamma: self.gamma,
            sigma: self.sigma,
            grid: self.grid()?,
            label_fraction: self.label_fraction,
            seed: self.seed,
            ..TrainConfig::default()
        })
    }
}

/// Reads an external feature file, taking the dimension from its header.
fn read_external(path: &Path) -> Result<ExternalFeatures, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let dim = text
        .lines()
        .next()
        .and_then(|l| l.trim().strip_prefix("#dim="))
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("{} lacks a `#dim=N` header", path.display())))?;
    Ok(load_external_features(path, dim)?)
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| {
        Failure::Core(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| {
        Failure::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Segment {
            image,
            k,
            compactness,
            out,
        } => {
            let img = read_rgb(&image)?;
            let cfg = SlicConfig {
                target_count: Some(k),
                compactness,
                ..SlicConfig::default()
            };
            let lab = slic_segment(&img, &cfg)?;
            write_labeling(&lab, &out, Some(&cfg), Some(&img))?;
            println!("{} superpixels -> {}", lab.count(), out.display());
        }
        Command::Train {
            manifest,
            model,
            portrait,
            folds,
            metric,
            select_on,
            no_augment,
            grid_out,
            out,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let external = model.external()?;
            let mut cfg = model.config(external.as_ref())?;
            cfg.portrait = PortraitConfig {
                mode: portrait,
                ..PortraitConfig::default()
            };
            cfg.augment = !no_augment;
            cfg.selection = select_on;
            cfg.search = SearchOptions {
                folds,
                metric,
                seed: model.seed,
                ..SearchOptions::default()
            };
            let trained = train_pipeline(&manifest, &cfg, external.as_ref())?;
            save_bundle(&trained.bundle, &out)?;
            if let Some(g) = &trained.grid {
                let best = g.best_cell();
                println!(
                    "grid best {:?} ({} = {:.4})",
                    best.hyper,
                    g.metric.name(),
                    best.score
                );
                if let Some(p) = grid_out {
                    write_text(&p, &g.to_csv())?;
                }
            }
            let p = &trained.bundle.provenance;
            println!(
                "trained {} on {} images ({} positive, {} negative superpixels) -> {}",
                trained.bundle.classifier.name(),
                p.training_images,
                p.positive_superpixels,
                p.negative_superpixels,
                out.display()
            );
        }
        Command::Predict {
            bundle,
            image,
            image_id,
            features,
            transfer,
            bg_modes,
            bg_threshold,
            out,
            overlay: overlay_path,
        } => {
            let bundle = load_bundle(&bundle)?;
            let external = features.as_deref().map(read_external).transpose()?;
            let mut img = read_rgb(&image)?;
            if transfer {
                let cfg = BackgroundConfig {
                    modes: bg_modes,
                    distance_threshold: bg_threshold,
                    ..BackgroundConfig::default()
                };
                let t = transfer_preprocess(&img, &bundle, &cfg)?;
                for w in &t.background.warnings {
                    eprintln!("warning: {w}");
                }
                img = t.image;
            }
            let id = image_id.unwrap_or_else(|| {
                image
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            let det = detect_image(&img, &bundle, &bundle.slic, &id, external.as_ref())?;
            write_detections(&out, &det.detections)?;
            if let Some(p) = overlay_path {
                write_png(&overlay(&img, &det.labeling, &det.detections)?, p)?;
            }
            let positives = det.detections.iter().filter(|d| d.predicted).count();
            println!(
                "{positives} of {} superpixels predicted positive -> {}",
                det.labeling.count(),
                out.display()
            );
            if det.is_partial() {
                for f in &det.failures {
                    eprintln!("superpixel {}: {}", f.superpixel_id, f.message);
                }
                return Err(Failure::Partial(format!(
                    "{} superpixels could not be scored",
                    det.failures.len()
                )));
            }
        }
        Command::Evaluate {
            bundle,
            manifest,
            split,
            features,
            label_fraction,
            out_dir,
        } => {
            let bundle = load_bundle(&bundle)?;
            let manifest = DatasetManifest::load(&manifest)?;
            let external = features.as_deref().map(read_external).transpose()?;
            let ev = evaluate_bundle(&bundle, &manifest, split, label_fraction, external.as_ref())?;
            create_dir(&out_dir)?;
            write_report(
                &out_dir,
                &[(bundle.classifier.name(), &ev.report, &ev.curve)],
            )?;
            write_detections(out_dir.join("detections.csv"), &ev.detections)?;
            println!(
                "AUC-PR {:.4}  best F1 {:.4} (P {:.4}, R {:.4})  -> {}",
                ev.report.auc_pr,
                ev.report.best_f1,
                ev.report.precision_at_best,
                ev.report.recall_at_best,
                out_dir.display()
            );
            if !ev.failures.is_empty() {
                for (img, msg) in &ev.failures {
                    eprintln!("{img}: {msg}");
                }
                return Err(Failure::Partial(format!(
                    "{} superpixels could not be scored",
                    ev.failures.len()
                )));
            }
        }
        Command::Crossval {
            manifest,
            folds,
            methods,
            model,
            no_augment,
            out_dir,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let external = model.external()?;
            let images = prepare_split(&manifest, None, &model.slic(), model.label_fraction)?;
            let mut results = Vec::new();
            for &m in &methods {
                let args = ModelArgs {
                    classifier: m,
                    grid: if model.grid == "none" || m == model.classifier {
                        model.grid.clone()
                    } else {
                        "default".into()
                    },
                    features: model.features.clone(),
                    pca_k: model.pca_k.clone(),
                    ..model
                };
                let mut cfg = args.config(external.as_ref())?;
                cfg.augment = !no_augment;
                let cv = crossval_method(&images, &cfg, folds, model.seed, external.as_ref())?;
                results.push((m.name(), cv));
            }
            create_dir(&out_dir)?;
            let refs: Vec<_> = results
                .iter()
                .map(|(n, cv)| (*n, &cv.report, &cv.curve))
                .collect();
            write_report(&out_dir, &refs)?;
            println!("{:<10} {:>8} {:>8}", "method", "AUC-PR", "F1");
            for (n, cv) in &results {
                println!(
                    "{n:<10} {:>8.4} {:>8.4}",
                    cv.report.auc_pr, cv.report.best_f1
                );
            }
        }
        Command::Gridsearch {
            manifest,
            model,
            folds,
            metric,
            no_augment,
            out,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let external = model.external()?;
            let cfg = model.config(external.as_ref())?;
            let grid = match cfg.grid.clone() {
                Some(g) => g,
                None => return Err(Failure::Usage("gridsearch needs --grid".into())),
            };
            if cfg.classifier == ClassifierKind::HsvThreshold {
                return Err(Failure::Usage(
                    "the threshold detector has no hyperparameters to search".into(),
                ));
            }
            let images =
                prepare_split(&manifest, Some(Split::Train), &cfg.slic, cfg.label_fraction)?;
            let table = feature_table(
                &images,
                &cfg.effective_features(),
                external.as_ref(),
                !no_augment,
            )?;
            let set = match cfg.effective_pca_k() {
                Some(k) => reduce_set(&table.set, k, cfg.pca_on_augmented)?.1,
                None => table.set,
            };
            let opts = SearchOptions {
                folds,
                metric,
                seed: model.seed,
                ..SearchOptions::default()
            };
            let res = grid_search(&set, &grid, &opts)?;
            match out {
                Some(p) => write_text(&p, &res.to_csv())?,
                None => print!("{}", res.to_csv()),
            }
            let best = res.best_cell();
            eprintln!(
                "best {:?} ({} = {:.4})",
                best.hyper,
                metric.name(),
                best.score
            );
            for c in res.cells.iter().filter(|c| c.flagged) {
                for n in &c.notes {
                    eprintln!("warning: {:?}: {n}", c.hyper);
                }
            }
        }
        Command::Synth {
            spec,
            count,
            validation_count,
            seed,
            out_dir,
        } => {
            let spec: SceneSpec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    serde_json::from_str(&text).map_err(Error::from)?
                }
                None => SceneSpec::default(),
            };
            let (m, path) = synth_dataset(&spec, count, validation_count, seed, &out_dir)?;
            println!("{} scenes -> {}", m.images.len(), path.display());
        }
        Command::Portraits {
            manifest,
            split,
            superpixels,
            mode,
            size,
            augment,
            out_dir,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let slic = SlicConfig {
                target_count: superpixels,
                ..SlicConfig::default()
            };
            let cfg = PortraitConfig {
                size,
                mode,
                ..PortraitConfig::default()
            };
            let mean = match manifest.dataset_mean {
                Some(m) => DatasetMean::new(m)?,
                None => {
                    let imgs = manifest
                        .entries(Split::Train)
                        .map(|e| manifest.load_image(e))
                        .collect::<Result<Vec<_>, _>>()?;
                    DatasetMean::new(mean_rgb(imgs.iter())?)?
                }
            };
            let mut samples = Vec::new();
            for e in manifest.entries(split) {
                let p = prepare_entry(&manifest, e, &slic, 0.5)?;
                for id in 0..p.labeling.count() as u32 {
                    samples.push(LabeledPortrait {
                        portrait: make_portrait(&p.image, &p.labeling, id, &cfg, &mean)?
                            .with_image_id(&p.id),
                        positive: p.labels[id as usize],
                    });
                }
            }
            if augment {
                samples = augment_mirror(&samples);
            }
            let index = export_portraits(&samples, &mean, &out_dir)?;
            println!("{} portraits -> {}", samples.len(), index.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Partial(msg)) => {
            eprintln!("partial failure: {msg}");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
