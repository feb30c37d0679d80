//! Decision mechanisms: RBF-SVM, Bhattacharyya likelihood, HSV thresholding
//! and grid search over their hyperparameters.

mod bh;
mod grid;
mod hsv;
mod svm;

pub use bh::{bh_distance, bh_distance_masses, bh_likelihood, bh_train, BhModel};
pub use grid::{
    dense_gram_fits, f1_at, grid_search, GridCell, GridResult, GridSpec, Hyper, Metric,
    SearchOptions, DEFAULT_C, DEFAULT_GAMMA, DEFAULT_SIGMA,
};
pub use hsv::{hsv_threshold_detect, hsv_threshold_pixels, HsvThresholdConfig};
pub use svm::{
    rbf, smo_solve, svm_decision, svm_fit, svm_train, DenseGram, Gram, KernelKind, RbfGram,
    SmoParams, SmoSolution, SubGram, SvmFit, SvmModel, SvmParams,
};
