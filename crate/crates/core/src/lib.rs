//! Flower detection from superpixel region proposals.
//!
//! The prediction path for one image is:
//!
//! 1. **Segment** the image into SLIC superpixels ([`superpixel`]).
//! 2. **Crop** the smallest square portrait around each superpixel, pad its
//!    background with the dataset mean and resize it ([`proposals`]).
//! 3. **Extract** a feature vector from the mean-centred portrait
//!    ([`features`]).
//! 4. **Reduce** the feature dimensionality with PCA ([`reduce`]).
//! 5. **Classify** the reduced vector with an RBF-kernel SVM ([`classify`]).
//!
//! [`eval`] implements the precision-recall protocol used to compare the SVM
//! against the colour-threshold and Bhattacharyya baselines, and [`pipeline`]
//! ties the stages together (training, prediction, transfer pre-processing,
//! model bundles and synthetic data).

pub mod classify;
mod digest;
pub mod error;
pub mod eval;
pub mod features;
pub mod imagecore;
pub mod pipeline;
pub mod proposals;
pub mod reduce;
pub mod superpixel;

pub use error::{Error, Result};
pub use imagecore::{BinaryMask, GrayField, Histogram, ImageHsv, ImageRgb};
