//! SLIC superpixel segmentation and ground-truth labelling of superpixels.

mod io;
mod labeling;
mod slic;

pub use io::{read_labeling, write_labeling, LabelingCache, LabelingSidecar, SidecarEntry};
pub(crate) use labeling::coverage;
pub use labeling::{
    assign_labels_from_mask, boundary_recall, enforce_connectivity, BoundingBox,
    SuperpixelLabeling, SuperpixelStats,
};
pub use slic::{rgb_to_lab, slic_segment, SlicConfig, DEFAULT_PIXELS_PER_SUPERPIXEL};
