//! Patch standardization, cell-crop extraction, augmentation, class
//! balancing and stratified dataset splits.

mod cells;
mod dataset;
mod image;
mod standardize;

pub use cells::{
    augment, extract_cells, AugmentSpec, CellCrop, CellExtraction, CELL_CROP_SIZE, FIELD_OF_VIEW_EXTENSION,
};
pub use dataset::{class_balance, class_counts, split, SplitAssignment, SplitFractions};
pub use image::{bicubic_resize, cubic_kernel, mirror_pad, reflect_index, CUBIC_A};
pub use standardize::{standardize_image, Patch, PatchSet, StandardizePolicy};
