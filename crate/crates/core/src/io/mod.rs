//! File formats shared by every stage: `CQT1` tensors, JSON Lines
//! manifests and 8-bit RGB PNG rasters.

pub mod manifest;
pub mod raster;
pub mod tensor;

pub use manifest::{
    read_cell_manifest, read_manifest, write_cell_manifest, write_manifest, BBox, CellManifest, CellRecord,
    DatasetManifest, PatchRecord, RelabelProvenance, SourceDataset,
};
pub use raster::{read_raster, write_raster};
pub use tensor::{read_tensor, write_tensor};
