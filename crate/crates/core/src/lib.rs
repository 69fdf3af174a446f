//! Non-neural computational core of an H&E cell segmentation and
//! classification pipeline.
//!
//! The crate is split by pipeline stage:
//!
//! * [`io`]: the `CQT1` tensor format, JSON Lines manifests and PNG ingest.
//! * [`preprocess`]: patch standardization, cell-crop extraction,
//!   augmentation, class balancing and stratified splits.
//! * [`flowseg`]: flow-field gradient tracking, sink clustering,
//!   majority-vote typing and polygon extraction.
//! * [`metrics`]: R², instance matching, PQ/SQ/DQ, confusion matrices and
//!   percentile bootstrap intervals.
//! * [`losses`]: training and distillation objectives with analytic
//!   gradients, AdamW and cosine annealing.
//! * [`relabel`]: cross-relabeling of broad classes and merging into the
//!   refined seven-class dataset.

pub mod error;
pub mod flowseg;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod preprocess;
pub mod relabel;

pub use error::{Error, Result};
pub use io::tensor::{DType, Tensor, TensorData};

/// Version of the engine, echoed by the CLI and bindings.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
