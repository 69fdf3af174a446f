pub mod eval;
pub mod prep;
pub mod refine;
pub mod seg;

use std::path::Path;

use cellquant::io::{read_raster, read_tensor};
use cellquant::{Error, Result, Tensor};

/// PNG by extension, otherwise a `CQT1` tensor.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        read_raster(path)
    } else {
        read_tensor(path)
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
