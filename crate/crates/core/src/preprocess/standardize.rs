use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::tensor::Tensor;
use crate::preprocess::image::{bicubic_resize, hwc, reflect_window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StandardizePolicy {
    /// Side length of a standard patch.
    pub patch_size: usize,
    /// Images whose smaller side is below this are excluded.
    pub min_size: usize,
}

impl Default for StandardizePolicy {
    fn default() -> Self {
        StandardizePolicy { patch_size: 256, min_size: 128 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub image: Tensor,
    /// `(row, col)` of the patch's top-left pixel in the source image.
    pub origin: (usize, usize),
    pub source_image_id: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Bring an arbitrary `H×W×3` image to standard-size patches.
///
/// * smaller side below `min_size`: excluded (empty set);
/// * both sides within `[min_size, patch_size]`: one bicubically resized patch;
/// * any side above `patch_size`: tiled with stride `patch_size`, the image
///   mirror-padded on the bottom/right up to the next multiple so the
///   remainder tiles are full size.
pub fn standardize_image(img: &Tensor, source_image_id: &str, policy: StandardizePolicy) -> Result<PatchSet> {
    let (h, w, c) = hwc(img)?;
    if c != 3 || img.ndim() != 3 {
        return Err(Error::InvalidInput(format!("expected an H×W×3 image, got shape {:?}", img.shape())));
    }
    if policy.patch_size == 0 || policy.min_size > policy.patch_size {
        return Err(Error::InvalidInput(format!("invalid standardization policy {:?}", policy)));
    }
    let size = policy.patch_size;
    if h.min(w) < policy.min_size {
        return Ok(PatchSet::default());
    }
    if h <= size && w <= size {
        let image = if h == size && w == size { img.clone() } else { bicubic_resize(img, size, size)? };
        return Ok(PatchSet {
            patches: vec![Patch { image, origin: (0, 0), source_image_id: source_image_id.to_string() }],
        });
    }
    let rows = h.div_ceil(size);
    let cols = w.div_ceil(size);
    let mut patches = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for q in 0..cols {
            let origin = (r * size, q * size);
            let image = reflect_window(img, origin.0 as i64, origin.1 as i64, size, size)?;
            patches.push(Patch { image, origin, source_image_id: source_image_id.to_string() });
        }
    }
    Ok(PatchSet { patches })
}
