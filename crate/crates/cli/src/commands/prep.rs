use std::collections::BTreeMap;
use std::path::PathBuf;

use cellquant::flowseg::{flows_from_instances, ClassMap, InstanceMap, ProbMap};
use cellquant::io::manifest::{manifest_dir, resolve};
use cellquant::io::{
    read_manifest, read_raster, read_tensor, write_cell_manifest, write_raster, write_tensor, CellManifest,
};
use cellquant::preprocess::{self, class_balance, class_counts, split, standardize_image};
use cellquant::{Error, Result, ENGINE_VERSION};
use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{create_dir, load_image};
use crate::output::{emit, write_json};
use crate::Context;

#[derive(Args)]
pub struct StandardizeArgs {
    /// Directory of 8-bit RGB PNG images.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn standardize(ctx: &Context, a: StandardizeArgs) -> Result<()> {
    let policy = ctx.config.standardize;
    let rd = std::fs::read_dir(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(&a.input, e))?.path();
        if p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(p);
        }
    }
    files.sort();
    create_dir(&a.out)?;
    let images = files
        .par_iter()
        .map(|path| {
            let img = read_raster(path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
            let (h, w) = (img.shape()[0], img.shape()[1]);
            let set = standardize_image(&img, &stem, policy)?;
            let status = if set.is_empty() {
                "excluded"
            } else if h == policy.patch_size && w == policy.patch_size {
                "unchanged"
            } else if h <= policy.patch_size && w <= policy.patch_size {
                "resized"
            } else {
                "tiled"
            };
            let mut patches = Vec::with_capacity(set.len());
            for p in &set.patches {
                let name = format!("{}_{}_{}.png", stem, p.origin.0, p.origin.1);
                write_raster(&p.image, a.out.join(&name))?;
                patches.push(json!({ "file": name, "origin": [p.origin.0, p.origin.1] }));
            }
            Ok(json!({ "source": path.file_name().map(|f| f.to_string_lossy()), "height": h, "width": w, "status": status, "patches": patches }))
        })
        .collect::<Result<Vec<Value>>>()?;
    let n_patches: usize = images.iter().map(|i| i["patches"].as_array().map_or(0, Vec::len)).sum();
    let n_excluded = images.iter().filter(|i| i["status"] == "excluded").count();
    let index = json!({
        "engine_version": ENGINE_VERSION,
        "seed": ctx.config.seed,
        "patch_size": policy.patch_size,
        "min_size": policy.min_size,
        "images": images,
    });
    write_json(&a.out.join("standardize.json"), &index)?;
    let summary = json!({
        "images": files.len(),
        "patches": n_patches,
        "excluded": n_excluded,
        "index": a.out.join("standardize.json"),
        "seed": ctx.config.seed,
    });
    emit(ctx, &summary, None);
    Ok(())
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Patch manifest (JSON Lines).
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Downsample every class to the size of the rarest one.
    #[arg(long)]
    balance: bool,
    /// Also write a stratified train/val/test split.
    #[arg(long)]
    split: bool,
}

pub fn extract_cells(ctx: &Context, a: ExtractArgs) -> Result<()> {
    let m = read_manifest(&a.manifest)?;
    let base = manifest_dir(&a.manifest);
    let crops_dir = a.out.join("crops");
    create_dir(&crops_dir)?;
    let per_patch = m
        .entries
        .par_iter()
        .map(|e| {
            let img = load_image(&resolve(&base, &e.image_ref))?;
            let inst = InstanceMap::from_tensor(&read_tensor(resolve(&base, &e.instance_map_ref))?)?;
            let cls = ClassMap::from_tensor(&read_tensor(resolve(&base, &e.class_map_ref))?)?;
            let ex = preprocess::extract_cells(&img, &inst, &cls, &e.patch_id)?;
            for c in &ex.crops {
                write_tensor(&c.image, crops_dir.join(format!("{}.cqt", c.record.cell_id)))?;
            }
            Ok((ex.crops.into_iter().map(|c| c.record).collect::<Vec<_>>(), ex.skipped_empty, ex.skipped_unlabeled))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    let (mut empty, mut unlabeled) = (0, 0);
    for (c, e, u) in per_patch {
        cells.extend(c);
        empty += e;
        unlabeled += u;
    }
    let extracted = cells.len();
    let seed = ctx.config.seed;
    if a.balance {
        let kept = class_balance(&cells, seed);
        let keep: std::collections::HashSet<&str> = kept.iter().map(|c| c.cell_id.as_str()).collect();
        for c in cells.iter().filter(|c| !keep.contains(c.cell_id.as_str())) {
            let p = crops_dir.join(format!("{}.cqt", c.cell_id));
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
        cells = kept;
    }
    let manifest =
        CellManifest { source_dataset: m.source_dataset, class_vocabulary: m.class_vocabulary.clone(), cells };
    write_cell_manifest(&manifest, a.out.join("cells.jsonl"))?;
    let mut summary = json!({
        "patches": m.entries.len(),
        "cells_extracted": extracted,
        "cells_written": manifest.cells.len(),
        "skipped_empty": empty,
        "skipped_unlabeled": unlabeled,
        "class_counts": named_counts(&manifest),
        "manifest": a.out.join("cells.jsonl"),
        "seed": seed,
    });
    if a.split {
        let s = split(&manifest.cells, ctx.config.split, seed)?;
        write_json(&a.out.join("split.json"), &s)?;
        summary["split"] = json!({ "train": s.train.len(), "val": s.val.len(), "test": s.test.len() });
    }
    emit(ctx, &summary, None);
    Ok(())
}

fn named_counts(m: &CellManifest) -> BTreeMap<String, usize> {
    class_counts(&m.cells)
        .into_iter()
        .map(|(id, n)| (m.class_vocabulary.get(id as usize).cloned().unwrap_or_else(|| id.to_string()), n))
        .collect()
}

#[derive(Args)]
pub struct MakeFlowsArgs {
    /// Patch manifest (JSON Lines).
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn make_flows(ctx: &Context, a: MakeFlowsArgs) -> Result<()> {
    let m = read_manifest(&a.manifest)?;
    let base = manifest_dir(&a.manifest);
    create_dir(&a.out)?;
    let n_classes = m.class_vocabulary.len().saturating_sub(1).max(1);
    let written = m
        .entries
        .par_iter()
        .map(|e| {
            let inst = InstanceMap::from_tensor(&read_tensor(resolve(&base, &e.instance_map_ref))?)?;
            inst.validate()?;
            let cls = ClassMap::from_tensor(&read_tensor(resolve(&base, &e.class_map_ref))?)?;
            let flows = format!("{}_flows.cqt", e.patch_id);
            let probs = format!("{}_probs.cqt", e.patch_id);
            write_tensor(&flows_from_instances(&inst).to_tensor(), a.out.join(&flows))?;
            write_tensor(&ProbMap::one_hot(&cls, n_classes)?.to_tensor(), a.out.join(&probs))?;
            Ok(json!({ "patch_id": e.patch_id, "flows": flows, "probs": probs, "instances": inst.num_instances() }))
        })
        .collect::<Result<Vec<Value>>>()?;
    let index = json!({ "engine_version": ENGINE_VERSION, "class_vocabulary": m.class_vocabulary, "patches": written });
    write_json(&a.out.join("flows.json"), &index)?;
    emit(ctx, &json!({ "patches": written.len(), "index": a.out.join("flows.json"), "seed": ctx.config.seed }), None);
    Ok(())
}
