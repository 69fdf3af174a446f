use std::path::PathBuf;

use cellquant::flowseg::{
    instances_to_polygons, majority_vote, polygons_to_geojson, segment as run_segment, FlowField, InstanceMap, ProbMap,
};
use cellquant::io::{read_tensor, write_tensor};
use cellquant::{Error, Result, ENGINE_VERSION};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{emit, read_json, write_json};
use crate::Context;

/// Per-instance classes as written by `classify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassesFile {
    #[serde(default)]
    pub engine_version: String,
    /// `instance_classes[k-1]` is the class of instance `k`.
    pub instance_classes: Vec<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_vocabulary: Option<Vec<String>>,
}

pub fn parse_vocab(list: &str) -> Vec<String> {
    list.split(',').map(|s| s.trim().to_string()).collect()
}

#[derive(Args)]
pub struct SegmentArgs {
    /// `2×H×W` f32 flow field (dy, dx).
    #[arg(long)]
    flows: PathBuf,
    /// `C×H×W` f32 class probabilities, channel 0 background.
    #[arg(long)]
    probs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    niter: Option<u32>,
    #[arg(long)]
    cluster_radius: Option<f32>,
    #[arg(long)]
    min_size: Option<u32>,
    #[arg(long)]
    prob_threshold: Option<f32>,
    #[arg(long)]
    step: Option<f32>,
}

pub fn segment(ctx: &Context, a: SegmentArgs) -> Result<()> {
    let mut params = ctx.config.segment;
    if let Some(v) = a.niter {
        params.n_iter = v;
    }
    if let Some(v) = a.cluster_radius {
        params.cluster_radius = v;
    }
    if let Some(v) = a.min_size {
        params.min_size = v;
    }
    if let Some(v) = a.prob_threshold {
        params.prob_threshold = v;
    }
    if let Some(v) = a.step {
        params.step = v;
    }
    params.validate()?;
    let flows = FlowField::from_tensor(&read_tensor(&a.flows)?)?;
    let probs = ProbMap::from_tensor(&read_tensor(&a.probs)?)?;
    let inst = run_segment(&flows, &probs, &params)?;
    write_tensor(&inst.to_tensor(), &a.out)?;
    let summary = json!({
        "instances": inst.num_instances(),
        "height": inst.height,
        "width": inst.width,
        "params": params,
        "out": a.out,
        "seed": ctx.config.seed,
    });
    emit(ctx, &summary, None);
    Ok(())
}

#[derive(Args)]
pub struct ClassifyArgs {
    /// `H×W` i32 instance map.
    #[arg(long)]
    inst: PathBuf,
    /// `C×H×W` f32 class probabilities.
    #[arg(long)]
    probs: PathBuf,
    /// Output JSON with one class per instance.
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-pixel class map as an `H×W` i32 tensor.
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Comma-separated class names, background first.
    #[arg(long)]
    vocab: Option<String>,
}

pub fn classify(ctx: &Context, a: ClassifyArgs) -> Result<()> {
    let inst = InstanceMap::from_tensor(&read_tensor(&a.inst)?)?;
    let probs = ProbMap::from_tensor(&read_tensor(&a.probs)?)?;
    let vocab = a.vocab.as_deref().map(parse_vocab);
    if let Some(v) = &vocab {
        if v.len() != probs.channels {
            return Err(Error::InvalidInput(format!(
                "{} class names for {} probability channels",
                v.len(),
                probs.channels
            )));
        }
    }
    let (class_map, classes) = majority_vote(&inst, &probs)?;
    if let Some(p) = &a.class_map {
        write_tensor(&class_map.to_tensor(), p)?;
    }
    let mut counts = vec![0u64; probs.channels];
    for &c in &classes {
        counts[c as usize] += 1;
    }
    let file =
        ClassesFile { engine_version: ENGINE_VERSION.to_string(), instance_classes: classes, class_vocabulary: vocab };
    write_json(&a.out, &file)?;
    let summary = json!({
        "instances": file.instance_classes.len(),
        "class_counts": &counts[1..],
        "out": a.out,
        "seed": ctx.config.seed,
    });
    emit(ctx, &summary, None);
    Ok(())
}

#[derive(Args)]
pub struct PolygonsArgs {
    #[arg(long)]
    inst: PathBuf,
    /// Classes JSON written by `classify`.
    #[arg(long)]
    classes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated class names, background first; overrides the classes file.
    #[arg(long)]
    vocab: Option<String>,
}

pub fn polygons(ctx: &Context, a: PolygonsArgs) -> Result<()> {
    let inst = InstanceMap::from_tensor(&read_tensor(&a.inst)?)?;
    inst.validate()?;
    let classes: ClassesFile = read_json(&a.classes)?;
    if classes.instance_classes.len() != inst.num_instances() {
        return Err(Error::InvalidInput(format!(
            "{} classes for {} instances",
            classes.instance_classes.len(),
            inst.num_instances()
        )));
    }
    let vocab =
        a.vocab.as_deref().map(parse_vocab).or(classes.class_vocabulary).unwrap_or_else(|| vec!["background".into()]);
    let polys = instances_to_polygons(&inst)?;
    let gj = polygons_to_geojson(&polys, &classes.instance_classes, &vocab)?;
    write_json(&a.out, &gj)?;
    emit(ctx, &json!({ "features": polys.len(), "out": a.out, "seed": ctx.config.seed }), None);
    Ok(())
}
