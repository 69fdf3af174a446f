use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use cellquant::io::manifest::read_manifest_unchecked;
use cellquant::io::{read_cell_manifest, write_cell_manifest};
use cellquant::relabel::{
    apply_relabel, conservation_check, merge_refined, read_predictions, read_rule, rewrite_class_maps,
    RefinedVocabulary, RelabelRule,
};
use cellquant::{Error, Result, ENGINE_VERSION};
use clap::Args;
use serde_json::json;

use crate::output::{emit, write_json};
use crate::Context;

#[derive(Args)]
pub struct RelabelArgs {
    /// Cell manifest (JSON Lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Classifier predictions CSV.
    #[arg(long)]
    preds: PathBuf,
    /// Relabel rule JSON.
    #[arg(long)]
    rule: PathBuf,
    /// Relabeled cell manifest.
    #[arg(long)]
    out: PathBuf,
    /// Patch manifest whose class maps should be repainted.
    #[arg(long, requires = "maps_out")]
    dataset: Option<PathBuf>,
    /// Directory for repainted class maps and their manifest.
    #[arg(long, requires = "dataset")]
    maps_out: Option<PathBuf>,
}

pub fn relabel(ctx: &Context, a: RelabelArgs) -> Result<()> {
    let cells = read_cell_manifest(&a.manifest)?;
    let preds = read_predictions(&a.preds)?;
    let rule = read_rule(&a.rule)?;
    let outcome = apply_relabel(&cells, &preds, &rule)?;
    write_cell_manifest(&outcome.manifest, &a.out)?;
    if let (Some(d), Some(dir)) = (&a.dataset, &a.maps_out) {
        let dataset = read_manifest_unchecked(d)?;
        rewrite_class_maps(&dataset, d, &outcome, dir)?;
    }
    let mut transitions: BTreeMap<&str, u64> = BTreeMap::new();
    for c in &outcome.changes {
        *transitions.entry(outcome.manifest.class_vocabulary[c.to as usize].as_str()).or_default() += 1;
    }
    let summary = json!({
        "broad_class": rule.broad_class,
        "classifier_id": rule.classifier_id,
        "relabeled": outcome.changes.len(),
        "transitions": transitions,
        "class_vocabulary": outcome.manifest.class_vocabulary,
        "out": a.out,
        "seed": ctx.config.seed,
    });
    emit(ctx, &summary, None);
    Ok(())
}

#[derive(Args)]
pub struct MergeArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Target vocabulary; only `refined` is defined.
    #[arg(long, default_value = "refined")]
    vocab: String,
    #[arg(long)]
    out: PathBuf,
    /// Count and conservation report JSON.
    #[arg(long)]
    report: PathBuf,
    /// Relabel rules to check conservation against (defaults to the two built-in rules).
    #[arg(long = "rule")]
    rules: Vec<PathBuf>,
}

pub fn merge(ctx: &Context, a: MergeArgs) -> Result<()> {
    if a.vocab != "refined" {
        return Err(Error::InvalidInput(format!("unknown vocabulary {:?}; expected \"refined\"", a.vocab)));
    }
    let vocab = RefinedVocabulary::default();
    let first = read_cell_manifest(&a.a)?;
    let second = read_cell_manifest(&a.b)?;
    let rules: Vec<RelabelRule> = if a.rules.is_empty() {
        vec![RelabelRule::pannuke_inflammatory(), RelabelRule::monusac_epithelial()]
    } else {
        a.rules.iter().map(read_rule).collect::<Result<_>>()?
    };
    let outcome = merge_refined(&first, &second, &vocab)?;
    let conservation = conservation_check(&outcome.report.sources, &outcome.report.merged, &rules);
    write_cell_manifest(&outcome.manifest, &a.out)?;
    let counts: serde_json::Map<String, serde_json::Value> =
        outcome.report.merged.iter().map(|c| (c.class.clone(), json!(c.count))).collect();
    let report = json!({
        "engine_version": ENGINE_VERSION,
        "seed": ctx.config.seed,
        "class_vocabulary": vocab.with_background(),
        "counts": counts,
        "merged": outcome.report.merged,
        "total_in": outcome.report.total_in,
        "total_out": outcome.report.total_out,
        "sources": outcome.report.sources,
        "conservation": conservation,
    });
    write_json(&a.report, &report)?;

    let mut table = String::new();
    let w = vocab.names().iter().map(|n| n.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(table, "{:<w$}  {:>8}", "Class", "Cells", w = w);
    for c in &outcome.report.merged {
        let _ = writeln!(table, "{:<w$}  {:>8}", c.class, c.count, w = w);
    }
    let _ = writeln!(table, "{:<w$}  {:>8}", "Total", outcome.report.total_out, w = w);
    let _ = writeln!(table, "conservation: {}", if conservation.passed { "pass" } else { "FAIL" });
    let summary = json!({
        "counts": report["counts"],
        "total": outcome.report.total_out,
        "conservation_passed": conservation.passed,
        "out": a.out,
        "report": a.report,
        "seed": ctx.config.seed,
    });
    emit(ctx, &summary, Some(table));
    if !conservation.passed {
        let failed: Vec<String> = conservation
            .identities
            .iter()
            .filter(|i| !i.passed)
            .map(|i| format!("{} (delta {})", i.name, i.delta))
            .collect();
        return Err(Error::Invariant(format!("count conservation failed: {}", failed.join("; "))));
    }
    Ok(())
}
