use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::predictions::PredictionFile;
use super::rules::{canonical_class_name, RelabelRule};
use crate::error::{Error, Result};
use crate::flowseg::{ClassMap, InstanceMap};
use crate::io::manifest::{manifest_dir, resolve, write_manifest, CellManifest, DatasetManifest, RelabelProvenance};
use crate::io::tensor::{read_tensor, write_tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelChange {
    pub cell_id: String,
    pub source_patch_id: String,
    pub instance_id: i32,
    pub from: i32,
    pub to: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelabelOutcome {
    pub manifest: CellManifest,
    pub changes: Vec<RelabelChange>,
}

/// Replaces the label of every cell of `rule.broad_class` with its
/// predicted class and records the original label and classifier
/// confidence. Target classes missing from the vocabulary are appended.
pub fn apply_relabel(cells: &CellManifest, preds: &PredictionFile, rule: &RelabelRule) -> Result<RelabelOutcome> {
    cells.validate()?;
    preds.validate()?;
    if cells.source_dataset != rule.source_dataset {
        return Err(Error::Validation(format!(
            "rule applies to {} but the manifest is from {}",
            rule.source_dataset.as_str(),
            cells.source_dataset.as_str()
        )));
    }
    let by_id: HashMap<&str, usize> = preds.rows.iter().enumerate().map(|(i, r)| (r.cell_id.as_str(), i)).collect();
    let known: HashMap<&str, ()> = cells.cells.iter().map(|c| (c.cell_id.as_str(), ())).collect();
    let unresolved: Vec<&str> =
        preds.rows.iter().map(|r| r.cell_id.as_str()).filter(|id| !known.contains_key(id)).collect();
    if !unresolved.is_empty() {
        return Err(Error::Validation(format!("predictions for unknown cells: {}", preview(&unresolved))));
    }

    let broad = canonical_class_name(&rule.broad_class);
    let broad_ids: Vec<i32> = cells
        .class_vocabulary
        .iter()
        .enumerate()
        .filter(|(_, n)| canonical_class_name(n) == broad)
        .map(|(i, _)| i as i32)
        .collect();

    let mut out = cells.clone();
    let mut vocab_index: HashMap<String, i32> = HashMap::new();
    for (i, n) in out.class_vocabulary.iter().enumerate() {
        vocab_index.entry(canonical_class_name(n)).or_insert(i as i32);
    }
    for t in rule.canonical_targets() {
        if !vocab_index.contains_key(&t) {
            vocab_index.insert(t.clone(), out.class_vocabulary.len() as i32);
            out.class_vocabulary.push(t);
        }
    }

    let mut missing = Vec::new();
    let mut outside = Vec::new();
    let mut changes = Vec::new();
    for cell in out.cells.iter_mut().filter(|c| broad_ids.contains(&c.class_label)) {
        let Some(&row) = by_id.get(cell.cell_id.as_str()) else {
            missing.push(cell.cell_id.clone());
            continue;
        };
        let p = &preds.rows[row];
        if !rule.allows(&p.predicted_class) {
            outside.push(format!("{} ({})", cell.cell_id, p.predicted_class));
            continue;
        }
        let to = vocab_index[&canonical_class_name(&p.predicted_class)];
        let provenance = match cell.relabel_provenance.take() {
            Some(pv) => RelabelProvenance { classifier_confidence: p.confidence(&preds.class_names), ..pv },
            None => RelabelProvenance {
                original_label: cell.class_label,
                original_class: Some(out.class_vocabulary[cell.class_label as usize].clone()),
                classifier_confidence: p.confidence(&preds.class_names),
            },
        };
        cell.relabel_provenance = Some(provenance);
        changes.push(RelabelChange {
            cell_id: cell.cell_id.clone(),
            source_patch_id: cell.source_patch_id.clone(),
            instance_id: cell.instance_id,
            from: cell.class_label,
            to,
        });
        cell.class_label = to;
    }
    if !missing.is_empty() {
        let ids: Vec<&str> = missing.iter().map(String::as_str).collect();
        return Err(Error::Validation(format!(
            "{} cells of class {:?} have no prediction: {}",
            missing.len(),
            rule.broad_class,
            preview(&ids)
        )));
    }
    if !outside.is_empty() {
        let ids: Vec<&str> = outside.iter().map(String::as_str).collect();
        return Err(Error::Validation(format!("predictions outside the rule's target classes: {}", preview(&ids))));
    }
    Ok(RelabelOutcome { manifest: out, changes })
}

fn preview(ids: &[&str]) -> String {
    const SHOWN: usize = 20;
    let head = ids.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        format!("{} and {} more", head, ids.len() - SHOWN)
    } else {
        head
    }
}

/// Paints every pixel of each listed instance with its new class. Returns
/// the number of repainted pixels.
pub fn repaint_class_map(
    classes: &mut ClassMap,
    instances: &InstanceMap,
    new_class: &HashMap<i32, i32>,
) -> Result<u64> {
    if (classes.height, classes.width) != (instances.height, instances.width) {
        return Err(Error::InvalidInput(format!(
            "class map is {}×{} but instance map is {}×{}",
            classes.height, classes.width, instances.height, instances.width
        )));
    }
    let mut painted = 0;
    for (c, id) in classes.classes.iter_mut().zip(&instances.labels) {
        if let Some(&to) = new_class.get(id) {
            *c = to;
            painted += 1;
        }
    }
    Ok(painted)
}

/// Writes repainted class maps for every patch touched by `outcome` into
/// `out_dir`, plus a dataset manifest (`manifest.jsonl`) pointing at them
/// and carrying the extended vocabulary. Untouched references are
/// rewritten as absolute paths.
pub fn rewrite_class_maps(
    dataset: &DatasetManifest,
    dataset_path: &Path,
    outcome: &RelabelOutcome,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let base = manifest_dir(dataset_path);
    let mut per_patch: BTreeMap<&str, HashMap<i32, i32>> = BTreeMap::new();
    for ch in &outcome.changes {
        per_patch.entry(ch.source_patch_id.as_str()).or_default().insert(ch.instance_id, ch.to);
    }
    for id in per_patch.keys() {
        if dataset.entry(id).is_none() {
            return Err(Error::Validation(format!("relabeled cell refers to unknown patch {:?}", id)));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let absolute = |p: &Path| std::path::absolute(resolve(&base, p)).map_err(|e| Error::io(p, e));

    let entries = dataset
        .entries
        .par_iter()
        .map(|e| {
            let mut e2 = e.clone();
            e2.image_ref = absolute(&e.image_ref)?;
            e2.instance_map_ref = absolute(&e.instance_map_ref)?;
            match per_patch.get(e.patch_id.as_str()) {
                Some(changes) => {
                    let inst = InstanceMap::from_tensor(&read_tensor(resolve(&base, &e.instance_map_ref))?)?;
                    let mut cls = ClassMap::from_tensor(&read_tensor(resolve(&base, &e.class_map_ref))?)?;
                    repaint_class_map(&mut cls, &inst, changes)?;
                    let name = format!("{}_classes.cqt", e.patch_id);
                    write_tensor(&cls.to_tensor(), out_dir.join(&name))?;
                    e2.class_map_ref = name.into();
                }
                None => e2.class_map_ref = absolute(&e.class_map_ref)?,
            }
            Ok(e2)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        source_dataset: dataset.source_dataset,
        class_vocabulary: outcome.manifest.class_vocabulary.clone(),
        entries,
    };
    write_manifest(&manifest, out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
