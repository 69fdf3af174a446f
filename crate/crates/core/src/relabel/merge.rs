use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::rules::{canonical_class_name, RefinedVocabulary, RelabelRule};
use crate::error::{Error, Result};
use crate::io::manifest::{CellManifest, CellRecord, SourceDataset};

pub type Counts = BTreeMap<String, u64>;

/// Per-class cell counts of one source dataset before and after
/// relabeling, and the broad → target transitions recorded in provenance.
/// Class names are canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub source_dataset: SourceDataset,
    pub before: Counts,
    pub after: Counts,
    pub transitions: BTreeMap<String, Counts>,
}

fn label_name(m: &CellManifest, id: i32) -> String {
    canonical_class_name(m.class_vocabulary.get(id as usize).map_or("?", String::as_str))
}

fn original_name(m: &CellManifest, c: &CellRecord) -> Option<String> {
    c.relabel_provenance.as_ref().map(|p| match &p.original_class {
        Some(n) => canonical_class_name(n),
        None => label_name(m, p.original_label),
    })
}

impl SourceCounts {
    fn counts_after(m: &CellManifest) -> (Counts, BTreeMap<String, Counts>) {
        let mut after = Counts::new();
        let mut transitions: BTreeMap<String, Counts> = BTreeMap::new();
        for c in &m.cells {
            let now = label_name(m, c.class_label);
            if let Some(orig) = original_name(m, c) {
                *transitions.entry(orig).or_default().entry(now.clone()).or_default() += 1;
            }
            *after.entry(now).or_default() += 1;
        }
        (after, transitions)
    }

    /// Counts of a relabeled manifest; `before` is reconstructed from the
    /// recorded provenance.
    pub fn from_relabeled(m: &CellManifest) -> Self {
        let (after, transitions) = Self::counts_after(m);
        let mut before = Counts::new();
        for c in &m.cells {
            let orig = original_name(m, c).unwrap_or_else(|| label_name(m, c.class_label));
            *before.entry(orig).or_default() += 1;
        }
        SourceCounts { source_dataset: m.source_dataset, before, after, transitions }
    }

    /// Counts with `before` taken independently from the manifest as it
    /// was prior to relabeling.
    pub fn from_pair(original: &CellManifest, relabeled: &CellManifest) -> Self {
        let (after, transitions) = Self::counts_after(relabeled);
        let mut before = Counts::new();
        for c in &original.cells {
            *before.entry(label_name(original, c.class_label)).or_default() += 1;
        }
        SourceCounts { source_dataset: relabeled.source_dataset, before, after, transitions }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub sources: Vec<SourceCounts>,
    /// Refined classes in vocabulary order.
    pub merged: Vec<ClassCount>,
    pub total_in: u64,
    pub total_out: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub manifest: CellManifest,
    pub report: CountReport,
}

/// Concatenates the cells of `a` then `b`, remapping every class name into
/// the refined vocabulary. Cell ids must be unique across both inputs.
pub fn merge_refined(a: &CellManifest, b: &CellManifest, vocab: &RefinedVocabulary) -> Result<MergeOutcome> {
    let mut seen = HashSet::new();
    let mut cells = Vec::with_capacity(a.cells.len() + b.cells.len());
    let mut unmappable: BTreeMap<String, u64> = BTreeMap::new();
    for m in [a, b] {
        m.validate()?;
        let ids: Vec<Option<i32>> = m.class_vocabulary.iter().map(|n| vocab.id_of(n)).collect();
        for c in &m.cells {
            if !seen.insert(c.cell_id.as_str()) {
                return Err(Error::Validation(format!("cell id {:?} occurs in both inputs", c.cell_id)));
            }
            match ids[c.class_label as usize] {
                Some(id) => {
                    let mut r = c.clone();
                    r.class_label = id;
                    if let Some(p) = r.relabel_provenance.as_mut() {
                        if p.original_class.is_none() {
                            p.original_class = Some(m.class_vocabulary[p.original_label as usize].clone());
                        }
                    }
                    cells.push(r);
                }
                None => *unmappable.entry(m.class_vocabulary[c.class_label as usize].clone()).or_default() += 1,
            }
        }
    }
    if !unmappable.is_empty() {
        let list: Vec<String> = unmappable.iter().map(|(n, k)| format!("{:?} ({} cells)", n, k)).collect();
        return Err(Error::Validation(format!("classes not in the refined vocabulary: {}", list.join(", "))));
    }
    let manifest =
        CellManifest { source_dataset: SourceDataset::Refined, class_vocabulary: vocab.with_background(), cells };
    let mut merged: Vec<ClassCount> = vocab.names().iter().map(|n| ClassCount { class: n.clone(), count: 0 }).collect();
    for c in &manifest.cells {
        merged[c.class_label as usize - 1].count += 1;
    }
    let report = CountReport {
        sources: vec![SourceCounts::from_relabeled(a), SourceCounts::from_relabeled(b)],
        total_in: (a.cells.len() + b.cells.len()) as u64,
        total_out: manifest.cells.len() as u64,
        merged,
    };
    Ok(MergeOutcome { manifest, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub name: String,
    pub expected: i64,
    pub actual: i64,
    pub delta: i64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub identities: Vec<Identity>,
    pub passed: bool,
}

fn identity(name: String, expected: u64, actual: u64) -> Identity {
    let (e, a) = (expected as i64, actual as i64);
    Identity { name, expected: e, actual: a, delta: a - e, passed: e == a }
}

/// Checks the count identities relating each source's counts to its
/// relabeling rules and to the merged counts:
///
/// * the targets reached from a broad class sum to the broad count, and no
///   other class is reached;
/// * a broad class keeps no cells except those relabeled into itself;
/// * every class carries over as `after = before − outflow + inflow`;
/// * each merged class is the sum of that class over sources, and the
///   merged total equals the total before relabeling.
pub fn conservation_check(
    sources: &[SourceCounts],
    merged: &[ClassCount],
    rules: &[RelabelRule],
) -> ConservationReport {
    let mut ids = Vec::new();
    let get = |m: &Counts, k: &str| m.get(k).copied().unwrap_or(0);
    for s in sources {
        let src = s.source_dataset.as_str();
        for r in rules.iter().filter(|r| r.source_dataset == s.source_dataset) {
            let broad = canonical_class_name(&r.broad_class);
            let empty = Counts::new();
            let reached = s.transitions.get(&broad).unwrap_or(&empty);
            let targets = r.canonical_targets();
            let into_targets: u64 = targets.iter().map(|t| get(reached, t)).sum();
            let elsewhere: u64 = reached.iter().filter(|(k, _)| !targets.contains(k)).map(|(_, v)| v).sum();
            ids.push(identity(
                format!("{}: {} split into {}", src, broad, targets.join("+")),
                get(&s.before, &broad),
                into_targets,
            ));
            ids.push(identity(format!("{}: {} relabeled outside targets", src, broad), 0, elsewhere));
            ids.push(identity(
                format!("{}: {} remaining after relabel", src, broad),
                get(reached, &broad),
                get(&s.after, &broad),
            ));
        }
        let classes: std::collections::BTreeSet<&String> = s.before.keys().chain(s.after.keys()).collect();
        for c in classes {
            let out: u64 = s.transitions.get(c).map_or(0, |m| m.values().sum());
            let inflow: u64 = s.transitions.values().map(|m| get(m, c)).sum();
            let expected = (get(&s.before, c) + inflow).saturating_sub(out);
            ids.push(identity(format!("{}: {} carry-over", src, c), expected, get(&s.after, c)));
        }
    }
    for m in merged {
        let expected = sources.iter().map(|s| get(&s.after, &m.class)).sum();
        ids.push(identity(format!("merged: {}", m.class), expected, m.count));
    }
    let before_total: u64 = sources.iter().flat_map(|s| s.before.values()).sum();
    ids.push(identity("merged: total cells".into(), before_total, merged.iter().map(|m| m.count).sum()));
    let passed = ids.iter().all(|i| i.passed);
    ConservationReport { identities: ids, passed }
}

#[cfg(test)]
mod tests {
    use super::super::apply::apply_relabel;
    use super::super::predictions::{PredictionFile, PredictionRow};
    use super::*;
    use crate::io::manifest::BBox;

    /// Cell manifest with `n` cells of each listed class.
    fn fixture(src: SourceDataset, prefix: &str, vocab: &[&str], counts: &[(&str, usize)]) -> CellManifest {
        let mut cells = Vec::new();
        for &(name, n) in counts {
            let label = vocab.iter().position(|v| *v == name).unwrap() as i32;
            for _ in 0..n {
                let k = cells.len();
                cells.push(CellRecord {
                    cell_id: format!("{}{}_1", prefix, k),
                    source_patch_id: format!("{}{}", prefix, k),
                    instance_id: 1,
                    bbox: BBox { x0: 0, y0: 0, x1: 4, y1: 4 },
                    class_label: label,
                    relabel_provenance: None,
                });
            }
        }
        CellManifest { source_dataset: src, class_vocabulary: vocab.iter().map(|s| s.to_string()).collect(), cells }
    }

    /// Predictions assigning the broad cells of `m` to targets in the given
    /// amounts, in manifest order.
    fn predictions(m: &CellManifest, broad: &str, split: &[(&str, usize)]) -> PredictionFile {
        let names: Vec<String> = split.iter().map(|(n, _)| n.to_string()).collect();
        let broad_id = m.class_id(broad).unwrap();
        let mut plan = split.iter().flat_map(|&(n, k)| std::iter::repeat(n).take(k));
        let rows = m
            .cells
            .iter()
            .filter(|c| c.class_label == broad_id)
            .map(|c| {
                let class = plan.next().unwrap();
                let probabilities = names.iter().map(|n| if n == class { 1.0 } else { 0.0 }).collect();
                PredictionRow { cell_id: c.cell_id.clone(), predicted_class: class.to_string(), probabilities }
            })
            .collect();
        PredictionFile { class_names: names, rows }
    }

    struct Relabeled {
        pannuke: (CellManifest, CellManifest),
        monusac: (CellManifest, CellManifest),
    }

    fn table_fixture() -> Relabeled {
        let pv = ["background", "neoplastic", "inflammatory", "connective", "dead", "epithelial"];
        let pn = fixture(
            SourceDataset::Pannuke,
            "pn",
            &pv,
            &[
                ("neoplastic", 77403),
                ("inflammatory", 32276),
                ("connective", 50585),
                ("dead", 2908),
                ("epithelial", 26572),
            ],
        );
        let pp = predictions(&pn, "inflammatory", &[("lymphocyte", 28230), ("neutrophil", 2478), ("macrophage", 1568)]);
        let pn2 = apply_relabel(&pn, &pp, &RelabelRule::pannuke_inflammatory()).unwrap().manifest;

        let mv = ["background", "epithelial", "lymphocyte", "neutrophil", "macrophage"];
        let mn = fixture(
            SourceDataset::Monusac,
            "mn",
            &mv,
            &[("epithelial", 31402), ("lymphocyte", 37045), ("neutrophil", 1355), ("macrophage", 1842)],
        );
        let mp = predictions(&mn, "epithelial", &[("epithelial", 3354), ("neoplastic", 28048)]);
        let mn2 = apply_relabel(&mn, &mp, &RelabelRule::monusac_epithelial()).unwrap().manifest;
        Relabeled { pannuke: (pn, pn2), monusac: (mn, mn2) }
    }

    fn rules() -> Vec<RelabelRule> {
        vec![RelabelRule::pannuke_inflammatory(), RelabelRule::monusac_epithelial()]
    }

    #[test]
    fn refined_counts_and_conservation() {
        let f = table_fixture();
        let out = merge_refined(&f.pannuke.1, &f.monusac.1, &RefinedVocabulary::default()).unwrap();
        let counts: Vec<(&str, u64)> = out.report.merged.iter().map(|c| (c.class.as_str(), c.count)).collect();
        assert_eq!(
            counts,
            [
                ("neoplastic", 105451),
                ("epithelial", 29926),
                ("lymphocyte", 65275),
                ("neutrophil", 3833),
                ("macrophage", 3410),
                ("dead", 2908),
                ("connective", 50585)
            ]
        );
        assert_eq!(out.report.total_in, out.report.total_out);

        let sources =
            [SourceCounts::from_pair(&f.pannuke.0, &f.pannuke.1), SourceCounts::from_pair(&f.monusac.0, &f.monusac.1)];
        let report = conservation_check(&sources, &out.report.merged, &rules());
        assert!(report.passed, "{:#?}", report.identities.iter().filter(|i| !i.passed).collect::<Vec<_>>());
        let split = report.identities.iter().find(|i| i.name.starts_with("pannuke: inflammatory split")).unwrap();
        assert_eq!((split.expected, split.actual), (32276, 32276));

        // provenance-only reconstruction agrees
        assert!(conservation_check(&out.report.sources, &out.report.merged, &rules()).passed);
    }

    #[test]
    fn dropped_cell_fails_with_delta_one() {
        let mut f = table_fixture();
        let lymph = f.pannuke.1.class_id("lymphocyte").unwrap();
        let at = f.pannuke.1.cells.iter().position(|c| c.class_label == lymph).unwrap();
        f.pannuke.1.cells.remove(at);
        let out = merge_refined(&f.pannuke.1, &f.monusac.1, &RefinedVocabulary::default()).unwrap();
        let sources =
            [SourceCounts::from_pair(&f.pannuke.0, &f.pannuke.1), SourceCounts::from_pair(&f.monusac.0, &f.monusac.1)];
        let report = conservation_check(&sources, &out.report.merged, &rules());
        assert!(!report.passed);
        let failed: Vec<&Identity> = report.identities.iter().filter(|i| !i.passed).collect();
        assert!(failed.iter().all(|i| i.delta == -1), "{:#?}", failed);
        assert!(failed.iter().any(|i| i.name.contains("inflammatory split")));
    }

    #[test]
    fn identity_merge_and_self_merge() {
        let v = ["background", "neoplastic", "dead"];
        let a = fixture(SourceDataset::Pannuke, "a", &v, &[("neoplastic", 5), ("dead", 2)]);
        let empty = fixture(SourceDataset::Monusac, "b", &v, &[]);
        let one = merge_refined(&a, &empty, &RefinedVocabulary::default()).unwrap();
        assert_eq!(one.report.merged[0].count, 5);
        assert_eq!(one.report.merged[5].count, 2);
        assert!(conservation_check(&one.report.sources, &one.report.merged, &[]).passed);

        let mut twin = fixture(SourceDataset::Pannuke, "z", &v, &[("neoplastic", 5), ("dead", 2)]);
        twin.source_dataset = SourceDataset::Monusac;
        let two = merge_refined(&a, &twin, &RefinedVocabulary::default()).unwrap();
        assert_eq!((two.report.merged[0].count, two.report.merged[5].count), (10, 4));
        assert!(matches!(merge_refined(&a, &a, &RefinedVocabulary::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn residual_broad_class_is_unmappable() {
        let f = table_fixture();
        let e = merge_refined(&f.pannuke.0, &f.monusac.1, &RefinedVocabulary::default());
        assert!(matches!(e, Err(Error::Validation(m)) if m.contains("inflammatory")));
    }
}
