use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::manifest::SourceDataset;

/// The refined vocabulary in its fixed order, without background.
pub const REFINED_CLASSES: [&str; 7] =
    ["neoplastic", "epithelial", "lymphocyte", "neutrophil", "macrophage", "dead", "connective"];

/// Maps source spellings onto refined class names. Names that are already
/// refined (or unknown) come back lowercased and trimmed.
pub fn canonical_class_name(name: &str) -> String {
    let n = name.trim().to_lowercase();
    let mapped = match n.as_str() {
        "neoplastic cells" | "neoplastic" | "neoplasia" => "neoplastic",
        "epithelial" | "epithelium" | "non-neoplastic epithelial" | "benign epithelial" => "epithelial",
        "lymphocyte" | "lymphocytes" => "lymphocyte",
        "neutrophil" | "neutrophils" => "neutrophil",
        "macrophage" | "macrophages" => "macrophage",
        "dead" | "dead cells" => "dead",
        "connective" | "connective tissue" | "connective/soft tissue" => "connective",
        other => other,
    };
    mapped.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinedVocabulary {
    names: Vec<String>,
}

impl Default for RefinedVocabulary {
    fn default() -> Self {
        RefinedVocabulary { names: REFINED_CLASSES.iter().map(|s| s.to_string()).collect() }
    }
}

impl RefinedVocabulary {
    /// Class names in order, without background.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Manifest vocabulary: background at index 0, then the refined classes.
    pub fn with_background(&self) -> Vec<String> {
        std::iter::once("background".to_string()).chain(self.names.iter().cloned()).collect()
    }

    /// Manifest class id of a (possibly source-spelled) class name.
    pub fn id_of(&self, name: &str) -> Option<i32> {
        let c = canonical_class_name(name);
        self.names.iter().position(|n| *n == c).map(|i| i as i32 + 1)
    }
}

/// A broad class of one source dataset and the finer classes an external
/// classifier assigns to its cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelabelRule {
    pub source_dataset: SourceDataset,
    pub broad_class: String,
    pub target_classes: Vec<String>,
    pub classifier_id: String,
}

impl RelabelRule {
    /// PanNuke inflammatory cells split by a MoNuSAC-trained classifier.
    pub fn pannuke_inflammatory() -> Self {
        RelabelRule {
            source_dataset: SourceDataset::Pannuke,
            broad_class: "inflammatory".into(),
            target_classes: vec!["lymphocyte".into(), "neutrophil".into(), "macrophage".into()],
            classifier_id: "monusac-classifier".into(),
        }
    }

    /// MoNuSAC epithelial cells split by a PanNuke-trained classifier.
    pub fn monusac_epithelial() -> Self {
        RelabelRule {
            source_dataset: SourceDataset::Monusac,
            broad_class: "epithelial".into(),
            target_classes: vec!["epithelial".into(), "neoplastic".into()],
            classifier_id: "pannuke-classifier".into(),
        }
    }

    pub fn validate(&self, vocab: &RefinedVocabulary) -> Result<()> {
        if self.target_classes.is_empty() {
            return Err(Error::Validation(format!("rule for {:?} has no target classes", self.broad_class)));
        }
        for t in &self.target_classes {
            if vocab.id_of(t).is_none() {
                return Err(Error::Validation(format!("rule target {:?} is not a refined class", t)));
            }
        }
        Ok(())
    }

    pub fn allows(&self, class_name: &str) -> bool {
        let c = canonical_class_name(class_name);
        self.target_classes.iter().any(|t| canonical_class_name(t) == c)
    }

    /// Refined spelling of every target, in rule order.
    pub fn canonical_targets(&self) -> Vec<String> {
        self.target_classes.iter().map(|t| canonical_class_name(t)).collect()
    }
}

pub fn read_rule(source: impl AsRef<Path>) -> Result<RelabelRule> {
    let path = source.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rule: RelabelRule =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
    rule.validate(&RefinedVocabulary::default())?;
    Ok(rule)
}
