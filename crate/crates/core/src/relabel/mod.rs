//! Cross-relabeling: broad source classes are rewritten into finer target
//! classes from external classifier predictions, then both source datasets
//! are merged into the seven-class refined vocabulary with count
//! conservation checks.

mod apply;
mod merge;
mod predictions;
mod rules;

pub use apply::{apply_relabel, repaint_class_map, rewrite_class_maps, RelabelChange, RelabelOutcome};
pub use merge::{
    conservation_check, merge_refined, ClassCount, ConservationReport, CountReport, Identity, MergeOutcome,
    SourceCounts,
};
pub use predictions::{
    parse_predictions, read_predictions, write_predictions, PredictionFile, PredictionRow, PROB_SUM_TOLERANCE,
};
pub use rules::{canonical_class_name, read_rule, RefinedVocabulary, RelabelRule, REFINED_CLASSES};
