//! JSON Lines manifests for patches and extracted cells.
//!
//! Both files start with a header line carrying the source dataset and the
//! ordered class vocabulary, followed by one record per line. Vocabulary
//! index 0 is the background class, so a class-map pixel value `k` names
//! `class_vocabulary[k]`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::tensor::read_tensor;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceDataset {
    Pannuke,
    Monusac,
    Refined,
    Synthetic,
}

impl SourceDataset {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceDataset::Pannuke => "pannuke",
            SourceDataset::Monusac => "monusac",
            SourceDataset::Refined => "refined",
            SourceDataset::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch_id: String,
    pub image_ref: PathBuf,
    pub instance_map_ref: PathBuf,
    pub class_map_ref: PathBuf,
    pub source_dataset: SourceDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub source_dataset: SourceDataset,
    pub class_vocabulary: Vec<String>,
    pub entries: Vec<PatchRecord>,
}

/// Axis-aligned box in source-patch pixel coordinates, `x1`/`y1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl BBox {
    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    pub fn expand(&self, by: i64) -> BBox {
        BBox { x0: self.x0 - by, y0: self.y0 - by, x1: self.x1 + by, y1: self.y1 + by }
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelProvenance {
    /// Label id in the vocabulary the cell had when it was relabeled.
    pub original_label: i32,
    /// Name of that label, kept so provenance survives vocabulary remapping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_class: Option<String>,
    pub classifier_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: String,
    pub source_patch_id: String,
    /// Instance id of the cell inside its source patch's instance map.
    pub instance_id: i32,
    pub bbox: BBox,
    pub class_label: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabel_provenance: Option<RelabelProvenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellManifest {
    pub source_dataset: SourceDataset,
    pub class_vocabulary: Vec<String>,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    version: u32,
    source_dataset: SourceDataset,
    class_vocabulary: Vec<String>,
}

const PATCH_KIND: &str = "dataset_manifest";
const CELL_KIND: &str = "cell_manifest";

impl DatasetManifest {
    /// Structural checks: non-empty vocabulary and unique patch ids.
    pub fn validate(&self) -> Result<()> {
        if self.class_vocabulary.is_empty() {
            return Err(Error::Validation("class vocabulary is empty".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.patch_id.as_str()) {
                return Err(Error::Validation(format!("duplicate patch_id {:?}", e.patch_id)));
            }
        }
        Ok(())
    }

    /// Load every referenced class map and check its ids against the vocabulary.
    pub fn validate_class_maps(&self, base: &Path) -> Result<()> {
        for e in &self.entries {
            let path = resolve(base, &e.class_map_ref);
            let t = read_tensor(&path)?;
            let ids =
                t.as_i32().ok_or_else(|| Error::Validation(format!("class map {} is not i32", path.display())))?;
            check_class_ids(ids, self.class_vocabulary.len(), &e.patch_id)?;
        }
        Ok(())
    }

    pub fn entry(&self, patch_id: &str) -> Option<&PatchRecord> {
        self.entries.iter().find(|e| e.patch_id == patch_id)
    }
}

/// Every id must be non-negative and strictly below the vocabulary length.
pub fn check_class_ids(ids: &[i32], vocab_len: usize, context: &str) -> Result<()> {
    if let Some(&bad) = ids.iter().find(|&&c| c < 0 || c as usize >= vocab_len) {
        return Err(Error::Validation(format!(
            "{}: class id {} outside vocabulary of {} classes",
            context, bad, vocab_len
        )));
    }
    Ok(())
}

impl CellManifest {
    pub fn validate(&self) -> Result<()> {
        if self.class_vocabulary.is_empty() {
            return Err(Error::Validation("class vocabulary is empty".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.cells {
            if !seen.insert(c.cell_id.as_str()) {
                return Err(Error::Validation(format!("duplicate cell_id {:?}", c.cell_id)));
            }
            if !c.bbox.is_valid() {
                return Err(Error::Validation(format!("cell {:?} has an empty bbox", c.cell_id)));
            }
            check_class_ids(&[c.class_label], self.class_vocabulary.len(), &c.cell_id)?;
        }
        Ok(())
    }

    pub fn class_id(&self, name: &str) -> Option<i32> {
        self.class_vocabulary.iter().position(|n| n == name).map(|i| i as i32)
    }
}

/// Resolve a manifest reference against the manifest's directory.
pub fn resolve(base: &Path, reference: &Path) -> PathBuf {
    if reference.is_absolute() {
        reference.to_path_buf()
    } else {
        base.join(reference)
    }
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_lines<R: BufRead, T: DeserializeOwned>(reader: R, kind: &str) -> Result<(Header, Vec<T>)> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let (_, first) = lines.next().ok_or_else(|| Error::Format("manifest is empty".into()))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| Error::Format(format!("manifest header: {}", e)))?;
    if header.kind != kind {
        return Err(Error::Format(format!("expected a {} header, found {:?}", kind, header.kind)));
    }
    if header.version != MANIFEST_VERSION {
        return Err(Error::Format(format!("unsupported manifest version {}", header.version)));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines {
        let rec =
            serde_json::from_str(&line?).map_err(|e| Error::Format(format!("manifest line {}: {}", lineno + 1, e)))?;
        records.push(rec);
    }
    Ok((header, records))
}

fn write_lines<W: Write, T: Serialize>(mut w: W, header: &Header, records: &[T]) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_manifest<R: BufRead>(reader: R) -> Result<DatasetManifest> {
    let (header, entries) = read_lines(reader, PATCH_KIND)?;
    let m =
        DatasetManifest { source_dataset: header.source_dataset, class_vocabulary: header.class_vocabulary, entries };
    m.validate()?;
    Ok(m)
}

pub fn encode_manifest<W: Write>(m: &DatasetManifest, w: W) -> Result<()> {
    m.validate()?;
    let header = Header {
        kind: PATCH_KIND.into(),
        version: MANIFEST_VERSION,
        source_dataset: m.source_dataset,
        class_vocabulary: m.class_vocabulary.clone(),
    };
    write_lines(w, &header, &m.entries)
}

/// Read a patch manifest and validate every referenced class map.
pub fn read_manifest(source: impl AsRef<Path>) -> Result<DatasetManifest> {
    let m = read_manifest_unchecked(&source)?;
    m.validate_class_maps(&manifest_dir(source.as_ref()))?;
    Ok(m)
}

/// Read a patch manifest with structural validation only.
pub fn read_manifest_unchecked(source: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = source.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(f))
}

pub fn write_manifest(m: &DatasetManifest, destination: impl AsRef<Path>) -> Result<()> {
    let path = destination.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    encode_manifest(m, BufWriter::new(f))
}

pub fn parse_cell_manifest<R: BufRead>(reader: R) -> Result<CellManifest> {
    let (header, cells) = read_lines(reader, CELL_KIND)?;
    let m = CellManifest { source_dataset: header.source_dataset, class_vocabulary: header.class_vocabulary, cells };
    m.validate()?;
    Ok(m)
}

pub fn encode_cell_manifest<W: Write>(m: &CellManifest, w: W) -> Result<()> {
    m.validate()?;
    let header = Header {
        kind: CELL_KIND.into(),
        version: MANIFEST_VERSION,
        source_dataset: m.source_dataset,
        class_vocabulary: m.class_vocabulary.clone(),
    };
    write_lines(w, &header, &m.cells)
}

pub fn read_cell_manifest(source: impl AsRef<Path>) -> Result<CellManifest> {
    let path = source.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_cell_manifest(BufReader::new(f))
}

pub fn write_cell_manifest(m: &CellManifest, destination: impl AsRef<Path>) -> Result<()> {
    let path = destination.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    encode_cell_manifest(m, BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::tensor::{write_tensor, Tensor};

    fn vocab() -> Vec<String> {
        ["background", "neoplastic", "inflammatory"].iter().map(|s| s.to_string()).collect()
    }

    fn record(id: &str) -> PatchRecord {
        PatchRecord {
            patch_id: id.into(),
            image_ref: format!("{}.png", id).into(),
            instance_map_ref: format!("{}.inst.cqt", id).into(),
            class_map_ref: format!("{}.cls.cqt", id).into(),
            source_dataset: SourceDataset::Pannuke,
        }
    }

    #[test]
    fn round_trip_two_entries() {
        let m = DatasetManifest {
            source_dataset: SourceDataset::Pannuke,
            class_vocabulary: vocab(),
            entries: vec![record("b"), record("a")],
        };
        let mut buf = Vec::new();
        encode_manifest(&m, &mut buf).unwrap();
        let back = parse_manifest(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn duplicate_patch_id() {
        let text = format!(
            "{}\n{}\n{}\n",
            r#"{"kind":"dataset_manifest","version":1,"source_dataset":"pannuke","class_vocabulary":["background","a"]}"#,
            serde_json::to_string(&record("x")).unwrap(),
            serde_json::to_string(&record("x")).unwrap()
        );
        assert!(matches!(parse_manifest(text.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn class_id_equal_to_vocab_len_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            source_dataset: SourceDataset::Pannuke,
            class_vocabulary: vocab(),
            entries: vec![record("p")],
        };
        write_manifest(&m, dir.path().join("m.jsonl")).unwrap();
        let ok = Tensor::from_i32(vec![2, 2], vec![0, 1, 2, 0]).unwrap();
        write_tensor(&ok, dir.path().join("p.cls.cqt")).unwrap();
        assert_eq!(read_manifest(dir.path().join("m.jsonl")).unwrap(), m);

        let bad = Tensor::from_i32(vec![2, 2], vec![0, 1, 3, 0]).unwrap();
        write_tensor(&bad, dir.path().join("p.cls.cqt")).unwrap();
        assert!(matches!(read_manifest(dir.path().join("m.jsonl")), Err(Error::Validation(_))));
    }

    #[test]
    fn cell_manifest_round_trip() {
        let m = CellManifest {
            source_dataset: SourceDataset::Monusac,
            class_vocabulary: vocab(),
            cells: vec![
                CellRecord {
                    cell_id: "p_1".into(),
                    source_patch_id: "p".into(),
                    instance_id: 1,
                    bbox: BBox { x0: 0, y0: 0, x1: 4, y1: 5 },
                    class_label: 2,
                    relabel_provenance: Some(RelabelProvenance {
                        original_label: 1,
                        original_class: Some("tumor".into()),
                        classifier_confidence: 0.75,
                    }),
                },
                CellRecord {
                    cell_id: "p_2".into(),
                    source_patch_id: "p".into(),
                    instance_id: 2,
                    bbox: BBox { x0: 3, y0: 1, x1: 9, y1: 2 },
                    class_label: 1,
                    relabel_provenance: None,
                },
            ],
        };
        let mut buf = Vec::new();
        encode_cell_manifest(&m, &mut buf).unwrap();
        assert_eq!(parse_cell_manifest(&buf[..]).unwrap(), m);
    }

    #[test]
    fn cell_label_out_of_vocab() {
        let m = CellManifest {
            source_dataset: SourceDataset::Monusac,
            class_vocabulary: vocab(),
            cells: vec![CellRecord {
                cell_id: "c".into(),
                source_patch_id: "p".into(),
                instance_id: 1,
                bbox: BBox { x0: 0, y0: 0, x1: 1, y1: 1 },
                class_label: 3,
                relabel_provenance: None,
            }],
        };
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn wrong_header_kind() {
        let text =
            r#"{"kind":"cell_manifest","version":1,"source_dataset":"pannuke","class_vocabulary":["background"]}"#;
        assert!(matches!(parse_manifest(text.as_bytes()), Err(Error::Format(_))));
    }
}
