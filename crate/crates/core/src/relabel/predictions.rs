use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub cell_id: String,
    pub predicted_class: String,
    /// One probability per entry of [`PredictionFile::class_names`].
    pub probabilities: Vec<f64>,
}

impl PredictionRow {
    /// Probability of the predicted class.
    pub fn confidence(&self, class_names: &[String]) -> f64 {
        class_names.iter().position(|c| *c == self.predicted_class).map_or(0.0, |i| self.probabilities[i])
    }
}

/// External classifier output: `cell_id,predicted_class,p_<class>,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub class_names: Vec<String>,
    pub rows: Vec<PredictionRow>,
}

impl PredictionFile {
    /// Rows must be normalized to within [`PROB_SUM_TOLERANCE`] and name
    /// their argmax class; cell ids must be unique.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.cell_id.as_str()) {
                return Err(Error::Validation(format!("duplicate prediction for cell {:?}", r.cell_id)));
            }
            if r.probabilities.len() != self.class_names.len() {
                return Err(Error::Format(format!(
                    "cell {:?}: {} probabilities for {} classes",
                    r.cell_id,
                    r.probabilities.len(),
                    self.class_names.len()
                )));
            }
            if r.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Invariant(format!("cell {:?}: probability outside [0, 1]", r.cell_id)));
            }
            let sum: f64 = r.probabilities.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::Invariant(format!("cell {:?}: probabilities sum to {}", r.cell_id, sum)));
            }
            let Some(k) = self.class_names.iter().position(|c| *c == r.predicted_class) else {
                return Err(Error::Validation(format!(
                    "cell {:?}: predicted class {:?} has no probability column",
                    r.cell_id, r.predicted_class
                )));
            };
            let max = r.probabilities.iter().copied().fold(f64::MIN, f64::max);
            if r.probabilities[k] < max {
                return Err(Error::Invariant(format!(
                    "cell {:?}: predicted class {:?} is not the most probable",
                    r.cell_id, r.predicted_class
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, cell_id: &str) -> Option<&PredictionRow> {
        self.rows.iter().find(|r| r.cell_id == cell_id)
    }
}

pub fn parse_predictions<R: Read>(reader: R) -> Result<PredictionFile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format(format!("prediction header: {}", e)))?.clone();
    if header.len() < 3 || &header[0] != "cell_id" || &header[1] != "predicted_class" {
        return Err(Error::Format("prediction header must start with cell_id,predicted_class".into()));
    }
    let mut class_names = Vec::new();
    for h in header.iter().skip(2) {
        let Some(name) = h.strip_prefix("p_") else {
            return Err(Error::Format(format!("probability column {:?} lacks the p_ prefix", h)));
        };
        class_names.push(name.to_string());
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("prediction row {}: {}", line + 2, e)))?;
        let probabilities = rec
            .iter()
            .skip(2)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Format(format!("prediction row {}: bad probability {:?}", line + 2, v)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(PredictionRow { cell_id: rec[0].to_string(), predicted_class: rec[1].to_string(), probabilities });
    }
    let file = PredictionFile { class_names, rows };
    file.validate()?;
    Ok(file)
}

pub fn read_predictions(source: impl AsRef<Path>) -> Result<PredictionFile> {
    let path = source.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(f)
}

pub fn write_predictions<W: Write>(p: &PredictionFile, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["cell_id".to_string(), "predicted_class".to_string()];
    header.extend(p.class_names.iter().map(|c| format!("p_{}", c)));
    let csv_err = |e: csv::Error| Error::Format(format!("writing predictions: {}", e));
    w.write_record(&header).map_err(csv_err)?;
    for r in &p.rows {
        let mut rec = vec![r.cell_id.clone(), r.predicted_class.clone()];
        rec.extend(r.probabilities.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
