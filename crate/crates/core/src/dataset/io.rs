use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use log::warn;

use super::types::{ClinicalTable, FeatureTable, Modality};
use super::DatasetError;
use crate::nn::Matrix;

enum Cell {
    Value(f64),
    Missing,
    Suspicious,
}

fn parse_cell(raw: &str) -> Cell {
    let s = raw.trim();
    if s.is_empty()
        || s.eq_ignore_ascii_case("na")
        || s.eq_ignore_ascii_case("nan")
        || s.eq_ignore_ascii_case("null")
    {
        return Cell::Missing;
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Value(v),
        _ => Cell::Suspicious,
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::FileUnreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(file))
}

fn unreadable(path: &Path, e: impl ToString) -> DatasetError {
    DatasetError::FileUnreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Reads one modality's feature CSV (`subject_id,<feature>...`).
///
/// Unparseable cells become missing; columns with no observed value are dropped.
pub fn load_feature_table(path: &Path, modality: Modality) -> Result<FeatureTable, DatasetError> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| unreadable(path, e))?.clone();
    if headers.get(0).map(str::trim) != Some("subject_id") {
        return Err(DatasetError::BadHeader {
            path: path.display().to_string(),
            expected: "subject_id",
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    if names.is_empty() {
        return Err(DatasetError::NoFeatureColumns(path.display().to_string()));
    }

    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    let mut suspicious = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| unreadable(path, e))?;
        let id = record.get(0).unwrap_or("").trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateSubjectId(id));
        }
        ids.push(id);
        for j in 0..names.len() {
            cells.push(match parse_cell(record.get(j + 1).unwrap_or("")) {
                Cell::Value(v) => Some(v),
                Cell::Missing => None,
                Cell::Suspicious => {
                    suspicious += 1;
                    None
                }
            });
        }
    }
    if suspicious > 0 {
        warn!(
            "{}: {suspicious} non-numeric cell(s) treated as missing",
            path.display()
        );
    }

    let n = ids.len();
    let d = names.len();
    let keep: Vec<usize> = (0..d)
        .filter(|&j| (0..n).any(|i| cells[i * d + j].is_some()))
        .collect();
    if keep.len() < d {
        let dropped: Vec<&str> = (0..d)
            .filter(|j| !keep.contains(j))
            .map(|j| names[j].as_str())
            .collect();
        warn!(
            "{}: dropping {} empty feature column(s): {}",
            path.display(),
            dropped.len(),
            dropped.join(", ")
        );
    }
    if keep.is_empty() {
        return Err(DatasetError::NoFeatureColumns(path.display().to_string()));
    }

    let mut values = Vec::with_capacity(n * keep.len());
    let mut missing = Vec::with_capacity(n * keep.len());
    for i in 0..n {
        for &j in &keep {
            let c = cells[i * d + j];
            values.push(c.unwrap_or(0.0));
            missing.push(c.is_none());
        }
    }
    Ok(FeatureTable {
        modality,
        subject_ids: ids,
        feature_names: keep.iter().map(|&j| names[j].clone()).collect(),
        values: Matrix::new(n, keep.len(), values)?,
        missing,
    })
}

/// Reads the clinical CSV with columns `subject_id` and `mgmt`.
pub fn load_clinical_table(path: &Path) -> Result<ClinicalTable, DatasetError> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| unreadable(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let (id_col, label_col) = match (col("subject_id"), col("mgmt")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(DatasetError::BadHeader {
                path: path.display().to_string(),
                expected: "subject_id,mgmt",
            })
        }
    };
    let mut seen = HashSet::new();
    let mut table = ClinicalTable {
        subject_ids: Vec::new(),
        mgmt: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| unreadable(path, e))?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateSubjectId(id));
        }
        table.mgmt.push(record.get(label_col).unwrap_or("").parse()?);
        table.subject_ids.push(id);
    }
    Ok(table)
}

pub fn write_feature_csv(
    path: &Path,
    subject_ids: &[String],
    feature_names: &[String],
    values: &Matrix,
) -> Result<(), DatasetError> {
    let mut out = String::new();
    out.push_str("subject_id");
    for name in feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, id) in subject_ids.iter().enumerate() {
        out.push_str(id);
        for v in values.row(i) {
            out.push(',');
            out.push_str(&format!("{v:e}"));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn write_clinical_csv(path: &Path, table: &ClinicalTable) -> Result<(), DatasetError> {
    let mut out = String::from("subject_id,mgmt\n");
    for (id, status) in table.subject_ids.iter().zip(&table.mgmt) {
        out.push_str(&format!("{id},{}\n", status.as_str()));
    }
    write_file(path, out.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}
