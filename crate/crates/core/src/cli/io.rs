//! CSV readers for the command-line schemas and atomic output writes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::classifier::Label;
use crate::ensemble::PredictionMatrix;
use crate::error::{Error, Result};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn open_csv(path: &Path) -> Result<(csv::Reader<File>, Vec<String>)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    Ok((rdr, headers))
}

fn column(path: &Path, headers: &[String], name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        Error::invalid(format!("{}: missing column `{name}`", path.display()))
    })
}

/// Yields `(line number, record)` for every data row.
fn records(
    path: &Path,
    rdr: csv::Reader<File>,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
    rdr.into_records().map(move |r| {
        let rec = r.map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        Ok((line, rec))
    })
}

fn number(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            Error::invalid(format!(
                "{} line {line}: column `{field}`: {raw:?} is not a finite number",
                path.display()
            ))
        })
}

/// Single-column sample file with header `value`.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let (rdr, headers) = open_csv(path)?;
    let c = column(path, &headers, "value")?;
    let mut out = Vec::new();
    for r in records(path, rdr) {
        let (line, rec) = r?;
        out.push(number(path, line, "value", rec.get(c).unwrap_or(""))?);
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("{}: no samples", path.display())));
    }
    Ok(out)
}

/// Long-format samples `subject_id,value`, grouped by subject.
pub fn read_samples(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let (rdr, headers) = open_csv(path)?;
    let id = column(path, &headers, "subject_id")?;
    let val = column(path, &headers, "value")?;
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records(path, rdr) {
        let (line, rec) = r?;
        let sid = rec.get(id).unwrap_or("");
        if sid.is_empty() {
            return Err(Error::invalid(format!(
                "{} line {line}: empty subject_id",
                path.display()
            )));
        }
        let v = number(path, line, "value", rec.get(val).unwrap_or(""))?;
        out.entry(sid.to_string()).or_default().push(v);
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("{}: no samples", path.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRow {
    pub age: f64,
    pub gender: f64,
    pub label: Option<Label>,
}

impl SubjectRow {
    pub fn covariates(&self) -> Vec<f64> {
        vec![self.age, self.gender]
    }
}

/// Subject table `subject_id,age,gender[,label]`.
pub fn read_subjects(path: &Path, require_label: bool) -> Result<BTreeMap<String, SubjectRow>> {
    let (rdr, headers) = open_csv(path)?;
    let id = column(path, &headers, "subject_id")?;
    let age = column(path, &headers, "age")?;
    let gender = column(path, &headers, "gender")?;
    let label = if require_label {
        Some(column(path, &headers, "label")?)
    } else {
        headers.iter().position(|h| h == "label")
    };
    let mut out = BTreeMap::new();
    for r in records(path, rdr) {
        let (line, rec) = r?;
        let sid = rec.get(id).unwrap_or("").to_string();
        if sid.is_empty() {
            return Err(Error::invalid(format!(
                "{} line {line}: empty subject_id",
                path.display()
            )));
        }
        let lab = match label.map(|c| rec.get(c).unwrap_or("")) {
            None | Some("") if !require_label => None,
            None | Some("") => {
                return Err(Error::invalid(format!(
                    "{} line {line}: missing label",
                    path.display()
                )))
            }
            Some(raw) => Some(raw.parse::<Label>().map_err(|e| {
                Error::invalid(format!("{} line {line}: {e}", path.display()))
            })?),
        };
        let row = SubjectRow {
            age: number(path, line, "age", rec.get(age).unwrap_or(""))?,
            gender: number(path, line, "gender", rec.get(gender).unwrap_or(""))?,
            label: lab,
        };
        if out.insert(sid.clone(), row).is_some() {
            return Err(Error::invalid(format!(
                "{} line {line}: duplicate subject_id {sid:?}",
                path.display()
            )));
        }
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("{}: no subjects", path.display())));
    }
    Ok(out)
}

/// Label table `subject_id,label`.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, Label>> {
    let (rdr, headers) = open_csv(path)?;
    let id = column(path, &headers, "subject_id")?;
    let label = column(path, &headers, "label")?;
    let mut out = BTreeMap::new();
    for r in records(path, rdr) {
        let (line, rec) = r?;
        let sid = rec.get(id).unwrap_or("").to_string();
        let lab = rec
            .get(label)
            .unwrap_or("")
            .parse::<Label>()
            .map_err(|e| Error::invalid(format!("{} line {line}: {e}", path.display())))?;
        if out.insert(sid.clone(), lab).is_some() {
            return Err(Error::invalid(format!(
                "{} line {line}: duplicate subject_id {sid:?}",
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Wide binary table `subject_id,<channel>...`; rows sorted by subject id.
pub fn read_channels(path: &Path) -> Result<(Vec<String>, PredictionMatrix)> {
    let (rdr, headers) = open_csv(path)?;
    let id = column(path, &headers, "subject_id")?;
    let channel_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != id).collect();
    let names = channel_cols.iter().map(|&c| headers[c].clone()).collect();
    let mut rows: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for r in records(path, rdr) {
        let (line, rec) = r?;
        let sid = rec.get(id).unwrap_or("").to_string();
        let row = channel_cols
            .iter()
            .map(|&c| match rec.get(c).unwrap_or("") {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::invalid(format!(
                    "{} line {line}: channel `{}` value {other:?} is not 0 or 1",
                    path.display(),
                    headers[c]
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        if rows.insert(sid.clone(), row).is_some() {
            return Err(Error::invalid(format!(
                "{} line {line}: duplicate subject_id {sid:?}",
                path.display()
            )));
        }
    }
    let (ids, data): (Vec<String>, Vec<Vec<u8>>) = rows.into_iter().unzip();
    Ok((ids, PredictionMatrix::new(names, data)?))
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.flush().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Numerical(format!("csv buffer: {e}")))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}
