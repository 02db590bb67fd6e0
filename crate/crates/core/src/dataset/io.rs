//! Text formats. Every file starts with the versioned header line [`FORMAT_HEADER`].
//!
//! * annotation triples: `sample_id,annotator_id,label` per line
//! * dense matrix: `sample_id,<annotator ids...>` header row, then one row per sample
//!   with empty cells for missing labels
//! * features: `sample_id,x_1,...,x_D`
//! * clean labels: `sample_id,label`

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, LabeledSample, MultiRaterDataset, SampleId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FORMAT_HEADER: &str = "#coopclass-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationFormat {
    AnnotationTriples,
    DenseMatrix,
}

/// Files that together describe a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSources {
    pub annotations: PathBuf,
    pub format: AnnotationFormat,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub clean_labels: Option<PathBuf>,
}

impl DatasetSources {
    pub fn load<T: Scalar>(&self, class_count: usize) -> Result<MultiRaterDataset<T>> {
        let ds = load_dataset::<T>(&self.annotations, self.format, class_count)?;
        let clean = match &self.clean_labels {
            Some(p) => Some(load_clean_labels(p, class_count)?.into_iter().collect::<HashMap<_, _>>()),
            None => None,
        };
        match &self.features {
            Some(p) => {
                let features: HashMap<_, _> = load_features::<T>(p)?.into_iter().collect();
                ds.with_features(&features, clean.as_ref())
            }
            None => {
                let empty = ds.samples().iter().map(|s| (s.id.clone(), Vec::new())).collect();
                ds.with_features(&empty, clean.as_ref())
            }
        }
    }
}

/// Content lines after the header, paired with 1-based line numbers.
fn body_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, h)) if h.trim() == FORMAT_HEADER => {}
        Some((n, h)) => {
            return Err(Error::format(path, n, format!("expected header `{FORMAT_HEADER}`, found `{h}`")))
        }
        None => return Err(Error::format(path, 1, "empty file")),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| (n, l.to_owned()))
        .collect())
}

fn parse_label(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::format(path, line, format!("invalid class index `{field}`")))
}

/// Loads annotations. Samples are created for every referenced id, without features.
pub fn load_dataset<T: Scalar>(
    path: impl AsRef<Path>,
    format: AnnotationFormat,
    class_count: usize,
) -> Result<MultiRaterDataset<T>> {
    let path = path.as_ref();
    let lines = body_lines(path)?;
    let mut records = Vec::new();
    let mut sample_ids: Vec<SampleId> = Vec::new();
    match format {
        AnnotationFormat::AnnotationTriples => {
            for (n, line) in &lines {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 3 {
                    return Err(Error::format(path, *n, format!("expected 3 fields, found {}", fields.len())));
                }
                let label = parse_label(path, *n, fields[2])?;
                let sample = SampleId::new(fields[0].trim());
                sample_ids.push(sample.clone());
                records.push(AnnotationRecord {
                    sample,
                    annotator: fields[1].trim().into(),
                    label,
                });
            }
        }
        AnnotationFormat::DenseMatrix => {
            let mut rows = lines.iter();
            let (hn, header) = rows
                .next()
                .ok_or_else(|| Error::format(path, 2, "missing annotator header row"))?;
            let annotators: Vec<&str> = header.split(',').skip(1).map(str::trim).collect();
            if annotators.is_empty() {
                return Err(Error::format(path, *hn, "header names no annotators"));
            }
            for (n, line) in rows {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != annotators.len() + 1 {
                    return Err(Error::format(
                        path,
                        *n,
                        format!("expected {} fields, found {}", annotators.len() + 1, fields.len()),
                    ));
                }
                let sample = SampleId::new(fields[0].trim());
                sample_ids.push(sample.clone());
                for (a, cell) in annotators.iter().zip(&fields[1..]) {
                    if cell.trim().is_empty() {
                        continue;
                    }
                    records.push(AnnotationRecord {
                        sample: sample.clone(),
                        annotator: (*a).into(),
                        label: parse_label(path, *n, cell)?,
                    });
                }
            }
        }
    }
    sample_ids.sort();
    sample_ids.dedup();
    let samples = sample_ids
        .into_iter()
        .map(|id| LabeledSample::new(id, Vec::new(), None))
        .collect();
    MultiRaterDataset::new(class_count, samples, records)
}

pub fn load_features<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(SampleId, Vec<T>)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (n, line) in body_lines(path)? {
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().trim();
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|_| Error::format(path, n, format!("invalid number `{f}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        out.push((SampleId::new(id), values));
    }
    Ok(out)
}

pub fn load_clean_labels(path: impl AsRef<Path>, class_count: usize) -> Result<Vec<(SampleId, usize)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (n, line) in body_lines(path)? {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::format(path, n, format!("expected 2 fields, found {}", fields.len())));
        }
        let label = parse_label(path, n, fields[1])?;
        if label >= class_count {
            return Err(Error::Validation(format!(
                "{}:{n}: label {label} out of range for {class_count} classes",
                path.display()
            )));
        }
        out.push((SampleId::new(fields[0].trim()), label));
    }
    Ok(out)
}

/// Loads a sample pool (features plus optional clean labels), e.g. validation or test items.
pub fn load_samples<T: Scalar>(
    features: impl AsRef<Path>,
    clean_labels: Option<&Path>,
    class_count: usize,
) -> Result<Vec<LabeledSample<T>>> {
    let clean: HashMap<SampleId, usize> = match clean_labels {
        Some(p) => load_clean_labels(p, class_count)?.into_iter().collect(),
        None => HashMap::new(),
    };
    Ok(load_features::<T>(features)?
        .into_iter()
        .map(|(id, f)| {
            let c = clean.get(&id).copied();
            LabeledSample::new(id, f, c)
        })
        .collect())
}

/// Writes annotations as triples in (sample, annotator) order.
pub fn save_dataset<T>(dataset: &MultiRaterDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(FORMAT_HEADER);
    out.push('\n');
    for r in dataset.annotations() {
        let _ = writeln!(out, "{},{},{}", r.sample, r.annotator, r.label);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_features<T: Scalar>(samples: &[LabeledSample<T>], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(FORMAT_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(s.id.as_str());
        for v in &s.features {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes `sample_id,label` for samples that carry a clean label.
pub fn write_clean_labels<T>(samples: &[LabeledSample<T>], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(FORMAT_HEADER);
    out.push('\n');
    for s in samples {
        if let Some(c) = s.clean_label {
            let _ = writeln!(out, "{},{c}", s.id);
        }
    }
    fs::write(path, out)?;
    Ok(())
}
