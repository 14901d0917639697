//! Tabular dataset representation and CSV ingestion.
//!
//! A dataset holds an N x M predictor matrix with every column min-max
//! normalized to [0, 1] (constant columns map to 0) and an N x T one-hot
//! target matrix. Datasets are immutable after construction.

use std::fmt;
use std::path::Path;

use ndnet::Tensor;
use serde::{Deserialize, Serialize};

use crate::{MfError, Result};

/// Where a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Circles,
    Moons,
    Blobs,
    Ingested,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GeneratorKind::Circles => "circles",
            GeneratorKind::Moons => "moons",
            GeneratorKind::Blobs => "blobs",
            GeneratorKind::Ingested => "ingested",
        };
        f.write_str(s)
    }
}

/// Immutable tabular dataset with normalized predictors and one-hot targets.
#[derive(Clone, Debug)]
pub struct TabularDataset {
    name: String,
    predictors: Tensor,
    targets: Tensor,
    kind: Option<GeneratorKind>,
    /// Original predictor column names (empty for generated data).
    column_names: Vec<String>,
}

impl TabularDataset {
    /// Builds a dataset from already-normalized parts form, validating every
    /// invariant but not re-normalizing.
    pub fn new(
        name: impl Into<String>,
        predictors: Tensor,
        targets: Tensor,
        kind: Option<GeneratorKind>,
    ) -> Result<Self> {
        let ds = TabularDataset {
            name: name.into(),
            predictors,
            targets,
            kind,
            column_names: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from raw predictor values and class labels:
    /// normalizes each predictor column to [0, 1] and one-hot encodes the
    /// labels (classes ordered by sorted label).
    pub fn from_raw(
        name: impl Into<String>,
        raw_predictors: Tensor,
        labels: &[String],
        kind: Option<GeneratorKind>,
    ) -> Result<Self> {
        if raw_predictors.rows() != labels.len() {
            return Err(MfError::Invariant(format!(
                "{} predictor rows vs {} labels",
                raw_predictors.rows(),
                labels.len()
            )));
        }
        if !raw_predictors.all_finite() {
            return Err(MfError::Ingestion("non-finite predictor value".into()));
        }
        let predictors = normalize_columns(&raw_predictors);
        let (targets, _classes) = one_hot(labels)?;
        Self::new(name, predictors, targets, kind)
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = self.predictors.shape();
        let (ny, t) = self.targets.shape();
        if n < 1 || m < 1 || t < 1 {
            return Err(MfError::Invariant(format!(
                "degenerate shape: N={n}, M={m}, T={t}"
            )));
        }
        if ny != n {
            return Err(MfError::Invariant(format!(
                "predictor rows {n} != target rows {ny}"
            )));
        }
        for &x in self.predictors.data() {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(MfError::Invariant(format!(
                    "predictor entry {x} outside [0, 1]"
                )));
            }
        }
        for r in 0..n {
            let row = self.targets.row(r);
            let mut ones = 0;
            for &y in row {
                if y == 1.0 {
                    ones += 1;
                } else if y != 0.0 {
                    return Err(MfError::Invariant(format!(
                        "target entry {y} is not 0 or 1"
                    )));
                }
            }
            if ones != 1 {
                return Err(MfError::Invariant(format!(
                    "target row {r} has {ones} ones, expected exactly 1"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> Option<GeneratorKind> {
        self.kind
    }

    /// N x M normalized predictor matrix.
    pub fn predictors(&self) -> &Tensor {
        &self.predictors
    }

    /// N x T one-hot target matrix.
    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    pub fn n_instances(&self) -> usize {
        self.predictors.rows()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.cols()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.cols()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Class index of each instance (argmax of the one-hot row).
    pub fn class_of(&self, row: usize) -> usize {
        let r = self.targets.row(row);
        r.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub(crate) fn with_column_names(mut self, names: Vec<String>) -> Self {
        self.column_names = names;
        self
    }
}

/// Min-max normalizes every column to [0, 1]; constant columns map to 0.
pub fn normalize_columns(m: &Tensor) -> Tensor {
    let (rows, cols) = m.shape();
    let mut out = m.clone();
    for c in 0..cols {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..rows {
            let x = m.get(r, c);
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let range = hi - lo;
        for r in 0..rows {
            let v = if range > 0.0 {
                (m.get(r, c) - lo) / range
            } else {
                0.0
            };
            out.set(r, c, v);
        }
    }
    out
}

/// One-hot encodes string labels. Classes are ordered by sorted label so the
/// encoding is deterministic. Errors when fewer than two classes appear.
pub fn one_hot(labels: &[String]) -> Result<(Tensor, Vec<String>)> {
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(MfError::Ingestion(format!(
            "target column has {} distinct class(es), need at least 2",
            classes.len()
        )));
    }
    let mut y = Tensor::zeros(labels.len(), classes.len());
    for (r, label) in labels.iter().enumerate() {
        let c = classes.binary_search(label).expect("label in classes");
        y.set(r, c, 1.0);
    }
    Ok((y, classes))
}

/// Which column of an ingested CSV holds the class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetColumn {
    /// Column with this header name.
    Name(String),
    /// Zero-based column index.
    Index(usize),
    /// The last column.
    Last,
}

/// Ingests a headered CSV (RFC 4180 subset) with numeric predictors and a
/// categorical or integer target column.
pub fn ingest_csv(path: &Path, target: &TargetColumn) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(MfError::Ingestion("empty header row".into()));
    }
    let target_idx = match target {
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MfError::Ingestion(format!("no column named '{name}'")))?,
        TargetColumn::Index(i) => {
            if *i >= headers.len() {
                return Err(MfError::Ingestion(format!(
                    "target index {i} out of range for {} columns",
                    headers.len()
                )));
            }
            *i
        }
        TargetColumn::Last => headers.len() - 1,
    };
    if headers.len() < 2 {
        return Err(MfError::Ingestion(
            "need at least one predictor besides the target".into(),
        ));
    }

    let mut raw_rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            MfError::Ingestion(format!("row {}: {e}", line + 2))
        })?;
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (col, field) in record.iter().enumerate() {
            if col == target_idx {
                labels.push(field.to_string());
                continue;
            }
            let value: f64 = field.trim().parse().map_err(|_| {
                MfError::Ingestion(format!(
                    "row {}, column '{}': non-numeric predictor value '{}'",
                    line + 2,
                    headers[col],
                    field
                ))
            })?;
            if !value.is_finite() {
                return Err(MfError::Ingestion(format!(
                    "row {}, column '{}': non-finite value",
                    line + 2,
                    headers[col]
                )));
            }
            row.push(value);
        }
        raw_rows.push(row);
    }
    if raw_rows.is_empty() {
        return Err(MfError::Ingestion("no data rows".into()));
    }

    let predictor_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "dataset".to_string());
    let raw = Tensor::from_rows(&raw_rows);
    Ok(
        TabularDataset::from_raw(name, raw, &labels, Some(GeneratorKind::Ingested))?
            .with_column_names(predictor_names),
    )
}
