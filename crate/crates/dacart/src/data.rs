//! Column-major datasets, validation, and CSV ingestion.
//!
//! A [`Dataset`] stores `p` feature columns of equal length `n`, an optional
//! response vector, and optional non-negative per-row weights. Values must be
//! finite; binary columns may only contain 0.0 and 1.0. Split search scans one
//! feature at a time, so storage is column-major.
//!
//! Datasets are immutable after construction and safe to share read-only
//! across threads.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

/// Whether a column holds arbitrary continuous values or only {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Binary,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnKind::Continuous => write!(f, "continuous"),
            ColumnKind::Binary => write!(f, "binary"),
        }
    }
}

/// Name and kind of one feature column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnSchema { name: name.into(), kind }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Continuous)
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Binary)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("structural error at row {row}: expected {expected} fields, found {found}")]
    RowLength { row: usize, expected: usize, found: usize },
    #[error("invalid dataset: {0}")]
    Invalid(ValidationReport),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Every invariant violation found in one pass. Empty means the data is valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "ok")
        } else {
            write!(f, "{}", self.violations.join("; "))
        }
    }
}

/// Domain indicator over a pooled sample: 0 = source, 1 = target.
#[derive(Debug, Clone)]
pub struct DomainLabel {
    labels: Vec<u8>,
}

impl DomainLabel {
    /// Requires at least one source (0) and one target (1) entry.
    pub fn new(labels: Vec<u8>) -> Result<Self, DataError> {
        let mut report = ValidationReport::default();
        if !labels.iter().any(|&w| w == 0) || !labels.iter().any(|&w| w == 1) {
            report.violations.push("domain label must contain both 0 and 1".into());
        }
        if let Some(i) = labels.iter().position(|&w| w > 1) {
            report.violations.push(format!("domain label at row {i} is not 0 or 1"));
        }
        if report.is_ok() {
            Ok(DomainLabel { labels })
        } else {
            Err(DataError::Invalid(report))
        }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Immutable column-major table with optional response and row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<ColumnSchema>,
    columns: Vec<Vec<f64>>,
    response: Option<Vec<f64>>,
    row_weights: Option<Vec<f64>>,
}

impl Dataset {
    /// Build and validate a dataset from parts.
    pub fn new(
        schema: Vec<ColumnSchema>,
        columns: Vec<Vec<f64>>,
        response: Option<Vec<f64>>,
        row_weights: Option<Vec<f64>>,
    ) -> Result<Self, DataError> {
        let report = validate_parts(&schema, &columns, response.as_deref(), row_weights.as_deref());
        if report.is_ok() {
            Ok(Dataset { schema, columns, response, row_weights })
        } else {
            Err(DataError::Invalid(report))
        }
    }

    /// Convenience constructor: columns given as `(name, values)` pairs, kinds
    /// inferred by the {0,1}-subset rule.
    pub fn from_named_columns(
        columns: &[(&str, Vec<f64>)],
        response: Option<(&str, Vec<f64>)>,
    ) -> Result<Self, DataError> {
        let schema = columns
            .iter()
            .map(|(name, values)| ColumnSchema::new(*name, infer_kind(values)))
            .collect();
        let values = columns.iter().map(|(_, v)| v.clone()).collect();
        Dataset::new(schema, values, response.map(|(_, y)| y), None)
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    pub fn row_weights(&self) -> Option<&[f64]> {
        self.row_weights.as_deref()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    /// Re-check all invariants. Construction already enforces them, so this
    /// reports clean for any dataset built through the public API.
    pub fn validate(&self) -> ValidationReport {
        validate_parts(
            &self.schema,
            &self.columns,
            self.response.as_deref(),
            self.row_weights.as_deref(),
        )
    }

    /// Dataset restricted to the given feature columns (response and weights kept).
    pub fn select_features(&self, indices: &[usize]) -> Result<Dataset, DataError> {
        for &j in indices {
            if j >= self.n_features() {
                return Err(DataError::UnknownColumn(format!("feature index {j}")));
            }
        }
        Ok(Dataset {
            schema: indices.iter().map(|&j| self.schema[j].clone()).collect(),
            columns: indices.iter().map(|&j| self.columns[j].clone()).collect(),
            response: self.response.clone(),
            row_weights: self.row_weights.clone(),
        })
    }

    /// Dataset restricted to the named feature columns.
    pub fn select_features_by_name(&self, names: &[String]) -> Result<Dataset, DataError> {
        let indices = names
            .iter()
            .map(|n| self.feature_index(n).ok_or_else(|| DataError::UnknownColumn(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.select_features(&indices)
    }

    /// Materialize a row subset (duplicates allowed, e.g. bootstrap draws).
    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        let gather = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(gather).collect(),
            response: self.response.as_ref().map(|v| rows.iter().map(|&i| v[i]).collect()),
            row_weights: self.row_weights.as_ref().map(|v| rows.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Stack the rows of two datasets sharing one schema. Response and weights
    /// are kept only when present on both sides.
    pub fn vstack(&self, other: &Dataset) -> Result<Dataset, DataError> {
        if self.schema != other.schema {
            return Err(DataError::SchemaMismatch(
                "cannot stack datasets with different schemas".into(),
            ));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| {
                let mut v = a.clone();
                v.extend_from_slice(b);
                v
            })
            .collect();
        let both = |a: &Option<Vec<f64>>, b: &Option<Vec<f64>>| match (a, b) {
            (Some(a), Some(b)) => {
                let mut v = a.clone();
                v.extend_from_slice(b);
                Some(v)
            }
            _ => None,
        };
        Ok(Dataset {
            schema: self.schema.clone(),
            columns,
            response: both(&self.response, &other.response),
            row_weights: both(&self.row_weights, &other.row_weights),
        })
    }

    /// Same dataset with the response replaced (used by gradient boosting to
    /// fit trees against residuals).
    pub fn with_response(&self, response: Vec<f64>) -> Result<Dataset, DataError> {
        Dataset::new(self.schema.clone(), self.columns.clone(), Some(response), self.row_weights.clone())
    }

    /// Write as CSV. Feature columns first, then the response column if any.
    /// Values use the shortest decimal form that parses back bit-exactly.
    pub fn write_csv<W: Write>(&self, out: &mut W, response_name: &str) -> std::io::Result<()> {
        let mut header: Vec<&str> = self.schema.iter().map(|c| c.name.as_str()).collect();
        if self.response.is_some() {
            header.push(response_name);
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n_rows() {
            let mut fields: Vec<String> = self.columns.iter().map(|c| fmt_f64(c[i])).collect();
            if let Some(y) = &self.response {
                fields.push(fmt_f64(y[i]));
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Shortest decimal representation that round-trips through `str::parse::<f64>`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn infer_kind(values: &[f64]) -> ColumnKind {
    if values.iter().all(|&v| v == 0.0 || v == 1.0) {
        ColumnKind::Binary
    } else {
        ColumnKind::Continuous
    }
}

/// Check every dataset invariant, collecting all violations.
pub fn validate_parts(
    schema: &[ColumnSchema],
    columns: &[Vec<f64>],
    response: Option<&[f64]>,
    row_weights: Option<&[f64]>,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    if schema.len() != columns.len() {
        report
            .violations
            .push(format!("schema lists {} columns but {} provided", schema.len(), columns.len()));
        return report;
    }
    for (i, col) in schema.iter().enumerate() {
        if col.name.is_empty() || col.name.contains(',') || col.name.contains(char::is_whitespace) {
            report.violations.push(format!("column {i} has invalid name '{}'", col.name));
        }
        for other in &schema[i + 1..] {
            if other.name == col.name {
                report.violations.push(format!("duplicate column name '{}'", col.name));
            }
        }
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.is_empty() || n == 0 {
        report.violations.push("dataset must have at least one column and one row".into());
        return report;
    }
    for (j, col) in columns.iter().enumerate() {
        let name = &schema[j].name;
        if col.len() != n {
            report
                .violations
                .push(format!("column {name} has length {} but expected {n}", col.len()));
            continue;
        }
        for (i, &v) in col.iter().enumerate() {
            if !v.is_finite() {
                report.violations.push(format!("non-finite value in column {name} at row {}", i + 1));
            } else if schema[j].kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                report
                    .violations
                    .push(format!("binary column {name} has value {v} at row {}", i + 1));
            }
        }
    }
    if let Some(y) = response {
        if y.len() != n {
            report.violations.push(format!("response has length {} but expected {n}", y.len()));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                report.violations.push(format!("non-finite response at row {}", i + 1));
            }
        }
    }
    if let Some(w) = row_weights {
        if w.len() != n {
            report.violations.push(format!("row_weights has length {} but expected {n}", w.len()));
        }
        let mut sum = 0.0;
        for (i, &v) in w.iter().enumerate() {
            if !v.is_finite() {
                report.violations.push(format!("non-finite weight at row {}", i + 1));
            } else if v < 0.0 {
                report.violations.push(format!("negative weight at row {}", i + 1));
            } else {
                sum += v;
            }
        }
        if sum <= 0.0 {
            report.violations.push("row weights sum to zero".into());
        }
    }
    report
}

/// Column designations for [`parse_dataset`]: which header names hold the
/// response and the row weights, and any explicit kind overrides.
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub response: Option<String>,
    pub weights: Option<String>,
    pub schema_hint: Vec<ColumnSchema>,
}

/// Parse a CSV file: UTF-8, comma-separated, header row required, numeric
/// fields only. Columns whose values all lie in {0, 1} are inferred binary
/// unless the schema hint overrides.
pub fn parse_dataset(path: &Path, options: &ParseOptions) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset_reader(BufReader::new(file), options).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io { path: path.display().to_string(), source },
        other => other,
    })
}

/// Parse CSV from any reader; `row` in errors counts data rows from 1.
pub fn parse_dataset_reader<R: BufRead>(
    reader: R,
    options: &ParseOptions,
) -> Result<Dataset, DataError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|source| DataError::Io { path: "<reader>".into(), source })?,
        None => {
            return Err(DataError::Parse {
                row: 0,
                column: "<header>".into(),
                message: "empty file".into(),
            })
        }
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut row = 0usize;
    for line in lines {
        let line = line.map_err(|source| DataError::Io { path: "<reader>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(DataError::RowLength { row, expected: names.len(), found: fields.len() });
        }
        for (j, field) in fields.iter().enumerate() {
            let trimmed = field.trim();
            if trimmed.is_empty() {
                return Err(DataError::Parse {
                    row,
                    column: names[j].clone(),
                    message: "missing value".into(),
                });
            }
            let value: f64 = trimmed.parse().map_err(|_| DataError::Parse {
                row,
                column: names[j].clone(),
                message: format!("not a number: '{trimmed}'"),
            })?;
            columns[j].push(value);
        }
    }

    let mut response = None;
    let mut row_weights = None;
    let mut schema = Vec::new();
    let mut feature_columns = Vec::new();
    for (name, col) in names.iter().zip(columns) {
        if options.response.as_deref() == Some(name.as_str()) {
            response = Some(col);
        } else if options.weights.as_deref() == Some(name.as_str()) {
            row_weights = Some(col);
        } else {
            let kind = options
                .schema_hint
                .iter()
                .find(|c| &c.name == name)
                .map(|c| c.kind)
                .unwrap_or_else(|| infer_kind(&col));
            schema.push(ColumnSchema::new(name.clone(), kind));
            feature_columns.push(col);
        }
    }
    if let Some(want) = &options.response {
        if response.is_none() {
            return Err(DataError::UnknownColumn(want.clone()));
        }
    }
    if let Some(want) = &options.weights {
        if row_weights.is_none() {
            return Err(DataError::UnknownColumn(want.clone()));
        }
    }
    Dataset::new(schema, feature_columns, response, row_weights)
}
