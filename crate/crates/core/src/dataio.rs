//! Dataset loading, schema validation, quasi-identifier removal, min-max
//! normalization, and a seeded toy-telemetry generator used as a ground-truth
//! oracle in tests and demos.
//!
//! The on-disk format is a restricted CSV dialect: UTF-8, one header row whose
//! names match the schema exactly, `.` as the decimal separator, and no quoted
//! fields (hence no field may contain a comma). Continuous cells are written
//! back with 12 significant digits.

use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Role of a column in the anonymization workflow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Numeric telemetry retained for modeling.
    Continuous,
    /// Attribute that could re-identify a subject in combination with others
    /// (MAC address, location id, timestamp); stripped before modeling.
    QuasiIdentifier,
    /// Integer cluster/class column; at most one per schema.
    DiscreteLabel,
}

/// Name and role of one column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered, validated list of column specs: names are unique and non-empty,
/// contain no separator characters, and at most one column is a label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Data("schema has no columns".into()));
        }
        let mut labels = 0usize;
        for (i, col) in columns.iter().enumerate() {
            if col.name.is_empty() {
                return Err(Error::Data(format!("schema column {i} has an empty name")));
            }
            if col.name.contains([',', '\n', '\r']) {
                return Err(Error::Data(format!(
                    "schema column {:?} contains a separator character",
                    col.name
                )));
            }
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(Error::Data(format!(
                    "schema column {:?} appears more than once",
                    col.name
                )));
            }
            if col.kind == ColumnKind::DiscreteLabel {
                labels += 1;
            }
        }
        if labels > 1 {
            return Err(Error::Data(
                "schema declares more than one discrete_label column".into(),
            ));
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    fn count(&self, kind: ColumnKind) -> usize {
        self.columns.iter().filter(|c| c.kind == kind).count()
    }

    pub fn n_continuous(&self) -> usize {
        self.count(ColumnKind::Continuous)
    }

    pub fn label_column(&self) -> Option<&ColumnSpec> {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::DiscreteLabel)
    }
}

/// Column-typed tabular data: a matrix of continuous features plus optional
/// quasi-identifier (string) columns and an optional integer label column.
/// Row order is meaningful — index is treated as time by the Gaussian HMM.
///
/// Values are validated at construction: continuous cells are finite, labels
/// are `>= -1`, and quasi-identifier values contain no separator characters.
/// Empty datasets (zero rows) are representable — sampling zero synthetic
/// rows is legal — but the ingestion path rejects them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    /// Continuous columns only, in schema order; n x m.
    features: Matrix,
    /// One entry per quasi-identifier column, in schema order; each inner
    /// vector has one value per row.
    quasi: Vec<Vec<String>>,
    /// Label column values, present iff the schema declares one.
    labels: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(
        schema: Schema,
        features: Matrix,
        quasi: Vec<Vec<String>>,
        labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        let n = features.n_rows();
        if features.n_cols() != schema.n_continuous() {
            return Err(Error::Contract(format!(
                "feature matrix has {} columns, schema declares {} continuous",
                features.n_cols(),
                schema.n_continuous()
            )));
        }
        if quasi.len() != schema.count(ColumnKind::QuasiIdentifier) {
            return Err(Error::Contract(format!(
                "{} quasi-identifier columns supplied, schema declares {}",
                quasi.len(),
                schema.count(ColumnKind::QuasiIdentifier)
            )));
        }
        if labels.is_some() != schema.label_column().is_some() {
            return Err(Error::Contract(
                "label values must be supplied exactly when the schema declares a label column"
                    .into(),
            ));
        }
        if !features.is_finite() {
            return Err(Error::Data(
                "continuous features contain a non-finite value".into(),
            ));
        }
        for col in &quasi {
            if col.len() != n {
                return Err(Error::Contract(format!(
                    "quasi-identifier column has {} values, expected {n}",
                    col.len()
                )));
            }
            if let Some(bad) = col.iter().find(|v| v.contains([',', '\n', '\r'])) {
                return Err(Error::Data(format!(
                    "quasi-identifier value {bad:?} contains a separator character"
                )));
            }
        }
        if let Some(ref ls) = labels {
            if ls.len() != n {
                return Err(Error::Contract(format!(
                    "label column has {} values, expected {n}",
                    ls.len()
                )));
            }
            if let Some(&bad) = ls.iter().find(|&&l| l < -1) {
                return Err(Error::Data(format!(
                    "label {bad} is invalid; labels must be >= -1"
                )));
            }
        }
        Ok(Dataset {
            schema,
            features,
            quasi,
            labels,
        })
    }

    /// Convenience constructor: all columns continuous, no labels.
    pub fn from_features(names: &[&str], features: Matrix) -> Result<Self> {
        let schema = Schema::new(
            names
                .iter()
                .map(|n| ColumnSpec::new(*n, ColumnKind::Continuous))
                .collect(),
        )?;
        Dataset::new(schema, features, Vec::new(), None)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// The continuous feature matrix (n rows, one column per continuous
    /// schema column, in schema order).
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    /// Names of the continuous columns, in order.
    pub fn feature_names(&self) -> Vec<&str> {
        self.schema
            .columns()
            .iter()
            .filter(|c| c.kind == ColumnKind::Continuous)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Copy of this dataset with a label column appended (or replaced).
    pub fn with_label_column(&self, name: &str, labels: Vec<i64>) -> Result<Dataset> {
        let mut columns: Vec<ColumnSpec> = self
            .schema
            .columns()
            .iter()
            .filter(|c| c.kind != ColumnKind::DiscreteLabel)
            .cloned()
            .collect();
        columns.push(ColumnSpec::new(name, ColumnKind::DiscreteLabel));
        Dataset::new(
            Schema::new(columns)?,
            self.features.clone(),
            self.quasi.clone(),
            Some(labels),
        )
    }

    /// Replace the feature matrix, keeping schema and auxiliary columns.
    pub(crate) fn with_features(&self, features: Matrix) -> Result<Dataset> {
        Dataset::new(
            self.schema.clone(),
            features,
            self.quasi.clone(),
            self.labels.clone(),
        )
    }

    /// Serialize to CSV in schema column order. Continuous cells are written
    /// with 12 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.schema.names().join(","));
        out.push('\n');
        let n = self.n_rows();
        for row in 0..n {
            let mut first = true;
            let mut feat = 0usize;
            let mut qid = 0usize;
            for col in self.schema.columns() {
                if !first {
                    out.push(',');
                }
                first = false;
                match col.kind {
                    ColumnKind::Continuous => {
                        out.push_str(&format_significant(self.features.get(row, feat), 12));
                        feat += 1;
                    }
                    ColumnKind::QuasiIdentifier => {
                        out.push_str(&self.quasi[qid][row]);
                        qid += 1;
                    }
                    ColumnKind::DiscreteLabel => {
                        out.push_str(&self.labels.as_ref().expect("validated")[row].to_string());
                    }
                }
            }
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Load a CSV file against a declared schema.
///
/// The header row must match the schema names exactly, in order. Parse errors
/// cite 1-based file line and column name. A file with no data rows is an
/// error.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) if !line.trim().is_empty() => line,
        _ => return Err(Error::Data(format!("{}: empty input", path.display()))),
    };
    let header_names: Vec<&str> = header.split(',').map(str::trim).collect();
    let schema_names = schema.names();
    for name in &schema_names {
        if !header_names.contains(name) {
            return Err(Error::Data(format!(
                "{}: header is missing schema column {name:?}",
                path.display()
            )));
        }
    }
    for name in &header_names {
        if !schema_names.contains(name) {
            return Err(Error::Data(format!(
                "{}: header column {name:?} is not in the schema",
                path.display()
            )));
        }
    }
    if header_names != schema_names {
        return Err(Error::Data(format!(
            "{}: header order {:?} does not match schema order {:?}",
            path.display(),
            header_names,
            schema_names
        )));
    }

    let n_cols = schema.columns().len();
    let mut features_rows: Vec<Vec<f64>> = Vec::new();
    let mut quasi: Vec<Vec<String>> =
        vec![Vec::new(); schema.count(ColumnKind::QuasiIdentifier)];
    let mut labels: Vec<i64> = Vec::new();

    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1; // 1-based, counting the header as line 1
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n_cols {
            return Err(Error::Data(format!(
                "{}: line {lineno}: {} fields, expected {n_cols}",
                path.display(),
                cells.len()
            )));
        }
        let mut feat_row = Vec::with_capacity(schema.n_continuous());
        let mut qid = 0usize;
        for (cell, col) in cells.iter().zip(schema.columns()) {
            match col.kind {
                ColumnKind::Continuous => {
                    let value: f64 = cell.parse().map_err(|_| {
                        Error::Data(format!(
                            "{}: line {lineno}, column {:?}: unparseable number {cell:?}",
                            path.display(),
                            col.name
                        ))
                    })?;
                    if !value.is_finite() {
                        return Err(Error::Data(format!(
                            "{}: line {lineno}, column {:?}: non-finite value {cell:?}",
                            path.display(),
                            col.name
                        )));
                    }
                    feat_row.push(value);
                }
                ColumnKind::QuasiIdentifier => {
                    quasi[qid].push(cell.to_string());
                    qid += 1;
                }
                ColumnKind::DiscreteLabel => {
                    let label: i64 = cell.parse().map_err(|_| {
                        Error::Data(format!(
                            "{}: line {lineno}, column {:?}: unparseable label {cell:?}",
                            path.display(),
                            col.name
                        ))
                    })?;
                    labels.push(label);
                }
            }
        }
        features_rows.push(feat_row);
    }

    if features_rows.is_empty() {
        return Err(Error::Data(format!(
            "{}: empty input (no data rows)",
            path.display()
        )));
    }
    let features = Matrix::from_rows(&features_rows)?;
    let labels = schema.label_column().map(|_| labels);
    Dataset::new(schema.clone(), features, quasi, labels)
}

/// Drop all quasi-identifier columns, keeping continuous and label columns in
/// their original order. Errors if no continuous column would survive.
pub fn strip_quasi_identifiers(data: &Dataset) -> Result<Dataset> {
    if data.schema.n_continuous() == 0 {
        return Err(Error::Data(
            "stripping quasi-identifiers would leave no continuous columns".into(),
        ));
    }
    let columns: Vec<ColumnSpec> = data
        .schema
        .columns()
        .iter()
        .filter(|c| c.kind != ColumnKind::QuasiIdentifier)
        .cloned()
        .collect();
    Dataset::new(
        Schema::new(columns)?,
        data.features.clone(),
        Vec::new(),
        data.labels.clone(),
    )
}

/// Per-column affine range recorded by [`minmax_normalize`] so the mapping
/// can be inverted. A column with `min == max` is constant: it normalizes to
/// 0.0 and inverts back to `min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    columns: Vec<ColumnRange>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    pub fn is_constant(&self) -> bool {
        self.min == self.max
    }
}

impl NormalizationParams {
    pub fn columns(&self) -> &[ColumnRange] {
        &self.columns
    }
}

/// Map every continuous column onto `[0,1]` via `(x - min) / (max - min)`.
/// Constant columns map to 0.0. Label and quasi-identifier columns pass
/// through unchanged.
pub fn minmax_normalize(data: &Dataset) -> (Dataset, NormalizationParams) {
    let m = data.n_features();
    let n = data.n_rows();
    let mut ranges = Vec::with_capacity(m);
    for c in 0..m {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for r in 0..n {
            let v = data.features.get(r, c);
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            min = 0.0;
            max = 0.0;
        }
        ranges.push(ColumnRange { min, max });
    }
    let mut out = data.features.clone();
    for c in 0..m {
        let range = &ranges[c];
        let span = range.max - range.min;
        for r in 0..n {
            let v = if range.is_constant() {
                0.0
            } else {
                (out.get(r, c) - range.min) / span
            };
            out.set(r, c, v);
        }
    }
    let normalized = data
        .with_features(out)
        .expect("same shape as validated input");
    (normalized, NormalizationParams { columns: ranges })
}

/// Invert [`minmax_normalize`]: `x * (max - min) + min` per column; constant
/// columns are restored to their recorded minimum.
pub fn inverse_normalize(data: &Dataset, params: &NormalizationParams) -> Result<Dataset> {
    if params.columns.len() != data.n_features() {
        return Err(Error::Contract(format!(
            "normalization params cover {} columns, data has {}",
            params.columns.len(),
            data.n_features()
        )));
    }
    let mut out = data.features.clone();
    for (c, range) in params.columns.iter().enumerate() {
        for r in 0..data.n_rows() {
            let v = if range.is_constant() {
                range.min
            } else {
                out.get(r, c) * (range.max - range.min) + range.min
            };
            out.set(r, c, v);
        }
    }
    data.with_features(out)
}

/// Generate a seeded toy-telemetry dataset: `n` rows drawn from `k` isotropic
/// unit-variance Gaussian blobs in `m` dimensions, with pairwise centroid
/// distances of at least `separation`. Rows carry uniform-random blob labels,
/// returned both as a `label` column and as the ground-truth assignment.
///
/// Output is bit-identical for a fixed seed.
pub fn generate_toy_telemetry(
    seed: u64,
    n: usize,
    k: usize,
    m: usize,
    separation: f64,
) -> Result<(Dataset, ClusterAssignment)> {
    if k < 1 || n < k {
        return Err(Error::Contract(format!(
            "need n >= k >= 1, got n = {n}, k = {k}"
        )));
    }
    if m < 2 {
        return Err(Error::Contract(format!("need m >= 2, got m = {m}")));
    }
    if !(separation > 0.0) {
        return Err(Error::Contract(format!(
            "separation must be positive, got {separation}"
        )));
    }

    // Blob j sits on axis (j mod m) at distance separation * (1 + j / m) from
    // the origin; any two centroids are then at least `separation` apart.
    let mut centroids = Matrix::zeros(k, m);
    for j in 0..k {
        let axis = j % m;
        let magnitude = separation * (1 + j / m) as f64;
        centroids.set(j, axis, magnitude);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Matrix::zeros(n, m);
    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let blob = rng.gen_range(0..k);
        labels.push(blob as i64);
        for col in 0..m {
            let noise: f64 = rng.sample(StandardNormal);
            features.set(row, col, centroids.get(blob, col) + noise);
        }
    }
    // A draw can miss a blob entirely when n is small; remap to a dense label
    // range so the assignment invariants hold.
    let dense = crate::cluster::compact_labels(&labels);

    let names: Vec<String> = (0..m).map(|c| format!("f{c}")).collect();
    let mut columns: Vec<ColumnSpec> = names
        .iter()
        .map(|n| ColumnSpec::new(n.clone(), ColumnKind::Continuous))
        .collect();
    columns.push(ColumnSpec::new("label", ColumnKind::DiscreteLabel));
    let dataset = Dataset::new(Schema::new(columns)?, features, Vec::new(), Some(dense.clone()))?;
    let truth = ClusterAssignment::from_labels(dense, false)?;
    Ok((dataset, truth))
}

/// Format `x` with the given number of significant digits, using plain
/// decimal notation for moderate exponents and scientific notation otherwise.
/// Deterministic; trailing zeros are trimmed.
pub fn format_significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1, "need at least one significant digit");
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("always present in {:e} output");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    let negative = mantissa.starts_with('-');
    let digit_run: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let digit_run = digit_run.trim_end_matches('0');
    let digit_run = if digit_run.is_empty() { "0" } else { digit_run };

    let body = if exp < -4 || exp > 17 {
        if digit_run.len() == 1 {
            format!("{digit_run}e{exp}")
        } else {
            format!("{}.{}e{exp}", &digit_run[..1], &digit_run[1..])
        }
    } else {
        let point = exp + 1; // digits before the decimal point
        if point <= 0 {
            format!("0.{}{}", "0".repeat(-point as usize), digit_run)
        } else if point as usize >= digit_run.len() {
            format!("{}{}", digit_run, "0".repeat(point as usize - digit_run.len()))
        } else {
            format!(
                "{}.{}",
                &digit_run[..point as usize],
                &digit_run[point as usize..]
            )
        }
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}
