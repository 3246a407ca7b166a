//! Input data: loading, validation, partitioning into allowable and
//! non-allowable covariate blocks, and row filtering.
//!
//! A [`DecompositionDataset`] is an immutable table of `(G, Z, Y, X)` rows
//! where `G` is the (non-manipulable) group indicator, `Z` the binary
//! exposure, `Y` a real outcome, and the covariates `X` are split into an
//! allowable block `X^A` and a non-allowable block `X^N`. The split decides
//! which covariates the counterfactual exposure distribution is allowed to
//! condition on; everything downstream (propensity designs, weights) keys
//! off it.
//!
//! Missing values are handled by listwise deletion at load time: any row
//! with a missing mapped cell is dropped and recorded in the [`LoadReport`].
//! Non-binary group/exposure values and non-numeric cells are hard errors,
//! not drops; binarization belongs upstream of this tool.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Column-role mapping for a CSV file: which header names hold the outcome,
/// group, exposure, and the two covariate blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CsvSchema {
    pub outcome: String,
    pub group: String,
    pub exposure: String,
    pub allowable: Vec<String>,
    pub nonallowable: Vec<String>,
}

impl CsvSchema {
    fn all_columns(&self) -> Vec<&str> {
        let mut cols = vec![
            self.outcome.as_str(),
            self.group.as_str(),
            self.exposure.as_str(),
        ];
        cols.extend(self.allowable.iter().map(String::as_str));
        cols.extend(self.nonallowable.iter().map(String::as_str));
        cols
    }
}

/// Immutable table of observational rows with validated values.
///
/// Invariants enforced at construction:
/// - `g` and `z` are exactly 0 or 1 for every row,
/// - all outcome and covariate values are finite (no missing values),
/// - both covariate blocks are rectangular and aligned with the rows.
///
/// Cell-count requirements (each `(g, z)` cell populated, and large enough
/// for model fitting) are checked where they matter: at load time and before
/// propensity fitting. A filtered subset used for audit or export may have
/// empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionDataset {
    g: Vec<u8>,
    z: Vec<u8>,
    y: Vec<f64>,
    /// Column-major allowable covariates: `x_allowable[j][i]` is covariate j of row i.
    x_allowable: Vec<Vec<f64>>,
    x_nonallowable: Vec<Vec<f64>>,
    allowable_names: Vec<String>,
    nonallowable_names: Vec<String>,
    outcome_name: String,
    group_name: String,
    exposure_name: String,
}

impl DecompositionDataset {
    /// Build a dataset from columns, validating the type invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g: Vec<u8>,
        z: Vec<u8>,
        y: Vec<f64>,
        x_allowable: Vec<Vec<f64>>,
        x_nonallowable: Vec<Vec<f64>>,
        allowable_names: Vec<String>,
        nonallowable_names: Vec<String>,
        outcome_name: String,
        group_name: String,
        exposure_name: String,
    ) -> Result<Self> {
        let n = g.len();
        for (len, what) in [(z.len(), "exposure"), (y.len(), "outcome")] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context: format!("{what} column"),
                    expected: n,
                    actual: len,
                });
            }
        }
        if x_allowable.len() != allowable_names.len()
            || x_nonallowable.len() != nonallowable_names.len()
        {
            return Err(Error::DimensionMismatch {
                context: "covariate block labels".into(),
                expected: x_allowable.len() + x_nonallowable.len(),
                actual: allowable_names.len() + nonallowable_names.len(),
            });
        }
        for (name, col) in allowable_names
            .iter()
            .zip(&x_allowable)
            .chain(nonallowable_names.iter().zip(&x_nonallowable))
        {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    context: format!("covariate column `{name}`"),
                    expected: n,
                    actual: col.len(),
                });
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericValue {
                    column: name.clone(),
                    row: i,
                    value: col[i].to_string(),
                });
            }
        }
        for (i, &gi) in g.iter().enumerate() {
            if gi > 1 {
                return Err(Error::NonBinaryValue {
                    column: group_name.clone(),
                    row: i,
                    value: gi.to_string(),
                });
            }
        }
        for (i, &zi) in z.iter().enumerate() {
            if zi > 1 {
                return Err(Error::NonBinaryValue {
                    column: exposure_name.clone(),
                    row: i,
                    value: zi.to_string(),
                });
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumericValue {
                column: outcome_name.clone(),
                row: i,
                value: y[i].to_string(),
            });
        }
        Ok(Self {
            g,
            z,
            y,
            x_allowable,
            x_nonallowable,
            allowable_names,
            nonallowable_names,
            outcome_name,
            group_name,
            exposure_name,
        })
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[u8] {
        &self.g
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n_allowable(&self) -> usize {
        self.x_allowable.len()
    }

    pub fn n_nonallowable(&self) -> usize {
        self.x_nonallowable.len()
    }

    pub fn allowable_names(&self) -> &[String] {
        &self.allowable_names
    }

    pub fn nonallowable_names(&self) -> &[String] {
        &self.nonallowable_names
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn group_name(&self) -> &str {
        &self.group_name
    }

    pub fn exposure_name(&self) -> &str {
        &self.exposure_name
    }

    pub fn allowable_column(&self, j: usize) -> &[f64] {
        &self.x_allowable[j]
    }

    pub fn nonallowable_column(&self, j: usize) -> &[f64] {
        &self.x_nonallowable[j]
    }

    /// All covariate names, allowable block first (the dataset order used by
    /// design matrices).
    pub fn covariate_names(&self) -> Vec<&str> {
        self.allowable_names
            .iter()
            .chain(self.nonallowable_names.iter())
            .map(String::as_str)
            .collect()
    }

    /// Covariate column by name, searching the allowable block first.
    pub fn covariate_by_name(&self, name: &str) -> Option<&[f64]> {
        if let Some(j) = self.allowable_names.iter().position(|c| c == name) {
            return Some(&self.x_allowable[j]);
        }
        self.nonallowable_names
            .iter()
            .position(|c| c == name)
            .map(|j| self.x_nonallowable[j].as_slice())
    }

    /// Row indices with `G = g`, in dataset order.
    pub fn rows_with_g(&self, g: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.g[i] == g).collect()
    }

    /// Counts of the four `(g, z)` cells as `[g0z0, g0z1, g1z0, g1z1]`.
    pub fn cell_counts(&self) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for i in 0..self.n() {
            counts[(self.g[i] * 2 + self.z[i]) as usize] += 1;
        }
        counts
    }

    /// Error unless every `(g, z)` cell holds at least `required` rows.
    pub fn require_cell_counts(&self, required: usize) -> Result<()> {
        let counts = self.cell_counts();
        for (idx, &count) in counts.iter().enumerate() {
            if count < required {
                return Err(Error::CellTooSmall {
                    g: (idx / 2) as u8,
                    z: (idx % 2) as u8,
                    count,
                    required,
                });
            }
        }
        Ok(())
    }

    /// New dataset containing the given rows (repetition allowed, as used by
    /// bootstrap resampling). Panics on out-of-range indices.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let pick_u8 = |col: &[u8]| indices.iter().map(|&i| col[i]).collect::<Vec<_>>();
        let pick_f64 = |col: &[f64]| indices.iter().map(|&i| col[i]).collect::<Vec<_>>();
        Self {
            g: pick_u8(&self.g),
            z: pick_u8(&self.z),
            y: pick_f64(&self.y),
            x_allowable: self.x_allowable.iter().map(|c| pick_f64(c)).collect(),
            x_nonallowable: self.x_nonallowable.iter().map(|c| pick_f64(c)).collect(),
            allowable_names: self.allowable_names.clone(),
            nonallowable_names: self.nonallowable_names.clone(),
            outcome_name: self.outcome_name.clone(),
            group_name: self.group_name.clone(),
            exposure_name: self.exposure_name.clone(),
        }
    }

    /// New dataset with one covariate column removed from whichever block
    /// holds it (the leave-one-out calibration workflow).
    pub fn without_covariate(&self, name: &str) -> Result<Self> {
        let mut out = self.clone();
        if let Some(j) = self.allowable_names.iter().position(|c| c == name) {
            out.allowable_names.remove(j);
            out.x_allowable.remove(j);
            return Ok(out);
        }
        if let Some(j) = self.nonallowable_names.iter().position(|c| c == name) {
            out.nonallowable_names.remove(j);
            out.x_nonallowable.remove(j);
            return Ok(out);
        }
        Err(Error::MissingColumn {
            column: name.to_string(),
        })
    }

    /// The dataset as CSV text: group, exposure, outcome, then the two
    /// covariate blocks, under their original column names.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            self.group_name.clone(),
            self.exposure_name.clone(),
            self.outcome_name.clone(),
        ];
        header.extend(self.allowable_names.iter().cloned());
        header.extend(self.nonallowable_names.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.n() {
            let mut record = vec![
                self.g[i].to_string(),
                self.z[i].to_string(),
                self.y[i].to_string(),
            ];
            record.extend(self.x_allowable.iter().map(|c| c[i].to_string()));
            record.extend(self.x_nonallowable.iter().map(|c| c[i].to_string()));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    /// Write the dataset to a CSV file.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Per-load accounting of rows dropped by listwise deletion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    /// `(row index, columns that were missing)` for every dropped row.
    pub dropped_rows: Vec<(usize, Vec<String>)>,
}

impl LoadReport {
    pub fn rows_dropped(&self) -> usize {
        self.dropped_rows.len()
    }

    /// Drop counts per column, in first-seen order.
    pub fn drops_by_column(&self) -> Vec<(String, usize)> {
        let mut order: Vec<String> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for (_, cols) in &self.dropped_rows {
            for c in cols {
                match order.iter().position(|o| o == c) {
                    Some(k) => counts[k] += 1,
                    None => {
                        order.push(c.clone());
                        counts.push(1);
                    }
                }
            }
        }
        order.into_iter().zip(counts).collect()
    }
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan")
}

fn parse_numeric(field: &str, column: &str, row: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::NonNumericValue {
        column: column.to_string(),
        row,
        value: field.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonNumericValue {
            column: column.to_string(),
            row,
            value: field.to_string(),
        });
    }
    Ok(v)
}

fn parse_binary(field: &str, column: &str, row: usize) -> Result<u8> {
    let v = parse_numeric(field, column, row).map_err(|_| Error::NonBinaryValue {
        column: column.to_string(),
        row,
        value: field.to_string(),
    })?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::NonBinaryValue {
            column: column.to_string(),
            row,
            value: field.to_string(),
        })
    }
}

/// Load a validated dataset from a CSV file.
///
/// The file must have a header row; fields are comma-delimited with `.` as
/// the decimal separator. Rows with a missing mapped cell (empty, `NA`, or
/// `NaN`) are dropped and reported; any other malformed cell is an error
/// naming the row and column. Every `(g, z)` cell must be populated after
/// deletion.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(DecompositionDataset, LoadReport)> {
    let mut seen = HashSet::new();
    for col in schema.all_columns() {
        if !seen.insert(col) {
            return Err(Error::DuplicateColumn { column: col.into() });
        }
    }

    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.into(),
            })
    };

    let outcome_idx = col_index(&schema.outcome)?;
    let group_idx = col_index(&schema.group)?;
    let exposure_idx = col_index(&schema.exposure)?;
    let allowable_idx: Vec<usize> = schema
        .allowable
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;
    let nonallowable_idx: Vec<usize> = schema
        .nonallowable
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;

    let mut g = Vec::new();
    let mut z = Vec::new();
    let mut y = Vec::new();
    let mut x_allowable: Vec<Vec<f64>> = vec![Vec::new(); allowable_idx.len()];
    let mut x_nonallowable: Vec<Vec<f64>> = vec![Vec::new(); nonallowable_idx.len()];
    let mut report = LoadReport::default();

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        report.rows_read += 1;

        let mut missing: Vec<String> = Vec::new();
        let mut check = |idx: usize, name: &str| {
            if record.get(idx).is_none_or(is_missing) {
                missing.push(name.to_string());
            }
        };
        check(group_idx, &schema.group);
        check(exposure_idx, &schema.exposure);
        check(outcome_idx, &schema.outcome);
        for (j, &idx) in allowable_idx.iter().enumerate() {
            check(idx, &schema.allowable[j]);
        }
        for (j, &idx) in nonallowable_idx.iter().enumerate() {
            check(idx, &schema.nonallowable[j]);
        }
        if !missing.is_empty() {
            report.dropped_rows.push((row, missing));
            continue;
        }

        g.push(parse_binary(&record[group_idx], &schema.group, row)?);
        z.push(parse_binary(&record[exposure_idx], &schema.exposure, row)?);
        y.push(parse_numeric(&record[outcome_idx], &schema.outcome, row)?);
        for (j, &idx) in allowable_idx.iter().enumerate() {
            x_allowable[j].push(parse_numeric(&record[idx], &schema.allowable[j], row)?);
        }
        for (j, &idx) in nonallowable_idx.iter().enumerate() {
            x_nonallowable[j].push(parse_numeric(&record[idx], &schema.nonallowable[j], row)?);
        }
    }
    report.rows_kept = g.len();

    let ds = DecompositionDataset::new(
        g,
        z,
        y,
        x_allowable,
        x_nonallowable,
        schema.allowable.clone(),
        schema.nonallowable.clone(),
        schema.outcome.clone(),
        schema.group.clone(),
        schema.exposure.clone(),
    )?;
    if ds.n() == 0 {
        return Err(Error::CellCounts { counts: [0; 4] });
    }
    ds.require_cell_counts(1)?;
    Ok((ds, report))
}

/// Center and scale every covariate column to sample mean 0 and variance 1
/// (divisor `n - 1`). Group, exposure, and outcome are untouched.
///
/// Errors with the column name if any covariate is constant.
pub fn standardize_covariates(ds: &DecompositionDataset) -> Result<DecompositionDataset> {
    let n = ds.n() as f64;
    let standardize_block = |block: &[Vec<f64>], names: &[String]| -> Result<Vec<Vec<f64>>> {
        block
            .iter()
            .zip(names)
            .map(|(col, name)| {
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                if var <= 0.0 || !var.is_finite() {
                    return Err(Error::ConstantCovariate {
                        column: name.clone(),
                    });
                }
                let sd = var.sqrt();
                Ok(col.iter().map(|v| (v - mean) / sd).collect())
            })
            .collect()
    };
    let mut out = ds.clone();
    out.x_allowable = standardize_block(&ds.x_allowable, &ds.allowable_names)?;
    out.x_nonallowable = standardize_block(&ds.x_nonallowable, &ds.nonallowable_names)?;
    Ok(out)
}

/// Comparison applied to a single column's value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predicate {
    Equals(f64),
    NotEquals(f64),
    LessThan(f64),
    GreaterThan(f64),
}

impl Predicate {
    fn matches(&self, v: f64) -> bool {
        match *self {
            Predicate::Equals(t) => v == t,
            Predicate::NotEquals(t) => v != t,
            Predicate::LessThan(t) => v < t,
            Predicate::GreaterThan(t) => v > t,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Equals(t) => write!(f, "== {t}"),
            Predicate::NotEquals(t) => write!(f, "!= {t}"),
            Predicate::LessThan(t) => write!(f, "< {t}"),
            Predicate::GreaterThan(t) => write!(f, "> {t}"),
        }
    }
}

/// A single-column row predicate. The column may be any mapped column:
/// group, exposure, outcome, or a covariate (matched on its raw, unscaled
/// values).
#[derive(Debug, Clone, PartialEq)]
pub struct RowFilter {
    pub column: String,
    pub predicate: Predicate,
}

impl RowFilter {
    /// Parse a filter expression of the form `column==v`, `column!=v`,
    /// `column<v`, or `column>v`.
    pub fn parse(expr: &str) -> Result<Self> {
        type MakePredicate = fn(f64) -> Predicate;
        let ops: [(&str, MakePredicate); 4] = [
            ("==", Predicate::Equals),
            ("!=", Predicate::NotEquals),
            ("<", Predicate::LessThan),
            (">", Predicate::GreaterThan),
        ];
        for (op, make) in ops {
            if let Some(pos) = expr.find(op) {
                let column = expr[..pos].trim();
                let value = expr[pos + op.len()..].trim();
                if column.is_empty() {
                    break;
                }
                let v: f64 = value.parse().map_err(|_| Error::Config {
                    message: format!("filter value `{value}` is not numeric"),
                })?;
                return Ok(RowFilter {
                    column: column.to_string(),
                    predicate: make(v),
                });
            }
        }
        Err(Error::Config {
            message: format!(
                "cannot parse filter `{expr}` (expected column==v, column!=v, column<v, or column>v)"
            ),
        })
    }

    fn column_values(&self, ds: &DecompositionDataset) -> Result<Vec<f64>> {
        if self.column == ds.group_name {
            return Ok(ds.g.iter().map(|&v| f64::from(v)).collect());
        }
        if self.column == ds.exposure_name {
            return Ok(ds.z.iter().map(|&v| f64::from(v)).collect());
        }
        if self.column == ds.outcome_name {
            return Ok(ds.y.clone());
        }
        ds.covariate_by_name(&self.column)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::MissingColumn {
                column: self.column.clone(),
            })
    }

    /// Row indices matching the predicate.
    pub fn matching_rows(&self, ds: &DecompositionDataset) -> Result<Vec<usize>> {
        let values = self.column_values(ds)?;
        Ok((0..ds.n())
            .filter(|&i| self.predicate.matches(values[i]))
            .collect())
    }
}

impl fmt::Display for RowFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.column, self.predicate)
    }
}

/// Keep the rows satisfying the predicate. The input dataset is untouched.
/// Errors if nothing matches.
pub fn filter_rows(ds: &DecompositionDataset, filter: &RowFilter) -> Result<DecompositionDataset> {
    let keep = filter.matching_rows(ds)?;
    if keep.is_empty() {
        return Err(Error::CellCounts { counts: [0; 4] });
    }
    Ok(ds.select_rows(&keep))
}

/// Drop the rows satisfying the predicate: the robustness-check workflow
/// behind `--exclude`. Errors if every row would be dropped.
pub fn exclude_rows(ds: &DecompositionDataset, filter: &RowFilter) -> Result<DecompositionDataset> {
    let matching: HashSet<usize> = filter.matching_rows(ds)?.into_iter().collect();
    let keep: Vec<usize> = (0..ds.n()).filter(|i| !matching.contains(i)).collect();
    if keep.is_empty() {
        return Err(Error::CellCounts { counts: [0; 4] });
    }
    Ok(ds.select_rows(&keep))
}
