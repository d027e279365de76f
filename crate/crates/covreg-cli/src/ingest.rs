//! CSV ingestion: header-based column selection, derived columns and
//! missing-value handling.
//!
//! CSV files are RFC-4180 style with a required header row, UTF-8 text and
//! '.' decimal separators. Cells that are empty or one of NA/NaN/null are
//! treated as missing; rows missing any used column are dropped and
//! counted.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;
use covreg::{Dataset64, Mat64};

/// A derived column: `name=sqrt(col)`, `name=square(col)`,
/// `name=prod(a,b)` or `name=const(1)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DeriveSpec {
    pub name: String,
    pub expr: String,
}

#[derive(Clone, Debug)]
enum DeriveExpr {
    Sqrt(String),
    Square(String),
    Prod(String, String),
    Const(f64),
}

pub fn parse_derive(spec: &str) -> Result<DeriveSpec, CliError> {
    let (name, expr) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--derive '{spec}': expected name=expr")))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(CliError::usage(format!("--derive '{spec}': empty name")));
    }
    parse_expr(expr.trim())?;
    Ok(DeriveSpec {
        name: name.to_string(),
        expr: expr.trim().to_string(),
    })
}

fn parse_expr(expr: &str) -> Result<DeriveExpr, CliError> {
    let open = expr.find('(');
    let close = expr.rfind(')');
    let (func, inner) = match (open, close) {
        (Some(o), Some(c)) if c == expr.len() - 1 && o < c => (&expr[..o], &expr[o + 1..c]),
        _ => {
            return Err(CliError::usage(format!(
                "derive expression '{expr}': expected sqrt(col), square(col), prod(a,b) or const(v)"
            )))
        }
    };
    match func {
        "sqrt" => Ok(DeriveExpr::Sqrt(inner.trim().to_string())),
        "square" => Ok(DeriveExpr::Square(inner.trim().to_string())),
        "prod" => {
            let (a, b) = inner.split_once(',').ok_or_else(|| {
                CliError::usage(format!("derive expression '{expr}': prod needs two columns"))
            })?;
            Ok(DeriveExpr::Prod(a.trim().to_string(), b.trim().to_string()))
        }
        "const" => {
            let v: f64 = inner
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("derive expression '{expr}': bad constant")))?;
            Ok(DeriveExpr::Const(v))
        }
        other => Err(CliError::usage(format!(
            "derive expression '{expr}': unknown function '{other}'"
        ))),
    }
}

/// Column-oriented view of a parsed CSV file plus derived columns.
#[derive(Debug)]
pub struct Table {
    pub n_rows: usize,
    columns: BTreeMap<String, Vec<Option<f64>>>,
    /// Raw text per column, for group labels.
    raw: BTreeMap<String, Vec<String>>,
}

fn parse_cell(text: &str) -> Result<Option<f64>, ()> {
    let t = text.trim();
    if t.is_empty() || matches!(t, "NA" | "na" | "NaN" | "nan" | "null" | "NULL") {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| ())
}

pub fn load_csv(path: &Path) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::io(format!("bad header row: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    {
        let mut seen = std::collections::BTreeSet::new();
        for h in &headers {
            if !seen.insert(h.clone()) {
                return Err(CliError::usage(format!("duplicate column name '{h}' in header")));
            }
        }
    }

    let mut columns: BTreeMap<String, Vec<Option<f64>>> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    let mut raw: BTreeMap<String, Vec<String>> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    let mut n_rows = 0;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(format!("row {}: {e}", row_idx + 2)))?;
        if record.len() != headers.len() {
            return Err(CliError::io(format!(
                "row {}: expected {} fields, got {}",
                row_idx + 2,
                headers.len(),
                record.len()
            )));
        }
        for (h, cell) in headers.iter().zip(record.iter()) {
            let value = parse_cell(cell).map_err(|_| {
                CliError::io(format!(
                    "row {}: column '{h}': cannot parse '{cell}' as a number",
                    row_idx + 2
                ))
            })?;
            columns.get_mut(h).unwrap().push(value);
            raw.get_mut(h).unwrap().push(cell.trim().to_string());
        }
        n_rows += 1;
    }
    Ok(Table {
        n_rows,
        columns,
        raw,
    })
}

impl Table {
    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>], CliError> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| CliError::usage(format!("column '{name}' not found")))
    }

    pub fn raw_column(&self, name: &str) -> Result<&[String], CliError> {
        self.raw
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| CliError::usage(format!("column '{name}' not found")))
    }

    pub fn apply_derives(&mut self, derives: &[DeriveSpec]) -> Result<(), CliError> {
        for d in derives {
            if self.columns.contains_key(&d.name) {
                return Err(CliError::usage(format!(
                    "derived column '{}' clashes with an existing column",
                    d.name
                )));
            }
            let expr = parse_expr(&d.expr)?;
            let values: Vec<Option<f64>> = match expr {
                DeriveExpr::Sqrt(col) => self
                    .column(&col)?
                    .iter()
                    .map(|v| v.map(f64::sqrt))
                    .collect(),
                DeriveExpr::Square(col) => self
                    .column(&col)?
                    .iter()
                    .map(|v| v.map(|x| x * x))
                    .collect(),
                DeriveExpr::Prod(a, b) => {
                    let ca = self.column(&a)?.to_vec();
                    let cb = self.column(&b)?.to_vec();
                    ca.iter()
                        .zip(cb.iter())
                        .map(|(x, y)| match (x, y) {
                            (Some(x), Some(y)) => Some(x * y),
                            _ => None,
                        })
                        .collect()
                }
                DeriveExpr::Const(v) => vec![Some(v); self.n_rows],
            };
            let raw: Vec<String> = values
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
                .collect();
            self.columns.insert(d.name.clone(), values);
            self.raw.insert(d.name.clone(), raw);
        }
        Ok(())
    }
}

/// The columns a model run consumes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub y: Vec<String>,
    pub x: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derive: Vec<DeriveSpec>,
}

impl ColumnSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.y.is_empty() {
            return Err(CliError::usage("--y needs at least one response column"));
        }
        if self.x.is_empty() {
            return Err(CliError::usage("--x needs at least one regressor column"));
        }
        for list in [&self.y, &self.x].into_iter().chain(self.w.iter()) {
            let mut seen = std::collections::BTreeSet::new();
            for name in list {
                if !seen.insert(name) {
                    return Err(CliError::usage(format!("duplicate column name '{name}'")));
                }
            }
        }
        for name in self.x.iter().chain(self.w.iter().flatten()) {
            if self.y.contains(name) {
                return Err(CliError::usage(format!(
                    "column '{name}' cannot be both a response and a regressor"
                )));
            }
        }
        Ok(())
    }

    fn used_columns(&self) -> Vec<&String> {
        self.y
            .iter()
            .chain(self.x.iter())
            .chain(self.w.iter().flatten())
            .collect()
    }
}

/// The dataset extracted from a table, with the surviving row indices and
/// the number of dropped rows.
pub struct Extracted {
    pub dataset: Dataset64,
    pub kept_rows: Vec<usize>,
    pub dropped_rows: usize,
}

/// Builds the dataset; `extra_required` columns (e.g. a grouping column)
/// participate in missing-row dropping without entering the design.
pub fn build_dataset(
    table: &Table,
    spec: &ColumnSpec,
    extra_required: &[String],
) -> Result<Extracted, CliError> {
    spec.validate()?;
    for name in spec.used_columns() {
        if !table.has_column(name) {
            return Err(CliError::usage(format!("column '{name}' not found in CSV")));
        }
    }
    for name in extra_required {
        if !table.has_column(name) {
            return Err(CliError::usage(format!("column '{name}' not found in CSV")));
        }
    }

    let mut kept_rows = Vec::new();
    'rows: for i in 0..table.n_rows {
        for name in spec.used_columns() {
            if table.column(name)?[i].is_none() {
                continue 'rows;
            }
        }
        for name in extra_required {
            if table.column(name)?[i].is_none() {
                continue 'rows;
            }
        }
        kept_rows.push(i);
    }
    let dropped_rows = table.n_rows - kept_rows.len();
    if kept_rows.is_empty() {
        return Err(CliError::io("no usable rows after dropping missing values"));
    }

    let gather = |names: &[String]| -> Result<Mat64, CliError> {
        let mut m = Mat64::zeros(kept_rows.len(), names.len());
        for (j, name) in names.iter().enumerate() {
            let col = table.column(name)?;
            for (r, &i) in kept_rows.iter().enumerate() {
                m[(r, j)] = col[i].expect("missing rows were dropped");
            }
        }
        Ok(m)
    };

    let y = gather(&spec.y)?;
    let x = gather(&spec.x)?;
    let w = match &spec.w {
        Some(cols) => Some(gather(cols)?),
        None => None,
    };
    let dataset = Dataset64::new(y, x, w).map_err(CliError::from)?;
    Ok(Extracted {
        dataset,
        kept_rows,
        dropped_rows,
    })
}
