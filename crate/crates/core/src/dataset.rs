//! Column-oriented dataset plus the role schema that says which columns are
//! outcomes, treatments, controls, and subgroup indicators.
//!
//! Loading is strict: rows with an empty cell in any used column are dropped
//! (and counted), anything unparseable is a hard error naming the row and
//! column, and binary-role columns must be exactly 0/1.

use std::fmt;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Outcome distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gaussian => write!(f, "gaussian"),
            Family::Binomial => write!(f, "binomial"),
        }
    }
}

/// How a raw treatment column is turned into a design column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreatmentCoding {
    /// Two-level treatment, coded -1/2 (lower raw value) and +1/2 (higher).
    Binary,
    /// Dose on `[0, max]`, rescaled to `[0, 1]` by dividing by `max`.
    Continuous { max: f64 },
    /// Use the column as-is (already on a meaningful scale).
    Raw,
}

/// How a control column enters the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    /// Standardized to mean zero, unit sample standard deviation.
    Continuous,
    /// Expanded into indicator columns, smallest level as reference.
    Categorical,
}

#[derive(Debug, Clone)]
pub struct OutcomeSpec {
    pub name: String,
    pub family: Family,
}

#[derive(Debug, Clone)]
pub struct TreatmentSpec {
    pub name: String,
    pub coding: TreatmentCoding,
}

#[derive(Debug, Clone)]
pub struct ControlSpec {
    pub name: String,
    pub kind: ControlKind,
}

/// Role assignment for every column the analysis uses.
#[derive(Debug, Clone, Default)]
pub struct Schema {
    pub outcomes: Vec<OutcomeSpec>,
    pub treatments: Vec<TreatmentSpec>,
    pub controls: Vec<ControlSpec>,
    pub subgroups: Vec<String>,
}

impl Schema {
    /// Every column name the schema references, in role order.
    pub fn used_columns(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        names.extend(self.outcomes.iter().map(|o| o.name.as_str()));
        names.extend(self.treatments.iter().map(|t| t.name.as_str()));
        names.extend(self.controls.iter().map(|c| c.name.as_str()));
        names.extend(self.subgroups.iter().map(|s| s.as_str()));
        names
    }

    pub fn outcome_family(&self, name: &str) -> Result<Family> {
        self.outcomes
            .iter()
            .find(|o| o.name == name)
            .map(|o| o.family)
            .ok_or_else(|| Error::Config(format!("`{name}` is not an outcome column")))
    }

    fn validate(&self) -> Result<()> {
        if self.outcomes.is_empty() {
            return Err(Error::Config("schema needs at least one outcome".into()));
        }
        if self.treatments.is_empty() {
            return Err(Error::Config("schema needs at least one treatment".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in self.used_columns() {
            if !seen.insert(name.to_string()) {
                return Err(Error::Config(format!(
                    "column `{name}` is assigned more than one role"
                )));
            }
        }
        for t in &self.treatments {
            if let TreatmentCoding::Continuous { max } = t.coding {
                if !(max > 0.0) || !max.is_finite() {
                    return Err(Error::Config(format!(
                        "treatment `{}`: continuous coding needs a positive finite max, got {max}",
                        t.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// In-memory dataset: named columns of equal length plus the role schema.
#[derive(Debug, Clone)]
pub struct Dataset<T: Real> {
    n: usize,
    columns: IndexMap<String, Vec<T>>,
    schema: Schema,
    dropped_rows: usize,
}

impl<T: Real> Dataset<T> {
    /// Build a dataset from already-parsed columns. Column order is
    /// preserved; all schema columns must be present and equally long.
    pub fn from_columns(columns: Vec<(String, Vec<T>)>, schema: Schema) -> Result<Self> {
        schema.validate()?;
        let mut map = IndexMap::new();
        for (name, values) in columns {
            if map.insert(name.clone(), values).is_some() {
                return Err(Error::Config(format!("duplicate column `{name}`")));
            }
        }
        let ds = Dataset {
            n: map.values().next().map_or(0, Vec::len),
            columns: map,
            schema,
            dropped_rows: 0,
        };
        ds.check_contents()?;
        Ok(ds)
    }

    /// Load the schema's columns from a headered CSV file. Rows with an
    /// empty cell in a used column are dropped and counted; unparseable or
    /// non-finite cells are hard errors.
    pub fn load_csv<P: AsRef<Path>>(path: P, schema: Schema) -> Result<Self> {
        schema.validate()?;
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader.headers()?.clone();
        let used: Vec<String> = schema.used_columns().iter().map(|s| s.to_string()).collect();
        let mut positions = Vec::with_capacity(used.len());
        for name in &used {
            match headers.iter().position(|h| h == name) {
                Some(i) => positions.push(i),
                None => {
                    return Err(Error::Config(format!(
                        "column `{name}` not found in {}; header has: {}",
                        path.display(),
                        headers.iter().collect::<Vec<_>>().join(", ")
                    )))
                }
            }
        }

        let mut data: Vec<Vec<T>> = vec![Vec::new(); used.len()];
        let mut dropped = 0usize;
        for (rec_idx, record) in reader.records().enumerate() {
            let record = record?;
            let row = rec_idx + 1; // 1-based data row, header not counted
            let cells: Vec<&str> = positions
                .iter()
                .map(|&i| record.get(i).unwrap_or(""))
                .collect();
            if cells.iter().any(|c| c.is_empty()) {
                dropped += 1;
                continue;
            }
            for (slot, (cell, name)) in cells.iter().zip(&used).enumerate() {
                let value: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: name.clone(),
                    value: cell.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: name.clone(),
                        value: cell.to_string(),
                    });
                }
                data[slot].push(T::of_f64(value));
            }
        }

        let n = data.first().map_or(0, Vec::len);
        let columns: IndexMap<String, Vec<T>> = used.into_iter().zip(data).collect();
        let ds = Dataset {
            n,
            columns,
            schema,
            dropped_rows: dropped,
        };
        ds.check_contents()?;
        Ok(ds)
    }

    fn check_contents(&self) -> Result<()> {
        for name in self.schema.used_columns() {
            if !self.columns.contains_key(name) {
                return Err(Error::Config(format!("schema column `{name}` missing")));
            }
        }
        for (name, values) in &self.columns {
            if values.len() != self.n {
                return Err(Error::Dimension(format!(
                    "column `{name}` has {} rows, expected {}",
                    values.len(),
                    self.n
                )));
            }
            for &v in values {
                if !v.is_finite() {
                    return Err(Error::Domain {
                        column: name.clone(),
                        message: "contains a non-finite value".into(),
                    });
                }
            }
        }
        if self.n == 0 {
            return Err(Error::Config("dataset has no usable rows".into()));
        }
        for o in &self.schema.outcomes {
            if o.family == Family::Binomial {
                self.require_binary(&o.name)?;
            }
        }
        for s in &self.schema.subgroups {
            self.require_binary(s)?;
        }
        Ok(())
    }

    fn require_binary(&self, name: &str) -> Result<()> {
        for &v in self.column(name)? {
            if v != T::zero() && v != T::one() {
                return Err(Error::Domain {
                    column: name.to_string(),
                    message: format!("must be 0/1, found {}", v.as_f64()),
                });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Rows dropped during CSV loading because of missing cells.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn column(&self, name: &str) -> Result<&[T]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("no column named `{name}`")))
    }
}
