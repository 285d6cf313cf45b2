//! Turns a role-tagged dataset into a numeric design matrix organized into
//! named blocks (intercept, controls, treatments, subgroup main effects,
//! treatment-by-subgroup interactions).
//!
//! Coding conventions:
//! - binary treatments become -1/2 (lower raw level) and +1/2 (higher), so a
//!   treatment coefficient is the full between-groups contrast;
//! - continuous treatments are rescaled to [0, 1] by their declared maximum;
//! - subgroup indicators are centered: members get `1 - rho`, non-members
//!   `-rho`, where `rho` is the membership share, so every coded subgroup
//!   column sums to zero and main treatment effects stay sample-average
//!   effects when interactions enter;
//! - continuous controls are standardized (the scaling is recorded so
//!   reports can restore the raw scale), categorical controls expand into
//!   reference-coded indicator columns.
//!
//! Blocks carry heredity edges: an interaction block lists its treatment and
//! the subgroup main-effect blocks as parents, and the model space only
//! visits models where every included block's parents are included too.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{ControlKind, Dataset, TreatmentCoding};
use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};
use crate::scalar::Real;

/// What a design block represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Intercept,
    Control,
    Treatment,
    SubgroupMain,
    Interaction,
}

/// A named group of design columns that enters or leaves models as a unit.
#[derive(Debug, Clone)]
pub struct DesignBlock {
    pub name: String,
    pub kind: BlockKind,
    /// Column indices into the design matrix.
    pub columns: Vec<usize>,
    /// Indices of blocks that must be included whenever this block is.
    pub parents: Vec<usize>,
}

/// Options for [`build_design`].
#[derive(Debug, Clone, Copy)]
pub struct DesignOptions {
    /// Build treatment-by-subgroup interaction blocks.
    pub interactions: bool,
    /// Give interaction blocks heredity parents. With this off, interactions
    /// can enter models without their main effects.
    pub heredity: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            interactions: true,
            heredity: true,
        }
    }
}

/// Fully coded design: the matrix, its column names, the block structure,
/// and the bookkeeping needed to report on the raw scale.
#[derive(Debug, Clone)]
pub struct CodedDesign<T: Real> {
    pub matrix: DMatrix<T>,
    pub column_names: Vec<String>,
    pub blocks: Vec<DesignBlock>,
    /// `(column index, mean, sd)` for each standardized control column.
    pub scalings: Vec<(usize, T, T)>,
    /// `(subgroup name, membership share)` in schema order.
    pub subgroup_shares: Vec<(String, T)>,
}

impl<T: Real> CodedDesign<T> {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    /// The block owning a given column.
    pub fn block_of_column(&self, col: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.columns.contains(&col))
            .expect("every design column belongs to a block")
    }

    pub fn blocks_of_kind(&self, kind: BlockKind) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Design column of a (single-column) treatment block.
    pub fn treatment_column(&self, name: &str) -> Result<usize> {
        let idx = self
            .block_index(name)
            .ok_or_else(|| Error::Config(format!("no design block named `{name}`")))?;
        let block = &self.blocks[idx];
        if block.kind != BlockKind::Treatment {
            return Err(Error::Config(format!("block `{name}` is not a treatment")));
        }
        Ok(block.columns[0])
    }

    /// Interaction block belonging to a treatment, if interactions were built.
    pub fn interaction_block_of(&self, treatment: &str) -> Option<usize> {
        // Match on the `treatment:` name prefix rather than `parents`, which
        // is empty when heredity is disabled.
        let prefix = format!("{treatment}:");
        self.blocks
            .iter()
            .position(|b| b.kind == BlockKind::Interaction && b.name.starts_with(&prefix))
    }

    /// Centered code a subgroup member (or non-member) carries, from the
    /// stored membership share.
    pub fn subgroup_code(&self, subgroup: &str, member: bool) -> Result<T> {
        let (_, rho) = self
            .subgroup_shares
            .iter()
            .find(|(name, _)| name == subgroup)
            .ok_or_else(|| Error::Config(format!("no subgroup named `{subgroup}`")))?;
        Ok(if member { T::one() - *rho } else { -*rho })
    }

    /// Undo control standardization: the coefficient a raw-scale regressor
    /// would have carried. Columns without a recorded scaling pass through.
    pub fn raw_scale_coefficient(&self, col: usize, coef: T) -> T {
        match self.scalings.iter().find(|(c, _, _)| *c == col) {
            Some((_, _, sd)) => coef / *sd,
            None => coef,
        }
    }
}

/// Center a 0/1 membership column: members get `1 - rho`, non-members
/// `-rho`. Errors if the column is not binary or has only one level.
/// Returns the coded column and the membership share `rho`.
pub fn code_subgroup<T: Real>(membership: &[T], name: &str) -> Result<(Vec<T>, T)> {
    let n = membership.len();
    let mut members = 0usize;
    for &v in membership {
        if v == T::one() {
            members += 1;
        } else if v != T::zero() {
            return Err(Error::Domain {
                column: name.to_string(),
                message: format!("subgroup values must be 0/1, found {}", v.as_f64()),
            });
        }
    }
    if members == 0 || members == n {
        return Err(Error::DegenerateSubgroup(name.to_string()));
    }
    let rho = T::of_usize(members) / T::of_usize(n);
    let coded = membership
        .iter()
        .map(|&v| if v == T::one() { T::one() - rho } else { -rho })
        .collect();
    Ok((coded, rho))
}

/// Code a raw treatment column per its declared coding.
pub fn code_treatment<T: Real>(raw: &[T], coding: TreatmentCoding, name: &str) -> Result<Vec<T>> {
    match coding {
        TreatmentCoding::Binary => {
            let mut lo = None;
            let mut hi = None;
            for &v in raw {
                match (lo, hi) {
                    (None, _) => lo = Some(v),
                    (Some(a), None) if v != a => {
                        if v < a {
                            hi = Some(a);
                            lo = Some(v);
                        } else {
                            hi = Some(v);
                        }
                    }
                    (Some(a), Some(b)) if v != a && v != b => {
                        return Err(Error::Domain {
                            column: name.to_string(),
                            message: format!(
                                "binary treatment has more than two levels ({}, {}, {}, ...)",
                                a.as_f64(),
                                b.as_f64(),
                                v.as_f64()
                            ),
                        })
                    }
                    _ => {}
                }
            }
            let (lo, hi) = match (lo, hi) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Domain {
                        column: name.to_string(),
                        message: "binary treatment needs exactly two observed levels".into(),
                    })
                }
            };
            debug_assert!(lo < hi);
            let half = T::of_f64(0.5);
            Ok(raw
                .iter()
                .map(|&v| if v == lo { -half } else { half })
                .collect())
        }
        TreatmentCoding::Continuous { max } => {
            let max_t = T::of_f64(max);
            for &v in raw {
                if v < T::zero() || v > max_t {
                    return Err(Error::Domain {
                        column: name.to_string(),
                        message: format!(
                            "dose {} outside the declared range [0, {max}]",
                            v.as_f64()
                        ),
                    });
                }
            }
            Ok(raw.iter().map(|&v| v / max_t).collect())
        }
        TreatmentCoding::Raw => Ok(raw.to_vec()),
    }
}

/// Standardize a continuous column to mean zero, unit sample standard
/// deviation. Returns `(standardized, mean, sd)`; a (numerically) constant
/// column is an error.
pub fn standardize<T: Real>(values: &[T], name: &str) -> Result<(Vec<T>, T, T)> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            n: values.len(),
            k: 2,
        });
    }
    let mean = crate::stats::mean(values);
    let sd = crate::stats::sd_sample(values);
    if sd <= T::default_epsilon().sqrt() * (mean.abs() + T::one()) {
        return Err(Error::Domain {
            column: name.to_string(),
            message: "control column is constant; remove it or drop the role".into(),
        });
    }
    let coded = values.iter().map(|&v| (v - mean) / sd).collect();
    Ok((coded, mean, sd))
}

fn format_level(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 && v.abs() < 1e15 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v}")
    }
}

/// Expand a categorical column into indicator columns, one per level beyond
/// the smallest (which becomes the reference).
pub fn expand_categorical<T: Real>(values: &[T], name: &str) -> Result<Vec<(String, Vec<T>)>> {
    let mut levels: Vec<T> = Vec::new();
    for &v in values {
        if !levels.contains(&v) {
            levels.push(v);
        }
    }
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite levels"));
    if levels.len() < 2 {
        return Err(Error::Domain {
            column: name.to_string(),
            message: "categorical control has a single level".into(),
        });
    }
    const MAX_LEVELS: usize = 30;
    if levels.len() > MAX_LEVELS {
        return Err(Error::Config(format!(
            "categorical control `{name}` has {} levels (limit {MAX_LEVELS}); \
             declare it continuous if it is a measurement",
            levels.len()
        )));
    }
    Ok(levels[1..]
        .iter()
        .map(|&level| {
            let col = values
                .iter()
                .map(|&v| if v == level { T::one() } else { T::zero() })
                .collect();
            (format!("{name}[{}]", format_level(level.as_f64())), col)
        })
        .collect())
}

/// Build the coded design for a dataset. Column order is deterministic:
/// intercept, controls (schema order, categoricals expanded), treatments,
/// subgroup main effects, then one interaction block per treatment crossing
/// it with every subgroup. The full design must have column rank `p`;
/// otherwise the offending block is named.
pub fn build_design<T: Real>(
    dataset: &Dataset<T>,
    options: &DesignOptions,
) -> Result<CodedDesign<T>> {
    let schema = dataset.schema();
    let n = dataset.n();

    let mut cols: Vec<Vec<T>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut blocks: Vec<DesignBlock> = Vec::new();
    let mut scalings = Vec::new();
    let mut subgroup_shares = Vec::new();

    cols.push(vec![T::one(); n]);
    names.push("intercept".into());
    blocks.push(DesignBlock {
        name: "intercept".into(),
        kind: BlockKind::Intercept,
        columns: vec![0],
        parents: Vec::new(),
    });

    for spec in &schema.controls {
        let raw = dataset.column(&spec.name)?;
        let start = cols.len();
        match spec.kind {
            ControlKind::Continuous => {
                let (coded, mean, sd) = standardize(raw, &spec.name)?;
                scalings.push((start, mean, sd));
                cols.push(coded);
                names.push(spec.name.clone());
            }
            ControlKind::Categorical => {
                for (col_name, col) in expand_categorical(raw, &spec.name)? {
                    names.push(col_name);
                    cols.push(col);
                }
            }
        }
        blocks.push(DesignBlock {
            name: spec.name.clone(),
            kind: BlockKind::Control,
            columns: (start..cols.len()).collect(),
            parents: Vec::new(),
        });
    }

    let mut treatment_blocks = Vec::new();
    for spec in &schema.treatments {
        let raw = dataset.column(&spec.name)?;
        let coded = code_treatment(raw, spec.coding, &spec.name)?;
        let col = cols.len();
        cols.push(coded);
        names.push(spec.name.clone());
        treatment_blocks.push(blocks.len());
        blocks.push(DesignBlock {
            name: spec.name.clone(),
            kind: BlockKind::Treatment,
            columns: vec![col],
            parents: Vec::new(),
        });
    }

    let mut subgroup_blocks = Vec::new();
    for name in &schema.subgroups {
        let raw = dataset.column(name)?;
        let (coded, rho) = code_subgroup(raw, name)?;
        subgroup_shares.push((name.clone(), rho));
        let col = cols.len();
        cols.push(coded);
        names.push(name.clone());
        subgroup_blocks.push(blocks.len());
        blocks.push(DesignBlock {
            name: name.clone(),
            kind: BlockKind::SubgroupMain,
            columns: vec![col],
            parents: Vec::new(),
        });
    }

    if options.interactions && !subgroup_blocks.is_empty() {
        let joined = schema.subgroups.join("+");
        for (&t_block, t_spec) in treatment_blocks.iter().zip(&schema.treatments) {
            let t_col = blocks[t_block].columns[0];
            let start = cols.len();
            for (&g_block, g_name) in subgroup_blocks.iter().zip(&schema.subgroups) {
                let g_col = blocks[g_block].columns[0];
                let col: Vec<T> = (0..n).map(|i| cols[t_col][i] * cols[g_col][i]).collect();
                cols.push(col);
                names.push(format!("{}:{}", t_spec.name, g_name));
            }
            let parents = if options.heredity {
                let mut v = vec![t_block];
                v.extend_from_slice(&subgroup_blocks);
                v
            } else {
                Vec::new()
            };
            blocks.push(DesignBlock {
                name: format!("{}:{}", t_spec.name, joined),
                kind: BlockKind::Interaction,
                columns: (start..cols.len()).collect(),
                parents,
            });
        }
    }

    let p = cols.len();
    if n < p {
        return Err(Error::InsufficientData { n, k: p });
    }
    let matrix = DMatrix::from_fn(n, p, |i, j| cols[j][i]);

    // Whole-design rank check; a collapsed pivot names the block whose
    // column is linearly dependent on the columns before it.
    let g = linalg::gram(&matrix);
    if let Err(col) = SpdFactor::new(&g) {
        let owner = blocks
            .iter()
            .find(|b| b.columns.contains(&col))
            .expect("column has an owner");
        return Err(Error::Collinear {
            block: owner.name.clone(),
        });
    }

    Ok(CodedDesign {
        matrix,
        column_names: names,
        blocks,
        scalings,
        subgroup_shares,
    })
}

/// Outcome column as a vector, checked to exist and be an outcome.
pub fn response<T: Real>(dataset: &Dataset<T>, outcome: &str) -> Result<DVector<T>> {
    dataset.schema().outcome_family(outcome)?;
    let y = dataset.column(outcome)?;
    Ok(DVector::from_column_slice(y))
}
