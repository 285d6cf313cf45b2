//! Classical specification-curve baseline: fit every specification with
//! equal standing, summarize the curve (median effect, dominant-direction
//! significance share, mean standardized effect), and test the median
//! against a null built by permutation or by a null-imposing bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{ControlKind, Dataset, Family, Schema};
use crate::design;
use crate::error::{Error, Result};
use crate::glm;
use crate::linalg;
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Real;
use crate::stats;

/// One specification: an outcome, a treatment, and the controls kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecDef {
    pub outcome: String,
    pub treatment: String,
    pub controls: Vec<String>,
}

impl SpecDef {
    pub fn label(&self) -> String {
        if self.controls.is_empty() {
            format!("{} ~ {}", self.outcome, self.treatment)
        } else {
            format!("{} ~ {} + {}", self.outcome, self.treatment, self.controls.join(" + "))
        }
    }
}

/// The conventional lattice for one outcome: every treatment crossed with
/// every subset of the declared controls (subsets in bitmask order).
pub fn standard_specs(schema: &Schema, outcome: &str) -> Vec<SpecDef> {
    let controls: Vec<&str> = schema.controls.iter().map(|c| c.name.as_str()).collect();
    let mut specs = Vec::new();
    for t in &schema.treatments {
        for mask in 0u32..(1 << controls.len()) {
            let kept: Vec<String> = controls
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| c.to_string())
                .collect();
            specs.push(SpecDef {
                outcome: outcome.to_string(),
                treatment: t.name.clone(),
                controls: kept,
            });
        }
    }
    specs
}

/// A fitted specification.
#[derive(Debug, Clone)]
pub struct SpecEstimate<T: Real> {
    pub index: usize,
    pub label: String,
    pub outcome: String,
    pub treatment: String,
    pub controls: Vec<String>,
    pub estimate: T,
    pub se: T,
    pub z: T,
    pub p_value: T,
    /// Two-sided p below 0.05.
    pub significant: bool,
}

/// The fitted curve and its summaries.
#[derive(Debug, Clone)]
pub struct SpecCurve<T: Real> {
    pub estimates: Vec<SpecEstimate<T>>,
    /// `(spec index, reason)` for specifications that failed to fit.
    pub failures: Vec<(usize, String)>,
    pub median: T,
    /// Share of fitted specs significant in the median's direction.
    pub share_significant_dominant: T,
    pub mean_z: T,
}

impl<T: Real> SpecCurve<T> {
    /// Indices into `estimates` ordered by ascending estimate (the curve's
    /// display order), ties broken by spec index.
    pub fn sorted_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.estimates.len()).collect();
        order.sort_by(|&a, &b| {
            self.estimates[a]
                .estimate
                .partial_cmp(&self.estimates[b].estimate)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
    }
}

struct BuiltSpec<T: Real> {
    index: usize,
    x: DMatrix<T>,
    y: DVector<T>,
    family: Family,
}

impl<T: Real> BuiltSpec<T> {
    fn treatment_col(&self) -> usize {
        self.x.ncols() - 1
    }

    fn fit_estimate(&self) -> Result<glm::GlmFit<T>> {
        glm::fit(&self.y, &self.x, self.family)
    }
}

/// Code one specification's design: intercept, controls (standardized or
/// expanded), treatment last.
fn build_spec<T: Real>(dataset: &Dataset<T>, spec: &SpecDef, index: usize) -> Result<BuiltSpec<T>> {
    let schema = dataset.schema();
    let family = schema.outcome_family(&spec.outcome)?;
    let y = design::response(dataset, &spec.outcome)?;
    let n = dataset.n();

    let mut cols: Vec<Vec<T>> = vec![vec![T::one(); n]];
    for name in &spec.controls {
        let kind = schema
            .controls
            .iter()
            .find(|c| &c.name == name)
            .map(|c| c.kind)
            .ok_or_else(|| Error::Config(format!("`{name}` is not a declared control")))?;
        let raw = dataset.column(name)?;
        match kind {
            ControlKind::Continuous => {
                let (coded, _, _) = design::standardize(raw, name)?;
                cols.push(coded);
            }
            ControlKind::Categorical => {
                for (_, col) in design::expand_categorical(raw, name)? {
                    cols.push(col);
                }
            }
        }
    }
    let t_spec = schema
        .treatments
        .iter()
        .find(|t| t.name == spec.treatment)
        .ok_or_else(|| Error::Config(format!("`{}` is not a declared treatment", spec.treatment)))?;
    cols.push(design::code_treatment(
        dataset.column(&spec.treatment)?,
        t_spec.coding,
        &spec.treatment,
    )?);

    let p = cols.len();
    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    Ok(BuiltSpec {
        index,
        x,
        y,
        family,
    })
}

fn summarize<T: Real>(
    estimates: Vec<SpecEstimate<T>>,
    failures: Vec<(usize, String)>,
) -> Result<SpecCurve<T>> {
    if estimates.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let values: Vec<T> = estimates.iter().map(|e| e.estimate).collect();
    let median = stats::median(&values);
    let direction = if median > T::zero() {
        T::one()
    } else if median < T::zero() {
        -T::one()
    } else {
        T::zero()
    };
    let dominant = estimates
        .iter()
        .filter(|e| {
            e.significant
                && direction != T::zero()
                && (e.estimate * direction) > T::zero()
        })
        .count();
    let share = T::of_usize(dominant) / T::of_usize(estimates.len());
    let mean_z = stats::mean(&estimates.iter().map(|e| e.z).collect::<Vec<_>>());
    Ok(SpecCurve {
        estimates,
        failures,
        median,
        share_significant_dominant: share,
        mean_z,
    })
}

/// Fit every specification. Individual failures (separation, collinearity)
/// are recorded and skipped; an entirely failed curve is an error.
pub fn run_curve<T: Real>(dataset: &Dataset<T>, specs: &[SpecDef]) -> Result<SpecCurve<T>> {
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (index, spec) in specs.iter().enumerate() {
        let built = match build_spec(dataset, spec, index) {
            Ok(b) => b,
            Err(e) => {
                failures.push((index, e.to_string()));
                continue;
            }
        };
        match built.fit_estimate() {
            Ok(fit) => {
                let col = built.treatment_col();
                let estimate = fit.coefficients[col];
                let se = fit.se(col);
                let z = estimate / se;
                let p_value = stats::two_sided_p(z);
                estimates.push(SpecEstimate {
                    index,
                    label: spec.label(),
                    outcome: spec.outcome.clone(),
                    treatment: spec.treatment.clone(),
                    controls: spec.controls.clone(),
                    estimate,
                    se,
                    z,
                    p_value,
                    significant: p_value < T::of_f64(0.05),
                });
            }
            Err(e) => failures.push((index, e.to_string())),
        }
    }
    summarize(estimates, failures)
}

/// How the null distribution of the curve median is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    /// Re-fit the curve after permuting the treatment assignment (one
    /// shared row permutation per draw across all specifications).
    Permutation,
    /// Subtract each specification's fitted treatment effect from its
    /// response, then re-fit on paired row resamples (Gaussian outcomes
    /// only).
    NullBootstrap,
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestMethod::Permutation => write!(f, "permutation"),
            TestMethod::NullBootstrap => write!(f, "null_bootstrap"),
        }
    }
}

/// Result of the median test.
#[derive(Debug, Clone)]
pub struct MedianTest<T: Real> {
    pub method: TestMethod,
    pub draws: usize,
    /// Draws that produced a usable median (at least one spec refit).
    pub effective_draws: usize,
    pub observed_median: T,
    pub null_medians: Vec<T>,
    /// `(1 + #{|null| >= |observed|}) / (effective draws + 1)`.
    pub p_value: T,
    pub seed: u64,
}

/// Test "the median specification effect is zero" by resampling.
pub fn median_test<T: Real>(
    dataset: &Dataset<T>,
    specs: &[SpecDef],
    method: TestMethod,
    draws: usize,
    seed: u64,
) -> Result<MedianTest<T>> {
    if draws == 0 {
        return Err(Error::Config("median test needs at least one draw".into()));
    }
    let mut built = Vec::new();
    for (index, spec) in specs.iter().enumerate() {
        if let Ok(b) = build_spec(dataset, spec, index) {
            built.push(b);
        }
    }
    // Observed estimates; specs that fail here stay out of the null refits
    // too, so observed and null medians cover the same set.
    let mut observed = Vec::new();
    let mut fits = Vec::new();
    let mut kept = Vec::new();
    for b in built {
        match b.fit_estimate() {
            Ok(fit) => {
                observed.push(fit.coefficients[b.treatment_col()]);
                fits.push(fit);
                kept.push(b);
            }
            Err(_) => {}
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let observed_median = stats::median(&observed);

    if method == TestMethod::NullBootstrap {
        if let Some(b) = kept.iter().find(|b| b.family != Family::Gaussian) {
            return Err(Error::Unsupported(format!(
                "the null-imposing bootstrap requires Gaussian outcomes; spec {} is binomial",
                b.index
            )));
        }
    }

    // Null-imposed responses for the bootstrap: y minus the fitted
    // treatment contribution, spec by spec.
    let null_responses: Vec<DVector<T>> = kept
        .iter()
        .zip(&fits)
        .map(|(b, fit)| {
            let col = b.treatment_col();
            let beta = fit.coefficients[col];
            let mut y = b.y.clone();
            for i in 0..y.len() {
                y[i] -= beta * b.x[(i, col)];
            }
            y
        })
        .collect();

    let n = dataset.n();
    let null_medians: Vec<Option<T>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng_from(derive_seed(seed, d as u64));
            let mut ests: Vec<T> = Vec::with_capacity(kept.len());
            match method {
                TestMethod::Permutation => {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    for b in &kept {
                        let col = b.treatment_col();
                        let mut x = b.x.clone();
                        for i in 0..n {
                            x[(i, col)] = b.x[(perm[i], col)];
                        }
                        if let Ok(fit) = glm::fit(&b.y, &x, b.family) {
                            ests.push(fit.coefficients[col]);
                        }
                    }
                }
                TestMethod::NullBootstrap => {
                    let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                    for (b, y0) in kept.iter().zip(&null_responses) {
                        let x = linalg::select_rows(&b.x, &idx);
                        let y = DVector::from_iterator(n, idx.iter().map(|&i| y0[i]));
                        if let Ok(fit) = glm::fit(&y, &x, b.family) {
                            ests.push(fit.coefficients[b.treatment_col()]);
                        }
                    }
                }
            }
            if ests.is_empty() {
                None
            } else {
                Some(stats::median(&ests))
            }
        })
        .collect();

    let null_medians: Vec<T> = null_medians.into_iter().flatten().collect();
    let effective_draws = null_medians.len();
    if effective_draws == 0 {
        return Err(Error::EmptyCurve);
    }
    let exceed = null_medians
        .iter()
        .filter(|m| m.abs() >= observed_median.abs())
        .count();
    let p_value = T::of_usize(1 + exceed) / T::of_usize(effective_draws + 1);
    Ok(MedianTest {
        method,
        draws,
        effective_draws,
        observed_median,
        null_medians,
        p_value,
        seed,
    })
}
