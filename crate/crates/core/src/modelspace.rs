//! The specification lattice: every subset of free design blocks that
//! respects heredity, scored by the extended BIC and weighted for model
//! averaging.
//!
//! A model is identified by a bitmask over the free blocks. Forced blocks
//! (always including the intercept) appear in every model and drop out of
//! the EBIC penalty, which counts free parameters only:
//!
//! `ebic = -2 loglik + k_free ln n + 2 gamma ln C(p_free, k_free)`
//!
//! where `k_free` is the number of included free-block columns and `p_free`
//! the total number of free-block columns. Weights are proportional to
//! `exp(-ebic/2)`, normalized over the set of scored models — the whole
//! lattice under enumeration, every state scored during the run under Gibbs.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::Family;
use crate::design::CodedDesign;
use crate::error::{Error, Result};
use crate::glm::{self, GlmFit, LogisticOptions};
use crate::linalg;
use crate::rng::rng_from;
use crate::scalar::Real;
use crate::stats::ln_binomial;

/// Default ceiling on exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 4096;

/// Free blocks beyond this cannot be enumerated at all (validity counting
/// alone would be unreasonable); the Gibbs engine has no such limit.
const MAX_ENUMERABLE_FREE_BLOCKS: usize = 28;

/// Bitmask over free blocks; bit `i` set means free block `i` is included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelId(pub u64);

/// Why a model was excluded from averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Submodel design was rank deficient.
    Singular,
    /// Logistic fit ran away (separation).
    Separated,
    /// Iterations exhausted without meeting the gradient tolerance.
    NonConverged,
    /// Gaussian fit with zero residual variance.
    Degenerate,
}

impl FitFlag {
    pub fn label(self) -> &'static str {
        match self {
            FitFlag::Singular => "singular",
            FitFlag::Separated => "separated",
            FitFlag::NonConverged => "non_converged",
            FitFlag::Degenerate => "degenerate",
        }
    }
}

/// One scored specification.
#[derive(Debug, Clone)]
pub struct ScoredModel<T: Real> {
    pub id: ModelId,
    /// Design columns in the model, ascending.
    pub columns: Vec<usize>,
    pub ebic: T,
    /// Normalized posterior weight; zero for flagged models.
    pub weight: T,
    /// `None` when the fit was flagged.
    pub fit: Option<GlmFit<T>>,
    pub flag: Option<FitFlag>,
}

impl<T: Real> ScoredModel<T> {
    pub fn includes_column(&self, col: usize) -> bool {
        self.columns.binary_search(&col).is_ok()
    }

    /// Position of a design column inside this model's coefficient vector.
    pub fn coefficient_index(&self, col: usize) -> Option<usize> {
        self.columns.binary_search(&col).ok()
    }
}

/// How a set of scored models was produced.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum EngineInfo {
    Enumeration {
        model_count: usize,
    },
    Gibbs {
        iterations: usize,
        burnin: usize,
        seed: u64,
        /// Distinct states scored during the run (the normalization set).
        scored_states: usize,
        /// Distinct states the chain actually occupied after burn-in.
        occupied_states: usize,
    },
}

/// The candidate blocks and their heredity structure, detached from any
/// particular response.
#[derive(Debug, Clone)]
pub struct ModelSpace {
    /// `(name, columns)` of forced blocks, design order.
    forced: Vec<(String, Vec<usize>)>,
    /// `(name, columns)` of free blocks, design order.
    free: Vec<(String, Vec<usize>)>,
    /// Per free block, bitmask of free-block parents.
    parent_masks: Vec<u64>,
    forced_columns: Vec<usize>,
    p_free: usize,
}

impl ModelSpace {
    /// Build the space from a coded design. `forced_names` lists blocks held
    /// in every model (the intercept always is); every other block is free.
    /// Forcing a block whose heredity parents are not also forced is an
    /// error, since its dependents could then enter invalid models.
    pub fn new<T: Real>(design: &CodedDesign<T>, forced_names: &[String]) -> Result<Self> {
        for name in forced_names {
            if design.block_index(name).is_none() {
                return Err(Error::Config(format!(
                    "cannot force unknown block `{name}`"
                )));
            }
        }
        let is_forced = |idx: usize| {
            design.blocks[idx].kind == crate::design::BlockKind::Intercept
                || forced_names.iter().any(|n| *n == design.blocks[idx].name)
        };

        let mut forced = Vec::new();
        let mut free = Vec::new();
        let mut free_positions: HashMap<usize, usize> = HashMap::new();
        for (idx, block) in design.blocks.iter().enumerate() {
            if is_forced(idx) {
                for &p in &block.parents {
                    if !is_forced(p) {
                        return Err(Error::Config(format!(
                            "block `{}` is forced but its parent `{}` is free; \
                             force the parent too",
                            block.name, design.blocks[p].name
                        )));
                    }
                }
                forced.push((block.name.clone(), block.columns.clone()));
            } else {
                free_positions.insert(idx, free.len());
                free.push((block.name.clone(), block.columns.clone()));
            }
        }
        if free.len() > 63 {
            return Err(Error::Config(format!(
                "{} free blocks exceed the 63-bit model identifier",
                free.len()
            )));
        }

        let mut parent_masks = vec![0u64; free.len()];
        for (idx, block) in design.blocks.iter().enumerate() {
            if let Some(&pos) = free_positions.get(&idx) {
                for &p in &block.parents {
                    if let Some(&ppos) = free_positions.get(&p) {
                        parent_masks[pos] |= 1 << ppos;
                    }
                }
            }
        }

        let forced_columns: Vec<usize> = forced.iter().flat_map(|(_, c)| c.clone()).collect();
        let p_free = free.iter().map(|(_, c)| c.len()).sum();
        Ok(ModelSpace {
            forced,
            free,
            parent_masks,
            forced_columns,
            p_free,
        })
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn free_block_names(&self) -> Vec<&str> {
        self.free.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn forced_block_names(&self) -> Vec<&str> {
        self.forced.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Total number of free-block columns (the `p` in the EBIC penalty).
    pub fn p_free(&self) -> usize {
        self.p_free
    }

    /// Does a mask respect heredity (every included block's free parents
    /// included)?
    pub fn heredity_valid(&self, mask: u64) -> bool {
        for (pos, &pmask) in self.parent_masks.iter().enumerate() {
            if mask & (1 << pos) != 0 && mask & pmask != pmask {
                return false;
            }
        }
        true
    }

    /// Design columns of the model `mask`, ascending.
    pub fn columns_for(&self, mask: u64) -> Vec<usize> {
        let mut cols = self.forced_columns.clone();
        for (pos, (_, block_cols)) in self.free.iter().enumerate() {
            if mask & (1 << pos) != 0 {
                cols.extend_from_slice(block_cols);
            }
        }
        cols.sort_unstable();
        cols
    }

    /// Number of free-block columns in the model (the `k` in the penalty).
    pub fn k_free(&self, mask: u64) -> usize {
        self.free
            .iter()
            .enumerate()
            .filter(|(pos, _)| mask & (1 << pos) != 0)
            .map(|(_, (_, c))| c.len())
            .sum()
    }

    /// Free-block positions whose name matches, for forcing/reporting.
    pub fn free_position(&self, name: &str) -> Option<usize> {
        self.free.iter().position(|(n, _)| n == name)
    }

    /// Count heredity-valid masks, if the space is small enough to sweep.
    pub fn valid_model_count(&self) -> Option<usize> {
        let f = self.free.len();
        if f > MAX_ENUMERABLE_FREE_BLOCKS {
            return None;
        }
        let mut count = 0usize;
        for mask in 0u64..(1 << f) {
            if self.heredity_valid(mask) {
                count += 1;
            }
        }
        Some(count)
    }
}

/// Extended BIC of a fitted model.
pub fn ebic<T: Real>(loglik: T, k_free: usize, p_free: usize, n: usize, gamma: T) -> T {
    let two = T::of_f64(2.0);
    -two * loglik
        + T::of_usize(k_free) * T::of_usize(n).ln()
        + two * gamma * ln_binomial::<T>(p_free, k_free)
}

/// Posterior model weights from EBIC scores: `w_s` proportional to
/// `exp(-(ebic_s - min)/2)`, normalized over the slice. Non-finite scores
/// get weight zero; all-non-finite is an error.
pub fn weights<T: Real>(ebics: &[T]) -> Result<Vec<T>> {
    let mut min: Option<T> = None;
    for &e in ebics {
        if e.is_finite() {
            min = Some(match min {
                Some(m) => m.min(e),
                None => e,
            });
        }
    }
    let min = min.ok_or(Error::NoValidModel)?;
    let half = T::of_f64(0.5);
    let raw: Vec<T> = ebics
        .iter()
        .map(|&e| {
            if e.is_finite() {
                (-half * (e - min)).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Everything scored for one response: the models (best EBIC first), their
/// normalized weights, and how the search ran.
#[derive(Debug, Clone)]
pub struct Explored<T: Real> {
    pub space: ModelSpace,
    pub models: Vec<ScoredModel<T>>,
    pub engine: EngineInfo,
    /// Size of the full heredity-valid lattice, when cheap to count.
    pub space_size: Option<usize>,
    /// Models excluded from averaging (zero weight), by cause.
    pub flagged: usize,
}

impl<T: Real> Explored<T> {
    /// Posterior probability that a design column's block is included.
    pub fn column_inclusion(&self, col: usize) -> T {
        self.models
            .iter()
            .filter(|m| m.includes_column(col))
            .map(|m| m.weight)
            .sum()
    }

    /// The best-scoring model.
    pub fn best(&self) -> &ScoredModel<T> {
        &self.models[0]
    }

    /// Models carrying positive weight, best first.
    pub fn weighted(&self) -> impl Iterator<Item = &ScoredModel<T>> {
        self.models.iter().filter(|m| m.weight > T::zero())
    }
}

struct Scorer<'a, T: Real> {
    space: &'a ModelSpace,
    x: &'a DMatrix<T>,
    y: &'a DVector<T>,
    family: Family,
    gamma: T,
    n: usize,
    // Gaussian fast path: one full-design Gram, sliced per model.
    gram: Option<DMatrix<T>>,
    xty: Option<DVector<T>>,
    yty: T,
}

impl<'a, T: Real> Scorer<'a, T> {
    fn new(
        space: &'a ModelSpace,
        x: &'a DMatrix<T>,
        y: &'a DVector<T>,
        family: Family,
        gamma: T,
    ) -> Self {
        let (gram, xty) = match family {
            Family::Gaussian => (Some(x.transpose() * x), Some(x.transpose() * y)),
            Family::Binomial => (None, None),
        };
        Scorer {
            space,
            x,
            y,
            family,
            gamma,
            n: y.len(),
            gram,
            xty,
            yty: y.dot(y),
        }
    }

    /// Fit and score one mask. Pathological fits come back flagged with
    /// weight-zero scores; anything else is a hard error.
    fn score(&self, mask: u64) -> Result<ScoredModel<T>> {
        let columns = self.space.columns_for(mask);
        let fit_result = match self.family {
            Family::Gaussian => {
                let gram = linalg::principal_submatrix(self.gram.as_ref().unwrap(), &columns);
                let xty = linalg::subvector(self.xty.as_ref().unwrap(), &columns);
                glm::fit_gaussian_gram(&gram, &xty, self.yty, self.n)
            }
            Family::Binomial => {
                let xs = linalg::select_columns(self.x, &columns);
                glm::fit_logistic(self.y, &xs, &LogisticOptions::default())
            }
        };
        let (fit, flag) = match fit_result {
            Ok(f) if f.is_degenerate() => (None, Some(FitFlag::Degenerate)),
            Ok(f) => (Some(f), None),
            Err(Error::SingularDesign(_)) => (None, Some(FitFlag::Singular)),
            Err(Error::Separation { .. }) => (None, Some(FitFlag::Separated)),
            Err(Error::NonConvergence { .. }) => (None, Some(FitFlag::NonConverged)),
            Err(e) => return Err(e),
        };
        let score = match &fit {
            Some(f) => ebic(
                f.loglik,
                self.space.k_free(mask),
                self.space.p_free(),
                self.n,
                self.gamma,
            ),
            None => T::infinity(),
        };
        Ok(ScoredModel {
            id: ModelId(mask),
            columns,
            ebic: score,
            weight: T::zero(),
            fit,
            flag,
        })
    }
}

fn finalize<T: Real>(mut models: Vec<ScoredModel<T>>) -> Result<(Vec<ScoredModel<T>>, usize)> {
    let w = weights(&models.iter().map(|m| m.ebic).collect::<Vec<_>>())?;
    for (m, w) in models.iter_mut().zip(w) {
        m.weight = w;
    }
    models.sort_by(|a, b| {
        a.ebic
            .partial_cmp(&b.ebic)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.0.cmp(&b.id.0))
    });
    let flagged = models.iter().filter(|m| m.flag.is_some()).count();
    Ok((models, flagged))
}

/// Score every heredity-valid model. Errors if the lattice exceeds `cap`
/// (or is too large to even count); the Gibbs engine handles those spaces.
pub fn enumerate<T: Real>(
    design: &CodedDesign<T>,
    y: &DVector<T>,
    family: Family,
    space: &ModelSpace,
    gamma: T,
    cap: usize,
) -> Result<Explored<T>> {
    let f = space.free_count();
    if f > MAX_ENUMERABLE_FREE_BLOCKS {
        return Err(Error::EnumerationTooLarge {
            count: usize::MAX,
            cap,
        });
    }
    let mut masks = Vec::new();
    for mask in 0u64..(1 << f) {
        if space.heredity_valid(mask) {
            masks.push(mask);
            if masks.len() > cap {
                // Finish counting for an accurate message.
                let count = space.valid_model_count().unwrap_or(usize::MAX);
                return Err(Error::EnumerationTooLarge { count, cap });
            }
        }
    }

    let scorer = Scorer::new(space, &design.matrix, y, family, gamma);
    let scored: Result<Vec<ScoredModel<T>>> =
        masks.par_iter().map(|&mask| scorer.score(mask)).collect();
    let (models, flagged) = finalize(scored?)?;
    let count = models.len();
    Ok(Explored {
        space: space.clone(),
        models,
        engine: EngineInfo::Enumeration { model_count: count },
        space_size: Some(count),
        flagged,
    })
}

/// Settings for the Gibbs engine.
#[derive(Debug, Clone, Copy)]
pub struct GibbsOptions {
    /// Full systematic sweeps over the free blocks.
    pub iterations: usize,
    /// Sweeps discarded before occupancy statistics are collected.
    pub burnin: usize,
    pub seed: u64,
}

/// Stochastic search over the lattice: a systematic-scan Gibbs sampler on
/// the block inclusion indicators, with EBIC-induced conditionals.
///
/// A block is only toggled between states that are both heredity-valid: a
/// block whose parents are missing stays out, and a parent whose dependent
/// is currently included stays in. Every state scored during the run
/// (including rejected candidates and burn-in states) enters the output with
/// weights normalized over that scored set.
pub fn gibbs_search<T: Real>(
    design: &CodedDesign<T>,
    y: &DVector<T>,
    family: Family,
    space: &ModelSpace,
    gamma: T,
    options: &GibbsOptions,
) -> Result<Explored<T>> {
    let f = space.free_count();
    if options.iterations == 0 || options.iterations <= options.burnin {
        return Err(Error::Config(format!(
            "gibbs needs iterations > burnin, got {} <= {}",
            options.iterations, options.burnin
        )));
    }
    let scorer = Scorer::new(space, &design.matrix, y, family, gamma);
    let mut cache: HashMap<u64, ScoredModel<T>> = HashMap::new();
    let score_of = |mask: u64, cache: &mut HashMap<u64, ScoredModel<T>>| -> Result<T> {
        if let Some(m) = cache.get(&mask) {
            return Ok(m.ebic);
        }
        let scored = scorer.score(mask)?;
        let e = scored.ebic;
        cache.insert(mask, scored);
        Ok(e)
    };

    // Dependents of each free position, for the turn-off validity check.
    let mut dependents = vec![0u64; f];
    for (pos, &pmask) in space.parent_masks.iter().enumerate() {
        for parent in 0..f {
            if pmask & (1 << parent) != 0 {
                dependents[parent] |= 1 << pos;
            }
        }
    }

    let mut rng = rng_from(options.seed);
    let mut state = 0u64;
    score_of(state, &mut cache)?;
    let mut occupied: std::collections::BTreeSet<u64> = std::collections::BTreeSet::new();

    for sweep in 0..options.iterations {
        for pos in 0..f {
            let bit = 1u64 << pos;
            let on = state | bit;
            let off = state & !bit;
            let can_on = space.parent_masks[pos] & state == space.parent_masks[pos];
            let can_off = state & dependents[pos] == 0;
            if !(can_on && can_off) {
                // Locked by heredity: keep the only valid state.
                continue;
            }
            let e_on = score_of(on, &mut cache)?;
            let e_off = score_of(off, &mut cache)?;
            state = match (e_on.is_finite(), e_off.is_finite()) {
                (false, false) => state,
                (true, false) => on,
                (false, true) => off,
                (true, true) => {
                    let p_on = 1.0 / (1.0 + ((e_on - e_off).as_f64() / 2.0).exp());
                    if rng.gen::<f64>() < p_on {
                        on
                    } else {
                        off
                    }
                }
            };
        }
        if sweep >= options.burnin {
            occupied.insert(state);
        }
    }

    let scored_states = cache.len();
    let mut models: Vec<ScoredModel<T>> = cache.into_values().collect();
    models.sort_by(|a, b| a.id.0.cmp(&b.id.0));
    let (models, flagged) = finalize(models)?;
    Ok(Explored {
        space: space.clone(),
        models,
        engine: EngineInfo::Gibbs {
            iterations: options.iterations,
            burnin: options.burnin,
            seed: options.seed,
            scored_states,
            occupied_states: occupied.len(),
        },
        space_size: space.valid_model_count(),
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        ControlKind, ControlSpec, Dataset, Family, OutcomeSpec, Schema, TreatmentCoding,
        TreatmentSpec,
    };
    use crate::design::{build_design, response, DesignOptions};
    use approx::assert_relative_eq;

    #[test]
    fn ebic_reference_value() {
        // loglik -50, 2 of 10 free columns, n = 100, gamma = 1:
        // 100 + 2 ln 100 + 2 ln C(10,2).
        let e = ebic(-50.0_f64, 2, 10, 100, 1.0);
        assert_relative_eq!(e, 116.82366535151682, max_relative = 1e-12);
        // gamma = 0 reduces to plain BIC on free parameters.
        let bic = ebic(-50.0_f64, 2, 10, 100, 0.0);
        assert_relative_eq!(bic, 100.0 + 2.0 * (100.0_f64).ln(), max_relative = 1e-12);
    }

    #[test]
    fn ebic_penalty_grows_with_gamma_and_n() {
        let base = ebic(-10.0_f64, 3, 8, 50, 0.5);
        assert!(ebic(-10.0_f64, 3, 8, 50, 1.0) > base);
        assert!(ebic(-10.0_f64, 3, 8, 500, 0.5) > base);
        // k = 0 and k = p have no combinatorial penalty.
        assert_relative_eq!(
            ebic(-10.0_f64, 0, 8, 50, 1.0),
            20.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn weight_identities() {
        let w = weights(&[100.0_f64, 102.0, f64::INFINITY]).expect("weights");
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(w[1] / w[0], (-1.0_f64).exp(), max_relative = 1e-12);
        assert_eq!(w[2], 0.0);
        // Shift invariance.
        let shifted = weights(&[300.0_f64, 302.0, f64::INFINITY]).expect("weights");
        for (a, b) in w.iter().zip(&shifted) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn all_infinite_scores_is_an_error() {
        assert!(matches!(
            weights::<f64>(&[f64::INFINITY, f64::INFINITY]),
            Err(Error::NoValidModel)
        ));
    }

    /// Two treatments, one subgroup, one control: free blocks are
    /// c, t1, t2, g, t1:g, t2:g when nothing is forced beyond the intercept.
    fn lattice_dataset(n: usize) -> Dataset<f64> {
        let schema = Schema {
            outcomes: vec![OutcomeSpec {
                name: "y".into(),
                family: Family::Gaussian,
            }],
            treatments: vec![
                TreatmentSpec {
                    name: "t1".into(),
                    coding: TreatmentCoding::Binary,
                },
                TreatmentSpec {
                    name: "t2".into(),
                    coding: TreatmentCoding::Binary,
                },
            ],
            controls: vec![ControlSpec {
                name: "c".into(),
                kind: ControlKind::Continuous,
            }],
            subgroups: vec!["g".into()],
        };
        let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
        let t1: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let t2: Vec<f64> = (0..n).map(|i| ((i / 2) % 2) as f64).collect();
        let g: Vec<f64> = (0..n).map(|i| ((i / 4) % 2) as f64).collect();
        let c: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                0.4 + 0.9 * t1[i] + 0.2 * c[i] + 0.3 * ((i * 29 % 13) as f64 - 6.0) / 6.0
            })
            .collect();
        cols.push(("y".into(), y));
        cols.push(("t1".into(), t1));
        cols.push(("t2".into(), t2));
        cols.push(("c".into(), c));
        cols.push(("g".into(), g));
        Dataset::from_columns(cols, schema).expect("dataset")
    }

    #[test]
    fn heredity_count_matches_hand_enumeration() {
        let ds = lattice_dataset(64);
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let space = ModelSpace::new(&design, &[]).expect("space");
        assert_eq!(space.free_count(), 6);
        // Free: c, t1, t2, g, t1:g, t2:g. Interactions need their treatment
        // and g. Per (t1, t2, g) cell: g=0 forbids both interactions (4
        // combos); g=1 allows 1/2/2/4 depending on which treatments are in.
        // (4 + 9) * 2 for the free control block = 26.
        assert_eq!(space.valid_model_count(), Some(26));
        let explored = enumerate(
            &design,
            &response(&ds, "y").unwrap(),
            Family::Gaussian,
            &space,
            1.0,
            DEFAULT_ENUMERATION_CAP,
        )
        .expect("enumerate");
        assert_eq!(explored.models.len(), 26);
        let total: f64 = explored.models.iter().map(|m| m.weight).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);
        // Sorted best-first.
        for pair in explored.models.windows(2) {
            assert!(pair[0].ebic <= pair[1].ebic);
        }
    }

    #[test]
    fn forcing_blocks_shrinks_the_lattice() {
        let ds = lattice_dataset(64);
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let space =
            ModelSpace::new(&design, &["t1".to_string(), "t2".to_string()]).expect("space");
        assert_eq!(space.free_count(), 4); // c, g, t1:g, t2:g
        // g=0: interactions out: 1; g=1: 4. Times 2 for c: 10.
        assert_eq!(space.valid_model_count(), Some(10));
        // Forced treatment columns appear in every model.
        let explored = enumerate(
            &design,
            &response(&ds, "y").unwrap(),
            Family::Gaussian,
            &space,
            1.0,
            DEFAULT_ENUMERATION_CAP,
        )
        .expect("enumerate");
        let t1_col = design.treatment_column("t1").unwrap();
        let t2_col = design.treatment_column("t2").unwrap();
        assert_eq!(explored.models.len(), 10);
        for m in &explored.models {
            assert!(m.includes_column(t1_col));
            assert!(m.includes_column(t2_col));
        }
        assert_relative_eq!(explored.column_inclusion(t1_col), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn forcing_interaction_without_parents_is_rejected() {
        let ds = lattice_dataset(64);
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let err = ModelSpace::new(&design, &["t1:g".to_string()]).unwrap_err();
        assert!(matches!(err, Error::Config(msg) if msg.contains("parent")));
    }

    #[test]
    fn best_model_coefficients_match_direct_fit() {
        let ds = lattice_dataset(96);
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let y = response(&ds, "y").unwrap();
        let space = ModelSpace::new(&design, &[]).expect("space");
        let explored =
            enumerate(&design, &y, Family::Gaussian, &space, 1.0, 4096).expect("enumerate");
        let best = explored.best();
        let xs = crate::linalg::select_columns(&design.matrix, &best.columns);
        let direct = crate::glm::fit_gaussian(&y, &xs).expect("fit");
        let fit = best.fit.as_ref().expect("unflagged");
        assert_relative_eq!(
            fit.coefficients,
            direct.coefficients,
            max_relative = 1e-8
        );
        assert_relative_eq!(fit.loglik, direct.loglik, max_relative = 1e-9);
    }

    #[test]
    fn cap_violation_reports_counts() {
        let ds = lattice_dataset(64);
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let space = ModelSpace::new(&design, &[]).expect("space");
        let y = response(&ds, "y").unwrap();
        match enumerate(&design, &y, Family::Gaussian, &space, 1.0, 10) {
            Err(Error::EnumerationTooLarge { count, cap }) => {
                assert_eq!(count, 26);
                assert_eq!(cap, 10);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn gibbs_agrees_with_enumeration_on_shared_models() {
        let ds = lattice_dataset(96);
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let y = response(&ds, "y").unwrap();
        let space = ModelSpace::new(&design, &[]).expect("space");
        let full = enumerate(&design, &y, Family::Gaussian, &space, 1.0, 4096).expect("enumerate");
        let gibbs = gibbs_search(
            &design,
            &y,
            Family::Gaussian,
            &space,
            1.0,
            &GibbsOptions {
                iterations: 400,
                burnin: 50,
                seed: 99,
            },
        )
        .expect("gibbs");
        // EBICs agree exactly on every model the sampler scored, and
        // weight ratios match after renormalizing over the shared set.
        let mut shared_enum = 0.0;
        let mut shared_gibbs = 0.0;
        for m in &gibbs.models {
            let twin = full
                .models
                .iter()
                .find(|f| f.id == m.id)
                .expect("enumerated");
            assert_relative_eq!(m.ebic, twin.ebic, max_relative = 1e-12);
            shared_enum += twin.weight;
            shared_gibbs += m.weight;
        }
        for m in &gibbs.models {
            let twin = full.models.iter().find(|f| f.id == m.id).unwrap();
            assert_relative_eq!(
                m.weight / shared_gibbs,
                twin.weight / shared_enum,
                max_relative = 1e-9
            );
        }
        // The sampler found everything that matters.
        assert!(shared_enum > 0.999);
    }

    #[test]
    fn gibbs_is_deterministic_in_the_seed() {
        let ds = lattice_dataset(96);
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let y = response(&ds, "y").unwrap();
        let space = ModelSpace::new(&design, &[]).expect("space");
        let opts = GibbsOptions {
            iterations: 120,
            burnin: 20,
            seed: 7,
        };
        let a = gibbs_search(&design, &y, Family::Gaussian, &space, 1.0, &opts).expect("a");
        let b = gibbs_search(&design, &y, Family::Gaussian, &space, 1.0, &opts).expect("b");
        assert_eq!(a.models.len(), b.models.len());
        for (x, z) in a.models.iter().zip(&b.models) {
            assert_eq!(x.id, z.id);
            assert_eq!(x.weight.to_bits(), z.weight.to_bits());
        }
        assert_eq!(a.engine, b.engine);
    }

    #[test]
    fn gibbs_never_occupies_invalid_states() {
        let ds = lattice_dataset(64);
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let y = response(&ds, "y").unwrap();
        let space = ModelSpace::new(&design, &[]).expect("space");
        let explored = gibbs_search(
            &design,
            &y,
            Family::Gaussian,
            &space,
            1.0,
            &GibbsOptions {
                iterations: 150,
                burnin: 10,
                seed: 3,
            },
        )
        .expect("gibbs");
        for m in &explored.models {
            assert!(space.heredity_valid(m.id.0));
        }
    }

    #[test]
    fn separated_submodels_are_flagged_not_fatal() {
        // Binary outcome perfectly separated by t1, noisy otherwise.
        let n = 40;
        let schema = Schema {
            outcomes: vec![OutcomeSpec {
                name: "y".into(),
                family: Family::Binomial,
            }],
            treatments: vec![TreatmentSpec {
                name: "t1".into(),
                coding: TreatmentCoding::Binary,
            }],
            controls: vec![ControlSpec {
                name: "c".into(),
                kind: ControlKind::Continuous,
            }],
            subgroups: vec![],
        };
        let t1: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = t1.clone(); // y == t1: separation when t1 is in
        let c: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).cos()).collect();
        let ds = Dataset::from_columns(
            vec![("y".into(), y), ("t1".into(), t1), ("c".into(), c)],
            schema,
        )
        .expect("dataset");
        let design = build_design(&ds, &DesignOptions::default()).expect("design");
        let space = ModelSpace::new(&design, &[]).expect("space");
        let explored = enumerate(
            &design,
            &response(&ds, "y").unwrap(),
            Family::Binomial,
            &space,
            1.0,
            4096,
        )
        .expect("enumerate");
        assert!(explored.flagged >= 2); // t1 and t1+c both separate
        for m in &explored.models {
            if m.flag == Some(FitFlag::Separated) {
                assert_eq!(m.weight, 0.0);
                assert!(m.fit.is_none());
                assert!(!m.ebic.is_finite());
            }
        }
        let total: f64 = explored.models.iter().map(|m| m.weight).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);
    }
}
