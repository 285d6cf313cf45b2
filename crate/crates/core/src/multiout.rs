//! Orchestration across outcomes: run the single-outcome pipeline per
//! outcome over one shared design, aggregate treatment effects across
//! outcomes (via the mean-outcome regression), and express effects as
//! partial correlations.

use nalgebra::{DMatrix, DVector};

use crate::bma::{
    self, aggregate, average_effect, mixture_posterior, subgroup_effect, BmaPosterior,
    DrawSettings, MixtureComponent, OddsRatioSummary,
};
use crate::dataset::{Dataset, Family};
use crate::design::{BlockKind, CodedDesign};
use crate::error::{Error, Result};
use crate::glm;
use crate::modelspace::{enumerate, gibbs_search, Explored, GibbsOptions, ModelSpace};
use crate::rng::derive_seed;
use crate::scalar::Real;

/// Which search engine scores the model space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineChoice {
    Enumerate { cap: usize },
    Gibbs { iterations: usize, burnin: usize },
}

impl Default for EngineChoice {
    fn default() -> Self {
        EngineChoice::Enumerate {
            cap: crate::modelspace::DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Everything the single-outcome pipeline needs beyond data and design.
#[derive(Debug, Clone)]
pub struct PipelineSettings<T: Real> {
    pub gamma: T,
    /// Inclusion-probability threshold of the nonzero-effect test.
    pub threshold: T,
    pub engine: EngineChoice,
    /// Mixture draws behind each interval.
    pub draws: usize,
    pub seed: u64,
    /// Block names held in every model (besides the intercept).
    pub forced: Vec<String>,
}

impl<T: Real> PipelineSettings<T> {
    pub fn new(seed: u64) -> Self {
        PipelineSettings {
            gamma: T::one(),
            threshold: T::of_f64(0.95),
            engine: EngineChoice::default(),
            draws: bma::DEFAULT_DRAWS,
            seed,
            forced: Vec::new(),
        }
    }
}

/// Posterior summary of one design column.
#[derive(Debug, Clone)]
pub struct ColumnPosterior<T: Real> {
    pub column: usize,
    pub name: String,
    pub block: String,
    pub kind: BlockKind,
    pub posterior: BmaPosterior<T>,
    /// Posterior mean translated back to the raw regressor scale (differs
    /// from `posterior.mean` only for standardized controls).
    pub raw_mean: T,
}

/// Member / non-member treatment effects for one treatment-subgroup pair.
#[derive(Debug, Clone)]
pub struct SubgroupCell<T: Real> {
    pub treatment: String,
    pub subgroup: String,
    pub member: BmaPosterior<T>,
    pub non_member: BmaPosterior<T>,
    /// The interaction coefficient itself.
    pub delta: BmaPosterior<T>,
}

/// Full single-outcome result.
#[derive(Debug, Clone)]
pub struct OutcomeAnalysis<T: Real> {
    pub outcome: String,
    pub family: Family,
    pub explored: Explored<T>,
    /// Every non-intercept design column, design order.
    pub columns: Vec<ColumnPosterior<T>>,
    /// Treatment-coefficient posteriors, schema order.
    pub treatments: Vec<BmaPosterior<T>>,
    /// Odds-ratio views of the treatment posteriors (binomial outcomes).
    pub odds_ratios: Vec<Option<OddsRatioSummary<T>>>,
    /// Posterior of the across-treatments average effect.
    pub ate: BmaPosterior<T>,
    pub subgroups: Vec<SubgroupCell<T>>,
}

/// Per-outcome analyses over one shared design; failures are recorded, not
/// fatal to the table.
#[derive(Debug, Clone)]
pub struct MultiOutcome<T: Real> {
    pub analyses: Vec<OutcomeAnalysis<T>>,
    pub failures: Vec<(String, String)>,
}

impl<T: Real> MultiOutcome<T> {
    pub fn analysis(&self, outcome: &str) -> Option<&OutcomeAnalysis<T>> {
        self.analyses.iter().find(|a| a.outcome == outcome)
    }
}

fn explore<T: Real>(
    design: &CodedDesign<T>,
    y: &DVector<T>,
    family: Family,
    settings: &PipelineSettings<T>,
) -> Result<Explored<T>> {
    let space = ModelSpace::new(design, &settings.forced)?;
    match settings.engine {
        EngineChoice::Enumerate { cap } => {
            enumerate(design, y, family, &space, settings.gamma, cap)
        }
        EngineChoice::Gibbs { iterations, burnin } => gibbs_search(
            design,
            y,
            family,
            &space,
            settings.gamma,
            &GibbsOptions {
                iterations,
                burnin,
                seed: derive_seed(settings.seed, u64::MAX),
            },
        ),
    }
}

/// Run the whole single-outcome pipeline against an arbitrary response
/// vector (the outcome-named variant below is the common entry).
pub fn analyze_response<T: Real>(
    design: &CodedDesign<T>,
    y: &DVector<T>,
    family: Family,
    label: &str,
    settings: &PipelineSettings<T>,
) -> Result<OutcomeAnalysis<T>> {
    let explored = explore(design, y, family, settings)?;
    let mut seed_counter = 0u64;
    let mut next_settings = |draws: usize, seed: u64| {
        let s = DrawSettings {
            draws,
            seed: derive_seed(seed, seed_counter),
        };
        seed_counter += 1;
        s
    };

    let mut columns = Vec::new();
    for (col, name) in design.column_names.iter().enumerate() {
        let block_idx = design.block_of_column(col);
        let block = &design.blocks[block_idx];
        if block.kind == BlockKind::Intercept {
            continue;
        }
        let posterior = aggregate(
            &explored,
            col,
            name,
            &next_settings(settings.draws, settings.seed),
        );
        let raw_mean = design.raw_scale_coefficient(col, posterior.mean);
        columns.push(ColumnPosterior {
            column: col,
            name: name.clone(),
            block: block.name.clone(),
            kind: block.kind,
            posterior,
            raw_mean,
        });
    }

    let schema_treatments: Vec<String> = design
        .blocks_of_kind(BlockKind::Treatment)
        .into_iter()
        .map(|i| design.blocks[i].name.clone())
        .collect();
    let mut treatments = Vec::new();
    let mut odds_ratios = Vec::new();
    let mut treatment_cols = Vec::new();
    for name in &schema_treatments {
        let col = design.treatment_column(name)?;
        treatment_cols.push(col);
        let posterior = columns
            .iter()
            .find(|c| c.column == col)
            .expect("treatment column summarized")
            .posterior
            .clone();
        odds_ratios.push(match family {
            Family::Binomial => Some(bma::report_odds_ratios(&posterior, family)?),
            Family::Gaussian => None,
        });
        treatments.push(posterior);
    }

    let ate = average_effect(
        &explored,
        &treatment_cols,
        "average_treatment_effect",
        &next_settings(settings.draws, settings.seed),
    )?;

    let mut subgroups = Vec::new();
    let subgroup_names: Vec<String> = design
        .subgroup_shares
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    for t_name in &schema_treatments {
        if design.interaction_block_of(t_name).is_none() {
            continue;
        }
        for (k, g_name) in subgroup_names.iter().enumerate() {
            let mut profile = vec![false; subgroup_names.len()];
            profile[k] = true;
            let member = subgroup_effect(
                &explored,
                design,
                t_name,
                &profile,
                &next_settings(settings.draws, settings.seed),
            )?;
            profile[k] = false;
            let non_member = subgroup_effect(
                &explored,
                design,
                t_name,
                &profile,
                &next_settings(settings.draws, settings.seed),
            )?;
            let int_block = &design.blocks[design.interaction_block_of(t_name).unwrap()];
            let delta_col = int_block.columns[k];
            let delta = columns
                .iter()
                .find(|c| c.column == delta_col)
                .expect("interaction column summarized")
                .posterior
                .clone();
            subgroups.push(SubgroupCell {
                treatment: t_name.clone(),
                subgroup: g_name.clone(),
                member,
                non_member,
                delta,
            });
        }
    }

    Ok(OutcomeAnalysis {
        outcome: label.to_string(),
        family,
        explored,
        columns,
        treatments,
        odds_ratios,
        ate,
        subgroups,
    })
}

/// The pipeline for one named outcome.
pub fn run_single_outcome<T: Real>(
    dataset: &Dataset<T>,
    design: &CodedDesign<T>,
    outcome: &str,
    settings: &PipelineSettings<T>,
) -> Result<OutcomeAnalysis<T>> {
    let family = dataset.schema().outcome_family(outcome)?;
    let y = crate::design::response(dataset, outcome)?;
    analyze_response(design, &y, family, outcome, settings)
}

/// Run every declared outcome over the same design and model space. Each
/// outcome gets its own derived seed; one outcome failing does not stop the
/// others.
pub fn per_outcome_summary<T: Real>(
    dataset: &Dataset<T>,
    design: &CodedDesign<T>,
    settings: &PipelineSettings<T>,
) -> MultiOutcome<T> {
    let mut analyses = Vec::new();
    let mut failures = Vec::new();
    for (i, spec) in dataset.schema().outcomes.iter().enumerate() {
        let mut outcome_settings = settings.clone();
        outcome_settings.seed = derive_seed(settings.seed, i as u64);
        match run_single_outcome(dataset, design, &spec.name, &outcome_settings) {
            Ok(a) => analyses.push(a),
            Err(e) => failures.push((spec.name.clone(), e.to_string())),
        }
    }
    MultiOutcome { analyses, failures }
}

/// Row-wise average of all outcome columns.
pub fn mean_response<T: Real>(dataset: &Dataset<T>) -> Result<DVector<T>> {
    let outcomes = &dataset.schema().outcomes;
    let l = T::of_usize(outcomes.len());
    let mut m = DVector::zeros(dataset.n());
    for spec in outcomes {
        let y = dataset.column(&spec.name)?;
        for i in 0..m.len() {
            m[i] += y[i];
        }
    }
    Ok(m / l)
}

/// Treatment effects aggregated across outcomes.
#[derive(Debug, Clone)]
pub struct GateAnalysis<T: Real> {
    pub per_outcome: MultiOutcome<T>,
    /// The single-outcome pipeline run on the mean outcome; its treatment
    /// posteriors are the across-outcome average effects and its `ate` the
    /// overall average.
    pub mean_outcome: OutcomeAnalysis<T>,
    /// Second route: average the per-outcome posterior means, per treatment.
    pub pairwise_means: Vec<T>,
    pub pairwise_overall: T,
    /// Largest coefficient gap between the full model on the mean outcome
    /// and the average of per-outcome full models (an exact identity up to
    /// rounding).
    pub identity_gap: T,
}

impl<T: Real> GateAnalysis<T> {
    pub fn overall(&self) -> &BmaPosterior<T> {
        &self.mean_outcome.ate
    }

    pub fn per_treatment(&self) -> &[BmaPosterior<T>] {
        &self.mean_outcome.treatments
    }
}

/// Average treatment effects across outcomes by regressing the per-row mean
/// outcome on the shared design. Requires every outcome to be Gaussian (the
/// mean of binary outcomes is not itself a binomial response) and every
/// per-outcome analysis to succeed.
pub fn gate<T: Real>(
    dataset: &Dataset<T>,
    design: &CodedDesign<T>,
    settings: &PipelineSettings<T>,
) -> Result<GateAnalysis<T>> {
    let schema = dataset.schema();
    if schema.outcomes.len() < 2 {
        return Err(Error::Config(
            "cross-outcome aggregation needs at least two outcomes".into(),
        ));
    }
    for o in &schema.outcomes {
        if o.family != Family::Gaussian {
            return Err(Error::Unsupported(format!(
                "cross-outcome aggregation requires Gaussian outcomes; `{}` is binomial",
                o.name
            )));
        }
    }

    let per_outcome = per_outcome_summary(dataset, design, settings);
    if let Some((outcome, reason)) = per_outcome.failures.first() {
        return Err(Error::Config(format!(
            "cannot aggregate across outcomes: `{outcome}` failed: {reason}"
        )));
    }

    let m = mean_response(dataset)?;
    let mut mean_settings = settings.clone();
    mean_settings.seed = derive_seed(settings.seed, schema.outcomes.len() as u64);
    let mean_outcome = analyze_response(design, &m, Family::Gaussian, "mean_outcome", &mean_settings)?;

    let n_treat = mean_outcome.treatments.len();
    let l = T::of_usize(schema.outcomes.len());
    let mut pairwise_means = vec![T::zero(); n_treat];
    for a in &per_outcome.analyses {
        for (j, p) in a.treatments.iter().enumerate() {
            pairwise_means[j] += p.mean / l;
        }
    }
    let pairwise_overall =
        pairwise_means.iter().copied().sum::<T>() / T::of_usize(n_treat.max(1));

    // Full-model identity: OLS on the mean outcome equals the average of
    // per-outcome OLS fits, coefficient by coefficient.
    let full_mean = glm::fit_gaussian(&m, &design.matrix)?;
    let mut averaged = DVector::<T>::zeros(design.p());
    for o in &schema.outcomes {
        let y = crate::design::response(dataset, &o.name)?;
        let fit = glm::fit_gaussian(&y, &design.matrix)?;
        averaged += fit.coefficients / l;
    }
    let identity_gap = (full_mean.coefficients - averaged).amax();

    Ok(GateAnalysis {
        per_outcome,
        mean_outcome,
        pairwise_means,
        pairwise_overall,
        identity_gap,
    })
}

/// A treatment effect re-expressed as a partial correlation.
#[derive(Debug, Clone)]
pub struct PartialCorrelation<T: Real> {
    pub treatment: String,
    pub posterior: BmaPosterior<T>,
    /// Residual standard deviation of the treatment given everything else
    /// (the conditioning scale in the transform).
    pub conditioning_sd: T,
    /// Mixture draws that landed outside [-1, 1]; a handful is expected
    /// from the Gaussian approximation near strong effects.
    pub out_of_range_draws: usize,
}

/// Map a treatment-coefficient posterior onto the partial-correlation scale
/// `rho = beta * sqrt(var(x | rest, y) / var(y | rest, x))`, model by model.
/// Defined for Gaussian outcomes on designs without subgroup moderators.
pub fn partial_correlation<T: Real>(
    dataset: &Dataset<T>,
    design: &CodedDesign<T>,
    explored: &Explored<T>,
    outcome: &str,
    treatment: &str,
    settings: &DrawSettings,
) -> Result<PartialCorrelation<T>> {
    if dataset.schema().outcome_family(outcome)? != Family::Gaussian {
        return Err(Error::Unsupported(
            "partial correlations require a Gaussian outcome".into(),
        ));
    }
    if design
        .blocks
        .iter()
        .any(|b| matches!(b.kind, BlockKind::SubgroupMain | BlockKind::Interaction))
    {
        return Err(Error::Unsupported(
            "partial correlations are defined for designs without subgroup moderators".into(),
        ));
    }
    let y = crate::design::response(dataset, outcome)?;
    let t_col = design.treatment_column(treatment)?;

    // var(x_j | other regressors, y): residual variance (MLE) of the
    // treatment column on everything else plus the outcome.
    let n = design.n();
    let p = design.p();
    let mut z = DMatrix::zeros(n, p); // p-1 other columns + y
    let mut out = 0;
    for col in 0..p {
        if col == t_col {
            continue;
        }
        z.set_column(out, &design.matrix.column(col));
        out += 1;
    }
    z.set_column(p - 1, &y);
    let x_j: DVector<T> = design.matrix.column(t_col).into_owned();
    let cond_fit = glm::fit_gaussian(&x_j, &z)?;
    let v_x = cond_fit
        .dispersion
        .expect("gaussian fit carries dispersion");
    if v_x == T::zero() {
        return Err(Error::SingularDesign(
            "treatment is exactly determined by the conditioning set".into(),
        ));
    }

    let mut components = Vec::new();
    for m in explored.weighted() {
        if let Some(pos) = m.coefficient_index(t_col) {
            let fit = m.fit.as_ref().expect("weighted models have fits");
            let phi = match fit.dispersion {
                Some(d) if d > T::zero() => d,
                _ => continue,
            };
            let f = (v_x / phi).sqrt();
            components.push(MixtureComponent {
                weight: m.weight,
                mean: fit.coefficients[pos] * f,
                sd: fit.se(pos) * f,
            });
        }
    }
    let posterior = mixture_posterior(&format!("rho({treatment})"), components, settings);
    let out_of_range = posterior
        .draws
        .iter()
        .filter(|d| d.abs() > T::one())
        .count();
    Ok(PartialCorrelation {
        treatment: treatment.to_string(),
        posterior,
        conditioning_sd: v_x.sqrt(),
        out_of_range_draws: out_of_range,
    })
}
