//! On-disk result bundle: every number behind a figure is also written as
//! CSV or JSON, and the figures can be re-rendered from these files alone.

use std::path::Path;

use bsca::bma::{self, BmaPosterior, OddsRatioSummary};
use bsca::dataset::Family;
use bsca::modelspace::{EngineInfo, Explored};
use bsca::multiout::{GateAnalysis, MultiOutcome, OutcomeAnalysis};
use bsca::sca::{MedianTest, SpecCurve, TestMethod};
use serde::{Deserialize, Serialize};

use crate::AppError;

pub const DENSITY_BINS: usize = 60;

/// Histogram of the continuous part of a posterior, plus the spike at zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Density {
    pub point_mass: f64,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u32>,
}

impl Density {
    fn from_draws(point_mass: f64, draws: &[f64]) -> Self {
        let nonzero: Vec<f64> = draws.iter().copied().filter(|&d| d != 0.0).collect();
        if nonzero.is_empty() {
            return Density {
                point_mass,
                lo: 0.0,
                hi: 0.0,
                counts: Vec::new(),
            };
        }
        // Draws are sorted, but don't rely on it.
        let lo = nonzero.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = nonzero.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo).max(f64::MIN_POSITIVE);
        let mut counts = vec![0u32; DENSITY_BINS];
        for &d in &nonzero {
            let k = (((d - lo) / width) * DENSITY_BINS as f64) as usize;
            counts[k.min(DENSITY_BINS - 1)] += 1;
        }
        Density {
            point_mass,
            lo,
            hi,
            counts,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub target: String,
    pub p_inc: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub interval_degenerate: bool,
    pub reject: bool,
    pub density: Density,
}

impl PosteriorReport {
    pub fn new(p: &BmaPosterior<f64>, threshold: f64) -> Self {
        PosteriorReport {
            target: p.target.clone(),
            p_inc: p.p_inc,
            mean: p.mean,
            lower: p.lower,
            upper: p.upper,
            level: p.level,
            interval_degenerate: p.interval_degenerate,
            reject: bma::test_nonzero(p, threshold).reject,
            density: Density::from_draws(p.point_mass(), &p.draws),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OddsRatioReport {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

impl From<&OddsRatioSummary<f64>> for OddsRatioReport {
    fn from(o: &OddsRatioSummary<f64>) -> Self {
        OddsRatioReport {
            point: o.point,
            lower: o.lower,
            upper: o.upper,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnReport {
    pub name: String,
    pub block: String,
    pub kind: String,
    pub raw_mean: f64,
    pub posterior: PosteriorReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreatmentReport {
    pub treatment: String,
    pub posterior: PosteriorReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odds_ratio: Option<OddsRatioReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub treatment: String,
    pub subgroup: String,
    pub member: PosteriorReport,
    pub non_member: PosteriorReport,
    pub delta: PosteriorReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub outcome: String,
    pub family: Family,
    pub engine: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space_size: Option<usize>,
    pub models_scored: usize,
    pub flagged: usize,
    pub ate: PosteriorReport,
    pub treatments: Vec<TreatmentReport>,
    pub columns: Vec<ColumnReport>,
    pub subgroups: Vec<SubgroupReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateReport {
    /// Mean-outcome pipeline treatment summaries: the across-outcome
    /// average effect of each treatment.
    pub per_treatment: Vec<PosteriorReport>,
    /// Overall across treatments and outcomes.
    pub overall: PosteriorReport,
    /// Per-outcome posterior means averaged per treatment (second route).
    pub pairwise_means: Vec<f64>,
    pub pairwise_overall: f64,
    /// Max coefficient gap of the full-model averaging identity.
    pub identity_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub gamma: f64,
    pub threshold: f64,
    pub draws: usize,
    pub forced: Vec<String>,
    pub interactions: bool,
    pub heredity: bool,
    pub n: usize,
    pub dropped_rows: usize,
    pub outcomes: Vec<OutcomeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateReport>,
    pub failures: Vec<OutcomeFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeFailure {
    pub outcome: String,
    pub error: String,
}

fn engine_label(info: &EngineInfo) -> String {
    match info {
        EngineInfo::Enumeration { model_count } => {
            format!("enumerate({model_count} models)")
        }
        EngineInfo::Gibbs {
            iterations,
            burnin,
            scored_states,
            occupied_states,
            ..
        } => format!(
            "gibbs({iterations} iterations, {burnin} burn-in, \
             {scored_states} scored, {occupied_states} occupied)"
        ),
    }
}

pub fn outcome_report(a: &OutcomeAnalysis<f64>, threshold: f64) -> OutcomeReport {
    let treatments = a
        .treatments
        .iter()
        .zip(&a.odds_ratios)
        .map(|(p, or)| TreatmentReport {
            treatment: p.target.clone(),
            posterior: PosteriorReport::new(p, threshold),
            odds_ratio: or.as_ref().map(OddsRatioReport::from),
        })
        .collect();
    OutcomeReport {
        outcome: a.outcome.clone(),
        family: a.family,
        engine: engine_label(&a.explored.engine),
        space_size: a.explored.space_size,
        models_scored: a.explored.models.len(),
        flagged: a.explored.flagged,
        ate: PosteriorReport::new(&a.ate, threshold),
        treatments,
        columns: a
            .columns
            .iter()
            .map(|c| ColumnReport {
                name: c.name.clone(),
                block: c.block.clone(),
                kind: format!("{:?}", c.kind).to_lowercase(),
                raw_mean: c.raw_mean,
                posterior: PosteriorReport::new(&c.posterior, threshold),
            })
            .collect(),
        subgroups: a
            .subgroups
            .iter()
            .map(|s| SubgroupReport {
                treatment: s.treatment.clone(),
                subgroup: s.subgroup.clone(),
                member: PosteriorReport::new(&s.member, threshold),
                non_member: PosteriorReport::new(&s.non_member, threshold),
                delta: PosteriorReport::new(&s.delta, threshold),
            })
            .collect(),
    }
}

pub fn gate_report(g: &GateAnalysis<f64>, threshold: f64) -> GateReport {
    GateReport {
        per_treatment: g
            .per_treatment()
            .iter()
            .map(|p| PosteriorReport::new(p, threshold))
            .collect(),
        overall: PosteriorReport::new(g.overall(), threshold),
        pairwise_means: g.pairwise_means.clone(),
        pairwise_overall: g.pairwise_overall,
        identity_gap: g.identity_gap,
    }
}

pub fn run_report(
    table: &MultiOutcome<f64>,
    gate: Option<&GateAnalysis<f64>>,
    settings: &bsca::multiout::PipelineSettings<f64>,
    interactions: bool,
    heredity: bool,
    n: usize,
    dropped_rows: usize,
) -> RunReport {
    RunReport {
        seed: settings.seed,
        gamma: settings.gamma,
        threshold: settings.threshold,
        draws: settings.draws,
        forced: settings.forced.clone(),
        interactions,
        heredity,
        n,
        dropped_rows,
        outcomes: table
            .analyses
            .iter()
            .map(|a| outcome_report(a, settings.threshold))
            .collect(),
        gate: gate.map(|g| gate_report(g, settings.threshold)),
        failures: table
            .failures
            .iter()
            .map(|(outcome, error)| OutcomeFailure {
                outcome: outcome.clone(),
                error: error.clone(),
            })
            .collect(),
    }
}

/// One scored model as written to `models.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub outcome: String,
    /// Free-block bitmask, so the row set is reproducible.
    pub id: u64,
    /// 1-based position by descending weight within the outcome.
    pub rank: usize,
    pub ebic: f64,
    pub weight: f64,
    pub flag: String,
    /// `(free block name, included)` in free-block order.
    pub blocks: Vec<(String, bool)>,
    /// `(treatment, estimate, se)`; `None` when excluded or unfit.
    pub treatments: Vec<(String, Option<f64>, Option<f64>)>,
}

pub fn model_rows(a: &OutcomeAnalysis<f64>) -> Vec<ModelRow> {
    let explored: &Explored<f64> = &a.explored;
    let free_names: Vec<String> = explored
        .space
        .free_block_names()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let treatment_names: Vec<String> =
        a.treatments.iter().map(|p| p.target.clone()).collect();
    let mut order: Vec<usize> = (0..explored.models.len()).collect();
    order.sort_by(|&i, &j| {
        let (a_m, b_m) = (&explored.models[i], &explored.models[j]);
        b_m.weight
            .partial_cmp(&a_m.weight)
            .expect("weights are finite")
            .then(a_m.id.0.cmp(&b_m.id.0))
    });
    order
        .iter()
        .enumerate()
        .map(|(rank, &idx)| {
            let m = &explored.models[idx];
            let blocks = free_names
                .iter()
                .enumerate()
                .map(|(b, name)| (name.clone(), m.id.0 >> b & 1 == 1))
                .collect();
            let treatments = treatment_names
                .iter()
                .map(|t| {
                    let col = a
                        .columns
                        .iter()
                        .find(|c| &c.name == t)
                        .expect("treatment column reported")
                        .column;
                    match (&m.fit, m.coefficient_index(col)) {
                        (Some(fit), Some(pos)) => {
                            (t.clone(), Some(fit.coefficients[pos]), Some(fit.se(pos)))
                        }
                        _ => (t.clone(), None, None),
                    }
                })
                .collect();
            ModelRow {
                outcome: a.outcome.clone(),
                id: m.id.0,
                rank: rank + 1,
                ebic: m.ebic,
                weight: m.weight,
                flag: m.flag.map(|f| f.label().to_string()).unwrap_or_default(),
                blocks,
                treatments,
            }
        })
        .collect()
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn write_models_csv(rows: &[ModelRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "outcome".to_string(),
        "model_id".to_string(),
        "rank".to_string(),
        "ebic".to_string(),
        "weight".to_string(),
        "flag".to_string(),
    ];
    if let Some(first) = rows.first() {
        for (name, _) in &first.blocks {
            header.push(format!("in:{name}"));
        }
        for (name, _, _) in &first.treatments {
            header.push(format!("est:{name}"));
            header.push(format!("se:{name}"));
        }
    }
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![
            r.outcome.clone(),
            r.id.to_string(),
            r.rank.to_string(),
            fmt_f64(r.ebic),
            fmt_f64(r.weight),
            r.flag.clone(),
        ];
        for (_, included) in &r.blocks {
            rec.push(if *included { "1".into() } else { "0".into() });
        }
        for (_, est, se) in &r.treatments {
            rec.push(est.map(fmt_f64).unwrap_or_default());
            rec.push(se.map(fmt_f64).unwrap_or_default());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn read_models_csv(text: &str) -> Result<Vec<ModelRow>, AppError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let blocks: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("in:").map(|n| (i, n.to_string())))
        .collect();
    let ests: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("est:").map(|n| (i, n.to_string())))
        .collect();
    let parse_f64 = |s: &str, what: &str| -> Result<f64, AppError> {
        s.parse()
            .map_err(|_| AppError::failure("parse", format!("bad {what} in models.csv: `{s}`")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or_default().to_string();
        let mut row_blocks = Vec::new();
        for (i, name) in &blocks {
            row_blocks.push((name.clone(), get(*i) == "1"));
        }
        let mut row_treatments = Vec::new();
        for (i, name) in &ests {
            let est = get(*i);
            let se = get(*i + 1);
            let est = if est.is_empty() {
                None
            } else {
                Some(parse_f64(&est, "estimate")?)
            };
            let se = if se.is_empty() {
                None
            } else {
                Some(parse_f64(&se, "se")?)
            };
            row_treatments.push((name.clone(), est, se));
        }
        rows.push(ModelRow {
            outcome: get(0),
            id: get(1)
                .parse()
                .map_err(|_| AppError::failure("parse", "bad model_id in models.csv"))?,
            rank: get(2)
                .parse()
                .map_err(|_| AppError::failure("parse", "bad rank in models.csv"))?,
            ebic: parse_f64(&get(3), "ebic")?,
            weight: parse_f64(&get(4), "weight")?,
            flag: get(5),
            blocks: row_blocks,
            treatments: row_treatments,
        });
    }
    Ok(rows)
}

/// Specification-curve artifacts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurveRow {
    pub index: usize,
    pub outcome: String,
    pub treatment: String,
    pub controls: String,
    pub label: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub significant: bool,
}

pub fn curve_rows(curve: &SpecCurve<f64>) -> Vec<CurveRow> {
    curve
        .estimates
        .iter()
        .map(|e| CurveRow {
            index: e.index,
            outcome: e.outcome.clone(),
            treatment: e.treatment.clone(),
            controls: e.controls.join("+"),
            label: e.label.clone(),
            estimate: e.estimate,
            se: e.se,
            p_value: e.p_value,
            significant: e.significant,
        })
        .collect()
}

pub fn write_curve_csv(rows: &[CurveRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "index",
        "outcome",
        "treatment",
        "controls",
        "label",
        "estimate",
        "se",
        "p_value",
        "significant",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.outcome.clone(),
            r.treatment.clone(),
            r.controls.clone(),
            r.label.clone(),
            fmt_f64(r.estimate),
            fmt_f64(r.se),
            fmt_f64(r.p_value),
            (r.significant as u8).to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn read_curve_csv(text: &str) -> Result<Vec<CurveRow>, AppError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or_default().to_string();
        let num = |i: usize| -> Result<f64, AppError> {
            get(i).parse().map_err(|_| {
                AppError::failure("parse", format!("bad number in curve.csv: `{}`", get(i)))
            })
        };
        rows.push(CurveRow {
            index: get(0)
                .parse()
                .map_err(|_| AppError::failure("parse", "bad index in curve.csv"))?,
            outcome: get(1),
            treatment: get(2),
            controls: get(3),
            label: get(4),
            estimate: num(5)?,
            se: num(6)?,
            p_value: num(7)?,
            significant: get(8) == "1",
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MedianTestReport {
    pub outcome: String,
    pub method: String,
    pub draws: usize,
    pub effective_draws: usize,
    pub observed_median: f64,
    pub p_value: f64,
    pub seed: u64,
    pub share_significant_dominant: f64,
    pub mean_z: f64,
    pub null_medians: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaReport {
    pub seed: u64,
    pub outcomes: Vec<MedianTestReport>,
}

pub fn method_label(method: TestMethod) -> &'static str {
    match method {
        TestMethod::Permutation => "permutation",
        TestMethod::NullBootstrap => "null_bootstrap",
    }
}

pub fn median_test_report(
    outcome: &str,
    curve: &SpecCurve<f64>,
    test: &MedianTest<f64>,
) -> MedianTestReport {
    MedianTestReport {
        outcome: outcome.to_string(),
        method: method_label(test.method).to_string(),
        draws: test.draws,
        effective_draws: test.effective_draws,
        observed_median: test.observed_median,
        p_value: test.p_value,
        seed: test.seed,
        share_significant_dominant: curve.share_significant_dominant,
        mean_z: curve.mean_z,
        null_medians: test.null_medians.clone(),
    }
}

pub fn write_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("serializable report");
    out.push('\n');
    out
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        AppError::failure("io", format!("cannot read {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        AppError::failure("parse", format!("cannot parse {}: {e}", path.display()))
    })
}
