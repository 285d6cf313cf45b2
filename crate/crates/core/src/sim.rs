//! Seeded Monte Carlo studies: synthetic datasets with a shared confounder,
//! model averaging and the specification-curve baseline run per replicate,
//! and bias / RMSE / rejection-rate tables aggregated across replicates.
//!
//! The generating process for each row is
//! `x ~ N(0, I_J)`, `z ~ N(mean(x), 1)`, `y_l = sum_j B[l,j] x_j + z + e_l`
//! with `e ~ N(0, Sigma)`: every outcome loads on the control `z`, and `z`
//! is correlated with every treatment, so excluding it biases the treatment
//! slopes upward by `cov(x_j, z) = 1/J`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bma;
use crate::dataset::{
    ControlKind, ControlSpec, Dataset, Family, OutcomeSpec, Schema, TreatmentCoding,
    TreatmentSpec,
};
use crate::design::{build_design, DesignOptions};
use crate::error::{Error, Result};
use crate::modelspace::DEFAULT_ENUMERATION_CAP;
use crate::multiout::{self, EngineChoice, PipelineSettings};
use crate::rng::{derive_seed, rng_from};
use crate::sca::{self, TestMethod};
use crate::scalar::Real;

/// One generating configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub n: usize,
    pub replicates: usize,
    /// `effects[(l, j)]`: coefficient of treatment `j` on outcome `l`.
    pub effects: DMatrix<f64>,
    /// Error covariance across outcomes (unit diagonal in the built-ins).
    pub error_cov: DMatrix<f64>,
    /// Run the specification-curve baseline (single-outcome scenarios).
    pub baseline: bool,
}

impl Scenario {
    pub fn outcomes(&self) -> usize {
        self.effects.nrows()
    }

    pub fn treatments(&self) -> usize {
        self.effects.ncols()
    }

    /// Grand mean of the effect matrix: the overall estimand.
    pub fn overall_truth(&self) -> f64 {
        self.effects.iter().sum::<f64>() / (self.effects.len() as f64)
    }

    /// Across-outcome average effect of treatment `j`.
    pub fn treatment_truth(&self, j: usize) -> f64 {
        self.effects.column(j).iter().sum::<f64>() / (self.outcomes() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.outcomes();
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n < 10 {
            return Err(Error::Config("scenario n must be at least 10".into()));
        }
        if self.treatments() == 0 || l == 0 {
            return Err(Error::Config("effect matrix must be non-empty".into()));
        }
        if self.error_cov.nrows() != l || self.error_cov.ncols() != l {
            return Err(Error::Config(format!(
                "error covariance must be {l}x{l} to match {l} outcomes"
            )));
        }
        for i in 0..l {
            for j in 0..l {
                if (self.error_cov[(i, j)] - self.error_cov[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Config("error covariance must be symmetric".into()));
                }
            }
        }
        sym_sqrt(&self.error_cov)?;
        Ok(())
    }

    /// Built-in scenarios by id. `"5"` expands to its null and non-null
    /// variants; `"all"` to the whole suite.
    pub fn builtin(id: &str) -> Result<Vec<Scenario>> {
        let single = |id: &str, description: &str, betas: &[f64]| Scenario {
            id: id.into(),
            description: description.into(),
            n: 1000,
            replicates: 100,
            effects: DMatrix::from_row_slice(1, betas.len(), betas),
            error_cov: DMatrix::identity(1, 1),
            baseline: true,
        };
        let multi = |id: &str, description: &str, effects: DMatrix<f64>| Scenario {
            id: id.into(),
            description: description.into(),
            n: 1000,
            replicates: 100,
            error_cov: correlated_cov(),
            effects,
            baseline: false,
        };
        let ids: Vec<&str> = match id {
            "all" => vec!["1", "2", "3", "4", "5a", "5b"],
            "5" => vec!["5a", "5b"],
            other => vec![other],
        };
        ids.into_iter()
            .map(|id| match id {
                "1" => Ok(single("1", "single null treatment", &[0.0])),
                "2" => Ok(single("2", "single active treatment", &[1.0])),
                "3" => Ok(single("3", "six null treatments", &[0.0; 6])),
                "4" => Ok(single(
                    "4",
                    "six mixed treatments",
                    &[0.0, 0.0, 0.25, 0.75, 1.0, 1.0],
                )),
                "5a" => Ok(multi(
                    "5a",
                    "five null treatments, four correlated outcomes",
                    DMatrix::zeros(4, 5),
                )),
                "5b" => Ok(multi(
                    "5b",
                    "three active treatments, four correlated outcomes",
                    DMatrix::from_row_slice(
                        4,
                        5,
                        &[
                            1.0, 1.0, 1.0, 0.0, 0.0, //
                            1.0, 1.0, 1.0, 0.0, 0.0, //
                            1.0, 1.0, 1.0, 0.0, 0.0, //
                            0.25, 0.25, 0.25, 0.0, 0.0,
                        ],
                    ),
                )),
                other => Err(Error::Config(format!(
                    "unknown scenario `{other}` (expected 1-4, 5, 5a, 5b, or all)"
                ))),
            })
            .collect()
    }
}

/// Unit-diagonal covariance: 0.9 among the first three outcomes, 0.1
/// between each of them and the fourth.
fn correlated_cov() -> DMatrix<f64> {
    let mut s = DMatrix::identity(4, 4);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                s[(i, j)] = 0.9;
            }
        }
        s[(i, 3)] = 0.1;
        s[(3, i)] = 0.1;
    }
    s
}

/// Symmetric square root via the spectral decomposition. Errors when the
/// matrix is not positive definite.
pub(crate) fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let mut root = DMatrix::zeros(m.nrows(), m.nrows());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 0.0 {
            return Err(Error::Config(format!(
                "error covariance is not positive definite (eigenvalue {lambda:.3e})"
            )));
        }
        let v = eig.eigenvectors.column(k);
        root += lambda.sqrt() * &v * v.transpose();
    }
    Ok(root)
}

/// Draw one replicate's dataset: treatments `x1..xJ` (kept on their raw
/// scale), control `z`, Gaussian outcomes `y1..yL`. Deterministic per
/// (master seed, replicate index).
pub fn generate<T: Real>(scenario: &Scenario, master_seed: u64, replicate: usize) -> Result<Dataset<T>> {
    scenario.validate()?;
    let (n, j_n, l_n) = (scenario.n, scenario.treatments(), scenario.outcomes());
    let root = sym_sqrt(&scenario.error_cov)?;
    let mut rng = rng_from(derive_seed(master_seed, replicate as u64));
    let normal = StandardNormal;

    let mut x = vec![vec![0.0f64; n]; j_n];
    let mut z = vec![0.0f64; n];
    let mut y = vec![vec![0.0f64; n]; l_n];
    let mut eps = vec![0.0f64; l_n];
    for i in 0..n {
        let mut x_sum = 0.0;
        for xj in x.iter_mut() {
            let v: f64 = normal.sample(&mut rng);
            xj[i] = v;
            x_sum += v;
        }
        let z_noise: f64 = normal.sample(&mut rng);
        z[i] = x_sum / (j_n as f64) + z_noise;
        for e in eps.iter_mut() {
            *e = normal.sample(&mut rng);
        }
        for (l, yl) in y.iter_mut().enumerate() {
            let mut v = z[i];
            for jj in 0..j_n {
                v += scenario.effects[(l, jj)] * x[jj][i];
            }
            for (k, e) in eps.iter().enumerate() {
                v += root[(l, k)] * e;
            }
            yl[i] = v;
        }
    }

    let schema = Schema {
        outcomes: (1..=l_n)
            .map(|l| OutcomeSpec {
                name: format!("y{l}"),
                family: Family::Gaussian,
            })
            .collect(),
        treatments: (1..=j_n)
            .map(|j| TreatmentSpec {
                name: format!("x{j}"),
                coding: TreatmentCoding::Raw,
            })
            .collect(),
        controls: vec![ControlSpec {
            name: "z".into(),
            kind: ControlKind::Continuous,
        }],
        subgroups: vec![],
    };
    let to_t = |v: Vec<f64>| v.into_iter().map(T::of_f64).collect::<Vec<T>>();
    let mut columns = Vec::new();
    for (jj, xj) in x.into_iter().enumerate() {
        columns.push((format!("x{}", jj + 1), to_t(xj)));
    }
    columns.push(("z".into(), to_t(z)));
    for (l, yl) in y.into_iter().enumerate() {
        columns.push((format!("y{}", l + 1), to_t(yl)));
    }
    Dataset::from_columns(columns, schema)
}

/// Knobs shared by every scenario run.
#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Mixture draws behind each posterior interval.
    pub draws: usize,
    /// Null draws for the specification-curve median test.
    pub baseline_draws: usize,
    pub baseline_method: TestMethod,
    /// Inclusion-probability threshold of the nonzero-effect test.
    pub threshold: f64,
    pub enumeration_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            draws: 4000,
            baseline_draws: 500,
            baseline_method: TestMethod::NullBootstrap,
            threshold: 0.95,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// One aggregated table row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow<T: Real> {
    pub scenario: String,
    pub estimator: String,
    pub target: String,
    pub truth: T,
    pub bias: T,
    pub rmse: T,
    pub rejection_rate: T,
    pub replicates: usize,
}

/// Aggregated results plus per-replicate bookkeeping.
#[derive(Debug, Clone)]
pub struct SimReport<T: Real> {
    pub rows: Vec<ReportRow<T>>,
    /// `(scenario id, replicate index, reason)` for replicates dropped
    /// from the aggregates.
    pub failures: Vec<(String, usize, String)>,
    pub master_seed: u64,
    pub elapsed_seconds: f64,
}

/// What one replicate contributes.
struct Replicate<T: Real> {
    overall: T,
    overall_reject: bool,
    per_treatment: Vec<(T, bool)>,
    baseline: Option<(T, bool)>,
}

fn run_replicate<T: Real>(
    scenario: &Scenario,
    scenario_seed: u64,
    rep: usize,
    options: &SimOptions,
) -> Result<Replicate<T>> {
    let dataset = generate::<T>(scenario, scenario_seed, rep)?;
    let design = build_design(&dataset, &DesignOptions::default())?;
    let mut settings = PipelineSettings::<T>::new(derive_seed(scenario_seed, (rep as u64) | (1 << 40)));
    settings.draws = options.draws;
    settings.threshold = T::of_f64(options.threshold);
    settings.engine = EngineChoice::Enumerate {
        cap: options.enumeration_cap,
    };

    let threshold = settings.threshold;
    let reject = |p: &bma::BmaPosterior<T>| bma::test_nonzero(p, threshold).reject;

    let (overall, overall_reject, per_treatment) = if scenario.outcomes() == 1 {
        let analysis = multiout::run_single_outcome(&dataset, &design, "y1", &settings)?;
        let per: Vec<(T, bool)> = analysis
            .treatments
            .iter()
            .map(|p| (p.mean, reject(p)))
            .collect();
        (analysis.ate.mean, reject(&analysis.ate), per)
    } else {
        let gate = multiout::gate(&dataset, &design, &settings)?;
        let per: Vec<(T, bool)> = gate
            .per_treatment()
            .iter()
            .map(|p| (p.mean, reject(p)))
            .collect();
        (gate.overall().mean, reject(gate.overall()), per)
    };

    let baseline = if scenario.baseline {
        let specs = sca::standard_specs(dataset.schema(), "y1");
        let test = sca::median_test(
            &dataset,
            &specs,
            options.baseline_method,
            options.baseline_draws,
            derive_seed(scenario_seed, (rep as u64) | (1 << 41)),
        )?;
        Some((
            test.observed_median,
            test.p_value <= T::of_f64(0.05),
        ))
    } else {
        None
    };

    Ok(Replicate {
        overall,
        overall_reject,
        per_treatment,
        baseline,
    })
}

fn summarize<T: Real>(
    scenario: &str,
    estimator: &str,
    target: &str,
    truth: f64,
    estimates: &[T],
    rejections: &[bool],
) -> ReportRow<T> {
    let n = T::of_usize(estimates.len());
    let truth_t = T::of_f64(truth);
    let bias = estimates.iter().map(|&e| e - truth_t).sum::<T>() / n;
    let rmse = (estimates
        .iter()
        .map(|&e| (e - truth_t) * (e - truth_t))
        .sum::<T>()
        / n)
        .sqrt();
    let rejection_rate =
        T::of_usize(rejections.iter().filter(|&&r| r).count()) / T::of_usize(rejections.len());
    ReportRow {
        scenario: scenario.into(),
        estimator: estimator.into(),
        target: target.into(),
        truth: truth_t,
        bias,
        rmse,
        rejection_rate,
        replicates: estimates.len(),
    }
}

/// Stable per-scenario seed so a scenario produces the same rows whether it
/// runs alone or inside the full suite (FNV-1a over the id).
fn scenario_stream(master_seed: u64, id: &str) -> u64 {
    let hash = id
        .bytes()
        .fold(0xcbf29ce484222325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        });
    derive_seed(master_seed, hash)
}

/// Run one scenario's replicates in parallel and aggregate.
pub fn run_scenario<T: Real>(
    scenario: &Scenario,
    master_seed: u64,
    options: &SimOptions,
) -> Result<SimReport<T>> {
    scenario.validate()?;
    let start = Instant::now();
    let seed = scenario_stream(master_seed, &scenario.id);
    let results: Vec<(usize, Result<Replicate<T>>)> = (0..scenario.replicates)
        .into_par_iter()
        .map(|rep| (rep, run_replicate(scenario, seed, rep, options)))
        .collect();

    let mut kept = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(v) => kept.push(v),
            Err(e) => failures.push((scenario.id.clone(), rep, e.to_string())),
        }
    }
    if kept.is_empty() {
        let (_, _, reason) = failures
            .first()
            .cloned()
            .unwrap_or_else(|| (scenario.id.clone(), 0, "no replicates".into()));
        return Err(Error::Config(format!(
            "every replicate of scenario {} failed; first error: {reason}",
            scenario.id
        )));
    }

    let multi = scenario.outcomes() > 1;
    let overall_target = if multi { "gate" } else { "ate" };
    let mut rows = Vec::new();
    let overall: Vec<T> = kept.iter().map(|r| r.overall).collect();
    let overall_rej: Vec<bool> = kept.iter().map(|r| r.overall_reject).collect();
    rows.push(summarize(
        &scenario.id,
        "bma",
        overall_target,
        scenario.overall_truth(),
        &overall,
        &overall_rej,
    ));
    for j in 0..scenario.treatments() {
        let est: Vec<T> = kept.iter().map(|r| r.per_treatment[j].0).collect();
        let rej: Vec<bool> = kept.iter().map(|r| r.per_treatment[j].1).collect();
        let target = if multi {
            format!("gate_x{}", j + 1)
        } else {
            format!("beta_x{}", j + 1)
        };
        rows.push(summarize(
            &scenario.id,
            "bma",
            &target,
            scenario.treatment_truth(j),
            &est,
            &rej,
        ));
    }
    if scenario.baseline {
        let est: Vec<T> = kept.iter().filter_map(|r| r.baseline.map(|b| b.0)).collect();
        let rej: Vec<bool> = kept.iter().filter_map(|r| r.baseline.map(|b| b.1)).collect();
        rows.push(summarize(
            &scenario.id,
            "sca_median",
            overall_target,
            scenario.overall_truth(),
            &est,
            &rej,
        ));
    }

    Ok(SimReport {
        rows,
        failures,
        master_seed,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run several scenarios and concatenate their rows.
pub fn run_suite<T: Real>(
    scenarios: &[Scenario],
    master_seed: u64,
    options: &SimOptions,
) -> Result<SimReport<T>> {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for s in scenarios {
        let report = run_scenario::<T>(s, master_seed, options)?;
        rows.extend(report.rows);
        failures.extend(report.failures);
    }
    Ok(SimReport {
        rows,
        failures,
        master_seed,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

pub const CSV_HEADER: [&str; 8] = [
    "scenario",
    "estimator",
    "target",
    "truth",
    "bias",
    "rmse",
    "rejection_rate",
    "replicates",
];

/// Rows as CSV text; numbers use shortest-round-trip formatting so parsing
/// back reproduces them exactly.
pub fn emit_csv<T: Real>(rows: &[ReportRow<T>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.scenario.as_str(),
            r.estimator.as_str(),
            r.target.as_str(),
            &format!("{}", r.truth.as_f64()),
            &format!("{}", r.bias.as_f64()),
            &format!("{}", r.rmse.as_f64()),
            &format!("{}", r.rejection_rate.as_f64()),
            &format!("{}", r.replicates),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Parse rows previously produced by [`emit_csv`].
pub fn parse_csv<T: Real>(text: &str) -> Result<Vec<ReportRow<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!(
            "unexpected report header: {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or_default().to_string();
        let num = |k: usize| -> Result<T> {
            record
                .get(k)
                .unwrap_or_default()
                .parse::<f64>()
                .map(T::of_f64)
                .map_err(|_| Error::Parse {
                    row: i + 1,
                    column: CSV_HEADER[k].into(),
                    value: field(k),
                })
        };
        rows.push(ReportRow {
            scenario: field(0),
            estimator: field(1),
            target: field(2),
            truth: num(3)?,
            bias: num(4)?,
            rmse: num(5)?,
            rejection_rate: num(6)?,
            replicates: field(7).parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: "replicates".into(),
                value: field(7),
            })?,
        });
    }
    Ok(rows)
}

/// Fixed-width human-readable table.
pub fn emit_text<T: Real>(rows: &[ReportRow<T>]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<9} {:<11} {:<9} {:>7} {:>8} {:>7} {:>10} {:>5}\n",
        "scenario", "estimator", "target", "truth", "bias", "rmse", "reject", "reps"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<9} {:<11} {:<9} {:>7.4} {:>8.4} {:>7.4} {:>10.3} {:>5}\n",
            r.scenario,
            r.estimator,
            r.target,
            r.truth.as_f64(),
            r.bias.as_f64(),
            r.rmse.as_f64(),
            r.rejection_rate.as_f64(),
            r.replicates
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtin_ids_expand() {
        assert_eq!(Scenario::builtin("1").unwrap().len(), 1);
        assert_eq!(Scenario::builtin("5").unwrap().len(), 2);
        let all = Scenario::builtin("all").unwrap();
        let ids: Vec<&str> = all.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3", "4", "5a", "5b"]);
        assert!(Scenario::builtin("9").is_err());
    }

    #[test]
    fn builtin_truths() {
        let s4 = &Scenario::builtin("4").unwrap()[0];
        assert_relative_eq!(s4.overall_truth(), 0.5);
        assert_relative_eq!(s4.treatment_truth(3), 0.75);
        let s5b = &Scenario::builtin("5b").unwrap()[0];
        assert_relative_eq!(s5b.overall_truth(), 0.4875);
        assert_relative_eq!(s5b.treatment_truth(0), 0.8125);
        assert_relative_eq!(s5b.treatment_truth(4), 0.0);
        assert_relative_eq!(Scenario::builtin("5a").unwrap()[0].overall_truth(), 0.0);
    }

    #[test]
    fn square_root_reproduces_the_covariance() {
        let s = correlated_cov();
        let root = sym_sqrt(&s).expect("spd");
        let back = &root * root.transpose();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(back[(i, j)], s[(i, j)], epsilon = 1e-12);
            }
        }
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(sym_sqrt(&bad).is_err());
    }

    #[test]
    fn generate_is_deterministic_and_matches_the_moments() {
        let mut s = Scenario::builtin("1").unwrap().remove(0);
        s.n = 20_000;
        let a: Dataset<f64> = generate(&s, 99, 0).expect("generate");
        let b: Dataset<f64> = generate(&s, 99, 0).expect("generate");
        assert_eq!(a.column("y1").unwrap(), b.column("y1").unwrap());
        let other: Dataset<f64> = generate(&s, 99, 1).expect("generate");
        assert_ne!(a.column("y1").unwrap()[0], other.column("y1").unwrap()[0]);

        let x = a.column("x1").unwrap();
        let z = a.column("z").unwrap();
        let y = a.column("y1").unwrap();
        let n = s.n as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let (mx, mz, my) = (mean(x), mean(z), mean(y));
        let cov = |u: &[f64], mu: f64, v: &[f64], mv: f64| {
            u.iter()
                .zip(v)
                .map(|(&a, &b)| (a - mu) * (b - mv))
                .sum::<f64>()
                / n
        };
        // var(z) = 1/J + 1 = 2 and cov(x, z) = 1/J = 1 for J = 1.
        assert_relative_eq!(cov(z, mz, z, mz), 2.0, epsilon = 0.08);
        assert_relative_eq!(cov(x, mx, z, mz), 1.0, epsilon = 0.05);
        // With beta = 0, y on x alone has slope cov(x, z) / var(x) = 1.
        assert_relative_eq!(
            cov(x, mx, y, my) / cov(x, mx, x, mx),
            1.0,
            epsilon = 0.05
        );
    }

    #[test]
    fn correlated_errors_show_up_in_the_outcomes() {
        let mut s = Scenario::builtin("5a").unwrap().remove(0);
        s.n = 20_000;
        let d: Dataset<f64> = generate(&s, 5, 0).expect("generate");
        let z = d.column("z").unwrap();
        // With beta = 0, y_l - z is exactly the correlated noise.
        let eps = |name: &str| -> Vec<f64> {
            d.column(name)
                .unwrap()
                .iter()
                .zip(z)
                .map(|(&y, &z)| y - z)
                .collect()
        };
        let (e1, e2, e4) = (eps("y1"), eps("y2"), eps("y4"));
        let n = s.n as f64;
        let corr = |u: &[f64], v: &[f64]| {
            let (mu, mv) = (
                u.iter().sum::<f64>() / n,
                v.iter().sum::<f64>() / n,
            );
            let c = u
                .iter()
                .zip(v)
                .map(|(&a, &b)| (a - mu) * (b - mv))
                .sum::<f64>();
            let vu = u.iter().map(|&a| (a - mu) * (a - mu)).sum::<f64>();
            let vv = v.iter().map(|&b| (b - mv) * (b - mv)).sum::<f64>();
            c / (vu * vv).sqrt()
        };
        assert_relative_eq!(corr(&e1, &e2), 0.9, epsilon = 0.02);
        assert_relative_eq!(corr(&e1, &e4), 0.1, epsilon = 0.03);
    }

    fn quick_options() -> SimOptions {
        SimOptions {
            draws: 500,
            baseline_draws: 99,
            ..SimOptions::default()
        }
    }

    #[test]
    fn small_null_scenario_aggregates_and_repeats() {
        let mut s = Scenario::builtin("1").unwrap().remove(0);
        s.n = 150;
        s.replicates = 3;
        let a: SimReport<f64> = run_scenario(&s, 31, &quick_options()).expect("run");
        let b: SimReport<f64> = run_scenario(&s, 31, &quick_options()).expect("run");
        assert_eq!(a.rows, b.rows);
        assert!(a.failures.is_empty());
        let targets: Vec<&str> = a.rows.iter().map(|r| r.target.as_str()).collect();
        assert_eq!(targets, ["ate", "beta_x1", "ate"]);
        assert_eq!(a.rows[2].estimator, "sca_median");
        for r in &a.rows {
            assert!(r.rejection_rate >= 0.0 && r.rejection_rate <= 1.0);
            assert!(r.rmse + 1e-12 >= r.bias.abs());
            assert_eq!(r.replicates, 3);
        }
        // The confounded baseline sits near 0.5 even in small samples.
        assert!(a.rows[2].bias > 0.3, "baseline bias {}", a.rows[2].bias);
    }

    #[test]
    fn active_treatment_is_detected_in_every_replicate() {
        let mut s = Scenario::builtin("2").unwrap().remove(0);
        s.n = 200;
        s.replicates = 3;
        let report: SimReport<f64> = run_scenario(&s, 7, &quick_options()).expect("run");
        let ate = &report.rows[0];
        assert_eq!(ate.target, "ate");
        assert_relative_eq!(ate.rejection_rate, 1.0);
        assert!(ate.bias.abs() < 0.1, "bias {}", ate.bias);
    }

    #[test]
    fn multi_outcome_scenario_reports_the_overall_average() {
        let mut s = Scenario::builtin("5a").unwrap().remove(0);
        s.n = 120;
        s.replicates = 2;
        let report: SimReport<f64> = run_scenario(&s, 13, &quick_options()).expect("run");
        assert_eq!(report.rows[0].target, "gate");
        assert_eq!(report.rows[0].truth, 0.0);
        assert_eq!(report.rows.len(), 1 + 5);
        assert!(report.rows.iter().all(|r| r.estimator == "bma"));
    }

    #[test]
    fn suite_matches_standalone_runs() {
        let mut s1 = Scenario::builtin("1").unwrap().remove(0);
        s1.n = 120;
        s1.replicates = 2;
        let mut s2 = Scenario::builtin("2").unwrap().remove(0);
        s2.n = 120;
        s2.replicates = 2;
        let suite: SimReport<f64> =
            run_suite(&[s1.clone(), s2.clone()], 11, &quick_options()).expect("suite");
        let alone: SimReport<f64> = run_scenario(&s2, 11, &quick_options()).expect("run");
        assert_eq!(&suite.rows[3..], &alone.rows[..]);
    }

    #[test]
    fn csv_round_trips_exactly() {
        let mut s = Scenario::builtin("1").unwrap().remove(0);
        s.n = 120;
        s.replicates = 2;
        let report: SimReport<f64> = run_scenario(&s, 23, &quick_options()).expect("run");
        let text = emit_csv(&report.rows);
        let parsed: Vec<ReportRow<f64>> = parse_csv(&text).expect("parse");
        assert_eq!(parsed, report.rows);
        assert_eq!(emit_csv::<f64>(&[]).lines().count(), 1);
        assert!(parse_csv::<f64>("bogus,header\n1,2\n").is_err());
        let table = emit_text(&report.rows);
        assert!(table.lines().count() == report.rows.len() + 1);
    }
}
