//! Release gate: one line of output per criterion, every tolerance pinned
//! here. The Monte Carlo criteria replay the six built-in scenarios at full
//! size (100 replicates of n = 1000) under a fixed master seed; the rest
//! exercise the library against independent oracles and the binary against
//! its own determinism contract.

use std::path::{Path, PathBuf};
use std::process::Command;

use bsca::bma::DrawSettings;
use bsca::dataset::{
    ControlKind, ControlSpec, Dataset, Family, OutcomeSpec, Schema, TreatmentCoding, TreatmentSpec,
};
use bsca::design::{build_design, response, BlockKind, CodedDesign, DesignOptions};
use bsca::glm::{fit_gaussian, fit_logistic, loglik_at, LogisticOptions};
use bsca::modelspace::{enumerate, gibbs_search, Explored, GibbsOptions, ModelSpace};
use bsca::multiout::{gate, mean_response, partial_correlation, PipelineSettings};
use bsca::rng::{derive_seed, rng_from};
use bsca::sim::{run_suite, ReportRow, Scenario, SimOptions, SimReport};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const MASTER_SEED: u64 = 20260823;

// ---------------------------------------------------------------- plumbing

type Check = Result<String, String>;

#[derive(Default)]
struct Tally {
    failures: Vec<String>,
}

impl Tally {
    fn record(&mut self, number: usize, name: &str, outcome: Check) {
        match outcome {
            Ok(detail) => println!("criterion {number:>2} PASS  {name}: {detail}"),
            Err(why) => {
                println!("criterion {number:>2} FAIL  {name}: {why}");
                self.failures.push(format!("criterion {number} ({name}): {why}"));
            }
        }
    }
}

struct Checks {
    problems: Vec<String>,
    detail: String,
}

impl Checks {
    fn new() -> Self {
        Checks {
            problems: Vec::new(),
            detail: String::new(),
        }
    }

    fn note(&mut self, text: &str) {
        if !self.detail.is_empty() {
            self.detail.push_str(", ");
        }
        self.detail.push_str(text);
    }

    fn within(&mut self, label: &str, value: f64, lo: f64, hi: f64) {
        if !(value >= lo && value <= hi) {
            self.problems
                .push(format!("{label} = {value:.4} outside [{lo}, {hi}]"));
        }
        self.note(&format!("{label} {value:.4}"));
    }

    fn at_most(&mut self, label: &str, value: f64, max: f64) {
        if !(value <= max) {
            self.problems.push(format!("{label} = {value:.4} > {max}"));
        }
        self.note(&format!("{label} {value:.4}"));
    }

    fn at_least(&mut self, label: &str, value: f64, min: f64) {
        if !(value >= min) {
            self.problems.push(format!("{label} = {value:.4} < {min}"));
        }
        self.note(&format!("{label} {value:.4}"));
    }

    fn exactly(&mut self, label: &str, value: f64, target: f64) {
        if value != target {
            self.problems
                .push(format!("{label} = {value:.4}, expected exactly {target}"));
        }
        self.note(&format!("{label} {value:.2}"));
    }

    fn finish(self) -> Check {
        if self.problems.is_empty() {
            Ok(self.detail)
        } else {
            Err(self.problems.join("; "))
        }
    }
}

fn row<'a>(
    report: &'a SimReport<f64>,
    scenario: &str,
    estimator: &str,
    target: &str,
) -> &'a ReportRow<f64> {
    report
        .rows
        .iter()
        .find(|r| r.scenario == scenario && r.estimator == estimator && r.target == target)
        .unwrap_or_else(|| panic!("missing row {scenario}/{estimator}/{target}"))
}

fn scenario_clean(c: &mut Checks, report: &SimReport<f64>, scenario: &str) {
    let dropped = report
        .failures
        .iter()
        .filter(|(s, _, _)| s == scenario)
        .count();
    if dropped > 0 {
        c.problems
            .push(format!("{dropped} replicate(s) failed in scenario {scenario}"));
    }
}

// ------------------------------------------------- scenario calibrations

fn criterion_1(report: &SimReport<f64>) -> Check {
    let mut c = Checks::new();
    scenario_clean(&mut c, report, "1");
    let bma = row(report, "1", "bma", "ate");
    c.within("bma bias", bma.bias, -0.02, 0.02);
    c.at_most("bma rmse", bma.rmse, 0.03);
    c.at_most("bma type-I", bma.rejection_rate, 0.01);
    let sca = row(report, "1", "sca_median", "ate");
    c.within("sca bias", sca.bias, 0.45, 0.55);
    c.within("sca rmse", sca.rmse, 0.45, 0.55);
    c.at_least("sca rejection", sca.rejection_rate, 0.95);
    c.finish()
}

fn criterion_2(report: &SimReport<f64>) -> Check {
    let mut c = Checks::new();
    scenario_clean(&mut c, report, "2");
    let bma = row(report, "2", "bma", "ate");
    c.exactly("power", bma.rejection_rate, 1.0);
    c.within("bias", bma.bias, -0.02, 0.02);
    c.at_most("rmse", bma.rmse, 0.07);
    c.finish()
}

fn criterion_3(report: &SimReport<f64>) -> Check {
    let mut c = Checks::new();
    scenario_clean(&mut c, report, "3");
    let ate = row(report, "3", "bma", "ate");
    c.within("ate bias", ate.bias, -0.01, 0.01);
    c.at_most("ate rmse", ate.rmse, 0.01);
    let worst = (1..=6)
        .map(|j| row(report, "3", "bma", &format!("beta_x{j}")).rejection_rate)
        .fold(0.0f64, f64::max);
    c.at_most("max per-coef type-I", worst, 0.02);
    let sca = row(report, "3", "sca_median", "ate");
    c.within("sca median bias", sca.bias, 0.04, 0.11);
    c.finish()
}

fn criterion_4(report: &SimReport<f64>) -> Check {
    let mut c = Checks::new();
    scenario_clean(&mut c, report, "4");
    let ate = row(report, "4", "bma", "ate");
    c.within("ate bias", ate.bias, -0.02, 0.02);
    c.at_most("ate rmse", ate.rmse, 0.03);
    c.at_most(
        "x1 rejection",
        row(report, "4", "bma", "beta_x1").rejection_rate,
        0.02,
    );
    c.at_most(
        "x2 rejection",
        row(report, "4", "bma", "beta_x2").rejection_rate,
        0.05,
    );
    for j in 3..=6 {
        c.at_least(
            &format!("x{j} rejection"),
            row(report, "4", "bma", &format!("beta_x{j}")).rejection_rate,
            0.98,
        );
    }
    let worst_rmse = (1..=6)
        .map(|j| row(report, "4", "bma", &format!("beta_x{j}")).rmse)
        .fold(0.0f64, f64::max);
    c.at_most("max per-coef rmse", worst_rmse, 0.06);
    c.finish()
}

fn criterion_5(report: &SimReport<f64>) -> Check {
    let mut c = Checks::new();
    scenario_clean(&mut c, report, "5a");
    scenario_clean(&mut c, report, "5b");
    let null = row(report, "5a", "bma", "gate");
    c.within("null bias", null.bias, -0.01, 0.01);
    c.at_most("null rmse", null.rmse, 0.01);
    c.at_most("null type-I", null.rejection_rate, 0.01);
    let active = row(report, "5b", "bma", "gate");
    c.within("active bias", active.bias, -0.01, 0.01);
    c.at_most("active rmse", active.rmse, 0.03);
    c.exactly("active power", active.rejection_rate, 1.0);
    c.finish()
}

// ------------------------------------------------------- random fixtures

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn ind(flag: bool) -> f64 {
    if flag {
        1.0
    } else {
        0.0
    }
}

/// A random all-Gaussian dataset with every role populated: `j` treatments
/// of mixed codings, `l` outcomes, `q` controls, `k` subgroups.
fn random_bundle(
    rng: &mut impl Rng,
    n: usize,
    j: usize,
    l: usize,
    q: usize,
    k: usize,
) -> Dataset<f64> {
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut treatments = Vec::new();
    for t in 0..j {
        let name = format!("x{}", t + 1);
        let (coding, values): (TreatmentCoding, Vec<f64>) = match t % 3 {
            0 => (
                TreatmentCoding::Binary,
                (0..n).map(|_| ind(rng.gen_bool(0.5))).collect(),
            ),
            1 => (
                TreatmentCoding::Continuous { max: 8.0 },
                (0..n).map(|_| f64::from(rng.gen_range(0..=8))).collect(),
            ),
            _ => (TreatmentCoding::Raw, (0..n).map(|_| normal(rng)).collect()),
        };
        treatments.push(TreatmentSpec {
            name: name.clone(),
            coding,
        });
        columns.push((name, values));
    }
    let mut controls = Vec::new();
    for c in 0..q {
        let name = format!("c{}", c + 1);
        let (kind, values): (ControlKind, Vec<f64>) = if c % 2 == 0 {
            (ControlKind::Continuous, (0..n).map(|_| normal(rng)).collect())
        } else {
            (
                ControlKind::Categorical,
                (0..n).map(|_| f64::from(rng.gen_range(1..=3))).collect(),
            )
        };
        controls.push(ControlSpec {
            name: name.clone(),
            kind,
        });
        columns.push((name, values));
    }
    let mut subgroups = Vec::new();
    for g in 0..k {
        let name = format!("s{}", g + 1);
        let mut values: Vec<f64> = (0..n).map(|_| ind(rng.gen_bool(0.4))).collect();
        // Guarantee both classes appear.
        values[0] = 0.0;
        values[1] = 1.0;
        subgroups.push(name.clone());
        columns.push((name, values));
    }
    let mut outcomes = Vec::new();
    for o in 0..l {
        let name = format!("y{}", o + 1);
        let weights: Vec<f64> = (0..j).map(|_| normal(rng)).collect();
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let mut v = normal(rng);
                for (t, w) in weights.iter().enumerate() {
                    v += w * columns[t].1[i];
                }
                v
            })
            .collect();
        outcomes.push(OutcomeSpec {
            name: name.clone(),
            family: Family::Gaussian,
        });
        columns.push((name, values));
    }
    let schema = Schema {
        outcomes,
        treatments,
        controls,
        subgroups,
    };
    Dataset::from_columns(columns, schema).expect("valid random bundle")
}

fn full_design(dataset: &Dataset<f64>) -> CodedDesign<f64> {
    build_design(
        dataset,
        &DesignOptions {
            interactions: true,
            heredity: true,
        },
    )
    .expect("random bundle design")
}

/// Least squares via the normal equations, independent of the fitting code
/// under test.
fn ols_oracle(y: &DVector<f64>, x: &DMatrix<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    xtx.cholesky().expect("well-conditioned oracle").solve(&xty)
}

// -------------------------------------------- averaged-outcome identities

fn criterion_6() -> Check {
    let mut c = Checks::new();
    let mut max_coef_gap = 0.0f64;
    let mut max_overall_gap = 0.0f64;
    for rep in 0..50u64 {
        let mut rng = rng_from(derive_seed(MASTER_SEED, 600 + rep));
        let j = rng.gen_range(1..=4);
        let l = rng.gen_range(2..=5);
        let q = rng.gen_range(0..=5);
        let k = rng.gen_range(0..=2);
        let dataset = random_bundle(&mut rng, 160, j, l, q, k);
        let design = full_design(&dataset);

        // Coefficients on the averaged outcome equal the average of the
        // per-outcome coefficients.
        let mean_y = mean_response(&dataset).expect("mean outcome");
        let beta_mean = fit_gaussian(&mean_y, &design.matrix).expect("mean fit");
        let mut beta_avg = DVector::<f64>::zeros(design.p());
        for o in 1..=l {
            let y = response(&dataset, &format!("y{o}")).expect("outcome");
            beta_avg += fit_gaussian(&y, &design.matrix)
                .expect("per-outcome fit")
                .coefficients;
        }
        beta_avg /= l as f64;
        for t in 1..=j {
            let col = design
                .treatment_column(&format!("x{t}"))
                .expect("treatment column");
            let gap = (beta_mean.coefficients[col] - beta_avg[col]).abs();
            max_coef_gap = max_coef_gap.max(gap);
            if gap > 1e-10 {
                c.problems.push(format!(
                    "bundle {rep}: x{t} mean-outcome coefficient off by {gap:.2e}"
                ));
            }
        }

        // With the whole design forced into the single model, the overall
        // average effect is the plain mean of the treatment coefficients.
        let mut settings = PipelineSettings::<f64>::new(derive_seed(MASTER_SEED, 700 + rep));
        settings.draws = 1000;
        settings.forced = design
            .blocks
            .iter()
            .filter(|b| b.kind != BlockKind::Intercept)
            .map(|b| b.name.clone())
            .collect();
        let g = gate(&dataset, &design, &settings).expect("forced-model gate");
        let mut oracle = 0.0;
        for t in 1..=j {
            let col = design.treatment_column(&format!("x{t}")).unwrap();
            oracle += beta_mean.coefficients[col];
        }
        oracle /= j as f64;
        let gap = (g.overall().mean - oracle).abs();
        max_overall_gap = max_overall_gap.max(gap);
        if gap > 1e-12 {
            c.problems
                .push(format!("bundle {rep}: overall average off by {gap:.2e}"));
        }
    }
    c.note(&format!(
        "50 bundles, max coefficient gap {max_coef_gap:.2e}, max overall gap {max_overall_gap:.2e}"
    ));
    c.finish()
}

// ------------------------------------------------- search equivalence

fn criterion_7() -> Check {
    let mut c = Checks::new();
    let mut worst = 0.0f64;
    for rep in 0..10u64 {
        let mut rng = rng_from(derive_seed(MASTER_SEED, 800 + rep));
        let n = 300;
        let q = 3 + (rep as usize % 3);
        let x1: Vec<f64> = (0..n).map(|_| ind(rng.gen_bool(0.5))).collect();
        let x2: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let ctrl: Vec<Vec<f64>> = (0..q)
            .map(|_| (0..n).map(|_| normal(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.8 * x1[i] + 0.5 * ctrl[0][i] - 0.3 * ctrl[1][i] + normal(&mut rng))
            .collect();
        let mut columns = vec![
            ("x1".to_string(), x1),
            ("x2".to_string(), x2),
            ("y".to_string(), y),
        ];
        let mut controls = Vec::new();
        for (idx, values) in ctrl.into_iter().enumerate() {
            let name = format!("c{}", idx + 1);
            controls.push(ControlSpec {
                name: name.clone(),
                kind: ControlKind::Continuous,
            });
            columns.push((name, values));
        }
        let schema = Schema {
            outcomes: vec![OutcomeSpec {
                name: "y".into(),
                family: Family::Gaussian,
            }],
            treatments: vec![
                TreatmentSpec {
                    name: "x1".into(),
                    coding: TreatmentCoding::Binary,
                },
                TreatmentSpec {
                    name: "x2".into(),
                    coding: TreatmentCoding::Raw,
                },
            ],
            controls,
            subgroups: vec![],
        };
        let dataset = Dataset::from_columns(columns, schema).expect("search fixture");
        let design = full_design(&dataset);
        let space = ModelSpace::new(&design, &[]).expect("space");
        let y = response(&dataset, "y").unwrap();
        let exact = enumerate(&design, &y, Family::Gaussian, &space, 1.0, 4096).expect("enumerate");
        let sampled = gibbs_search(
            &design,
            &y,
            Family::Gaussian,
            &space,
            1.0,
            &GibbsOptions {
                iterations: 20_000,
                burnin: 1_000,
                seed: derive_seed(MASTER_SEED, 900 + rep),
            },
        )
        .expect("gibbs");
        let inclusion = |models: &Explored<f64>, b: usize| -> f64 {
            models
                .models
                .iter()
                .filter(|m| m.id.0 >> b & 1 == 1)
                .map(|m| m.weight)
                .sum()
        };
        for b in 0..space.free_count() {
            let diff = (inclusion(&exact, b) - inclusion(&sampled, b)).abs();
            worst = worst.max(diff);
            if diff > 0.02 {
                c.problems.push(format!(
                    "space {rep}: block {b} inclusion differs by {diff:.4}"
                ));
            }
        }
    }
    c.note(&format!("10 spaces, max inclusion gap {worst:.4}"));
    c.finish()
}

// ----------------------------------------------------- fitting correctness

fn criterion_8() -> Check {
    let mut c = Checks::new();
    let mut worst_grad = 0.0f64;
    for rep in 0..20u64 {
        let mut rng = rng_from(derive_seed(MASTER_SEED, 1000 + rep));
        let n = 60 + 4 * rep as usize;
        let k = 2 + rep as usize % 3;
        let x =
            DMatrix::<f64>::from_fn(n, k, |_, col| if col == 0 { 1.0 } else { normal(&mut rng) });
        let beta_true = DVector::<f64>::from_fn(k, |_, _| 0.8 * normal(&mut rng));
        let eta = &x * &beta_true;
        let y = DVector::<f64>::from_fn(n, |i, _| {
            ind(rng.gen::<f64>() < 1.0 / (1.0 + (-eta[i]).exp()))
        });

        // Analytic score at a non-optimum probe point, against a central
        // difference of the likelihood.
        let probe = DVector::<f64>::from_element(k, 0.3);
        let mu = (&x * &probe).map(|e: f64| 1.0 / (1.0 + (-e).exp()));
        let analytic = x.transpose() * (&y - mu);
        let h = 1e-6;
        let fd = DVector::<f64>::from_fn(k, |jj, _| {
            let mut up = probe.clone();
            let mut dn = probe.clone();
            up[jj] += h;
            dn[jj] -= h;
            (loglik_at(&y, &x, &up, Family::Binomial).unwrap()
                - loglik_at(&y, &x, &dn, Family::Binomial).unwrap())
                / (2.0 * h)
        });
        let rel = (&analytic - &fd).norm() / analytic.norm();
        worst_grad = worst_grad.max(rel);
        if rel >= 1e-4 {
            c.problems
                .push(format!("instance {rep}: gradient relative error {rel:.2e}"));
        }
    }
    c.note(&format!("20 gradients, worst rel err {worst_grad:.1e}"));

    let mut worst_ols = 0.0f64;
    for rep in 0..10u64 {
        let mut rng = rng_from(derive_seed(MASTER_SEED, 1100 + rep));
        let n = 80;
        let k = 4;
        let x =
            DMatrix::<f64>::from_fn(n, k, |_, col| if col == 0 { 1.0 } else { normal(&mut rng) });
        let y = DVector::<f64>::from_fn(n, |_, _| normal(&mut rng));
        let fit = fit_gaussian(&y, &x).expect("gaussian fit");
        let oracle = ols_oracle(&y, &x);
        let gap = (fit.coefficients - oracle).amax();
        worst_ols = worst_ols.max(gap);
        if gap > 1e-8 {
            c.problems
                .push(format!("instance {rep}: normal-equation gap {gap:.2e}"));
        }
    }
    c.note(&format!("normal-equation gap {worst_ols:.1e}"));

    let mut rng = rng_from(derive_seed(MASTER_SEED, 1200));
    let n = 200;
    let ones = DMatrix::<f64>::from_element(n, 1, 1.0);
    let y = DVector::<f64>::from_fn(n, |_, _| ind(rng.gen_bool(0.37)));
    let p_hat = y.sum() / n as f64;
    let fit = fit_logistic(&y, &ones, &LogisticOptions::default()).expect("intercept fit");
    let gap = (fit.coefficients[0] - (p_hat / (1.0 - p_hat)).ln()).abs();
    if gap > 1e-10 {
        c.problems
            .push(format!("intercept-only MLE off the log-odds by {gap:.2e}"));
    }
    c.note(&format!("intercept log-odds gap {gap:.1e}"));
    c.finish()
}

// --------------------------------------------------------- coding checks

fn criterion_9() -> Check {
    let mut c = Checks::new();
    let mut rng = rng_from(derive_seed(MASTER_SEED, 1300));
    let dataset = random_bundle(&mut rng, 240, 2, 1, 2, 2);
    let design = full_design(&dataset);

    let mut worst_sum = 0.0f64;
    for b in design.blocks_of_kind(BlockKind::SubgroupMain) {
        for &col in &design.blocks[b].columns {
            let sum: f64 = design.matrix.column(col).sum();
            worst_sum = worst_sum.max(sum.abs());
            if sum.abs() > 1e-9 {
                c.problems.push(format!(
                    "subgroup column {} sums to {sum:.2e}",
                    design.column_names[col]
                ));
            }
        }
    }
    c.note(&format!("max subgroup column sum {worst_sum:.1e}"));

    // In every fitted model with interactions, averaging the per-individual
    // treatment effect over the sample recovers the main coefficient.
    let space = ModelSpace::new(&design, &[]).expect("space");
    let y = response(&dataset, "y1").unwrap();
    let explored = enumerate(&design, &y, Family::Gaussian, &space, 1.0, 4096).expect("enumerate");
    let n = design.n();
    let mut models_checked = 0usize;
    let mut worst_gap = 0.0f64;
    for m in &explored.models {
        let Some(fit) = &m.fit else { continue };
        for t in ["x1", "x2"] {
            let t_col = design.treatment_column(t).unwrap();
            let Some(beta_idx) = m.coefficient_index(t_col) else {
                continue;
            };
            let Some(int_block) = design.interaction_block_of(t) else {
                continue;
            };
            let int_cols = &design.blocks[int_block].columns;
            if !int_cols.iter().all(|&ic| m.includes_column(ic)) {
                continue;
            }
            // Interaction columns are treatment times coded subgroup, so
            // the per-individual effect reads its slopes off the coded
            // subgroup columns of the parents.
            let subgroup_cols: Vec<usize> = design.blocks[int_block]
                .parents
                .iter()
                .filter(|&&pb| design.blocks[pb].kind == BlockKind::SubgroupMain)
                .map(|&pb| design.blocks[pb].columns[0])
                .collect();
            assert_eq!(subgroup_cols.len(), int_cols.len(), "one slope per subgroup");
            let mut mean_effect = 0.0;
            for i in 0..n {
                let mut effect = fit.coefficients[beta_idx];
                for (ic, gc) in int_cols.iter().zip(&subgroup_cols) {
                    effect += fit.coefficients[m.coefficient_index(*ic).unwrap()]
                        * design.matrix[(i, *gc)];
                }
                mean_effect += effect;
            }
            mean_effect /= n as f64;
            let gap = (mean_effect - fit.coefficients[beta_idx]).abs();
            worst_gap = worst_gap.max(gap);
            models_checked += 1;
            if gap > 1e-9 {
                c.problems.push(format!(
                    "model {:#x}: averaged effect of {t} off by {gap:.2e}",
                    m.id.0
                ));
            }
        }
    }
    if models_checked == 0 {
        c.problems
            .push("no interaction models were fitted".to_string());
    }
    c.note(&format!(
        "{models_checked} interaction fits, max averaging gap {worst_gap:.1e}"
    ));
    c.finish()
}

// ------------------------------------------------- partial correlations

fn partial_fixture(seed: u64, independent: bool) -> (Dataset<f64>, CodedDesign<f64>) {
    let mut rng = rng_from(seed);
    let n = 600;
    let z1: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let z2: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let x: Vec<f64> = (0..n)
        .map(|i| 0.8 * z1[i] + 0.6 * normal(&mut rng))
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let signal = if independent { 0.0 } else { 0.7 * x[i] };
            signal + 0.9 * z1[i] + 0.5 * z2[i] + normal(&mut rng)
        })
        .collect();
    let schema = Schema {
        outcomes: vec![OutcomeSpec {
            name: "y".into(),
            family: Family::Gaussian,
        }],
        treatments: vec![TreatmentSpec {
            name: "x".into(),
            coding: TreatmentCoding::Raw,
        }],
        controls: vec![
            ControlSpec {
                name: "z1".into(),
                kind: ControlKind::Continuous,
            },
            ControlSpec {
                name: "z2".into(),
                kind: ControlKind::Continuous,
            },
        ],
        subgroups: vec![],
    };
    let columns = vec![
        ("x".to_string(), x),
        ("z1".to_string(), z1),
        ("z2".to_string(), z2),
        ("y".to_string(), y),
    ];
    let dataset = Dataset::from_columns(columns, schema).expect("partial fixture");
    let design = build_design(
        &dataset,
        &DesignOptions {
            interactions: false,
            heredity: true,
        },
    )
    .expect("partial design");
    (dataset, design)
}

/// Pearson correlation of the two full-model residual vectors, computed
/// from scratch.
fn residual_correlation_oracle(design: &CodedDesign<f64>, y: &DVector<f64>) -> f64 {
    let p = design.p();
    let x_col = design.treatment_column("x").unwrap();
    let keep: Vec<usize> = (0..p).filter(|&c| c != x_col).collect();
    let others = DMatrix::<f64>::from_fn(design.n(), keep.len(), |i, j| {
        design.matrix[(i, keep[j])]
    });
    let resid = |target: &DVector<f64>| -> DVector<f64> {
        let beta = ols_oracle(target, &others);
        target - &others * beta
    };
    let treatment = DVector::<f64>::from_fn(design.n(), |i, _| design.matrix[(i, x_col)]);
    let ry = resid(y);
    let rx = resid(&treatment);
    ry.dot(&rx) / (ry.norm() * rx.norm())
}

fn criterion_10() -> Check {
    let mut c = Checks::new();
    let settings = DrawSettings::new(derive_seed(MASTER_SEED, 1400));

    let (dataset, design) = partial_fixture(derive_seed(MASTER_SEED, 1401), false);
    let y = response(&dataset, "y").unwrap();
    let space = ModelSpace::new(&design, &[]).unwrap();
    let explored = enumerate(&design, &y, Family::Gaussian, &space, 1.0, 4096).unwrap();
    let rho = partial_correlation(&dataset, &design, &explored, "y", "x", &settings)
        .expect("partial correlation");
    let oracle = residual_correlation_oracle(&design, &y);
    let gap = (rho.posterior.mean - oracle).abs();
    if gap > 0.01 {
        c.problems.push(format!(
            "correlated case: {:.4} vs oracle {oracle:.4}",
            rho.posterior.mean
        ));
    }
    c.note(&format!("oracle gap {gap:.4}"));

    let (dataset, design) = partial_fixture(derive_seed(MASTER_SEED, 1402), true);
    let y = response(&dataset, "y").unwrap();
    let space = ModelSpace::new(&design, &[]).unwrap();
    let explored = enumerate(&design, &y, Family::Gaussian, &space, 1.0, 4096).unwrap();
    let rho = partial_correlation(&dataset, &design, &explored, "y", "x", &settings)
        .expect("partial correlation");
    let null_rho = rho.posterior.mean.abs();
    if null_rho >= 0.03 {
        c.problems.push(format!(
            "conditionally independent case: |rho| = {null_rho:.4}"
        ));
    }
    c.note(&format!("independent |rho| {null_rho:.4}"));
    c.finish()
}

// ------------------------------------------------------------ determinism

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bsca"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot launch binary: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "bsca {args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn criterion_11() -> Check {
    let mut c = Checks::new();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = fixture("wellbeing.toml").display().to_string();
    let data = fixture("wellbeing.csv").display().to_string();
    let scenario = fixture("tiny_scenario.toml").display().to_string();

    let jobs: [(&str, Vec<&str>, Vec<&str>); 3] = [
        (
            "run",
            vec![
                "run", "--config", &config, "--data", &data, "--seed", "424242",
            ],
            vec!["coefficients.json", "models.csv"],
        ),
        (
            "sca",
            vec![
                "sca", "--config", &config, "--data", &data, "--seed", "424242",
            ],
            vec!["curve.csv", "median_test.json"],
        ),
        (
            "sim",
            vec![
                "sim",
                "--scenario",
                &scenario,
                "--seed",
                "424242",
                "--draws",
                "500",
                "--baseline-draws",
                "80",
            ],
            vec!["sim_report.csv"],
        ),
    ];

    let mut compared = 0usize;
    for (label, args, artifacts) in jobs {
        let dirs = [
            tmp.path().join(format!("{label}_a")),
            tmp.path().join(format!("{label}_b")),
        ];
        for dir in &dirs {
            let dir_s = dir.display().to_string();
            let mut full = args.clone();
            full.push("--out");
            full.push(dir_s.as_str());
            if let Err(why) = run_cli(&full) {
                c.problems.push(why);
            }
        }
        for name in artifacts {
            let read = |d: &Path| std::fs::read(d.join(name));
            match (read(&dirs[0]), read(&dirs[1])) {
                (Ok(a), Ok(b)) if a == b => compared += 1,
                (Ok(_), Ok(_)) => c.problems.push(format!(
                    "{label}: {name} differs between identical invocations"
                )),
                (a, b) => c.problems.push(format!(
                    "{label}: {name} unreadable ({:?} / {:?})",
                    a.err(),
                    b.err()
                )),
            }
        }
    }
    c.note(&format!("{compared} artifacts byte-identical across reruns"));
    c.finish()
}

// ------------------------------------------------------------------ gate

#[test]
fn acceptance() {
    let scenarios = Scenario::builtin("all").expect("built-in scenarios");
    let report =
        run_suite::<f64>(&scenarios, MASTER_SEED, &SimOptions::default()).expect("suite runs");
    eprintln!(
        "suite: {} rows, {} failed replicates, {:.1}s",
        report.rows.len(),
        report.failures.len(),
        report.elapsed_seconds
    );

    let mut tally = Tally::default();
    tally.record(1, "single null treatment", criterion_1(&report));
    tally.record(2, "single active treatment", criterion_2(&report));
    tally.record(3, "six null treatments", criterion_3(&report));
    tally.record(4, "six mixed treatments", criterion_4(&report));
    tally.record(5, "correlated outcomes", criterion_5(&report));
    tally.record(6, "averaged-outcome identity", criterion_6());
    tally.record(7, "sampler matches enumeration", criterion_7());
    tally.record(8, "fitting correctness", criterion_8());
    tally.record(9, "coding invariants", criterion_9());
    tally.record(10, "partial correlation oracle", criterion_10());
    tally.record(11, "byte-identical reruns", criterion_11());

    assert!(
        tally.failures.is_empty(),
        "acceptance failures:\n{}",
        tally.failures.join("\n")
    );
}
