//! Command-line front end: `run` for the model-averaged analysis, `sca` for
//! the classical specification-curve baseline, `sim` for the Monte Carlo
//! calibration study, and `plot` to re-render figures from saved artifacts.

mod artifacts;
mod config;
mod figures;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bsca::dataset::{Dataset, Family};
use bsca::design::{build_design, DesignOptions};
use bsca::multiout::{gate, per_outcome_summary, MultiOutcome};
use bsca::rng::derive_seed;
use bsca::sca::{median_test, run_curve, standard_specs};
use bsca::sim::{self, SimOptions};

/// Errors split by exit code: `Usage` exits 2 without touching the output
/// directory, `Failure` exits 1 and leaves an `error.json` behind.
#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Failure { kind: String, message: String },
}

impl AppError {
    pub fn usage(message: impl Into<String>) -> Self {
        AppError::Usage(message.into())
    }

    pub fn failure(kind: impl Into<String>, message: impl Into<String>) -> Self {
        AppError::Failure {
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Usage(m) => write!(f, "{m}"),
            AppError::Failure { message, .. } => write!(f, "{message}"),
        }
    }
}

impl From<bsca::Error> for AppError {
    fn from(e: bsca::Error) -> Self {
        use bsca::Error as E;
        let kind = match &e {
            // Bad inputs are the caller's problem, not the pipeline's.
            E::Config(_) => return AppError::usage(e.to_string()),
            E::Io { .. } => "io",
            E::Csv(_) => "csv",
            E::Parse { .. } => "parse",
            E::Domain { .. } => "domain",
            E::DegenerateSubgroup(_) => "degenerate_subgroup",
            E::Collinear { .. } => "collinear",
            E::SingularDesign(_) => "singular_design",
            E::InsufficientData { .. } => "insufficient_data",
            E::Separation { .. } => "separation",
            E::NonConvergence { .. } => "non_convergence",
            E::Dimension(_) => "dimension",
            E::EnumerationTooLarge { .. } => "enumeration_too_large",
            E::NoValidModel => "no_valid_model",
            E::EmptyCurve => "empty_curve",
            E::Family(_) => "family",
            E::Unsupported(_) => "unsupported",
        };
        AppError::failure(kind, e.to_string())
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::failure("csv", e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "bsca",
    version,
    about = "Model-averaged treatment-effect analysis over GLM specification spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a dataset with model averaging over the specification space
    Run(RunArgs),
    /// Run the classical specification-curve baseline on the same dataset
    Sca(ScaArgs),
    /// Replay the Monte Carlo calibration scenarios
    Sim(SimArgs),
    /// Re-render figures from a saved result directory
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Analysis config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Data file (CSV); overrides `data.path` from the config
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for every random draw
    #[arg(long)]
    seed: Option<u64>,
    /// Search engine: enumerate or gibbs
    #[arg(long)]
    engine: Option<String>,
    /// Gibbs sweeps
    #[arg(long)]
    iters: Option<usize>,
    /// Gibbs burn-in sweeps
    #[arg(long)]
    burnin: Option<usize>,
    /// Model-size penalty strength
    #[arg(long)]
    gamma: Option<f64>,
    /// Inclusion-probability threshold of the nonzero-effect test
    #[arg(long)]
    threshold: Option<f64>,
    /// Posterior draws behind each interval
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args)]
struct ScaArgs {
    /// Analysis config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Data file (CSV); overrides `data.path` from the config
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for the median test draws
    #[arg(long)]
    seed: Option<u64>,
    /// Median test: permutation or bootstrap
    #[arg(long)]
    method: Option<String>,
    /// Null draws for the median test
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args)]
struct SimArgs {
    /// Scenario id (1-4, 5, 5a, 5b, all) or a scenario TOML file
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Master seed of the study
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Posterior draws behind each interval
    #[arg(long)]
    draws: Option<usize>,
    /// Null draws for the specification-curve baseline
    #[arg(long)]
    baseline_draws: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding a saved result bundle
    #[arg(long)]
    from: PathBuf,
    /// Where to write the figures (defaults to the source directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Models shown in the per-model panels
    #[arg(long, default_value_t = 100)]
    top_models: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = error_dir(&cli.command);
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sca(args) => cmd_sca(&args),
        Command::Sim(args) => cmd_sim(&args),
        Command::Plot(args) => cmd_plot(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(AppError::Failure { kind, message }) => {
            eprintln!("error: {message}");
            let body = artifacts::write_json(&serde_json::json!({
                "kind": kind,
                "message": message,
            }));
            if std::fs::create_dir_all(&out_dir).is_ok() {
                let _ = std::fs::write(out_dir.join("error.json"), body);
            }
            ExitCode::FAILURE
        }
    }
}

/// Best-effort output directory for `error.json`, resolved from the flags
/// and the config file alone so it works even when the run fails early.
fn error_dir(command: &Command) -> PathBuf {
    let (flag, config) = match command {
        Command::Run(a) => (a.out.clone(), Some(&a.config)),
        Command::Sca(a) => (a.out.clone(), Some(&a.config)),
        Command::Sim(a) => (a.out.clone(), None),
        Command::Plot(a) => (a.out.clone().or_else(|| Some(a.from.clone())), None),
    };
    flag.or_else(|| {
        let path = config?;
        let text = std::fs::read_to_string(path).ok()?;
        toml::from_str::<config::FileConfig>(&text).ok()?.out_dir
    })
    .unwrap_or_else(|| PathBuf::from("bsca_out"))
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AppError::failure("io", format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, body)
        .map_err(|e| AppError::failure("io", format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(args: &RunArgs) -> Result<(), AppError> {
    let file = config::load(&args.config)?;
    let resolved = config::resolve(
        &file,
        &config::Overrides {
            data: args.data.as_deref(),
            out: args.out.as_deref(),
            seed: args.seed,
            engine: args.engine.as_deref(),
            iters: args.iters,
            burnin: args.burnin,
            gamma: args.gamma,
            threshold: args.threshold,
            draws: args.draws,
        },
    )?;
    let schema = file.schema()?;
    let dataset = Dataset::<f64>::load_csv(&resolved.data_path, schema)?;
    let design = build_design(
        &dataset,
        &DesignOptions {
            interactions: resolved.interactions,
            heredity: resolved.heredity,
        },
    )?;

    // Average across outcomes when they are comparable: at least two, all
    // Gaussian, and none failing. Otherwise report each outcome on its own.
    let schema = dataset.schema();
    let all_gaussian = schema.outcomes.iter().all(|o| o.family == Family::Gaussian);
    let mut gate_analysis = None;
    let mut table_owned = None;
    if schema.outcomes.len() >= 2 && all_gaussian {
        match gate(&dataset, &design, &resolved.settings) {
            Ok(g) => gate_analysis = Some(g),
            Err(e) => {
                eprintln!("warning: cross-outcome average unavailable: {e}");
                table_owned = Some(per_outcome_summary(&dataset, &design, &resolved.settings));
            }
        }
    } else {
        table_owned = Some(per_outcome_summary(&dataset, &design, &resolved.settings));
    }
    let table: &MultiOutcome<f64> = gate_analysis
        .as_ref()
        .map(|g| &g.per_outcome)
        .or(table_owned.as_ref())
        .expect("one of the two branches ran");
    if table.analyses.is_empty() {
        let reason = table
            .failures
            .first()
            .map(|(o, e)| format!("{o}: {e}"))
            .unwrap_or_default();
        return Err(AppError::failure(
            "no_valid_model",
            format!("every outcome failed ({reason})"),
        ));
    }

    let report = artifacts::run_report(
        table,
        gate_analysis.as_ref(),
        &resolved.settings,
        resolved.interactions,
        resolved.heredity,
        dataset.n(),
        dataset.dropped_rows(),
    );
    let models: Vec<artifacts::ModelRow> = table
        .analyses
        .iter()
        .flat_map(|a| artifacts::model_rows(a))
        .collect();

    let out = &resolved.out_dir;
    write_file(out, "coefficients.json", &artifacts::write_json(&report))?;
    write_file(out, "models.csv", &artifacts::write_models_csv(&models))?;
    render_run_figures(out, &report, &models, resolved.top_models)?;

    for o in &report.outcomes {
        for t in &o.treatments {
            println!(
                "{}: {} mean {:+.4} [{:+.4}, {:+.4}] p_inc {:.3}{}",
                o.outcome,
                t.treatment,
                t.posterior.mean,
                t.posterior.lower,
                t.posterior.upper,
                t.posterior.p_inc,
                if t.posterior.reject { " *" } else { "" }
            );
        }
    }
    if let Some(g) = &report.gate {
        println!(
            "overall average: mean {:+.4} [{:+.4}, {:+.4}] p_inc {:.3}{}",
            g.overall.mean,
            g.overall.lower,
            g.overall.upper,
            g.overall.p_inc,
            if g.overall.reject { " *" } else { "" }
        );
    }
    for f in &report.failures {
        eprintln!("warning: outcome {} skipped: {}", f.outcome, f.error);
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn render_run_figures(
    out: &Path,
    report: &artifacts::RunReport,
    models: &[artifacts::ModelRow],
    top: usize,
) -> Result<(), AppError> {
    for o in &report.outcomes {
        write_file(
            out,
            &format!("single_outcome_{}.svg", o.outcome),
            &figures::single_outcome_svg(o, models, top),
        )?;
        if !o.subgroups.is_empty() {
            write_file(
                out,
                &format!("subgroup_{}.svg", o.outcome),
                &figures::subgroup_svg(o),
            )?;
        }
    }
    if report.outcomes.len() > 1 {
        write_file(out, "multi_outcome.svg", &figures::multi_outcome_svg(report))?;
    }
    Ok(())
}

fn cmd_sca(args: &ScaArgs) -> Result<(), AppError> {
    let file = config::load(&args.config)?;
    let seed = args
        .seed
        .or(file.seed)
        .ok_or_else(|| AppError::usage("a seed is required: pass --seed or set `seed`"))?;
    let data_path = args
        .data
        .clone()
        .or_else(|| file.data.path.clone())
        .ok_or_else(|| AppError::usage("a data file is required: pass --data or set `data.path`"))?;
    let out = args
        .out
        .clone()
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bsca_out"));
    let method = file.sca_method(args.method.as_deref())?;
    let draws = args
        .draws
        .or_else(|| file.sca.as_ref().and_then(|s| s.draws))
        .unwrap_or(500);

    let schema = file.schema()?;
    let dataset = Dataset::<f64>::load_csv(&data_path, schema)?;

    let mut all_rows = Vec::new();
    let mut tests = Vec::new();
    let outcomes = dataset.schema().outcomes.clone();
    for (i, outcome) in outcomes.iter().enumerate() {
        let specs = standard_specs(dataset.schema(), &outcome.name);
        let curve = run_curve(&dataset, &specs)?;
        let test = median_test(&dataset, &specs, method, draws, derive_seed(seed, i as u64))?;
        let rows = artifacts::curve_rows(&curve);
        let report = artifacts::median_test_report(&outcome.name, &curve, &test);
        write_file(
            &out,
            &format!("sca_{}.svg", outcome.name),
            &figures::sca_svg(&rows, Some(&report)),
        )?;
        println!(
            "{}: median {:+.4} across {} specifications, {} p = {:.4}",
            outcome.name,
            test.observed_median,
            curve.estimates.len(),
            report.method,
            test.p_value
        );
        all_rows.extend(rows);
        tests.push(report);
    }
    let report = artifacts::ScaReport {
        seed,
        outcomes: tests,
    };
    write_file(&out, "curve.csv", &artifacts::write_curve_csv(&all_rows))?;
    write_file(&out, "median_test.json", &artifacts::write_json(&report))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_sim(args: &SimArgs) -> Result<(), AppError> {
    let scenarios = config::load_scenarios(&args.scenario)?;
    let seed = args
        .seed
        .ok_or_else(|| AppError::usage("a seed is required: pass --seed"))?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("bsca_out"));
    let mut options = SimOptions::default();
    if let Some(d) = args.draws {
        options.draws = d;
    }
    if let Some(d) = args.baseline_draws {
        options.baseline_draws = d;
    }

    let report = sim::run_suite::<f64>(&scenarios, seed, &options)?;
    let text = sim::emit_text(&report.rows);
    print!("{text}");
    write_file(&out, "sim_report.csv", &sim::emit_csv(&report.rows))?;
    write_file(&out, "sim_report.txt", &text)?;
    if !report.failures.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["scenario", "replicate", "reason"])
            .expect("in-memory write");
        for (scenario, replicate, reason) in &report.failures {
            w.write_record([scenario.as_str(), &replicate.to_string(), reason])
                .expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush"))
            .expect("csv is utf-8");
        write_file(&out, "sim_failures.csv", &body)?;
        eprintln!("warning: {} replicate(s) failed", report.failures.len());
    }
    eprintln!(
        "wrote {} ({} rows in {:.1}s)",
        out.display(),
        report.rows.len(),
        report.elapsed_seconds
    );
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<(), AppError> {
    let from = &args.from;
    let out = args.out.clone().unwrap_or_else(|| from.clone());
    let mut rendered = 0usize;

    let coefficients = from.join("coefficients.json");
    if coefficients.exists() {
        let report: artifacts::RunReport = artifacts::read_json(&coefficients)?;
        let models_path = from.join("models.csv");
        let text = std::fs::read_to_string(&models_path).map_err(|e| {
            AppError::failure("io", format!("cannot read {}: {e}", models_path.display()))
        })?;
        let models = artifacts::read_models_csv(&text)?;
        render_run_figures(&out, &report, &models, args.top_models)?;
        rendered += report.outcomes.len();
    }

    let curve = from.join("curve.csv");
    if curve.exists() {
        let text = std::fs::read_to_string(&curve).map_err(|e| {
            AppError::failure("io", format!("cannot read {}: {e}", curve.display()))
        })?;
        let rows = artifacts::read_curve_csv(&text)?;
        let tests: artifacts::ScaReport = artifacts::read_json(&from.join("median_test.json"))?;
        let mut outcomes: Vec<&str> = Vec::new();
        for r in &rows {
            if !outcomes.contains(&r.outcome.as_str()) {
                outcomes.push(&r.outcome);
            }
        }
        for outcome in outcomes {
            let subset: Vec<artifacts::CurveRow> = rows
                .iter()
                .filter(|r| r.outcome == outcome)
                .cloned()
                .collect();
            let test = tests.outcomes.iter().find(|t| t.outcome == outcome);
            write_file(
                &out,
                &format!("sca_{outcome}.svg"),
                &figures::sca_svg(&subset, test),
            )?;
            rendered += 1;
        }
    }

    if rendered == 0 {
        return Err(AppError::usage(format!(
            "nothing to plot: no coefficients.json or curve.csv under {}",
            from.display()
        )));
    }
    eprintln!("rendered {rendered} figure set(s) into {}", out.display());
    Ok(())
}
