//! TOML run configuration: data schema, model-space policy, engine and
//! seed settings, with command-line overrides applied on top.

use std::path::{Path, PathBuf};

use bsca::dataset::{
    ControlKind, ControlSpec, Family, OutcomeSpec, Schema, TreatmentCoding, TreatmentSpec,
};
use bsca::multiout::{EngineChoice, PipelineSettings};
use bsca::sca::TestMethod;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::AppError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub threshold: Option<f64>,
    pub draws: Option<usize>,
    /// "enumerate" (default) or "gibbs".
    pub engine: Option<String>,
    pub cap: Option<usize>,
    pub iterations: Option<usize>,
    pub burnin: Option<usize>,
    pub interactions: Option<bool>,
    pub heredity: Option<bool>,
    #[serde(default)]
    pub forced: Vec<String>,
    /// Model count shown in the per-model figure panels.
    pub top_models: Option<usize>,
    pub data: DataConfig,
    pub sca: Option<ScaConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub outcome: Vec<OutcomeConfig>,
    #[serde(default)]
    pub treatment: Vec<TreatmentConfig>,
    #[serde(default)]
    pub control: Vec<ControlConfig>,
    #[serde(default)]
    pub subgroups: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub column: String,
    pub family: Family,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentConfig {
    pub column: String,
    /// "binary", "continuous" (requires `max`), or "raw".
    pub coding: String,
    pub max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub column: String,
    /// "continuous" or "categorical".
    pub kind: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaConfig {
    /// "permutation" (default) or "bootstrap".
    pub method: Option<String>,
    pub draws: Option<usize>,
}

pub fn load(path: &Path) -> Result<FileConfig, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        AppError::usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| AppError::usage(format!("invalid config {}: {e}", path.display())))
}

impl FileConfig {
    pub fn schema(&self) -> Result<Schema, AppError> {
        let outcomes = self
            .data
            .outcome
            .iter()
            .map(|o| OutcomeSpec {
                name: o.column.clone(),
                family: o.family,
            })
            .collect();
        let treatments = self
            .data
            .treatment
            .iter()
            .map(|t| {
                let coding = match t.coding.as_str() {
                    "binary" => TreatmentCoding::Binary,
                    "continuous" => TreatmentCoding::Continuous {
                        max: t.max.ok_or_else(|| {
                            AppError::usage(format!(
                                "treatment `{}`: continuous coding needs `max`",
                                t.column
                            ))
                        })?,
                    },
                    "raw" => TreatmentCoding::Raw,
                    other => {
                        return Err(AppError::usage(format!(
                            "treatment `{}`: unknown coding `{other}` \
                             (expected binary, continuous, or raw)",
                            t.column
                        )))
                    }
                };
                Ok(TreatmentSpec {
                    name: t.column.clone(),
                    coding,
                })
            })
            .collect::<Result<Vec<_>, AppError>>()?;
        let controls = self
            .data
            .control
            .iter()
            .map(|c| {
                let kind = match c.kind.as_str() {
                    "continuous" => ControlKind::Continuous,
                    "categorical" => ControlKind::Categorical,
                    other => {
                        return Err(AppError::usage(format!(
                            "control `{}`: unknown kind `{other}` \
                             (expected continuous or categorical)",
                            c.column
                        )))
                    }
                };
                Ok(ControlSpec {
                    name: c.column.clone(),
                    kind,
                })
            })
            .collect::<Result<Vec<_>, AppError>>()?;
        Ok(Schema {
            outcomes,
            treatments,
            controls,
            subgroups: self.data.subgroups.clone(),
        })
    }

    pub fn engine(
        &self,
        flag: Option<&str>,
        iters: Option<usize>,
        burnin: Option<usize>,
    ) -> Result<EngineChoice, AppError> {
        let name = flag.or(self.engine.as_deref()).unwrap_or("enumerate");
        match name {
            "enumerate" => Ok(EngineChoice::Enumerate {
                cap: self.cap.unwrap_or(bsca::modelspace::DEFAULT_ENUMERATION_CAP),
            }),
            "gibbs" => Ok(EngineChoice::Gibbs {
                iterations: iters.or(self.iterations).unwrap_or(20_000),
                burnin: burnin.or(self.burnin).unwrap_or(1_000),
            }),
            other => Err(AppError::usage(format!(
                "unknown engine `{other}` (expected enumerate or gibbs)"
            ))),
        }
    }

    pub fn sca_method(&self, flag: Option<&str>) -> Result<TestMethod, AppError> {
        let name = flag
            .or(self.sca.as_ref().and_then(|s| s.method.as_deref()))
            .unwrap_or("permutation");
        match name {
            "permutation" => Ok(TestMethod::Permutation),
            "bootstrap" => Ok(TestMethod::NullBootstrap),
            other => Err(AppError::usage(format!(
                "unknown median-test method `{other}` (expected permutation or bootstrap)"
            ))),
        }
    }
}

/// The fully-resolved analysis settings after applying overrides.
pub struct Resolved {
    pub data_path: PathBuf,
    pub out_dir: PathBuf,
    pub settings: PipelineSettings<f64>,
    pub interactions: bool,
    pub heredity: bool,
    pub top_models: usize,
}

pub struct Overrides<'a> {
    pub data: Option<&'a Path>,
    pub out: Option<&'a Path>,
    pub seed: Option<u64>,
    pub engine: Option<&'a str>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub gamma: Option<f64>,
    pub threshold: Option<f64>,
    pub draws: Option<usize>,
}

pub fn resolve(config: &FileConfig, ov: &Overrides) -> Result<Resolved, AppError> {
    let seed = ov
        .seed
        .or(config.seed)
        .ok_or_else(|| AppError::usage("a seed is required: pass --seed or set `seed`"))?;
    let data_path = ov
        .data
        .map(Path::to_path_buf)
        .or_else(|| config.data.path.clone())
        .ok_or_else(|| {
            AppError::usage("a data file is required: pass --data or set `data.path`")
        })?;
    let out_dir = ov
        .out
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bsca_out"));

    let mut settings = PipelineSettings::<f64>::new(seed);
    settings.gamma = ov.gamma.or(config.gamma).unwrap_or(1.0);
    settings.threshold = ov.threshold.or(config.threshold).unwrap_or(0.95);
    settings.draws = ov.draws.or(config.draws).unwrap_or(bsca::bma::DEFAULT_DRAWS);
    settings.engine = config.engine(ov.engine, ov.iters, ov.burnin)?;
    settings.forced = config.forced.clone();
    Ok(Resolved {
        data_path,
        out_dir,
        settings,
        interactions: config.interactions.unwrap_or(true),
        heredity: config.heredity.unwrap_or(true),
        top_models: config.top_models.unwrap_or(100),
    })
}

/// A Monte Carlo scenario loaded from TOML (`effects` rows are outcomes).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub id: String,
    pub description: Option<String>,
    pub n: usize,
    pub replicates: usize,
    pub effects: Vec<Vec<f64>>,
    pub error_cov: Option<Vec<Vec<f64>>>,
    pub baseline: Option<bool>,
}

pub fn load_scenarios(value: &str) -> Result<Vec<bsca::sim::Scenario>, AppError> {
    let path = Path::new(value);
    if !path.exists() {
        return bsca::sim::Scenario::builtin(value).map_err(AppError::from);
    }
    let text = std::fs::read_to_string(path).map_err(|e| {
        AppError::usage(format!("cannot read scenario file {value}: {e}"))
    })?;
    let file: ScenarioFile = toml::from_str(&text)
        .map_err(|e| AppError::usage(format!("invalid scenario file {value}: {e}")))?;
    let rows = file.effects.len();
    if rows == 0 || file.effects.iter().any(|r| r.len() != file.effects[0].len()) {
        return Err(AppError::usage(
            "scenario `effects` must be a non-empty rectangular matrix",
        ));
    }
    let cols = file.effects[0].len();
    let effects = DMatrix::from_fn(rows, cols, |i, j| file.effects[i][j]);
    let error_cov = match &file.error_cov {
        None => DMatrix::identity(rows, rows),
        Some(cov) => {
            if cov.len() != rows || cov.iter().any(|r| r.len() != rows) {
                return Err(AppError::usage(format!(
                    "scenario `error_cov` must be {rows}x{rows} to match the outcomes"
                )));
            }
            DMatrix::from_fn(rows, rows, |i, j| cov[i][j])
        }
    };
    let scenario = bsca::sim::Scenario {
        id: file.id.clone(),
        description: file.description.clone().unwrap_or_default(),
        n: file.n,
        replicates: file.replicates,
        effects,
        error_cov,
        baseline: file.baseline.unwrap_or(rows == 1),
    };
    scenario.validate()?;
    Ok(vec![scenario])
}
