use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared by every stage of the pipeline. Diagnostics are carried as
/// `f64` regardless of the scalar type the pipeline ran at.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at row {row}, column '{column}': '{value}' is not numeric")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("domain error in column '{column}': {message}")]
    Domain { column: String, message: String },

    #[error("subgroup '{0}' is degenerate: all rows are members or all are non-members")]
    DegenerateSubgroup(String),

    #[error("design is collinear: columns of block '{block}' are linearly dependent on earlier columns")]
    Collinear { block: String },

    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    #[error("insufficient data: n = {n} rows for k = {k} coefficients")]
    InsufficientData { n: usize, k: usize },

    #[error("separation detected: coefficient magnitude {max_coef:.1} exceeded {threshold:.1} after {iterations} iterations")]
    Separation {
        max_coef: f64,
        threshold: f64,
        iterations: usize,
    },

    #[error("fit did not converge in {iterations} iterations (last max |gradient| = {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        loglik_trace: Vec<f64>,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model space has {count} heredity-valid models, above the enumeration cap {cap}; use the Gibbs engine")]
    EnumerationTooLarge { count: usize, cap: usize },

    #[error("no model in the explored set has a finite score")]
    NoValidModel,

    #[error("every specification in the curve failed to fit")]
    EmptyCurve,

    #[error("family mismatch: {0}")]
    Family(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),
}
