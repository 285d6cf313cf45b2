//! Bayesian specification curve analysis.
//!
//! Estimates treatment effects across a lattice of regression specifications
//! (choices of controls, treatments, subgroup moderators), scores each model
//! with the extended BIC, and aggregates estimates by Bayesian model
//! averaging. A classical specification-curve baseline (equal-weight median
//! plus resampling tests) and a seeded Monte Carlo harness are included.
//!
//! All numerics are generic over the scalar type via [`Real`]; `f64` aliases
//! for the main types live at the crate root.

pub mod bma;
pub mod dataset;
pub mod design;
pub mod error;
pub mod glm;
mod linalg;
pub mod modelspace;
pub mod multiout;
pub mod rng;
pub mod sca;
pub mod scalar;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

// f64 is the default working precision; these aliases name the concrete
// types most callers want.
pub type Dataset64 = dataset::Dataset<f64>;
pub type CodedDesign64 = design::CodedDesign<f64>;
pub type GlmFit64 = glm::GlmFit<f64>;
pub type ScoredModel64 = modelspace::ScoredModel<f64>;
pub type Explored64 = modelspace::Explored<f64>;
pub type BmaPosterior64 = bma::BmaPosterior<f64>;
pub type SpecCurve64 = sca::SpecCurve<f64>;
pub type GateAnalysis64 = multiout::GateAnalysis<f64>;
pub type SimReport64 = sim::SimReport<f64>;
