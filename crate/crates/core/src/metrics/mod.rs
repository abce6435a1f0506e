//! Evaluation of synthetic panels against real ones.

mod aggregate;
mod report;
mod retest;
mod similarity;
mod strata;

use thiserror::Error;

pub use aggregate::{
    pearson, pi_correlation, pi_summary, survey_pmf, PiSummary, SurveyDistribution, Weighting,
};
pub use report::{evaluate, evaluate_with, EvaluationReport, SurveyComparison, TableRow};
pub use retest::{correlation_attainment, correlation_attainment_with, RetestResult};
pub use similarity::{ks_similarity, pmf_cosine};
pub use strata::{age_band, stratified_pi, StratumRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("survey '{0}' has no responses")]
    EmptySurvey(String),
    #[error("corpora are not aligned: {0}")]
    Misaligned(String),
    #[error("need at least {needed} surveys, got {got}")]
    TooFewSurveys { needed: usize, got: usize },
    #[error("correlation undefined: {0}")]
    Undefined(String),
    #[error("survey '{survey}': {reason}")]
    InsufficientRespondents { survey: String, reason: String },
    #[error("unknown stratification feature '{0}'")]
    UnknownFeature(String),
    #[error("iterations must be >= 1")]
    NoIterations,
}
