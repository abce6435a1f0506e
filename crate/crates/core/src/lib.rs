//! Synthetic consumer panels.
//!
//! Persona-conditioned language-model respondents answer purchase-intent
//! questions; free-text answers become Likert distributions through semantic
//! similarity to anchor statements; synthetic panels are scored against real
//! ones with distributional similarity and test-retest normalized correlation.

pub mod domain;
pub mod elicitation;
pub mod exec;
pub mod metrics;
pub mod panelio;
pub mod parametric;
pub mod ssr;

pub use domain::*;
pub use exec::Execution;
