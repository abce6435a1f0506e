use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ElicitationError;
use crate::domain::{Method, DEMOGRAPHIC_ATTRIBUTES};
use crate::ssr::SsrParams;

/// Which demographic attributes reach the persona prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemographyMode {
    Full,
    None,
    Subset(Vec<String>),
}

impl DemographyMode {
    pub fn validate(&self) -> Result<(), ElicitationError> {
        if let DemographyMode::Subset(names) = self {
            for n in names {
                let known = DEMOGRAPHIC_ATTRIBUTES.contains(&n.as_str())
                    || n.strip_prefix("extra.").is_some_and(|k| !k.is_empty());
                if !known {
                    return Err(ElicitationError::Config(format!(
                        "unknown demographic attribute '{n}'"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for DemographyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemographyMode::Full => f.write_str("full"),
            DemographyMode::None => f.write_str("none"),
            DemographyMode::Subset(names) => write!(f, "subset={}", names.join(",")),
        }
    }
}

impl FromStr for DemographyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(DemographyMode::Full),
            "none" => Ok(DemographyMode::None),
            other => match other.strip_prefix("subset=") {
                Some(list) => Ok(DemographyMode::Subset(
                    list.split(',')
                        .map(|n| n.trim().to_string())
                        .filter(|n| !n.is_empty())
                        .collect(),
                )),
                None => Err(format!(
                    "unknown demography mode '{other}' (expected full, none or subset=a,b)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StimulusMode {
    Text,
    Image,
}

impl fmt::Display for StimulusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StimulusMode::Text => "text",
            StimulusMode::Image => "image",
        })
    }
}

impl FromStr for StimulusMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(StimulusMode::Text),
            "image" => Ok(StimulusMode::Image),
            other => Err(format!(
                "unknown stimulus mode '{other}' (expected text or image)"
            )),
        }
    }
}

/// Sampling parameters the rating expert always uses.
pub const RATER_TEMPERATURE: f64 = 0.3;
pub const RATER_TOP_P: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub chat_model: String,
    pub embed_model: String,
    pub llm_temperature: f64,
    pub top_p: f64,
    pub samples_per_consumer: u32,
    pub demography_mode: DemographyMode,
    pub stimulus_mode: StimulusMode,
    pub ssr: SsrParams,
    pub seed: u64,
    /// Upper bound on concurrent provider calls.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Ssr,
            chat_model: "gpt-4o".into(),
            embed_model: "text-embedding-3-small".into(),
            llm_temperature: 0.5,
            top_p: 0.9,
            samples_per_consumer: 2,
            demography_mode: DemographyMode::Full,
            stimulus_mode: StimulusMode::Text,
            ssr: SsrParams::default(),
            seed: 0,
            parallelism: 4,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ElicitationError> {
        let bad = |m: String| Err(ElicitationError::Config(m));
        if self.samples_per_consumer < 1 {
            return bad("samples per consumer must be >= 1".into());
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if !self.llm_temperature.is_finite() || self.llm_temperature < 0.0 {
            return bad(format!(
                "llm temperature must be >= 0, got {}",
                self.llm_temperature
            ));
        }
        if self.chat_model.trim().is_empty() {
            return bad("chat model is empty".into());
        }
        if self.method == Method::Ssr && self.embed_model.trim().is_empty() {
            return bad("embedding model is empty".into());
        }
        self.ssr
            .validate()
            .map_err(|e| ElicitationError::Config(e.to_string()))?;
        self.demography_mode.validate()
    }
}
