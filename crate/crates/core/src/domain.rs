//! Core value types shared by every stage of the pipeline: ratings, response
//! distributions, respondents, surveys and corpora.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for every "sums to one" check.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Number of points on the Likert scale.
pub const SCALE_POINTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("rating {0} is outside the 1..=5 Likert scale")]
    RatingOutOfRange(i64),
    #[error("probability at rating {rating} is invalid: {value}")]
    InvalidProbability { rating: u8, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("weights must be finite, non-negative and have a positive sum")]
    DegenerateWeights,
}

/// A single answer on the 1..=5 scale. Stored one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LikertRating(u8);

impl LikertRating {
    pub const ALL: [LikertRating; SCALE_POINTS] = [
        LikertRating(1),
        LikertRating(2),
        LikertRating(3),
        LikertRating(4),
        LikertRating(5),
    ];

    pub fn new(value: i64) -> Result<Self, DomainError> {
        if (1..=5).contains(&value) {
            Ok(LikertRating(value as u8))
        } else {
            Err(DomainError::RatingOutOfRange(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based position, for indexing pmf arrays.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < SCALE_POINTS, "rating index {index} out of range");
        LikertRating(index as u8 + 1)
    }
}

impl TryFrom<u8> for LikertRating {
    type Error = DomainError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        LikertRating::new(value as i64)
    }
}

impl From<LikertRating> for u8 {
    fn from(r: LikertRating) -> u8 {
        r.0
    }
}

impl fmt::Display for LikertRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Probability mass over the five ratings.
///
/// Constructors validate. Deserialization does not, so that a corpus holding a
/// malformed distribution can still be loaded and reported by
/// [`validate_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResponsePmf([f64; SCALE_POINTS]);

impl ResponsePmf {
    pub fn new(probs: [f64; SCALE_POINTS]) -> Result<Self, DomainError> {
        let pmf = ResponsePmf(probs);
        pmf.check()?;
        Ok(pmf)
    }

    /// Wraps raw values without validation. Callers are expected to run
    /// [`ResponsePmf::check`] before trusting the result.
    pub fn from_raw(probs: [f64; SCALE_POINTS]) -> Self {
        ResponsePmf(probs)
    }

    /// Normalizes non-negative weights into a pmf.
    pub fn from_weights(weights: [f64; SCALE_POINTS]) -> Result<Self, DomainError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DomainError::DegenerateWeights);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(DomainError::DegenerateWeights);
        }
        Ok(ResponsePmf(weights.map(|w| w / total)))
    }

    pub fn uniform() -> Self {
        ResponsePmf([1.0 / SCALE_POINTS as f64; SCALE_POINTS])
    }

    pub fn delta(rating: LikertRating) -> Self {
        pmf_from_rating(rating)
    }

    pub fn check(&self) -> Result<(), DomainError> {
        for (i, &p) in self.0.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(DomainError::InvalidProbability {
                    rating: i as u8 + 1,
                    value: p,
                });
            }
        }
        let total: f64 = self.0.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(DomainError::NotNormalized(total));
        }
        Ok(())
    }

    pub fn probs(&self) -> &[f64; SCALE_POINTS] {
        &self.0
    }

    pub fn get(&self, rating: LikertRating) -> f64 {
        self.0[rating.index()]
    }

    /// Expected rating, `sum r * p(r)`.
    pub fn mean(&self) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    pub fn cdf(&self) -> [f64; SCALE_POINTS] {
        let mut acc = 0.0;
        self.0.map(|p| {
            acc += p;
            acc
        })
    }

    /// Most likely rating; ties resolve to the lowest rating.
    pub fn argmax(&self) -> LikertRating {
        let mut best = 0;
        for i in 1..SCALE_POINTS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        LikertRating::from_index(best)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    /// The rating carrying all of the mass, if this is a Kronecker delta.
    pub fn as_delta(&self) -> Option<LikertRating> {
        let nonzero: Vec<usize> = (0..SCALE_POINTS).filter(|&i| self.0[i] != 0.0).collect();
        match nonzero.as_slice() {
            [i] if self.0[*i] == 1.0 => Some(LikertRating::from_index(*i)),
            _ => None,
        }
    }
}

/// Kronecker delta pmf at `rating`.
pub fn pmf_from_rating(rating: LikertRating) -> ResponsePmf {
    let mut p = [0.0; SCALE_POINTS];
    p[rating.index()] = 1.0;
    ResponsePmf(p)
}

/// A categorical attribute where "unknown" is an explicit value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Category {
    #[default]
    Null,
    Label(String),
}

impl Category {
    pub const NULL_LABEL: &'static str = "Null";

    /// Empty strings and the literal `Null` map to [`Category::Null`].
    pub fn parse(raw: &str) -> Self {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("null") {
            Category::Null
        } else {
            Category::Label(trimmed.to_string())
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Category::Null => None,
            Category::Label(s) => Some(s),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Category::Null)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Null => f.write_str(Self::NULL_LABEL),
            Category::Label(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Category {
    fn from(s: &str) -> Self {
        Category::parse(s)
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Category::Null => serializer.serialize_none(),
            Category::Label(s) => serializer.serialize_str(s),
        }
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw: Option<String> = Option::deserialize(deserializer)?;
        Ok(raw.map(|s| Category::parse(&s)).unwrap_or(Category::Null))
    }
}

/// Demographic attribute names in their fixed presentation order.
pub const DEMOGRAPHIC_ATTRIBUTES: [&str; 5] =
    ["age", "gender", "income_tier", "region", "ethnicity"];

/// Concept attribute names.
pub const CONCEPT_ATTRIBUTES: [&str; 3] = ["category", "price_tier", "source"];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Demographics {
    /// Age in years; `None` is the Null category.
    pub age: Option<u32>,
    pub gender: Category,
    pub income_tier: Category,
    pub region: Category,
    pub ethnicity: Category,
    #[serde(default)]
    pub extra: BTreeMap<String, Category>,
}

impl Demographics {
    /// Value of a named attribute rendered as a category.
    pub fn attribute(&self, name: &str) -> Option<Category> {
        match name {
            "age" => Some(
                self.age
                    .map(|a| Category::Label(a.to_string()))
                    .unwrap_or(Category::Null),
            ),
            "gender" => Some(self.gender.clone()),
            "income_tier" => Some(self.income_tier.clone()),
            "region" => Some(self.region.clone()),
            "ethnicity" => Some(self.ethnicity.clone()),
            other => other
                .strip_prefix("extra.")
                .map(|key| self.extra.get(key).cloned().unwrap_or(Category::Null)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Real,
    Synthetic,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Real => "real",
            Role::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consumer {
    pub id: String,
    pub demographics: Demographics,
    pub role: Role,
}

pub const DEFAULT_QUESTION: &str = "How likely are you to purchase the product?";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stimulus {
    pub description: String,
    pub image_ref: Option<String>,
    pub question: String,
}

impl Stimulus {
    pub fn text(description: impl Into<String>) -> Self {
        Stimulus {
            description: description.into(),
            image_ref: None,
            question: DEFAULT_QUESTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConceptAttributes {
    pub category: Category,
    pub price_tier: Category,
    pub source: Category,
}

impl ConceptAttributes {
    pub fn attribute(&self, name: &str) -> Option<Category> {
        match name {
            "category" => Some(self.category.clone()),
            "price_tier" => Some(self.price_tier.clone()),
            "source" => Some(self.source.clone()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dlr,
    Flr,
    Ssr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dlr => "dlr",
            Method::Flr => "flr",
            Method::Ssr => "ssr",
        }
    }

    pub fn is_textual(self) -> bool {
        !matches!(self, Method::Dlr)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dlr" => Ok(Method::Dlr),
            "flr" => Ok(Method::Flr),
            "ssr" => Ok(Method::Ssr),
            other => Err(format!(
                "unknown method '{other}' (expected dlr, flr or ssr)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub consumer_id: String,
    pub method: Method,
    pub sample_index: u32,
    pub raw_text: Option<String>,
    pub direct_rating: Option<LikertRating>,
    pub per_set_pmfs: Option<Vec<ResponsePmf>>,
    pub final_pmf: ResponsePmf,
}

impl ResponseRecord {
    /// A record from a single integer answer (human response, DLR or FLR).
    pub fn rated(
        consumer_id: impl Into<String>,
        method: Method,
        sample_index: u32,
        rating: LikertRating,
    ) -> Self {
        ResponseRecord {
            consumer_id: consumer_id.into(),
            method,
            sample_index,
            raw_text: None,
            direct_rating: Some(rating),
            per_set_pmfs: None,
            final_pmf: pmf_from_rating(rating),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Survey {
    pub id: String,
    pub stimulus: Stimulus,
    pub attributes: ConceptAttributes,
    pub roster: Vec<Consumer>,
    pub responses: Vec<ResponseRecord>,
}

impl Survey {
    pub fn consumer(&self, id: &str) -> Option<&Consumer> {
        self.roster.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub surveys: Vec<Survey>,
    pub role: Role,
    pub provenance: String,
}

impl Corpus {
    pub fn survey(&self, id: &str) -> Option<&Survey> {
        self.surveys.iter().find(|s| s.id == id)
    }
}

/// One broken invariant found by [`validate_corpus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub survey_id: String,
    pub consumer_id: Option<String>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.consumer_id {
            Some(c) => write!(
                f,
                "survey '{}', consumer '{}': {}",
                self.survey_id, c, self.rule
            ),
            None => write!(f, "survey '{}': {}", self.survey_id, self.rule),
        }
    }
}

/// Checks every type invariant of a corpus. Empty result means valid.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut survey_ids = HashSet::new();
    for survey in &corpus.surveys {
        let violation = |consumer: Option<&str>, rule: String| Violation {
            survey_id: survey.id.clone(),
            consumer_id: consumer.map(str::to_string),
            rule,
        };
        if !survey_ids.insert(survey.id.as_str()) {
            out.push(violation(None, "duplicate survey id".into()));
        }
        if survey.stimulus.image_ref.is_none() && survey.stimulus.description.trim().is_empty() {
            out.push(violation(
                None,
                "stimulus description empty without image".into(),
            ));
        }

        let mut roster_ids = HashSet::new();
        for c in &survey.roster {
            if !roster_ids.insert(c.id.as_str()) {
                out.push(violation(
                    Some(&c.id),
                    "duplicate consumer id in roster".into(),
                ));
            }
            if c.role != corpus.role {
                out.push(violation(
                    Some(&c.id),
                    format!(
                        "consumer role {} differs from corpus role {}",
                        c.role, corpus.role
                    ),
                ));
            }
        }

        for r in &survey.responses {
            let cid = Some(r.consumer_id.as_str());
            if !roster_ids.contains(r.consumer_id.as_str()) {
                out.push(violation(
                    cid,
                    "response references unknown consumer".into(),
                ));
            }
            if let Err(e) = r.final_pmf.check() {
                out.push(violation(
                    cid,
                    format!("final pmf of sample {} invalid: {e}", r.sample_index),
                ));
            }
            match r.method {
                Method::Dlr | Method::Flr => match r.direct_rating {
                    Some(rating) if r.final_pmf != pmf_from_rating(rating) => {
                        out.push(violation(
                            cid,
                            format!(
                                "sample {}: final pmf is not the delta of its rating",
                                r.sample_index
                            ),
                        ));
                    }
                    Some(_) => {}
                    None => out.push(violation(
                        cid,
                        format!(
                            "sample {}: {} record without rating",
                            r.sample_index, r.method
                        ),
                    )),
                },
                Method::Ssr => {
                    if !r.raw_text.as_deref().is_some_and(|t| !t.trim().is_empty()) {
                        out.push(violation(
                            cid,
                            format!("sample {}: ssr record without text", r.sample_index),
                        ));
                    }
                    match &r.per_set_pmfs {
                        Some(sets) if !sets.is_empty() => {
                            for (i, p) in sets.iter().enumerate() {
                                if let Err(e) = p.check() {
                                    out.push(violation(
                                        cid,
                                        format!(
                                            "sample {}: per-set pmf {i} invalid: {e}",
                                            r.sample_index
                                        ),
                                    ));
                                }
                            }
                            let n = sets.len() as f64;
                            let mean: Vec<f64> = (0..SCALE_POINTS)
                                .map(|k| sets.iter().map(|p| p.0[k]).sum::<f64>() / n)
                                .collect();
                            let off = mean
                                .iter()
                                .zip(r.final_pmf.0.iter())
                                .any(|(a, b)| (a - b).abs() > NORMALIZATION_TOLERANCE);
                            if off {
                                out.push(violation(
                                    cid,
                                    format!(
                                        "sample {}: final pmf is not the mean of per-set pmfs",
                                        r.sample_index
                                    ),
                                ));
                            }
                        }
                        _ => out.push(violation(
                            cid,
                            format!("sample {}: ssr record without per-set pmfs", r.sample_index),
                        )),
                    }
                }
            }
        }
    }
    out
}
