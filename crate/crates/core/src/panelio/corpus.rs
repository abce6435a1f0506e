use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_version, read_file, to_canonical_json, write_file, PanelIoError, FORMAT_VERSION,
};
use crate::domain::{
    pmf_from_rating, validate_corpus, Category, ConceptAttributes, Consumer, Corpus, Demographics,
    LikertRating, Method, ResponsePmf, ResponseRecord, Role, Stimulus, Survey, DEFAULT_QUESTION,
    SCALE_POINTS,
};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    format_version: u32,
    role: Role,
    #[serde(default)]
    provenance: String,
    surveys: Vec<SurveyEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurveyEntry {
    id: String,
    stimulus: StimulusEntry,
    #[serde(default)]
    attributes: AttributesEntry,
    consumers: Vec<ConsumerEntry>,
    #[serde(default)]
    responses: Vec<ResponseEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StimulusEntry {
    #[serde(default)]
    description: String,
    #[serde(default)]
    image: Option<String>,
    #[serde(default = "default_question")]
    question: String,
}

fn default_question() -> String {
    DEFAULT_QUESTION.to_string()
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AttributesEntry {
    #[serde(default)]
    category: Category,
    #[serde(default)]
    price_tier: Category,
    #[serde(default)]
    source: Category,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsumerEntry {
    id: String,
    #[serde(default)]
    age: Option<i64>,
    #[serde(default)]
    gender: Category,
    #[serde(default)]
    income_tier: Category,
    #[serde(default)]
    region: Category,
    #[serde(default)]
    ethnicity: Category,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, Category>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseEntry {
    consumer_id: String,
    method: Method,
    sample: u32,
    #[serde(default)]
    rating: Option<i64>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    pmf: Option<[f64; SCALE_POINTS]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    per_set_pmfs: Option<Vec<[f64; SCALE_POINTS]>>,
}

fn to_file(c: &Corpus) -> CorpusFile {
    CorpusFile {
        format_version: FORMAT_VERSION,
        role: c.role,
        provenance: c.provenance.clone(),
        surveys: c
            .surveys
            .iter()
            .map(|s| SurveyEntry {
                id: s.id.clone(),
                stimulus: StimulusEntry {
                    description: s.stimulus.description.clone(),
                    image: s.stimulus.image_ref.clone(),
                    question: s.stimulus.question.clone(),
                },
                attributes: AttributesEntry {
                    category: s.attributes.category.clone(),
                    price_tier: s.attributes.price_tier.clone(),
                    source: s.attributes.source.clone(),
                },
                consumers: s
                    .roster
                    .iter()
                    .map(|c| ConsumerEntry {
                        id: c.id.clone(),
                        age: c.demographics.age.map(i64::from),
                        gender: c.demographics.gender.clone(),
                        income_tier: c.demographics.income_tier.clone(),
                        region: c.demographics.region.clone(),
                        ethnicity: c.demographics.ethnicity.clone(),
                        extra: c.demographics.extra.clone(),
                    })
                    .collect(),
                responses: s
                    .responses
                    .iter()
                    .map(|r| {
                        // Rated records store only the rating; their pmf is its delta.
                        let derived = r
                            .direct_rating
                            .is_some_and(|rt| r.final_pmf == pmf_from_rating(rt));
                        ResponseEntry {
                            consumer_id: r.consumer_id.clone(),
                            method: r.method,
                            sample: r.sample_index,
                            rating: r.direct_rating.map(|x| x.value() as i64),
                            text: r.raw_text.clone(),
                            pmf: (!derived).then(|| *r.final_pmf.probs()),
                            per_set_pmfs: r
                                .per_set_pmfs
                                .as_ref()
                                .map(|v| v.iter().map(|p| *p.probs()).collect()),
                        }
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn from_file(file: CorpusFile) -> Result<Corpus, PanelIoError> {
    let role = file.role;
    let mut surveys = Vec::with_capacity(file.surveys.len());
    for s in file.surveys {
        let field_err =
            |consumer: Option<&str>, field: &str, message: String| PanelIoError::Field {
                survey: s.id.clone(),
                consumer: consumer.map(str::to_string),
                field: field.to_string(),
                message,
            };
        let mut roster = Vec::with_capacity(s.consumers.len());
        for c in &s.consumers {
            let age = match c.age {
                None => None,
                Some(a) if (0..=150).contains(&a) => Some(a as u32),
                Some(a) => {
                    return Err(field_err(
                        Some(&c.id),
                        "age",
                        format!("{a} is not a valid age"),
                    ))
                }
            };
            roster.push(Consumer {
                id: c.id.clone(),
                demographics: Demographics {
                    age,
                    gender: c.gender.clone(),
                    income_tier: c.income_tier.clone(),
                    region: c.region.clone(),
                    ethnicity: c.ethnicity.clone(),
                    extra: c.extra.clone(),
                },
                role,
            });
        }
        let mut responses = Vec::with_capacity(s.responses.len());
        for r in &s.responses {
            let cid = Some(r.consumer_id.as_str());
            let rating = r
                .rating
                .map(LikertRating::new)
                .transpose()
                .map_err(|e| field_err(cid, "rating", e.to_string()))?;
            let final_pmf = match (r.pmf, rating) {
                (Some(p), _) => ResponsePmf::from_raw(p),
                (None, Some(rt)) => pmf_from_rating(rt),
                (None, None) => {
                    return Err(field_err(
                        cid,
                        "pmf",
                        "response has neither a rating nor a pmf".into(),
                    ))
                }
            };
            responses.push(ResponseRecord {
                consumer_id: r.consumer_id.clone(),
                method: r.method,
                sample_index: r.sample,
                raw_text: r.text.clone(),
                direct_rating: rating,
                per_set_pmfs: r
                    .per_set_pmfs
                    .as_ref()
                    .map(|v| v.iter().map(|p| ResponsePmf::from_raw(*p)).collect()),
                final_pmf,
            });
        }
        surveys.push(Survey {
            id: s.id.clone(),
            stimulus: Stimulus {
                description: s.stimulus.description.clone(),
                image_ref: s.stimulus.image.clone(),
                question: s.stimulus.question.clone(),
            },
            attributes: ConceptAttributes {
                category: s.attributes.category.clone(),
                price_tier: s.attributes.price_tier.clone(),
                source: s.attributes.source.clone(),
            },
            roster,
            responses,
        });
    }
    Ok(Corpus {
        surveys,
        role,
        provenance: file.provenance,
    })
}

pub fn corpus_to_string(corpus: &Corpus) -> Result<String, PanelIoError> {
    to_canonical_json(&to_file(corpus))
}

/// Parses and validates a corpus.
pub fn corpus_from_str(text: &str) -> Result<Corpus, PanelIoError> {
    check_version("corpus", text)?;
    let file: CorpusFile =
        serde_json::from_str(text).map_err(|e| PanelIoError::parse("corpus", &e))?;
    let corpus = from_file(file)?;
    let violations = validate_corpus(&corpus);
    if !violations.is_empty() {
        return Err(PanelIoError::Invalid(violations));
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, PanelIoError> {
    let text = read_file(path)?;
    corpus_from_str(&text).map_err(|e| match e {
        PanelIoError::Parse {
            line,
            column,
            message,
            ..
        } => PanelIoError::Parse {
            context: path.display().to_string(),
            line,
            column,
            message,
        },
        other => other,
    })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), PanelIoError> {
    write_file(path, &corpus_to_string(corpus)?)
}
