//! Importer for flat survey exports: one row per respondent.
//!
//! Required columns: `survey_id`, `consumer_id`, `rating`. Recognized optional
//! columns: `sample`, `age`, `gender`, `income_tier`, `region`, `ethnicity`,
//! `description`, `image`, `question`, `category`, `price_tier`, `source`.
//! Anything else lands in the consumer's `extra` map. Empty cells and
//! `Null`/`NA`/`N/A` are the Null category.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use super::PanelIoError;
use crate::domain::{
    validate_corpus, Category, ConceptAttributes, Consumer, Corpus, Demographics, LikertRating,
    Method, ResponseRecord, Role, Stimulus, Survey, DEFAULT_QUESTION,
};

const KNOWN: [&str; 15] = [
    "survey_id",
    "consumer_id",
    "rating",
    "sample",
    "age",
    "gender",
    "income_tier",
    "region",
    "ethnicity",
    "description",
    "image",
    "question",
    "category",
    "price_tier",
    "source",
];

fn is_null(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty()
        || ["null", "na", "n/a"]
            .iter()
            .any(|n| c.eq_ignore_ascii_case(n))
}

fn category(cell: Option<&str>) -> Category {
    match cell {
        Some(c) if !is_null(c) => Category::Label(c.trim().to_string()),
        _ => Category::Null,
    }
}

pub fn import_table(path: &Path, delimiter: u8) -> Result<Corpus, PanelIoError> {
    let file = std::fs::File::open(path).map_err(|e| PanelIoError::io(path, e))?;
    let mut corpus = import_table_from_reader(file, delimiter)?;
    corpus.provenance = format!("imported from {}", path.display());
    Ok(corpus)
}

pub fn import_table_from_reader<R: Read>(reader: R, delimiter: u8) -> Result<Corpus, PanelIoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| PanelIoError::Table {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    for required in ["survey_id", "consumer_id", "rating"] {
        if !col.contains_key(required) {
            return Err(PanelIoError::Table {
                row: 0,
                message: format!("missing required column '{required}'"),
            });
        }
    }
    let extras: Vec<(usize, &str)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !KNOWN.contains(&h.as_str()))
        .map(|(i, h)| (i, h.as_str()))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut surveys: HashMap<String, Survey> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| PanelIoError::Table {
            row,
            message: e.to_string(),
        })?;
        let get = |name: &str| col.get(name).and_then(|&c| record.get(c));
        let text = |name: &str| {
            get(name)
                .filter(|c| !is_null(c))
                .map(|c| c.trim().to_string())
        };
        let err = |message: String| PanelIoError::Table { row, message };

        let survey_id = text("survey_id").ok_or_else(|| err("empty survey_id".into()))?;
        let consumer_id = text("consumer_id").ok_or_else(|| err("empty consumer_id".into()))?;
        let rating_raw = get("rating").unwrap_or("");
        let rating = rating_raw
            .trim()
            .parse::<i64>()
            .map_err(|_| err(format!("survey '{survey_id}', consumer '{consumer_id}': rating '{rating_raw}' is not an integer")))
            .and_then(|v| {
                LikertRating::new(v).map_err(|e| err(format!("survey '{survey_id}', consumer '{consumer_id}': {e}")))
            })?;
        let sample = match text("sample") {
            None => 0,
            Some(s) => s
                .parse::<u32>()
                .map_err(|_| err(format!("sample '{s}' is not a non-negative integer")))?,
        };
        let age = match text("age") {
            None => None,
            Some(a) => Some(
                a.parse::<f64>()
                    .ok()
                    .filter(|v| (0.0..=150.0).contains(v))
                    .map(|v| v.floor() as u32)
                    .ok_or_else(|| err(format!("age '{a}' is not a number of years")))?,
            ),
        };

        let survey = surveys.entry(survey_id.clone()).or_insert_with(|| {
            order.push(survey_id.clone());
            Survey {
                id: survey_id.clone(),
                stimulus: Stimulus {
                    description: String::new(),
                    image_ref: None,
                    question: DEFAULT_QUESTION.to_string(),
                },
                attributes: ConceptAttributes::default(),
                roster: Vec::new(),
                responses: Vec::new(),
            }
        });
        // Survey-level columns: first non-empty value wins.
        if survey.stimulus.description.is_empty() {
            if let Some(d) = text("description") {
                survey.stimulus.description = d;
            }
        }
        if survey.stimulus.image_ref.is_none() {
            survey.stimulus.image_ref = text("image");
        }
        if let Some(q) = text("question") {
            if survey.stimulus.question == DEFAULT_QUESTION {
                survey.stimulus.question = q;
            }
        }
        for (name, slot) in [
            ("category", &mut survey.attributes.category),
            ("price_tier", &mut survey.attributes.price_tier),
            ("source", &mut survey.attributes.source),
        ] {
            if slot.is_null() {
                *slot = category(get(name));
            }
        }

        if survey.consumer(&consumer_id).is_none() {
            let extra: BTreeMap<String, Category> = extras
                .iter()
                .map(|(i, name)| (name.to_string(), category(record.get(*i))))
                .collect();
            survey.roster.push(Consumer {
                id: consumer_id.clone(),
                demographics: Demographics {
                    age,
                    gender: category(get("gender")),
                    income_tier: category(get("income_tier")),
                    region: category(get("region")),
                    ethnicity: category(get("ethnicity")),
                    extra,
                },
                role: Role::Real,
            });
        }
        survey.responses.push(ResponseRecord::rated(
            consumer_id,
            Method::Dlr,
            sample,
            rating,
        ));
    }

    let corpus = Corpus {
        surveys: order
            .into_iter()
            .map(|id| surveys.remove(&id).expect("survey present"))
            .collect(),
        role: Role::Real,
        provenance: "imported table".into(),
    };
    let violations = validate_corpus(&corpus);
    if !violations.is_empty() {
        return Err(PanelIoError::Invalid(violations));
    }
    Ok(corpus)
}
