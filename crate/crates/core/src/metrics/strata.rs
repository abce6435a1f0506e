use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::domain::{Category, Corpus, CONCEPT_ATTRIBUTES, DEMOGRAPHIC_ATTRIBUTES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub feature: String,
    pub bucket: String,
    pub mean_pi: f64,
    /// Sample standard deviation over sqrt(n); absent for a single record.
    pub std_error: Option<f64>,
    pub n: usize,
}

/// Age band label used when stratifying by age.
pub fn age_band(age: u32) -> &'static str {
    match age {
        0..=17 => "<18",
        18..=24 => "18-24",
        25..=34 => "25-34",
        35..=44 => "35-44",
        45..=54 => "45-54",
        55..=64 => "55-64",
        _ => "65+",
    }
}

fn is_known_feature(feature: &str) -> bool {
    DEMOGRAPHIC_ATTRIBUTES.contains(&feature)
        || CONCEPT_ATTRIBUTES.contains(&feature)
        || feature
            .strip_prefix("extra.")
            .is_some_and(|k| !k.is_empty())
}

/// Mean purchase intent per bucket of `feature`, pooled over every record of
/// every survey. Null is its own bucket and sorts last.
pub fn stratified_pi(corpus: &Corpus, feature: &str) -> Result<Vec<StratumRow>, MetricsError> {
    if !is_known_feature(feature) {
        return Err(MetricsError::UnknownFeature(feature.to_string()));
    }
    let mut buckets: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for survey in &corpus.surveys {
        let concept_value = survey.attributes.attribute(feature);
        for r in &survey.responses {
            let bucket = match &concept_value {
                Some(v) => v.clone(),
                None => {
                    let d = survey.consumer(&r.consumer_id).map(|c| &c.demographics);
                    match (feature, d) {
                        ("age", Some(d)) => d
                            .age
                            .map(|a| Category::Label(age_band(a).to_string()))
                            .unwrap_or(Category::Null),
                        (_, Some(d)) => d.attribute(feature).unwrap_or(Category::Null),
                        (_, None) => Category::Null,
                    }
                }
            };
            buckets.entry(bucket).or_default().push(r.final_pmf.mean());
        }
    }

    let mut rows: Vec<StratumRow> = buckets
        .into_iter()
        .map(|(bucket, values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std_error = (n > 1).then(|| {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                var.sqrt() / (n as f64).sqrt()
            });
            StratumRow {
                feature: feature.to_string(),
                bucket: bucket.to_string(),
                mean_pi: mean,
                std_error,
                n,
            }
        })
        .collect();
    // Category::Null sorts first in the map; report it last.
    if rows
        .first()
        .is_some_and(|r| r.bucket == Category::NULL_LABEL)
        && rows.len() > 1
    {
        rows.rotate_left(1);
    }
    Ok(rows)
}
