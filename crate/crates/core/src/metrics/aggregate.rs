use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::domain::{Corpus, ResponsePmf, Survey, SCALE_POINTS};

/// How records are pooled into a survey-level distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every record counts once.
    Records,
    /// Samples are averaged per consumer first, then consumers count once.
    #[default]
    Consumers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDistribution {
    pub survey_id: String,
    pub pmf: ResponsePmf,
    pub n_respondents: usize,
    pub mean_pi: f64,
}

fn mean_of(pmfs: &[ResponsePmf]) -> ResponsePmf {
    let n = pmfs.len() as f64;
    let mut acc = [0.0; SCALE_POINTS];
    for p in pmfs {
        for (a, v) in acc.iter_mut().zip(p.probs()) {
            *a += v;
        }
    }
    ResponsePmf::from_raw(acc.map(|a| a / n))
}

/// Per-consumer averaged pmfs, in order of first appearance.
pub(crate) fn consumer_pmfs(survey: &Survey) -> Vec<(String, ResponsePmf)> {
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: BTreeMap<&str, Vec<ResponsePmf>> = BTreeMap::new();
    for r in &survey.responses {
        let entry = grouped.entry(r.consumer_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(r.consumer_id.as_str());
        }
        entry.push(r.final_pmf);
    }
    order
        .into_iter()
        .map(|id| (id.to_string(), mean_of(&grouped[id])))
        .collect()
}

pub fn survey_pmf(
    survey: &Survey,
    weighting: Weighting,
) -> Result<SurveyDistribution, MetricsError> {
    if survey.responses.is_empty() {
        return Err(MetricsError::EmptySurvey(survey.id.clone()));
    }
    let (pmf, n) = match weighting {
        Weighting::Records => {
            let pmfs: Vec<ResponsePmf> = survey.responses.iter().map(|r| r.final_pmf).collect();
            let consumers = consumer_pmfs(survey).len();
            (mean_of(&pmfs), consumers)
        }
        Weighting::Consumers => {
            let per_consumer: Vec<ResponsePmf> =
                consumer_pmfs(survey).into_iter().map(|(_, p)| p).collect();
            (mean_of(&per_consumer), per_consumer.len())
        }
    };
    Ok(SurveyDistribution {
        survey_id: survey.id.clone(),
        mean_pi: pmf.mean(),
        pmf,
        n_respondents: n,
    })
}

/// Pearson correlation; `None` when fewer than two points or either series
/// has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "pearson needs paired series");
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pairs real and synthetic surveys by id, in the real corpus' order.
pub(crate) fn align<'a>(
    real: &'a Corpus,
    synth: &'a Corpus,
) -> Result<Vec<(&'a Survey, &'a Survey)>, MetricsError> {
    let by_id: BTreeMap<&str, &Survey> = synth.surveys.iter().map(|s| (s.id.as_str(), s)).collect();
    if by_id.len() != synth.surveys.len() {
        return Err(MetricsError::Misaligned(
            "synthetic corpus has duplicate survey ids".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(real.surveys.len());
    for s in &real.surveys {
        let y = by_id.get(s.id.as_str()).ok_or_else(|| {
            MetricsError::Misaligned(format!("survey '{}' missing from synthetic corpus", s.id))
        })?;
        pairs.push((s, *y));
    }
    if pairs.len() != synth.surveys.len() {
        let extra: Vec<&str> = synth
            .surveys
            .iter()
            .filter(|s| real.survey(&s.id).is_none())
            .map(|s| s.id.as_str())
            .collect();
        return Err(MetricsError::Misaligned(format!(
            "synthetic-only surveys: {}",
            extra.join(", ")
        )));
    }
    Ok(pairs)
}

/// Correlation between real and synthetic survey mean purchase intents.
pub fn pi_correlation(real: &Corpus, synth: &Corpus) -> Result<f64, MetricsError> {
    let pairs = align(real, synth)?;
    if pairs.len() < 3 {
        return Err(MetricsError::TooFewSurveys {
            needed: 3,
            got: pairs.len(),
        });
    }
    let mut xs = Vec::with_capacity(pairs.len());
    let mut ys = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        xs.push(survey_pmf(x, Weighting::Consumers)?.mean_pi);
        ys.push(survey_pmf(y, Weighting::Consumers)?.mean_pi);
    }
    pearson(&xs, &ys)
        .ok_or_else(|| MetricsError::Undefined("zero variance in mean purchase intent".into()))
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiSummary {
    pub mean: f64,
    pub std: f64,
}

pub fn pi_summary(values: &[f64]) -> Option<PiSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(PiSummary {
        mean,
        std: var.sqrt(),
    })
}
