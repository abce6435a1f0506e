use serde::{Deserialize, Serialize};

use super::aggregate::{align, pearson, pi_summary, survey_pmf, PiSummary, Weighting};
use super::retest::{correlation_attainment_with, RetestResult};
use super::similarity::{ks_similarity, pmf_cosine};
use super::MetricsError;
use crate::domain::{Corpus, ResponsePmf};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyComparison {
    pub survey_id: String,
    pub n_real: usize,
    pub n_synthetic: usize,
    pub real_pmf: ResponsePmf,
    pub synthetic_pmf: ResponsePmf,
    pub real_mean_pi: f64,
    pub synthetic_mean_pi: f64,
    pub ks_similarity: f64,
    pub cosine: f64,
}

/// Headline row: correlation attainment, distributional similarities,
/// mean-PI correlation and the mean +- std of survey mean PI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub rho: Option<f64>,
    pub k_xy: f64,
    pub r_xy: Option<f64>,
    pub c_xy: f64,
    pub real_pi: PiSummary,
    pub synthetic_pi: PiSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub summary: TableRow,
    pub retest: RetestResult,
    pub surveys: Vec<SurveyComparison>,
}

impl EvaluationReport {
    pub fn summary_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
        format!(
            "rho={} K={:.4} R={} C={:.4}",
            fmt(self.summary.rho),
            self.summary.k_xy,
            fmt(self.summary.r_xy),
            self.summary.c_xy
        )
    }

    /// Tab-separated table: the headline row followed by one row per survey.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
        let s = &self.summary;
        let mut out = String::from("rho\tK_xy\tR_xy\tC_xy\tE[PI]_real\tE[PI]_synthetic\n");
        out.push_str(&format!(
            "{}\t{:.4}\t{}\t{:.4}\t{:.2} ± {:.2}\t{:.2} ± {:.2}\n\n",
            fmt(s.rho),
            s.k_xy,
            fmt(s.r_xy),
            s.c_xy,
            s.real_pi.mean,
            s.real_pi.std,
            s.synthetic_pi.mean,
            s.synthetic_pi.std
        ));
        out.push_str("survey\tn_real\tn_synthetic\tPI_real\tPI_synthetic\tKS_sim\tcosine\n");
        for row in &self.surveys {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
                row.survey_id,
                row.n_real,
                row.n_synthetic,
                row.real_mean_pi,
                row.synthetic_mean_pi,
                row.ks_similarity,
                row.cosine
            ));
        }
        out
    }
}

pub fn evaluate(
    real: &Corpus,
    synth: &Corpus,
    iterations: u32,
    seed: u64,
) -> Result<EvaluationReport, MetricsError> {
    evaluate_with(real, synth, iterations, seed, Execution::default())
}

pub fn evaluate_with(
    real: &Corpus,
    synth: &Corpus,
    iterations: u32,
    seed: u64,
    execution: Execution,
) -> Result<EvaluationReport, MetricsError> {
    let pairs = align(real, synth)?;
    if pairs.is_empty() {
        return Err(MetricsError::TooFewSurveys { needed: 1, got: 0 });
    }
    let mut surveys = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        let dx = survey_pmf(x, Weighting::Consumers)?;
        let dy = survey_pmf(y, Weighting::Consumers)?;
        surveys.push(SurveyComparison {
            survey_id: x.id.clone(),
            n_real: dx.n_respondents,
            n_synthetic: dy.n_respondents,
            ks_similarity: ks_similarity(&dx.pmf, &dy.pmf),
            cosine: pmf_cosine(&dx.pmf, &dy.pmf),
            real_pmf: dx.pmf,
            synthetic_pmf: dy.pmf,
            real_mean_pi: dx.mean_pi,
            synthetic_mean_pi: dy.mean_pi,
        });
    }
    let n = surveys.len() as f64;
    let real_pi: Vec<f64> = surveys.iter().map(|s| s.real_mean_pi).collect();
    let synth_pi: Vec<f64> = surveys.iter().map(|s| s.synthetic_mean_pi).collect();
    let r_xy = if surveys.len() >= 3 {
        pearson(&real_pi, &synth_pi)
    } else {
        None
    };

    let retest = correlation_attainment_with(real, synth, iterations, seed, execution)?;
    let summary = TableRow {
        rho: retest.rho,
        k_xy: surveys.iter().map(|s| s.ks_similarity).sum::<f64>() / n,
        r_xy,
        c_xy: surveys.iter().map(|s| s.cosine).sum::<f64>() / n,
        real_pi: pi_summary(&real_pi).expect("non-empty"),
        synthetic_pi: pi_summary(&synth_pi).expect("non-empty"),
    };
    Ok(EvaluationReport {
        summary,
        retest,
        surveys,
    })
}
