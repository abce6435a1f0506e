//! Correlation attainment: the synthetic-vs-real mean purchase intent
//! correlation divided by a simulated human test-retest correlation.
//!
//! Each iteration splits every real roster into a test half and a control
//! half, draws a synthetic cohort of test size without replacement, and
//! correlates cohort means across surveys. Iteration `i` of a survey draws from
//! ChaCha stream `i` of a key derived from the seed and the survey's content,
//! so results do not depend on survey ids, survey order, roster order or the
//! execution mode.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::aggregate::{align, consumer_pmfs, pearson};
use super::MetricsError;
use crate::domain::{Corpus, Survey};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetestResult {
    pub iterations: u32,
    pub seed: u64,
    /// Mean test-vs-control correlation over iterations where it was defined.
    pub mean_rxx: Option<f64>,
    /// Mean test-vs-synthetic correlation over iterations where it was defined.
    pub mean_rxy: Option<f64>,
    pub rho: Option<f64>,
    /// Monte Carlo standard error of `rho` (delta method over iterations).
    pub std_error_rho: Option<f64>,
    pub skipped_rxx: u32,
    pub skipped_rxy: u32,
}

impl RetestResult {
    pub fn skipped_rxy_fraction(&self) -> f64 {
        self.skipped_rxy as f64 / self.iterations as f64
    }

    pub fn skipped_rxx_fraction(&self) -> f64 {
        self.skipped_rxx as f64 / self.iterations as f64
    }
}

struct PreparedSurvey {
    /// Consumer-level mean PI of the real roster, sorted.
    real: Vec<f64>,
    /// Record-level mean PI of the synthetic survey, sorted.
    synth: Vec<f64>,
    test_size: usize,
    key: [u8; 32],
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn content_digest(real: &[f64], synth: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((real.len() as u64).to_le_bytes());
    for v in real {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update((synth.len() as u64).to_le_bytes());
    for v in synth {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

/// Content digest, real units and synthetic units of one survey pair.
type Staged = ([u8; 32], Vec<f64>, Vec<f64>);

fn prepare(real: &Survey, synth: &Survey) -> Result<Staged, MetricsError> {
    let real_units = sorted(
        consumer_pmfs(real)
            .into_iter()
            .map(|(_, p)| p.mean())
            .collect(),
    );
    let synth_units = sorted(synth.responses.iter().map(|r| r.final_pmf.mean()).collect());
    if real_units.len() < 4 {
        return Err(MetricsError::InsufficientRespondents {
            survey: real.id.clone(),
            reason: format!(
                "needs at least 4 real respondents, has {}",
                real_units.len()
            ),
        });
    }
    let test_size = real_units.len().div_ceil(2);
    if synth_units.len() < test_size {
        return Err(MetricsError::InsufficientRespondents {
            survey: real.id.clone(),
            reason: format!(
                "synthetic survey has {} records, test cohort needs {test_size}",
                synth_units.len()
            ),
        });
    }
    Ok((
        content_digest(&real_units, &synth_units),
        real_units,
        synth_units,
    ))
}

fn prepare_all(
    real: &Corpus,
    synth: &Corpus,
    seed: u64,
) -> Result<Vec<PreparedSurvey>, MetricsError> {
    let pairs = align(real, synth)?;
    if pairs.len() < 3 {
        return Err(MetricsError::TooFewSurveys {
            needed: 3,
            got: pairs.len(),
        });
    }
    let mut staged = pairs
        .into_iter()
        .map(|(x, y)| prepare(x, y))
        .collect::<Result<Vec<_>, _>>()?;
    staged.sort_by_key(|s| s.0);

    // Surveys with identical content still get distinct streams.
    let mut seen: HashMap<[u8; 32], u64> = HashMap::new();
    Ok(staged
        .into_iter()
        .map(|(digest, real, synth)| {
            let occurrence = seen.entry(digest).or_insert(0);
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(digest);
            h.update(occurrence.to_le_bytes());
            *occurrence += 1;
            PreparedSurvey {
                test_size: real.len().div_ceil(2),
                real,
                synth,
                key: h.finalize().into(),
            }
        })
        .collect())
}

/// Cohort means for one survey in one iteration: (test, control, synthetic).
fn draw(survey: &PreparedSurvey, iteration: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::from_seed(survey.key);
    rng.set_stream(iteration);

    let n = survey.real.len();
    let k = survey.test_size;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let test = idx[..k].iter().map(|&i| survey.real[i]).sum::<f64>() / k as f64;
    let control = idx[k..].iter().map(|&i| survey.real[i]).sum::<f64>() / (n - k) as f64;

    let synth = index::sample(&mut rng, survey.synth.len(), k)
        .into_iter()
        .map(|i| survey.synth[i])
        .sum::<f64>()
        / k as f64;
    (test, control, synth)
}

fn iteration(surveys: &[PreparedSurvey], i: u64) -> (Option<f64>, Option<f64>) {
    let mut test = Vec::with_capacity(surveys.len());
    let mut control = Vec::with_capacity(surveys.len());
    let mut synth = Vec::with_capacity(surveys.len());
    for s in surveys {
        let (t, c, y) = draw(s, i);
        test.push(t);
        control.push(c);
        synth.push(y);
    }
    (pearson(&test, &control), pearson(&test, &synth))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Delta-method standard error of `mean(xy) / mean(xx)` over paired iterations.
fn ratio_std_error(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mxx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mxy = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    if mxx == 0.0 {
        return None;
    }
    let (mut vxx, mut vxy, mut cov) = (0.0, 0.0, 0.0);
    for &(xx, xy) in pairs {
        vxx += (xx - mxx).powi(2);
        vxy += (xy - mxy).powi(2);
        cov += (xx - mxx) * (xy - mxy);
    }
    let denom = nf - 1.0;
    let (vxx, vxy, cov) = (vxx / denom, vxy / denom, cov / denom);
    let r = mxy / mxx;
    let var = (vxy - 2.0 * r * cov + r * r * vxx) / (mxx * mxx * nf);
    Some(var.max(0.0).sqrt())
}

pub fn correlation_attainment(
    real: &Corpus,
    synth: &Corpus,
    iterations: u32,
    seed: u64,
) -> Result<RetestResult, MetricsError> {
    correlation_attainment_with(real, synth, iterations, seed, Execution::default())
}

pub fn correlation_attainment_with(
    real: &Corpus,
    synth: &Corpus,
    iterations: u32,
    seed: u64,
    execution: Execution,
) -> Result<RetestResult, MetricsError> {
    if iterations == 0 {
        return Err(MetricsError::NoIterations);
    }
    let surveys = prepare_all(real, synth, seed)?;
    let draws = execution.map_range(iterations as usize, |i| iteration(&surveys, i as u64));

    let rxx: Vec<f64> = draws.iter().filter_map(|d| d.0).collect();
    let rxy: Vec<f64> = draws.iter().filter_map(|d| d.1).collect();
    let paired: Vec<(f64, f64)> = draws.iter().filter_map(|d| Some((d.0?, d.1?))).collect();

    let mean_rxx = mean(&rxx);
    let mean_rxy = mean(&rxy);
    let rho = match (mean_rxx, mean_rxy) {
        (Some(xx), Some(xy)) if xx != 0.0 => Some(xy / xx),
        _ => None,
    };
    Ok(RetestResult {
        iterations,
        seed,
        mean_rxx,
        mean_rxy,
        rho,
        std_error_rho: rho.and_then(|_| ratio_std_error(&paired)),
        skipped_rxx: iterations - rxx.len() as u32,
        skipped_rxy: iterations - rxy.len() as u32,
    })
}
