//! Semantic similarity rating: maps a free-text answer to a Likert pmf by
//! comparing its embedding with the embeddings of five anchor statements per
//! anchor set.
//!
//! Per set, the cosine similarity to each anchor is shifted so that the least
//! similar anchor gets mass `epsilon` (zero by default), the masses are
//! normalized, and the result is reshaped with a temperature. The final pmf is
//! the mean over all sets.

use thiserror::Error;

use crate::domain::{DomainError, ResponsePmf, SCALE_POINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsrError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding contains a non-finite component")]
    NonFiniteEmbedding,
    #[error("similarities must be finite")]
    NonFiniteSimilarity,
    #[error("epsilon must be finite and >= 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),
    #[error("cannot average an empty list of pmfs")]
    EmptyPmfList,
    #[error("no anchor sets given")]
    NoAnchorSets,
    #[error("anchor set {0} has no embeddings")]
    MissingAnchorEmbeddings(u32),
    #[error("anchor set {id}: {reason}")]
    InvalidAnchorSet { id: u32, reason: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// A text embedding. Finite components, non-zero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SsrError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SsrError::NonFiniteEmbedding);
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(SsrError::ZeroNorm);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Five anchor statements, one per rating, plus their lazily filled embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub id: u32,
    statements: [String; SCALE_POINTS],
    embeddings: Option<[EmbeddingVector; SCALE_POINTS]>,
}

impl AnchorSet {
    pub fn new(id: u32, statements: [String; SCALE_POINTS]) -> Result<Self, SsrError> {
        for (i, s) in statements.iter().enumerate() {
            if s.trim().is_empty() {
                return Err(SsrError::InvalidAnchorSet {
                    id,
                    reason: format!("statement for rating {} is empty", i + 1),
                });
            }
            if statements[..i].iter().any(|prev| prev == s) {
                return Err(SsrError::InvalidAnchorSet {
                    id,
                    reason: format!("statement for rating {} duplicates an earlier one", i + 1),
                });
            }
        }
        Ok(AnchorSet {
            id,
            statements,
            embeddings: None,
        })
    }

    /// Builds a set from a slice, rejecting anything but exactly five statements.
    pub fn from_slice(id: u32, statements: &[String]) -> Result<Self, SsrError> {
        let arr: [String; SCALE_POINTS] =
            statements.to_vec().try_into().map_err(|v: Vec<String>| {
                SsrError::InvalidAnchorSet {
                    id,
                    reason: format!("expected exactly 5 statements, found {}", v.len()),
                }
            })?;
        Self::new(id, arr)
    }

    pub fn statements(&self) -> &[String; SCALE_POINTS] {
        &self.statements
    }

    pub fn embeddings(&self) -> Option<&[EmbeddingVector; SCALE_POINTS]> {
        self.embeddings.as_ref()
    }

    pub fn set_embeddings(
        &mut self,
        embeddings: [EmbeddingVector; SCALE_POINTS],
    ) -> Result<(), SsrError> {
        let dim = embeddings[0].dim();
        if let Some(bad) = embeddings.iter().find(|e| e.dim() != dim) {
            return Err(SsrError::DimensionMismatch(dim, bad.dim()));
        }
        self.embeddings = Some(embeddings);
        Ok(())
    }

    pub fn is_embedded(&self) -> bool {
        self.embeddings.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SsrParams {
    pub epsilon: f64,
    pub temperature: f64,
}

impl Default for SsrParams {
    fn default() -> Self {
        SsrParams {
            epsilon: 0.0,
            temperature: 1.0,
        }
    }
}

impl SsrParams {
    pub fn new(epsilon: f64, temperature: f64) -> Result<Self, SsrError> {
        let p = SsrParams {
            epsilon,
            temperature,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SsrError> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(SsrError::InvalidEpsilon(self.epsilon));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(SsrError::InvalidTemperature(self.temperature));
        }
        Ok(())
    }
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SsrError> {
    if u.dim() != v.dim() {
        return Err(SsrError::DimensionMismatch(u.dim(), v.dim()));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(SsrError::ZeroNorm);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Turns five anchor similarities into a pmf.
///
/// The least similar anchor `l` (lowest rating on ties) receives mass
/// `epsilon`; every other rating receives its similarity minus the minimum.
/// All-equal similarities with `epsilon == 0` give the uniform pmf.
pub fn pmf_from_similarities(
    gammas: &[f64; SCALE_POINTS],
    epsilon: f64,
) -> Result<ResponsePmf, SsrError> {
    if gammas.iter().any(|g| !g.is_finite()) {
        return Err(SsrError::NonFiniteSimilarity);
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(SsrError::InvalidEpsilon(epsilon));
    }
    let mut min_idx = 0;
    for i in 1..SCALE_POINTS {
        if gammas[i] < gammas[min_idx] {
            min_idx = i;
        }
    }
    let min = gammas[min_idx];
    let mut masses = [0.0; SCALE_POINTS];
    for (i, m) in masses.iter_mut().enumerate() {
        *m = if i == min_idx {
            epsilon
        } else {
            gammas[i] - min
        };
    }
    if masses.iter().all(|&m| m == 0.0) {
        return Ok(ResponsePmf::uniform());
    }
    Ok(ResponsePmf::from_weights(masses)?)
}

/// Reshapes a pmf as `q(r) ∝ p(r)^(1/T)`.
///
/// Zero entries stay zero and `T == 1` returns the input unchanged. Computed
/// in log space so very small temperatures do not underflow.
pub fn apply_temperature(p: &ResponsePmf, temperature: f64) -> Result<ResponsePmf, SsrError> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(SsrError::InvalidTemperature(temperature));
    }
    if temperature == 1.0 {
        return Ok(*p);
    }
    let probs = p.probs();
    let logs: Vec<Option<f64>> = probs
        .iter()
        .map(|&x| (x > 0.0).then(|| x.ln() / temperature))
        .collect();
    let max = logs
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SsrError::Domain(DomainError::DegenerateWeights));
    }
    let mut weights = [0.0; SCALE_POINTS];
    for (w, l) in weights.iter_mut().zip(&logs) {
        if let Some(l) = l {
            *w = (l - max).exp();
        }
    }
    Ok(ResponsePmf::from_weights(weights)?)
}

/// Element-wise mean of a non-empty list of pmfs.
pub fn average_pmfs(pmfs: &[ResponsePmf]) -> Result<ResponsePmf, SsrError> {
    if pmfs.is_empty() {
        return Err(SsrError::EmptyPmfList);
    }
    if pmfs.len() == 1 {
        return Ok(pmfs[0]);
    }
    let n = pmfs.len() as f64;
    let mut sums = [0.0; SCALE_POINTS];
    for p in pmfs {
        for (s, v) in sums.iter_mut().zip(p.probs()) {
            *s += v;
        }
    }
    Ok(ResponsePmf::from_raw(sums.map(|s| s / n)))
}

/// Per-set pmfs and their average for one response.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResponse {
    pub per_set: Vec<ResponsePmf>,
    pub final_pmf: ResponsePmf,
}

pub fn score_response(
    text_embedding: &EmbeddingVector,
    sets: &[AnchorSet],
    params: &SsrParams,
) -> Result<ScoredResponse, SsrError> {
    params.validate()?;
    if sets.is_empty() {
        return Err(SsrError::NoAnchorSets);
    }
    let per_set = sets
        .iter()
        .map(|set| {
            let anchors = set
                .embeddings()
                .ok_or(SsrError::MissingAnchorEmbeddings(set.id))?;
            let mut gammas = [0.0; SCALE_POINTS];
            for (g, a) in gammas.iter_mut().zip(anchors) {
                *g = cosine_similarity(a, text_embedding)?;
            }
            let raw = pmf_from_similarities(&gammas, params.epsilon)?;
            apply_temperature(&raw, params.temperature)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let final_pmf = average_pmfs(&per_set)?;
    Ok(ScoredResponse { per_set, final_pmf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn assert_pmf(p: &ResponsePmf, expected: [f64; 5], tol: f64) {
        for (a, b) in p.probs().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = tol);
        }
    }

    fn statements(prefix: &str) -> [String; 5] {
        std::array::from_fn(|i| format!("{prefix} {}", i + 1))
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(
            cosine_similarity(&ev(&[1., 0., 0.]), &ev(&[1., 0., 0.])).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_similarity(&ev(&[1., 0.]), &ev(&[0., 1.])).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            cosine_similarity(&ev(&[1., 0.]), &ev(&[1., 1.])).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&ev(&[1., 0.]), &ev(&[1., 0., 0.])),
            Err(SsrError::DimensionMismatch(2, 3))
        );
        assert_eq!(
            EmbeddingVector::new(vec![0.0, 0.0]),
            Err(SsrError::ZeroNorm)
        );
        assert_eq!(
            EmbeddingVector::new(vec![f64::INFINITY, 0.0]),
            Err(SsrError::NonFiniteEmbedding)
        );
    }

    #[test]
    fn similarities_to_pmf() {
        let g = [0.2, 0.4, 0.6, 0.8, 1.0];
        assert_pmf(
            &pmf_from_similarities(&g, 0.0).unwrap(),
            [0.0, 0.1, 0.2, 0.3, 0.4],
            1e-12,
        );
        assert_pmf(
            &pmf_from_similarities(&g, 0.2).unwrap(),
            [0.2 / 2.2, 0.2 / 2.2, 0.4 / 2.2, 0.6 / 2.2, 0.8 / 2.2],
            1e-12,
        );
        for c in [-0.3, 0.0, 0.77] {
            assert_eq!(
                pmf_from_similarities(&[c; 5], 0.0).unwrap(),
                ResponsePmf::uniform()
            );
        }
    }

    #[test]
    fn minimum_ties_resolve_to_lowest_rating() {
        // Ratings 2 and 4 tie for the minimum; rating 2 is l and gets epsilon,
        // rating 4 keeps its zero difference.
        let p = pmf_from_similarities(&[0.5, 0.1, 0.3, 0.1, 0.9], 0.4).unwrap();
        let w = [0.4, 0.4, 0.2, 0.0, 0.8];
        let total: f64 = w.iter().sum();
        assert_pmf(&p, w.map(|x| x / total), 1e-15);
    }

    #[test]
    fn similarity_errors() {
        assert_eq!(
            pmf_from_similarities(&[0.1, f64::NAN, 0.2, 0.3, 0.4], 0.0),
            Err(SsrError::NonFiniteSimilarity)
        );
        assert_eq!(
            pmf_from_similarities(&[0.1; 5], -1.0),
            Err(SsrError::InvalidEpsilon(-1.0))
        );
    }

    #[test]
    fn temperature_examples() {
        let p = ResponsePmf::new([0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(apply_temperature(&p, 1.0).unwrap(), p);
        let delta = ResponsePmf::new([0., 0., 0., 0., 1.]).unwrap();
        for t in [0.01, 0.5, 3.0, 1e6] {
            assert_eq!(apply_temperature(&delta, t).unwrap(), delta);
        }
        assert_pmf(
            &apply_temperature(&p, 1e6).unwrap(),
            [0.0, 0.25, 0.25, 0.25, 0.25],
            1e-4,
        );
        assert!(apply_temperature(&p, 0.0).is_err());
        assert!(apply_temperature(&p, -2.0).is_err());
    }

    #[test]
    fn tiny_temperature_sharpens_without_underflow() {
        let p = ResponsePmf::new([0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = apply_temperature(&p, 1e-4).unwrap();
        assert_pmf(&q, [0.0, 0.0, 0.0, 0.0, 1.0], 1e-12);
    }

    #[test]
    fn averaging() {
        let a = ResponsePmf::new([1., 0., 0., 0., 0.]).unwrap();
        let b = ResponsePmf::new([0., 0., 0., 0., 1.]).unwrap();
        assert_pmf(&average_pmfs(&[a, b]).unwrap(), [0.5, 0., 0., 0., 0.5], 0.0);
        assert_eq!(average_pmfs(&[a]).unwrap(), a);
        let c = ResponsePmf::new([0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        let d = ResponsePmf::new([0.4, 0.3, 0.2, 0.1, 0.0]).unwrap();
        assert_pmf(&average_pmfs(&[c, d]).unwrap(), [0.2; 5], 1e-15);
        assert_eq!(average_pmfs(&[]), Err(SsrError::EmptyPmfList));
    }

    #[test]
    fn anchor_set_validation() {
        assert!(AnchorSet::new(0, statements("I would buy it")).is_ok());
        let mut dup = statements("x");
        dup[3] = dup[1].clone();
        assert!(AnchorSet::new(1, dup).is_err());
        let mut empty = statements("x");
        empty[0] = "  ".into();
        assert!(AnchorSet::new(2, empty).is_err());
        let four: Vec<String> = statements("x")[..4].to_vec();
        assert!(matches!(
            AnchorSet::from_slice(3, &four),
            Err(SsrError::InvalidAnchorSet { id: 3, .. })
        ));
    }

    fn unit(dim: usize, axis: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        ev(&v)
    }

    #[test]
    fn self_similarity_dominates() {
        let mut set = AnchorSet::new(0, statements("s")).unwrap();
        set.set_embeddings(std::array::from_fn(|i| unit(5, i)))
            .unwrap();
        let scored = score_response(&unit(5, 2), &[set], &SsrParams::default()).unwrap();
        assert_eq!(scored.final_pmf.argmax().value(), 3);
    }

    #[test]
    fn single_set_passthrough() {
        // Anchors chosen so the text embedding's cosines are (0.2, 0.4, 0.6, 0.8, 1.0).
        let gammas = [0.2, 0.4, 0.6, 0.8, 1.0_f64];
        let text = unit(2, 0);
        let anchors = gammas.map(|g| ev(&[g, (1.0 - g * g).sqrt()]));
        let mut set = AnchorSet::new(0, statements("a")).unwrap();
        set.set_embeddings(anchors).unwrap();
        let scored = score_response(&text, &[set], &SsrParams::default()).unwrap();
        assert_pmf(&scored.final_pmf, [0.0, 0.1, 0.2, 0.3, 0.4], 1e-12);
        assert_eq!(scored.per_set.len(), 1);
    }

    #[test]
    fn two_sets_average() {
        // Set A puts the text on anchor 1, set B on anchor 5; the remaining
        // anchors are orthogonal and share the minimum.
        let mut a = AnchorSet::new(0, statements("a")).unwrap();
        a.set_embeddings(std::array::from_fn(|i| unit(5, i)))
            .unwrap();
        let mut b = AnchorSet::new(1, statements("b")).unwrap();
        b.set_embeddings(std::array::from_fn(|i| unit(5, 4 - i)))
            .unwrap();
        let text = unit(5, 0);
        let scored = score_response(&text, &[a, b], &SsrParams::default()).unwrap();
        assert_pmf(&scored.per_set[0], [1., 0., 0., 0., 0.], 0.0);
        assert_pmf(&scored.per_set[1], [0., 0., 0., 0., 1.], 0.0);
        assert_pmf(&scored.final_pmf, [0.5, 0., 0., 0., 0.5], 0.0);
    }

    #[test]
    fn scoring_errors() {
        let set = AnchorSet::new(7, statements("s")).unwrap();
        assert_eq!(
            score_response(&unit(5, 0), &[set], &SsrParams::default()),
            Err(SsrError::MissingAnchorEmbeddings(7))
        );
        assert_eq!(
            score_response(&unit(5, 0), &[], &SsrParams::default()),
            Err(SsrError::NoAnchorSets)
        );
        assert!(SsrParams::new(0.0, 0.0).is_err());
        assert!(SsrParams::new(-0.1, 1.0).is_err());
    }
}
