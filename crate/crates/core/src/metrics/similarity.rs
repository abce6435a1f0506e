use crate::domain::ResponsePmf;

/// One minus the largest absolute gap between the two cumulative distributions.
pub fn ks_similarity(x: &ResponsePmf, y: &ResponsePmf) -> f64 {
    let (fx, fy) = (x.cdf(), y.cdf());
    let sup = fx
        .iter()
        .zip(&fy)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (1.0 - sup).clamp(0.0, 1.0)
}

/// Cosine between two pmfs seen as 5-vectors. Ignores ordinality.
pub fn pmf_cosine(x: &ResponsePmf, y: &ResponsePmf) -> f64 {
    let dot: f64 = x.probs().iter().zip(y.probs()).map(|(a, b)| a * b).sum();
    let nx2 = x.probs().iter().map(|a| a * a).sum::<f64>();
    let ny2 = y.probs().iter().map(|a| a * a).sum::<f64>();
    if nx2 == 0.0 || ny2 == 0.0 {
        return 0.0;
    }
    // sqrt(a * a) == a exactly, so identical inputs give exactly 1.
    (dot / (nx2 * ny2).sqrt()).clamp(0.0, 1.0)
}
