//! Temperature-scaled nucleus (top-p) sampling over a logit vector.

use rand::Rng;

use crate::error::{Error, Result};

/// Returns `(token, probability)` for the nucleus of `logits`: the smallest
/// set of highest-probability tokens whose cumulative mass under
/// `softmax(logits / tau)` reaches `top_p`, renormalized to sum to one.
/// Ties in probability are ordered by token index.
pub fn nucleus(logits: &[f32], top_p: f64, tau: f64) -> Result<Vec<(usize, f64)>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("logits"));
    }
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(Error::invalid("top_p", format!("must lie in (0, 1], got {top_p}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    let max = logits
        .iter()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut probs: Vec<(usize, f64)> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| (i, ((l as f64 - max) / tau).exp()))
        .collect();
    let z: f64 = probs.iter().map(|p| p.1).sum();
    probs.iter_mut().for_each(|p| p.1 /= z);
    probs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut mass = 0.0;
    let mut keep = 0;
    for (_, p) in &probs {
        mass += p;
        keep += 1;
        if mass >= top_p {
            break;
        }
    }
    probs.truncate(keep.max(1));
    let kept: f64 = probs.iter().map(|p| p.1).sum();
    probs.iter_mut().for_each(|p| p.1 /= kept);
    Ok(probs)
}

/// Draws one token from the nucleus of `logits`.
pub fn sample_nucleus<R: Rng>(logits: &[f32], top_p: f64, tau: f64, rng: &mut R) -> Result<usize> {
    let dist = nucleus(logits, top_p, tau)?;
    if dist.len() == 1 {
        return Ok(dist[0].0);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (tok, p) in &dist {
        acc += p;
        if u < acc {
            return Ok(*tok);
        }
    }
    Ok(dist.last().expect("nucleus is never empty").0)
}

/// Highest-logit token, lowest index on ties.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best
}
