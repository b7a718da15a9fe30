//! Binary style classifiers: a logistic model over style vectors used to pick
//! confident exemplars, and a case-ratio heuristic used for scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::style_space::{StyleEmbedder, StyleEmbedding};

/// Fraction of letters that are uppercase; 0 for text without letters.
pub fn uppercase_ratio(text: &str) -> f64 {
    let (mut letters, mut upper) = (0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        upper += c.is_uppercase() as usize;
    }
    if letters == 0 {
        0.0
    } else {
        upper as f64 / letters as f64
    }
}

/// True when more than half the letters are capitals.
pub fn is_shouting(text: &str) -> bool {
    uppercase_ratio(text) > 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

/// `p(positive | x) = sigmoid(w.x + b)` fitted by full-batch gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticClassifier {
    pub embedder_id: String,
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticClassifier {
    pub fn fit(
        positive: &[StyleEmbedding],
        negative: &[StyleEmbedding],
        settings: LogisticSettings,
    ) -> Result<Self> {
        let first = positive
            .first()
            .or(negative.first())
            .ok_or(Error::EmptyInput("classifier training data"))?;
        if positive.is_empty() || negative.is_empty() {
            return Err(Error::EmptyInput("one classifier class"));
        }
        let dim = first.dim();
        for e in positive.iter().chain(negative) {
            if e.embedder_id != first.embedder_id {
                return Err(Error::EmbedderMismatch(
                    first.embedder_id.clone(),
                    e.embedder_id.clone(),
                ));
            }
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.dim(),
                });
            }
        }
        let data: Vec<(&[f64], f64)> = positive
            .iter()
            .map(|e| (e.values.as_slice(), 1.0))
            .chain(negative.iter().map(|e| (e.values.as_slice(), 0.0)))
            .collect();
        let n = data.len() as f64;
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        for _ in 0..settings.epochs {
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for (x, y) in &data {
                let z: f64 = w.iter().zip(*x).map(|(a, b)| a * b).sum::<f64>() + b;
                let err = sigmoid(z) - y;
                gw.iter_mut().zip(*x).for_each(|(g, xi)| *g += err * xi);
                gb += err;
            }
            for (wi, gi) in w.iter_mut().zip(&gw) {
                *wi -= settings.learning_rate * (gi / n + settings.l2 * *wi);
            }
            b -= settings.learning_rate * gb / n;
        }
        Ok(Self {
            embedder_id: first.embedder_id.clone(),
            weights: w,
            bias: b,
        })
    }

    pub fn probability(&self, e: &StyleEmbedding) -> Result<f64> {
        if e.embedder_id != self.embedder_id {
            return Err(Error::EmbedderMismatch(self.embedder_id.clone(), e.embedder_id.clone()));
        }
        if e.dim() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: e.dim(),
            });
        }
        let z: f64 = self.weights.iter().zip(&e.values).map(|(a, b)| a * b).sum::<f64>() + self.bias;
        Ok(sigmoid(z))
    }
}

/// Up to `k` texts whose probability of the requested class exceeds
/// `threshold`, most confident first (ties keep input order).
pub fn select_exemplars<'a>(
    texts: &[&'a str],
    classifier: &LogisticClassifier,
    embedder: &dyn StyleEmbedder,
    positive: bool,
    k: usize,
    threshold: f64,
) -> Result<Vec<&'a str>> {
    let mut scored = Vec::with_capacity(texts.len());
    for (i, t) in texts.iter().enumerate() {
        let p = classifier.probability(&embedder.embed(t)?)?;
        let conf = if positive { p } else { 1.0 - p };
        if conf > threshold {
            scored.push((conf, i));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| texts[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::style_space::FeatureStyleEmbedder;

    #[test]
    fn uppercase_ratio_examples() {
        assert_eq!(uppercase_ratio("ABC"), 1.0);
        assert_eq!(uppercase_ratio("AbCd"), 0.5);
        assert_eq!(uppercase_ratio("123 !!"), 0.0);
        assert!(is_shouting("WOW THAT'S BIG!!"));
        assert!(!is_shouting("wow that is big..."));
        assert!(!is_shouting("AbCd"));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn separates_cased_families() {
        let e = FeatureStyleEmbedder::new(256).unwrap();
        let loud = ["IT'S GREAT!!", "WE'RE DONE!!!", "THAT'S MY SOUP!!", "I'VE WON!!"];
        let calm = ["it is great...", "we are done...", "that is my soup...", "i have won..."];
        let emb = |ts: &[&str]| ts.iter().map(|t| e.embed(t).unwrap()).collect::<Vec<_>>();
        let clf = LogisticClassifier::fit(&emb(&loud), &emb(&calm), LogisticSettings::default())
            .unwrap();
        for t in loud {
            assert!(clf.probability(&e.embed(t).unwrap()).unwrap() > 0.5);
        }
        for t in calm {
            assert!(clf.probability(&e.embed(t).unwrap()).unwrap() < 0.5);
        }
        let all: Vec<&str> = loud.iter().chain(&calm).copied().collect();
        let picked = select_exemplars(&all, &clf, &e, false, 2, 0.5).unwrap();
        assert_eq!(picked.len(), 2);
        assert!(picked.iter().all(|t| calm.contains(t)));
        assert!(select_exemplars(&all, &clf, &e, true, 10, 1.0).unwrap().is_empty());
    }

    #[test]
    fn fit_rejects_empty_class() {
        let e = FeatureStyleEmbedder::new(256).unwrap();
        let one = vec![e.embed("HI!!").unwrap()];
        assert!(LogisticClassifier::fit(&one, &[], LogisticSettings::default()).is_err());
        assert!(LogisticClassifier::fit(&[], &[], LogisticSettings::default()).is_err());
    }
}
