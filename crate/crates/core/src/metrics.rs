//! Automatic scores: Away, Towards, Sim, Fluency and their aggregates.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::style_space::{cosine, mean_pool, StyleEmbedder, StyleEmbedding};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoreVector {
    pub away: f64,
    pub towards: f64,
    pub sim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluency: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aux: BTreeMap<String, f64>,
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ScoreOutOfRange { name, value })
    }
}

impl ScoreVector {
    pub fn new(away: f64, towards: f64, sim: f64) -> Self {
        Self {
            away,
            towards,
            sim,
            ..Self::default()
        }
    }

    /// All-zero scores, used for empty outputs.
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("away", self.away)?;
        check_unit("towards", self.towards)?;
        check_unit("sim", self.sim)?;
        if let Some(f) = self.fluency {
            check_unit("fluency", f)?;
        }
        for v in self.aux.values() {
            check_unit("aux", *v)?;
        }
        Ok(())
    }
}

/// Cosine that treats a zero vector as pointing nowhere.
fn cos_or_zero(a: &StyleEmbedding, b: &StyleEmbedding) -> Result<f64> {
    match cosine(a, b) {
        Err(Error::ZeroVector) => Ok(0.0),
        other => other.map(snap),
    }
}

/// Rounds cosines within 1e-12 of +-1 to the endpoint.
fn snap(c: f64) -> f64 {
    if (1.0 - c).abs() < 1e-12 {
        1.0
    } else if (1.0 + c).abs() < 1e-12 {
        -1.0
    } else {
        c
    }
}

/// `clamp01(1 - cos(output, centroid))`.
pub fn away_from(centroid: &StyleEmbedding, output: &StyleEmbedding) -> Result<f64> {
    Ok((1.0 - cos_or_zero(output, centroid)?).clamp(0.0, 1.0))
}

/// `clamp01(cos(output, centroid))`.
pub fn towards_to(centroid: &StyleEmbedding, output: &StyleEmbedding) -> Result<f64> {
    Ok(cos_or_zero(output, centroid)?.clamp(0.0, 1.0))
}

pub fn centroid(texts: &[&str], embedder: &dyn StyleEmbedder) -> Result<StyleEmbedding> {
    if texts.is_empty() {
        return Err(Error::EmptyInput("texts"));
    }
    mean_pool(&embedder.embed_all(texts)?)
}

pub fn away(source_texts: &[&str], output: &str, embedder: &dyn StyleEmbedder) -> Result<f64> {
    let c = centroid(source_texts, embedder)?;
    away_from(&c, &embedder.embed(output)?)
}

pub fn towards(target_texts: &[&str], output: &str, embedder: &dyn StyleEmbedder) -> Result<f64> {
    let c = centroid(target_texts, embedder)?;
    towards_to(&c, &embedder.embed(output)?)
}

/// A meaning-preservation scorer in `[0, 1]`.
pub trait MeaningScorer: Send + Sync {
    fn scorer_id(&self) -> &str;
    fn score(&self, source: &str, output: &str) -> Result<f64>;
}

fn count_cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(k, v)| v * b.get(k).unwrap_or(&0.0)).sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        snap(dot / (na * nb)).clamp(0.0, 1.0)
    }
}

fn counts(items: impl IntoIterator<Item = String>) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for i in items {
        *m.entry(i).or_insert(0.0) += 1.0;
    }
    m
}

/// Cosine over content-word counts after surface normalization. Texts with
/// no content words score 1 when their normal forms agree and 0 otherwise.
pub fn sim(source: &str, output: &str) -> f64 {
    let a = counts(text::content_words(source));
    let b = counts(text::content_words(output));
    if a.is_empty() || b.is_empty() {
        let same = text::normalize_surface(source) == text::normalize_surface(output);
        return if same && !output.trim().is_empty() || source == output {
            1.0
        } else {
            0.0
        };
    }
    count_cosine(&a, &b)
}

/// Primary meaning scorer: [`sim`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ContentSim;

impl ContentSim {
    pub const ID: &'static str = "content-cosine-v1";
}

impl MeaningScorer for ContentSim {
    fn scorer_id(&self) -> &str {
        Self::ID
    }

    fn score(&self, source: &str, output: &str) -> Result<f64> {
        Ok(sim(source, output))
    }
}

/// Secondary meaning scorer: cosine of character-trigram counts over the
/// normalized surface form, mapped from `[-1, 1]` to `[0, 1]` by
/// `(x + 1) / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramSim;

impl TrigramSim {
    pub const ID: &'static str = "char-trigram-cosine-v1";

    fn grams(t: &str) -> HashMap<String, f64> {
        let s: Vec<char> = format!(" {} ", text::normalize_surface(t).join(" "))
            .chars()
            .collect();
        counts(s.windows(3).map(|w| w.iter().collect::<String>()))
    }
}

impl MeaningScorer for TrigramSim {
    fn scorer_id(&self) -> &str {
        Self::ID
    }

    fn score(&self, source: &str, output: &str) -> Result<f64> {
        if source == output {
            return Ok(1.0);
        }
        Ok((count_cosine(&Self::grams(source), &Self::grams(output)) + 1.0) / 2.0)
    }
}

/// Ratio form of Sim against a reference score, clamped to `[0, 1]`.
pub fn normalized_sim(raw: f64, reference: f64) -> f64 {
    if reference <= 0.0 {
        0.0
    } else {
        (raw / reference).clamp(0.0, 1.0)
    }
}

pub trait FluencyScorer: Send + Sync {
    fn scorer_id(&self) -> &str;
    fn score(&self, text: &str) -> Result<f64>;
}

const BOS_CHAR: char = '\u{2}';
const EOS_CHAR: char = '\u{3}';

/// Interpolated Witten-Bell character n-gram model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharLm {
    order: usize,
    /// counts[k] maps a length-k context to next-character counts.
    counts: Vec<HashMap<String, HashMap<char, u32>>>,
    alphabet: usize,
    /// Sorted per-character NLL of the reference texts.
    reference: Vec<f64>,
}

impl CharLm {
    pub const ID: &'static str = "char-5gram-wb-v1";
    pub const ORDER: usize = 5;

    /// Fits on `texts` and uses up to `max_reference` of them as the
    /// percentile reference.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, max_reference: usize) -> Result<Self> {
        let texts: Vec<&str> = texts.into_iter().filter(|t| !t.is_empty()).collect();
        if texts.is_empty() {
            return Err(Error::EmptyInput("language model texts"));
        }
        let order = Self::ORDER;
        let mut counts: Vec<HashMap<String, HashMap<char, u32>>> = vec![HashMap::new(); order];
        let mut chars = std::collections::HashSet::new();
        for t in &texts {
            let seq = Self::padded(t, order);
            for i in order - 1..seq.len() {
                let c = seq[i];
                chars.insert(c);
                for (k, table) in counts.iter_mut().enumerate() {
                    let ctx: String = seq[i - k..i].iter().collect();
                    *table.entry(ctx).or_default().entry(c).or_default() += 1;
                }
            }
        }
        let mut lm = Self {
            order,
            counts,
            alphabet: chars.len() + 1,
            reference: Vec::new(),
        };
        let step = (texts.len() / max_reference.max(1)).max(1);
        let mut reference: Vec<f64> = texts
            .iter()
            .step_by(step)
            .take(max_reference.max(1))
            .map(|t| lm.nll_per_char(t))
            .collect();
        reference.sort_by(f64::total_cmp);
        lm.reference = reference;
        Ok(lm)
    }

    fn padded(text: &str, order: usize) -> Vec<char> {
        let mut seq: Vec<char> = std::iter::repeat_n(BOS_CHAR, order - 1).collect();
        seq.extend(text.chars());
        seq.push(EOS_CHAR);
        seq
    }

    fn prob(&self, ctx: &[char], c: char) -> f64 {
        let mut p = 1.0 / self.alphabet as f64;
        for k in 0..self.order {
            if k > ctx.len() {
                break;
            }
            let key: String = ctx[ctx.len() - k..].iter().collect();
            let Some(table) = self.counts[k].get(&key) else {
                break;
            };
            let total: f64 = table.values().map(|v| *v as f64).sum();
            let types = table.len() as f64;
            let seen = *table.get(&c).unwrap_or(&0) as f64;
            p = (seen + types * p) / (total + types);
        }
        p
    }

    /// Mean negative log-likelihood per character, in nats.
    pub fn nll_per_char(&self, text: &str) -> f64 {
        let seq = Self::padded(text, self.order);
        let n = seq.len() - (self.order - 1);
        let total: f64 = (self.order - 1..seq.len())
            .map(|i| -self.prob(&seq[i + 1 - self.order..i], seq[i]).ln())
            .sum();
        total / n as f64
    }

    /// Share of reference texts whose NLL is at least that of `text`.
    pub fn fluency(&self, text: &str) -> Result<f64> {
        if text.is_empty() {
            return Err(Error::EmptyInput("text"));
        }
        let nll = self.nll_per_char(text);
        let worse = self.reference.len() - self.reference.partition_point(|r| *r < nll);
        Ok(worse as f64 / self.reference.len() as f64)
    }
}

impl FluencyScorer for CharLm {
    fn scorer_id(&self) -> &str {
        Self::ID
    }

    fn score(&self, text: &str) -> Result<f64> {
        self.fluency(text)
    }
}

/// Geometric mean of two values in `[0, 1]`.
pub fn geometric_mean(a: f64, b: f64) -> f64 {
    (a * b).sqrt()
}

/// `G(G(away, towards), sim)`.
pub fn rerank_score(s: &ScoreVector) -> Result<f64> {
    check_unit("away", s.away)?;
    check_unit("towards", s.towards)?;
    check_unit("sim", s.sim)?;
    Ok(geometric_mean(geometric_mean(s.away, s.towards), s.sim))
}

/// `(accuracy * sim * fluency)^(1/3)`.
pub fn joint_eval(accuracy: f64, sim: f64, fluency: f64) -> Result<f64> {
    check_unit("accuracy", accuracy)?;
    check_unit("sim", sim)?;
    check_unit("fluency", fluency)?;
    Ok((accuracy * sim * fluency).cbrt())
}
