//! Style embeddings and the vector algebra on them.
//!
//! Two embedders ship with the crate:
//!
//! * [`FeatureStyleEmbedder`] is the conditioning and reranking embedder: a
//!   training-free stylometric feature vector (typography, casing,
//!   contractions, emoticons, function words, hashed character trigrams)
//!   padded out to the configured dimension and L2-normalized.
//! * [`MarkerStyleEmbedder`] is a small, corpus-centered embedder over
//!   typographic markers only. It plays the role of the held-out evaluation
//!   embedder, so that evaluation never scores with the embedder used for
//!   reranking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::fnv1a;
use crate::text;

/// A style vector tagged with the embedder that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleEmbedding {
    pub embedder_id: String,
    pub values: Vec<f64>,
}

impl StyleEmbedding {
    pub fn new(embedder_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "embedding entries must be finite"));
        }
        Ok(Self {
            embedder_id: embedder_id.into(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_compatible(&self, other: &StyleEmbedding) -> Result<()> {
        if self.embedder_id != other.embedder_id {
            return Err(Error::EmbedderMismatch(
                self.embedder_id.clone(),
                other.embedder_id.clone(),
            ));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }
}

/// Anything that maps a text to a fixed-dimension style vector.
/// Implementations must be deterministic.
pub trait StyleEmbedder: Send + Sync {
    fn embedder_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<StyleEmbedding>;

    fn embed_all(&self, texts: &[&str]) -> Result<Vec<StyleEmbedding>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Component-wise mean. The result is not re-normalized.
pub fn mean_pool(embeddings: &[StyleEmbedding]) -> Result<StyleEmbedding> {
    let first = embeddings.first().ok_or(Error::EmptyInput("embeddings"))?;
    if embeddings.iter().all(|e| e == first) {
        // Repeated identical inputs pool to the input itself, bit for bit.
        return Ok(first.clone());
    }
    let mut acc = vec![0.0; first.dim()];
    for e in embeddings {
        first.check_compatible(e)?;
        for (a, v) in acc.iter_mut().zip(&e.values) {
            *a += v;
        }
    }
    let n = embeddings.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(StyleEmbedding {
        embedder_id: first.embedder_id.clone(),
        values: acc,
    })
}

/// `(1 - lam) * source + lam * target`. The endpoints return exact copies.
pub fn interpolate(
    source: &StyleEmbedding,
    target: &StyleEmbedding,
    lam: f64,
) -> Result<StyleEmbedding> {
    if !(0.0..=1.0).contains(&lam) {
        return Err(Error::invalid("lam", format!("must lie in [0, 1], got {lam}")));
    }
    source.check_compatible(target)?;
    if lam == 0.0 {
        return Ok(source.clone());
    }
    if lam == 1.0 {
        return Ok(target.clone());
    }
    let values = source
        .values
        .iter()
        .zip(&target.values)
        .map(|(s, t)| (1.0 - lam) * s + lam * t)
        .collect();
    Ok(StyleEmbedding {
        embedder_id: source.embedder_id.clone(),
        values,
    })
}

pub fn cosine(a: &StyleEmbedding, b: &StyleEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    cosine_slices(&a.values, &b.values)
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn l2_normalize(values: &mut [f64]) {
    let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        values.iter_mut().for_each(|v| *v /= n);
    }
}

/// Stylometric statistics shared by both embedders.
#[derive(Debug, Default, Clone)]
struct Surface {
    chars: usize,
    letters: usize,
    upper: usize,
    words: Vec<String>,
    sentence_ends: Vec<&'static str>,
}

impl Surface {
    fn of(t: &str) -> Self {
        let words: Vec<String> = text::word_runs(t).into_iter().map(str::to_string).collect();
        let mut s = Surface {
            chars: t.chars().count(),
            words,
            ..Default::default()
        };
        for c in t.chars() {
            if c.is_alphabetic() {
                s.letters += 1;
                if c.is_uppercase() {
                    s.upper += 1;
                }
            }
        }
        s.sentence_ends = sentence_ends(&text::strip_emoticons(t));
        s
    }

    fn n_words(&self) -> f64 {
        self.words.len().max(1) as f64
    }

    fn upper_ratio(&self) -> f64 {
        if self.letters == 0 {
            0.0
        } else {
            self.upper as f64 / self.letters as f64
        }
    }

    /// Share of multi-letter words written entirely in capitals.
    fn all_caps_ratio(&self) -> f64 {
        let long: Vec<&String> = self
            .words
            .iter()
            .filter(|w| w.chars().filter(|c| c.is_alphabetic()).count() >= 2)
            .collect();
        if long.is_empty() {
            return 0.0;
        }
        let caps = long
            .iter()
            .filter(|w| w.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase))
            .count();
        caps as f64 / long.len() as f64
    }

    fn end_fraction(&self, kind: &str) -> f64 {
        if self.sentence_ends.is_empty() {
            return 0.0;
        }
        self.sentence_ends.iter().filter(|e| **e == kind).count() as f64
            / self.sentence_ends.len() as f64
    }
}

/// Classifies the terminal punctuation of each sentence: "!", "?", "...",
/// "." or "none" for an unterminated final clause.
fn sentence_ends(t: &str) -> Vec<&'static str> {
    let mut ends = Vec::new();
    let chars: Vec<char> = t.trim_end().chars().collect();
    let mut i = 0;
    let mut pending_words = false;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?' | '…') {
            let start = i;
            while i < chars.len() && matches!(chars[i], '.' | '!' | '?' | '…') {
                i += 1;
            }
            let run: String = chars[start..i].iter().collect();
            let kind = if run.contains('!') {
                "!"
            } else if run.contains('?') {
                "?"
            } else if run.contains('…') || run.len() >= 2 {
                "..."
            } else {
                "."
            };
            // A single '.' inside a token (e.g. decimals) does not end a sentence.
            let boundary = i >= chars.len() || !chars[i].is_alphanumeric();
            if boundary && pending_words {
                ends.push(kind);
                pending_words = false;
            }
            continue;
        }
        if c.is_alphanumeric() {
            pending_words = true;
        }
        i += 1;
    }
    if pending_words {
        ends.push("none");
    }
    ends
}

const PUNCT_CLASSES: [char; 12] = ['.', ',', '!', '?', ';', ':', '\'', '"', '(', '-', '*', '/'];
/// typography(16) + casing/lengths(8) + markers(4)
const FIXED_FEATURES: usize = 16 + 8 + 4;

/// Training-free stylometric embedder. Blocks, in order:
/// punctuation rates, casing and length statistics, marker counts,
/// function-word frequencies, hashed case-sensitive character trigrams.
#[derive(Debug, Clone)]
pub struct FeatureStyleEmbedder {
    id: String,
    dim: usize,
}

impl FeatureStyleEmbedder {
    pub const DEFAULT_DIM: usize = 768;

    pub fn new(dim: usize) -> Result<Self> {
        let min = FIXED_FEATURES + text::FUNCTION_WORDS.len() + 16;
        if dim < min {
            return Err(Error::invalid(
                "dimension",
                format!("feature embedder needs at least {min} dimensions, got {dim}"),
            ));
        }
        Ok(Self {
            id: format!("feature-stylometric-v1-d{dim}"),
            dim,
        })
    }

    fn trigram_buckets(&self) -> usize {
        self.dim - FIXED_FEATURES - text::FUNCTION_WORDS.len()
    }

    /// Unnormalized feature vector (before block weighting).
    fn features(&self, t: &str) -> Vec<f64> {
        let s = Surface::of(t);
        let nch = s.chars.max(1) as f64;
        let nw = s.n_words();
        let mut f = Vec::with_capacity(self.dim);

        // Typography: per-character punctuation rates, ellipsis and
        // repeated punctuation per word, digits, spacing.
        for p in PUNCT_CLASSES {
            f.push(t.chars().filter(|&c| c == p).count() as f64 / nch * 10.0);
        }
        f.push((t.matches("...").count() + t.matches('…').count()) as f64 / nw);
        f.push(t.matches("!!").count() as f64 / nw);
        f.push(t.chars().filter(char::is_ascii_digit).count() as f64 / nch);
        f.push(t.chars().filter(|c| c.is_whitespace()).count() as f64 / nch);

        // Casing and lengths.
        let lens: Vec<f64> = s.words.iter().map(|w| w.chars().count() as f64).collect();
        let mean_len = if lens.is_empty() {
            0.0
        } else {
            lens.iter().sum::<f64>() / lens.len() as f64
        };
        let var_len = if lens.is_empty() {
            0.0
        } else {
            lens.iter().map(|l| (l - mean_len).powi(2)).sum::<f64>() / lens.len() as f64
        };
        let capitalized = s
            .words
            .iter()
            .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
            .count() as f64
            / nw;
        f.push(s.upper_ratio());
        f.push(s.all_caps_ratio());
        f.push(capitalized);
        f.push(s.end_fraction("!"));
        f.push(s.end_fraction("..."));
        f.push(mean_len / 10.0);
        f.push(var_len.sqrt() / 5.0);
        f.push((1.0 + s.words.len() as f64).ln() / 5.0);

        // Markers.
        let contractions = s.words.iter().filter(|w| text::is_contraction(w)).count() as f64;
        f.push(contractions / nw);
        f.push(text::count_emoticons(t) as f64 / nw);
        let elongated = s
            .words
            .iter()
            .filter(|w| {
                let c: Vec<char> = w.chars().collect();
                c.windows(3).any(|x| x[0] == x[1] && x[1] == x[2])
            })
            .count() as f64;
        f.push(elongated / nw);
        f.push(s.end_fraction("?"));
        debug_assert_eq!(f.len(), FIXED_FEATURES);

        // Function words.
        let lowered: Vec<String> = s.words.iter().map(|w| w.to_lowercase()).collect();
        for fw in text::FUNCTION_WORDS {
            f.push(lowered.iter().filter(|w| w == fw).count() as f64 / nw);
        }

        // Hashed trigrams over the raw text with boundary padding.
        let buckets = self.trigram_buckets();
        let mut tri = vec![0.0; buckets];
        let padded: Vec<char> = std::iter::once('\u{2}')
            .chain(t.chars())
            .chain(std::iter::once('\u{3}'))
            .collect();
        let mut total = 0.0;
        let mut buf = [0u8; 12];
        for w in padded.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            tri[(fnv1a(&buf[..n]) % buckets as u64) as usize] += 1.0;
            total += 1.0;
        }
        if total > 0.0 {
            tri.iter_mut().for_each(|v| *v /= total);
        }
        f.extend(tri);
        f
    }
}

impl Default for FeatureStyleEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM).expect("default dimension is valid")
    }
}

impl StyleEmbedder for FeatureStyleEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, t: &str) -> Result<StyleEmbedding> {
        if t.trim().is_empty() {
            return Err(Error::EmptyInput("text"));
        }
        let mut f = self.features(t);
        let fw_end = FIXED_FEATURES + text::FUNCTION_WORDS.len();
        for (i, v) in f.iter_mut().enumerate() {
            let weight = if i < FIXED_FEATURES {
                3.0
            } else if i < fw_end {
                1.0
            } else {
                2.0
            };
            *v *= weight;
        }
        l2_normalize(&mut f);
        StyleEmbedding::new(self.id.clone(), f)
    }
}

/// Corpus-centered typographic marker embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerStyleEmbedder {
    center: Vec<f64>,
}

impl MarkerStyleEmbedder {
    pub const EMBEDDER_ID: &'static str = "marker-centered-v1";
    pub const DIM: usize = 10;

    /// Fits the centering vector on a reference collection of texts.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut center = vec![0.0; Self::DIM];
        let mut n = 0usize;
        for t in texts {
            if t.trim().is_empty() {
                continue;
            }
            for (c, v) in center.iter_mut().zip(Self::raw_features(t)) {
                *c += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput("reference texts"));
        }
        center.iter_mut().for_each(|c| *c /= n as f64);
        Ok(Self { center })
    }

    pub fn with_center(center: Vec<f64>) -> Result<Self> {
        if center.len() != Self::DIM {
            return Err(Error::DimensionMismatch {
                expected: Self::DIM,
                got: center.len(),
            });
        }
        Ok(Self { center })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    fn raw_features(t: &str) -> [f64; Self::DIM] {
        let s = Surface::of(t);
        let nw = s.n_words();
        let lower_initial = s
            .words
            .iter()
            .filter(|w| w.chars().next().is_some_and(char::is_lowercase))
            .count() as f64
            / nw;
        [
            s.upper_ratio(),
            s.all_caps_ratio(),
            lower_initial,
            s.end_fraction("!"),
            s.end_fraction("..."),
            s.end_fraction("."),
            s.end_fraction("?"),
            s.end_fraction("none"),
            (text::count_emoticons(t) > 0) as u8 as f64,
            (s.words.iter().any(|w| text::is_contraction(w))) as u8 as f64,
        ]
    }
}

impl StyleEmbedder for MarkerStyleEmbedder {
    fn embedder_id(&self) -> &str {
        Self::EMBEDDER_ID
    }

    fn dimension(&self) -> usize {
        Self::DIM
    }

    fn embed(&self, t: &str) -> Result<StyleEmbedding> {
        if t.trim().is_empty() {
            return Err(Error::EmptyInput("text"));
        }
        let raw = Self::raw_features(t);
        let mut v: Vec<f64> = raw.iter().zip(&self.center).map(|(f, c)| f - c).collect();
        if v.iter().all(|x| x.abs() < 1e-12) {
            // Exactly at the reference mean: fall back to the raw direction.
            v = raw.to_vec();
        }
        l2_normalize(&mut v);
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::ZeroVector);
        }
        StyleEmbedding::new(Self::EMBEDDER_ID, v)
    }
}
