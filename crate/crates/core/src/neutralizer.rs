//! Style neutralization: rewrites text into a plain paraphrase with the
//! stylistic markers removed and the content kept.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::style_space::{cosine, StyleEmbedder};
use crate::text;

/// Sampling settings handed to paraphrasers. The rule-based neutralizer
/// records `top_p`, `tau` and `beam` but does not use them; external
/// adapters receive them verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParaphraseSettings {
    pub top_p: f64,
    pub tau: f64,
    pub beam: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ParaphraseSettings {
    fn default() -> Self {
        Self {
            top_p: 0.80,
            tau: 1.5,
            beam: 8,
            n_samples: 1,
            seed: 0,
        }
    }
}

impl ParaphraseSettings {
    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub trait Paraphraser: Send + Sync {
    fn paraphraser_id(&self) -> &str;
    fn paraphrase(&self, text: &str, settings: &ParaphraseSettings) -> Result<Vec<String>>;
}

pub use crate::text::DISCOURSE_MARKERS;

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

/// Word to substitute(s) table, loaded from a two-column text file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon parses")
    }

    /// Parses `word<TAB>substitute` lines; `#` starts a comment line.
    pub fn parse(src: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (lineno, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            match (cols.next(), cols.next(), cols.next()) {
                (Some(w), Some(s), None) => {
                    let subs = entries.entry(w.to_lowercase()).or_default();
                    if !subs.iter().any(|x| x == s) {
                        subs.push(s.to_lowercase());
                    }
                }
                _ => {
                    return Err(Error::Malformed {
                        what: "lexicon",
                        reason: format!("line {}: expected two columns", lineno + 1),
                    })
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn substitutes(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when `word` is listed as a substitute for anything.
    pub fn is_substitute(&self, word: &str) -> bool {
        self.entries.values().any(|v| v.iter().any(|s| s == word))
    }
}

/// Deterministic rule-based neutralizer.
#[derive(Debug, Clone)]
pub struct RuleNeutralizer {
    lexicon: Lexicon,
    /// Per-word substitution probability.
    pub substitution_rate: f64,
    /// Probability of swapping the clauses around a conjunction.
    pub reorder_rate: f64,
}

impl Default for RuleNeutralizer {
    fn default() -> Self {
        Self::new(Lexicon::bundled())
    }
}

impl RuleNeutralizer {
    pub const ID: &'static str = "rule-neutralizer-v1";

    pub fn new(lexicon: Lexicon) -> Self {
        Self {
            lexicon,
            substitution_rate: 0.35,
            reorder_rate: 0.3,
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// The neutral word sequence before any stochastic choice.
    pub fn base_words(text: &str) -> Vec<String> {
        let words = text::normalize_surface(text);
        let kept: Vec<String> = words
            .iter()
            .filter(|w| !DISCOURSE_MARKERS.contains(&w.as_str()))
            .cloned()
            .collect();
        if kept.is_empty() {
            words
        } else {
            kept
        }
    }

    fn one_sample<R: Rng>(&self, base: &[String], rng: &mut R) -> String {
        let mut words: Vec<String> = base
            .iter()
            .map(|w| match self.lexicon.substitutes(w) {
                Some(subs) if rng.random_bool(self.substitution_rate) => {
                    subs.choose(rng).cloned().unwrap_or_else(|| w.clone())
                }
                _ => w.clone(),
            })
            .collect();
        let pivots: Vec<usize> = words
            .iter()
            .enumerate()
            .filter(|(i, w)| (w.as_str() == "and" || w.as_str() == "but") && *i > 0)
            .map(|(i, _)| i)
            .filter(|&i| i + 1 < words.len())
            .collect();
        if pivots.len() == 1 && rng.random_bool(self.reorder_rate) {
            let p = pivots[0];
            let tail = words.split_off(p + 1);
            let conj = words.pop().unwrap();
            let head = std::mem::take(&mut words);
            words = tail;
            words.push(conj);
            words.extend(head);
        }
        words.join(" ")
    }
}

impl Paraphraser for RuleNeutralizer {
    fn paraphraser_id(&self) -> &str {
        Self::ID
    }

    fn paraphrase(&self, t: &str, settings: &ParaphraseSettings) -> Result<Vec<String>> {
        if t.trim().is_empty() {
            return Err(Error::EmptyInput("text"));
        }
        if settings.n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        let base = Self::base_words(t);
        if base.is_empty() {
            // Nothing but punctuation or emoticons.
            let fallback: String = text::strip_emoticons(t)
                .chars()
                .filter(|c| c.is_alphanumeric() || c.is_whitespace())
                .collect();
            let fallback = text::normalize_whitespace(&fallback.to_lowercase());
            return Ok(vec![fallback; settings.n_samples]);
        }
        let text_seed = seed::derive(settings.seed, seed::fnv1a(t.as_bytes()));
        Ok((0..settings.n_samples)
            .map(|i| self.one_sample(&base, &mut seed::child_rng(text_seed, i as u64)))
            .collect())
    }
}

/// Adapter for an external paraphrase model run as a subprocess. The
/// command receives `{"text": .., "settings": {..}}` on stdin and must print
/// a JSON array of exactly `n_samples` strings.
#[derive(Debug, Clone)]
pub struct CommandParaphraser {
    pub program: PathBuf,
    pub args: Vec<String>,
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    text: &'a str,
    settings: &'a ParaphraseSettings,
}

impl Paraphraser for CommandParaphraser {
    fn paraphraser_id(&self) -> &str {
        "external-command"
    }

    fn paraphrase(&self, t: &str, settings: &ParaphraseSettings) -> Result<Vec<String>> {
        if t.trim().is_empty() {
            return Err(Error::EmptyInput("text"));
        }
        if settings.n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(&self.program, e))?;
        let req = serde_json::to_vec(&ExternalRequest { text: t, settings })?;
        child
            .stdin
            .take()
            .expect("stdin piped")
            .write_all(&req)
            .map_err(|e| Error::io(&self.program, e))?;
        let out = child
            .wait_with_output()
            .map_err(|e| Error::io(&self.program, e))?;
        let outputs: Vec<String> = serde_json::from_slice(&out.stdout)?;
        if outputs.len() != settings.n_samples {
            return Err(Error::Malformed {
                what: "external paraphrase output",
                reason: format!("expected {} strings, got {}", settings.n_samples, outputs.len()),
            });
        }
        Ok(outputs)
    }
}

/// Normalized style distance `(1 - cos) / 2` between a text and its
/// paraphrase.
pub fn neutrality_score(
    original: &str,
    paraphrase: &str,
    embedder: &dyn StyleEmbedder,
) -> Result<f64> {
    let a = embedder.embed(original)?;
    let b = embedder.embed(paraphrase)?;
    Ok(((1.0 - cosine(&a, &b)?) / 2.0).clamp(0.0, 1.0))
}
