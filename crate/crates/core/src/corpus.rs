//! Author-keyed text corpora: loading, per-author sampling, author-disjoint
//! splits and author-pair sampling.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub author_id: String,
    pub text: String,
    pub token_count: usize,
    #[serde(default)]
    pub split: Split,
}

impl TextRecord {
    pub fn new(author_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            author_id: author_id.into(),
            token_count: text::count_tokens(&text),
            text,
            split: Split::Unassigned,
        }
    }
}

/// Counters reported by [`AuthorCorpus::load_jsonl`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub lines: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub empty_text: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuthorCorpus {
    records: Vec<TextRecord>,
    authors: BTreeMap<String, Vec<usize>>,
    /// Tokenizer that produced `token_count`.
    pub token_counter: String,
}

#[derive(Deserialize)]
struct RawLine {
    author_id: String,
    text: String,
}

impl AuthorCorpus {
    /// Builds a corpus, dropping blank texts and duplicate (author, text)
    /// pairs. Token counts are recomputed.
    pub fn from_records(records: impl IntoIterator<Item = TextRecord>) -> Self {
        let mut corpus = AuthorCorpus {
            token_counter: text::TOKEN_COUNTER_ID.to_string(),
            ..Default::default()
        };
        let mut seen = HashSet::new();
        for mut r in records {
            if r.text.trim().is_empty() || !seen.insert((r.author_id.clone(), r.text.clone())) {
                continue;
            }
            r.token_count = text::count_tokens(&r.text);
            corpus.push(r);
        }
        corpus
    }

    fn push(&mut self, r: TextRecord) {
        self.authors
            .entry(r.author_id.clone())
            .or_default()
            .push(self.records.len());
        self.records.push(r);
    }

    /// Loads a JSONL corpus (`{"author_id": .., "text": ..}` per line).
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<(Self, LoadStats)> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut stats = LoadStats::default();
        let mut corpus = AuthorCorpus {
            token_counter: text::TOKEN_COUNTER_ID.to_string(),
            ..Default::default()
        };
        let mut seen = HashSet::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            stats.lines += 1;
            let raw: RawLine = match serde_json::from_str(&line) {
                Ok(raw) => raw,
                Err(_) => {
                    stats.malformed += 1;
                    continue;
                }
            };
            if raw.text.trim().is_empty() {
                stats.empty_text += 1;
                continue;
            }
            if !seen.insert((raw.author_id.clone(), raw.text.clone())) {
                stats.duplicates += 1;
                continue;
            }
            corpus.push(TextRecord::new(raw.author_id, raw.text));
        }
        if stats.malformed > 0 || stats.duplicates > 0 {
            log::warn!(
                "{}: {} malformed lines skipped, {} duplicates removed",
                path.display(),
                stats.malformed,
                stats.duplicates
            );
        }
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus(path.to_path_buf()));
        }
        Ok((corpus, stats))
    }

    /// Writes one JSON object per record, including `split` and
    /// `token_count`.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn records(&self) -> &[TextRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_authors(&self) -> usize {
        self.authors.len()
    }

    /// Author ids in sorted order.
    pub fn author_ids(&self) -> impl Iterator<Item = &str> {
        self.authors.keys().map(String::as_str)
    }

    pub fn has_author(&self, author_id: &str) -> bool {
        self.authors.contains_key(author_id)
    }

    pub fn texts_of(&self, author_id: &str) -> Result<Vec<&str>> {
        let idx = self
            .authors
            .get(author_id)
            .ok_or_else(|| Error::UnknownAuthor(author_id.to_string()))?;
        Ok(idx.iter().map(|&i| self.records[i].text.as_str()).collect())
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text.as_str())
    }

    fn with_split(&self, authors: &BTreeSet<&str>, split: Split) -> AuthorCorpus {
        AuthorCorpus::from_records(
            self.records
                .iter()
                .filter(|r| authors.contains(r.author_id.as_str()))
                .map(|r| TextRecord {
                    split,
                    ..r.clone()
                }),
        )
    }

    /// Concatenates corpora (used to write split manifests).
    pub fn merged<'a>(parts: impl IntoIterator<Item = &'a AuthorCorpus>) -> AuthorCorpus {
        AuthorCorpus::from_records(parts.into_iter().flat_map(|c| c.records.iter().cloned()))
    }
}

/// Keeps at most `per_author` records per author, after removing records
/// longer than `max_tokens`. Selection is uniform without replacement and
/// depends only on `seed`. Authors left empty are removed.
pub fn sample_author_texts(
    corpus: &AuthorCorpus,
    per_author: usize,
    max_tokens: usize,
    seed: u64,
) -> Result<AuthorCorpus> {
    if per_author == 0 {
        return Err(Error::invalid("per_author", "must be at least 1"));
    }
    if max_tokens == 0 {
        return Err(Error::invalid("max_tokens", "must be at least 1"));
    }
    let mut kept = Vec::new();
    for (i, (author, idx)) in corpus.authors.iter().enumerate() {
        let mut eligible: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&j| corpus.records[j].token_count <= max_tokens)
            .collect();
        let mut rng = seed::rng(seed::derive(seed::derive_labeled(seed, author), i as u64));
        eligible.shuffle(&mut rng);
        eligible.truncate(per_author);
        eligible.sort_unstable();
        kept.extend(eligible.into_iter().map(|j| corpus.records[j].clone()));
    }
    let out = AuthorCorpus::from_records(kept);
    if out.is_empty() {
        log::warn!("sample_author_texts produced an empty corpus");
    }
    Ok(out)
}

/// Partitions authors into (train, val, test). Each split receives
/// `floor(fraction * n_authors)` authors and the remainder goes to train.
/// Holdout authors never land in train.
pub fn split_by_author(
    corpus: &AuthorCorpus,
    fractions: (f64, f64, f64),
    seed: u64,
    holdout_authors: &BTreeSet<String>,
) -> Result<(AuthorCorpus, AuthorCorpus, AuthorCorpus)> {
    let (ft, fv, fe) = fractions;
    if [ft, fv, fe].iter().any(|f| !(0.0..=1.0).contains(f)) || ((ft + fv + fe) - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(
            "fractions",
            format!("must be nonnegative and sum to 1, got ({ft}, {fv}, {fe})"),
        ));
    }
    let mut authors: Vec<&str> = corpus.author_ids().collect();
    authors.shuffle(&mut seed::rng(seed));
    let n = authors.len();
    let n_val = (fv * n as f64).floor() as usize;
    let n_test = (fe * n as f64).floor() as usize;

    // Holdout authors are placed first into val/test slots.
    let (held, free): (Vec<&str>, Vec<&str>) = authors
        .iter()
        .partition(|a| holdout_authors.contains(**a));
    let mut val = BTreeSet::new();
    let mut test = BTreeSet::new();
    let mut train = BTreeSet::new();
    for (i, a) in held.iter().enumerate() {
        // Alternate, favouring whichever split still has room.
        let to_test = if test.len() < n_test && val.len() < n_val {
            i % 2 == 1
        } else {
            val.len() >= n_val
        };
        if to_test {
            test.insert(*a);
        } else {
            val.insert(*a);
        }
    }
    let mut free = free.into_iter();
    while val.len() < n_val {
        match free.next() {
            Some(a) => val.insert(a),
            None => break,
        };
    }
    while test.len() < n_test {
        match free.next() {
            Some(a) => test.insert(a),
            None => break,
        };
    }
    train.extend(free);
    Ok((
        corpus.with_split(&train, Split::Train),
        corpus.with_split(&val, Split::Val),
        corpus.with_split(&test, Split::Test),
    ))
}

/// Samples `n` unique ordered (source, target) author pairs with
/// source != target.
pub fn sample_author_pairs(
    corpus: &AuthorCorpus,
    n: usize,
    seed: u64,
) -> Result<Vec<(String, String)>> {
    let authors: Vec<&str> = corpus.author_ids().collect();
    let k = authors.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if k < 2 {
        return Err(Error::invalid("corpus", "need at least two authors"));
    }
    let possible = k * (k - 1);
    if n > possible {
        return Err(Error::invalid(
            "n",
            format!("{n} exceeds the {possible} possible ordered pairs"),
        ));
    }
    let mut rng = seed::rng(seed);
    let mut pairs = Vec::with_capacity(n);
    if n * 2 > possible {
        // Dense request: enumerate and shuffle.
        let mut all: Vec<(usize, usize)> = (0..k)
            .flat_map(|s| (0..k).filter(move |&t| t != s).map(move |t| (s, t)))
            .collect();
        all.shuffle(&mut rng);
        pairs.extend(all.into_iter().take(n));
    } else {
        let mut seen = HashSet::with_capacity(n);
        while pairs.len() < n {
            let s = rng.random_range(0..k);
            let t = rng.random_range(0..k);
            if s != t && seen.insert((s, t)) {
                pairs.push((s, t));
            }
        }
    }
    Ok(pairs
        .into_iter()
        .map(|(s, t)| (authors[s].to_string(), authors[t].to_string()))
        .collect())
}

/// Picks one text uniformly.
pub(crate) fn choose_text<'a, R: Rng>(texts: &[&'a str], rng: &mut R) -> Option<&'a str> {
    texts.choose(rng).copied()
}
