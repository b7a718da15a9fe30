//! Small byte-pair-encoding tokenizer learned from the training corpus.
//!
//! Text is pre-split into word runs, runs of one repeated punctuation mark,
//! and single other characters. A piece that follows whitespace carries a
//! `▁` prefix on its first symbol, so decoding restores word spacing.
//!
//! Case is factored out of word runs: words are stored lowercased, with a
//! `<lock>` token toggling all-caps mode and a `<cap>` token capitalizing
//! the next word. Words of any other casing are kept verbatim.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const LOCK: u32 = 4;
pub const CAP: u32 = 5;
const SPECIALS: [&str; 6] = ["<pad>", "<bos>", "<eos>", "<unk>", "<lock>", "<cap>"];
const SPACE: char = '▁';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tokenizer {
    vocab: Vec<String>,
    merges: Vec<(String, String)>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    #[serde(skip)]
    ranks: HashMap<(String, String), usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Marker(u32),
    Syms(Vec<String>),
}

enum Case {
    Uncased,
    Lower,
    Upper { single: bool },
    Title,
    Mixed,
}

fn case_of(word: &str, lower: &str) -> Case {
    let cased = word.chars().any(|c| c.is_lowercase() || c.is_uppercase());
    if !cased {
        Case::Uncased
    } else if word == lower {
        Case::Lower
    } else if lower.to_uppercase() == word {
        let letters = word.chars().filter(|c| c.is_alphabetic()).count();
        Case::Upper {
            single: letters == 1 && capitalize(lower) == word,
        }
    } else if capitalize(lower) == word {
        Case::Title
    } else {
        Case::Mixed
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn syms_of(run: &str, space_before: bool) -> Vec<String> {
    let mut syms: Vec<String> = run.chars().map(|c| c.to_string()).collect();
    if space_before {
        syms[0] = format!("{SPACE}{}", syms[0]);
    }
    syms
}

fn pieces(text: &str) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::new();
    let mut space_before = false;
    let mut locked = false;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            space_before = !out.is_empty();
            i += 1;
            continue;
        }
        let start = i;
        if crate::text::is_word_char(c) {
            while i < chars.len() && crate::text::is_word_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let lower = word.to_lowercase();
            let unlock = |out: &mut Vec<Piece>, locked: &mut bool| {
                if *locked {
                    out.push(Piece::Marker(LOCK));
                    *locked = false;
                }
            };
            let run = match case_of(&word, &lower) {
                Case::Uncased => word,
                Case::Lower => {
                    unlock(&mut out, &mut locked);
                    lower
                }
                Case::Upper { .. } if locked => lower,
                Case::Upper { single: true } => {
                    out.push(Piece::Marker(CAP));
                    lower
                }
                Case::Upper { .. } => {
                    out.push(Piece::Marker(LOCK));
                    locked = true;
                    lower
                }
                Case::Title => {
                    unlock(&mut out, &mut locked);
                    out.push(Piece::Marker(CAP));
                    lower
                }
                Case::Mixed => {
                    unlock(&mut out, &mut locked);
                    word
                }
            };
            out.push(Piece::Syms(syms_of(&run, space_before)));
        } else {
            while i < chars.len() && chars[i] == c {
                i += 1;
            }
            let run: String = chars[start..i].iter().collect();
            out.push(Piece::Syms(syms_of(&run, space_before)));
        }
        space_before = false;
    }
    out
}

impl Tokenizer {
    /// Learns merges until the vocabulary reaches `vocab_size` or no pair
    /// occurs at least `min_frequency` times. Ties between equally frequent
    /// pairs are broken lexicographically.
    pub fn train<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        vocab_size: usize,
        min_frequency: usize,
    ) -> Result<Self> {
        let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for t in texts {
            for p in pieces(t) {
                if let Piece::Syms(syms) = p {
                    *counts.entry(syms).or_default() += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyInput("tokenizer training texts"));
        }
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut base: Vec<String> = counts.keys().flatten().cloned().collect();
        base.sort();
        base.dedup();
        vocab.extend(base);

        let mut words: Vec<(Vec<String>, usize)> = counts.into_iter().collect();
        let mut merges = Vec::new();
        while vocab.len() < vocab_size {
            let mut pair_counts: HashMap<(&str, &str), usize> = HashMap::new();
            for (syms, n) in &words {
                for w in syms.windows(2) {
                    *pair_counts.entry((&w[0], &w[1])).or_default() += n;
                }
            }
            let best = pair_counts
                .into_iter()
                .filter(|(_, n)| *n >= min_frequency.max(1))
                .max_by(|(pa, na), (pb, nb)| na.cmp(nb).then_with(|| pb.cmp(pa)));
            let Some(((a, b), _)) = best else { break };
            let (a, b) = (a.to_string(), b.to_string());
            let merged = format!("{a}{b}");
            for (syms, _) in words.iter_mut() {
                apply_merge(syms, &a, &b, &merged);
            }
            vocab.push(merged);
            merges.push((a, b));
        }
        Ok(Self::from_parts(vocab, merges))
    }

    fn from_parts(vocab: Vec<String>, merges: Vec<(String, String)>) -> Self {
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Self {
            vocab,
            merges,
            index,
            ranks,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for piece in pieces(text) {
            let mut syms = match piece {
                Piece::Marker(id) => {
                    ids.push(id);
                    continue;
                }
                Piece::Syms(syms) => syms,
            };
            loop {
                let best = syms
                    .windows(2)
                    .enumerate()
                    .filter_map(|(i, w)| {
                        self.ranks
                            .get(&(w[0].clone(), w[1].clone()))
                            .map(|r| (*r, i))
                    })
                    .min();
                let Some((rank, _)) = best else { break };
                let (a, b) = &self.merges[rank];
                let merged = format!("{a}{b}");
                apply_merge(&mut syms, a, b, &merged);
            }
            ids.extend(
                syms.iter()
                    .map(|s| self.index.get(s).copied().unwrap_or(UNK)),
            );
        }
        ids
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        let (mut locked, mut cap) = (false, false);
        let mut in_word = false;
        for &id in ids {
            match id {
                LOCK => locked = !locked,
                CAP => cap = true,
                _ if id < SPECIALS.len() as u32 => {}
                _ => {
                    let Some(s) = self.vocab.get(id as usize) else { continue };
                    let body = s.strip_prefix(SPACE).unwrap_or(s);
                    let is_word = body.chars().next().is_some_and(crate::text::is_word_char);
                    let starts = is_word && (!in_word || body.len() < s.len());
                    in_word = is_word;
                    if !is_word {
                        out.push_str(s);
                        continue;
                    }
                    if body.len() < s.len() {
                        out.push(SPACE);
                    }
                    if locked {
                        out.push_str(&body.to_uppercase());
                    } else if cap && starts {
                        out.push_str(&capitalize(body));
                    } else {
                        out.push_str(body);
                    }
                    if starts {
                        cap = false;
                    }
                }
            }
        }
        out.replace(SPACE, " ").trim().to_string()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let t: Tokenizer = serde_json::from_str(raw)?;
        if t.vocab.len() < SPECIALS.len() || t.vocab[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Malformed {
                what: "tokenizer",
                reason: "special tokens missing".into(),
            });
        }
        Ok(Self::from_parts(t.vocab, t.merges))
    }
}

fn apply_merge(syms: &mut Vec<String>, a: &str, b: &str, merged: &str) {
    let mut i = 0;
    while i + 1 < syms.len() {
        if syms[i] == a && syms[i + 1] == b {
            syms[i] = merged.to_string();
            syms.remove(i + 1);
        }
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus() -> Vec<&'static str> {
        vec![
            "the soup burned my pan...",
            "THE SOUP BURNED MY PAN!!!",
            "honestly the bread smelled great...",
            "DUDE, IT'S THE BREAD!!! :D",
        ]
    }

    #[test]
    fn pretokenization() {
        let syms = |v: &[&str]| Piece::Syms(v.iter().map(|s| s.to_string()).collect());
        let p = pieces("HI!!! you :D");
        assert_eq!(
            p,
            vec![
                Piece::Marker(LOCK),
                syms(&["h", "i"]),
                syms(&["!", "!", "!"]),
                Piece::Marker(LOCK),
                syms(&["▁y", "o", "u"]),
                syms(&["▁:"]),
                Piece::Marker(CAP),
                syms(&["d"]),
            ]
        );
        let p = pieces("Hi THERE, I I'M iPad 42");
        assert_eq!(
            p,
            vec![
                Piece::Marker(CAP),
                syms(&["h", "i"]),
                Piece::Marker(LOCK),
                syms(&["▁t", "h", "e", "r", "e"]),
                syms(&[","]),
                syms(&["▁i"]),
                syms(&["▁i", "'", "m"]),
                Piece::Marker(LOCK),
                syms(&["▁i", "P", "a", "d"]),
                syms(&["▁4", "2"]),
            ]
        );
    }

    #[test]
    fn merges_frequent_words() {
        let tok = Tokenizer::train(["the cat", "the cat", "the cat and so"], 200, 2).unwrap();
        let ids = tok.encode("the cat");
        assert_eq!(ids.len(), 2, "{:?}", ids.iter().map(|i| tok.token(*i)).collect::<Vec<_>>());
        assert!(tok.encode("zzz").contains(&UNK));
    }

    #[test]
    fn roundtrip_known_text() {
        let tok = Tokenizer::train(corpus(), 120, 2).unwrap();
        for t in corpus() {
            assert_eq!(tok.decode(&tok.encode(t)), t);
        }
    }

    #[test]
    fn cases_share_word_tokens() {
        let tok = Tokenizer::train(corpus(), 120, 2).unwrap();
        let lower = tok.encode("the soup burned my pan");
        let upper = tok.encode("THE SOUP BURNED MY PAN");
        assert_eq!(upper[0], LOCK);
        assert_eq!(&upper[1..], &lower[..]);
        let ids: Vec<u32> = [CAP, CAP].into_iter().chain(tok.encode("soup")).collect();
        assert_eq!(tok.decode(&ids), "Soup");
        // stray markers decode harmlessly
        assert_eq!(tok.decode(&[LOCK, LOCK, CAP, tok.encode("!!!")[0]]), "!!!");
    }

    #[test]
    fn save_load() {
        let tok = Tokenizer::train(corpus(), 80, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tok.json");
        tok.save(&path).unwrap();
        assert_eq!(Tokenizer::load(&path).unwrap(), tok);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode_on_normalized_text(t in "[a-zA-Z!.,' 0-9]{1,40}") {
            let tok = Tokenizer::train(corpus().into_iter().chain(std::iter::once(t.as_str())), 150, 2).unwrap();
            let norm = crate::text::normalize_whitespace(&t);
            prop_assert_eq!(tok.decode(&tok.encode(&t)), norm);
        }
    }
}
