//! Synthetic two-family corpus. "Loud" authors write in capitals with
//! exclamations and contractions; "calm" authors write in lowercase with
//! ellipses and full forms. Both families share content templates and topic
//! vocabularies, so family membership is the only systematic style signal.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorCorpus, TextRecord};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Loud,
    Calm,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Loud => "loud",
            Family::Calm => "calm",
        }
    }

    pub fn other(self) -> Family {
        match self {
            Family::Loud => Family::Calm,
            Family::Calm => Family::Loud,
        }
    }
}

/// Family encoded in a synthetic author id (`loud-0007`, `calm-0012`).
pub fn family_of(author_id: &str) -> Option<Family> {
    if author_id.starts_with("loud-") {
        Some(Family::Loud)
    } else if author_id.starts_with("calm-") {
        Some(Family::Calm)
    } else {
        None
    }
}

pub struct Topic {
    pub name: &'static str,
    pub nouns: &'static [&'static str],
    pub adjectives: &'static [&'static str],
    pub verbs: &'static [&'static str],
}

pub const TOPICS: &[Topic] = &[
    Topic {
        name: "food",
        nouns: &["soup", "pasta", "skillet"],
        adjectives: &["spicy", "warm", "fresh", "crispy", "salty"],
        verbs: &["burned", "ruined", "tasted", "smelled", "needed"],
    },
    Topic {
        name: "sports",
        nouns: &["coach", "stadium", "game", "ticket"],
        adjectives: &["huge", "brutal", "close", "early"],
        verbs: &["won", "lost", "watched", "missed", "played"],
    },
    Topic {
        name: "gaming",
        nouns: &["boss", "level", "controller"],
        adjectives: &["laggy", "hard", "broken", "epic"],
        verbs: &["crashed", "beat", "finished", "downloaded"],
    },
    Topic {
        name: "garden",
        nouns: &["shovel", "soil"],
        adjectives: &["green", "muddy", "tall", "tiny", "wild"],
        verbs: &["planted", "watered", "dug", "grew", "trimmed"],
    },
    Topic {
        name: "travel",
        nouns: &["luggage", "hotel", "flight", "train"],
        adjectives: &["cheap", "crowded", "sunny", "long", "foreign"],
        verbs: &["booked", "delayed", "packed", "visited", "cancelled"],
    },
    Topic {
        name: "music",
        nouns: &["song", "album", "concert"],
        adjectives: &["catchy", "smooth", "heavy", "acoustic", "vintage"],
        verbs: &["tuned", "recorded", "heard", "practiced", "sang"],
    },
    Topic {
        name: "weather",
        nouns: &["storm", "forecast"],
        adjectives: &["cold", "dark", "windy", "humid", "gray"],
        verbs: &["soaked", "flooded", "froze", "cleared", "hit"],
    },
    Topic {
        name: "cars",
        nouns: &["truck", "mechanic", "highway"],
        adjectives: &["rusty", "fast", "noisy", "shiny", "used"],
        verbs: &["fixed", "towed", "drove", "replaced", "washed"],
    },
    Topic {
        name: "pets",
        nouns: &["puppy", "kitten"],
        adjectives: &["fluffy", "lazy", "sick", "cute", "hungry"],
        verbs: &["adopted", "fed", "walked", "chased", "scratched"],
    },
    Topic {
        name: "school",
        nouns: &["exam", "homework", "essay", "lecture", "campus", "grade"],
        adjectives: &["boring", "difficult", "final", "strict", "weekly"],
        verbs: &["failed", "passed", "wrote", "studied", "skipped"],
    },
];

/// Content templates built only from function words and slots. Each opens
/// with a phrase that has a contracted form.
const TEMPLATES: &[(&str, &str, &str)] = &[
    ("it is", "it's", "a {adj} {noun} and i {verb} it"),
    ("that is", "that's", "my {adj} {noun} and we {verb} it"),
    ("we are", "we're", "over the {adj} {noun} that i {verb}"),
    ("i have", "i've", "{verb} this {adj} {noun} too"),
    ("they are", "they're", "into the {adj} {noun} i {verb}"),
    ("it is", "it's", "not the {adj} {noun} we {verb}"),
    ("there is", "there's", "a {adj} {noun} and they {verb} it"),
    ("you are", "you're", "so into the {adj} {noun} we {verb}"),
];

const LOUD_FILLERS: &[&str] = &["dude", "wow", "seriously", "totally", "omg", "literally"];
const CALM_FILLERS: &[&str] = &["honestly", "perhaps", "apparently", "admittedly", "frankly", "supposedly"];
const LOUD_EMOTICONS: &[&str] = &[":D", "XD"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_authors: usize,
    pub texts_per_author: usize,
    pub topics_per_author: usize,
    /// Chance that a text opens with one of the author's fillers.
    pub filler_rate: f64,
    /// Chance that a text has a second sentence.
    pub second_sentence_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_authors: 240,
            texts_per_author: 12,
            topics_per_author: 3,
            filler_rate: 0.5,
            second_sentence_rate: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_authors == 0 || self.texts_per_author == 0 {
            return Err(Error::invalid("n_authors", "authors and texts per author must be positive"));
        }
        if self.topics_per_author == 0 || self.topics_per_author > TOPICS.len() {
            return Err(Error::invalid(
                "topics_per_author",
                format!("must lie in [1, {}]", TOPICS.len()),
            ));
        }
        for (name, p) in [
            ("filler_rate", self.filler_rate),
            ("second_sentence_rate", self.second_sentence_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("rate", format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Fixed per-author writing habits.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorProfile {
    pub id: String,
    pub family: Family,
    pub topics: Vec<usize>,
    pub fillers: Vec<&'static str>,
    /// Loud only: emoticon appended to every text.
    pub emoticon: Option<&'static str>,
    /// Loud only: number of exclamation marks per sentence.
    pub bangs: usize,
}

impl AuthorProfile {
    pub fn draw(id: String, family: Family, topics: Vec<usize>, rng: &mut impl Rng) -> Self {
        let pool = match family {
            Family::Loud => LOUD_FILLERS,
            Family::Calm => CALM_FILLERS,
        };
        let fillers = pool.choose_multiple(rng, 2).copied().collect();
        let (emoticon, bangs) = match family {
            Family::Loud => {
                let e = if rng.random_bool(0.5) {
                    Some(*LOUD_EMOTICONS.choose(rng).expect("non-empty"))
                } else {
                    None
                };
                (e, rng.random_range(2..=3))
            }
            Family::Calm => (None, 0),
        };
        Self {
            id,
            family,
            topics,
            fillers,
            emoticon,
            bangs,
        }
    }

    pub fn write(&self, cfg: &SynthConfig, rng: &mut impl Rng) -> String {
        let n_sent = if rng.random_bool(cfg.second_sentence_rate) { 2 } else { 1 };
        let mut sentences = Vec::with_capacity(n_sent);
        for _ in 0..n_sent {
            let topic = &TOPICS[*self.topics.choose(rng).expect("author has topics")];
            let (open, short, body) = TEMPLATES.choose(rng).expect("templates");
            let body = body
                .replace("{adj}", topic.adjectives.choose(rng).expect("adj"))
                .replace("{noun}", topic.nouns.choose(rng).expect("noun"))
                .replace("{verb}", topic.verbs.choose(rng).expect("verb"));
            let lead = match self.family {
                Family::Loud => short,
                Family::Calm => open,
            };
            sentences.push(format!("{lead} {body}"));
        }
        if rng.random_bool(cfg.filler_rate) {
            let f = self.fillers.choose(rng).expect("fillers");
            sentences[0] = format!("{f}, {}", sentences[0]);
        }
        match self.family {
            Family::Loud => {
                let bang = "!".repeat(self.bangs);
                let mut t = sentences
                    .iter()
                    .map(|s| format!("{}{bang}", s.to_uppercase()))
                    .collect::<Vec<_>>()
                    .join(" ");
                if let Some(e) = self.emoticon {
                    t.push(' ');
                    t.push_str(e);
                }
                t
            }
            Family::Calm => sentences
                .iter()
                .map(|s| format!("{s}..."))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

fn author_id(family: Family, i: usize) -> String {
    format!("{}-{i:04}", family.name())
}

/// Training corpus. Families alternate by author index; each author gets
/// `topics_per_author` distinct topics.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<AuthorCorpus> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.n_authors * cfg.texts_per_author);
    for i in 0..cfg.n_authors {
        let family = if i % 2 == 0 { Family::Loud } else { Family::Calm };
        let mut rng = seed::child_rng(cfg.seed, i as u64);
        let mut topics: Vec<usize> = (0..TOPICS.len()).collect();
        topics.shuffle(&mut rng);
        topics.truncate(cfg.topics_per_author);
        let profile = AuthorProfile::draw(author_id(family, i), family, topics, &mut rng);
        records.extend(author_records(&profile, cfg, &mut rng));
    }
    Ok(AuthorCorpus::from_records(records))
}

fn author_records(profile: &AuthorProfile, cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<TextRecord> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(cfg.texts_per_author);
    let mut attempts = 0;
    while out.len() < cfg.texts_per_author && attempts < cfg.texts_per_author * 50 {
        attempts += 1;
        let t = profile.write(cfg, rng);
        if seen.insert(t.clone()) {
            out.push(TextRecord::new(profile.id.clone(), t));
        }
    }
    out
}

/// Evaluation authors for one transfer direction. Source authors draw topics
/// from the first half of the topic list and target authors from the second
/// half, so source and target texts share no content words. Ids are offset
/// past `id_offset` to stay disjoint from a training corpus.
pub fn synth_eval_corpus(
    source: Family,
    n_source: usize,
    n_target: usize,
    texts_per_author: usize,
    id_offset: usize,
    seed: u64,
) -> Result<(AuthorCorpus, Vec<String>, Vec<String>)> {
    let cfg = SynthConfig {
        n_authors: n_source + n_target,
        texts_per_author,
        seed,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let half = TOPICS.len() / 2;
    let mut records = Vec::new();
    let mut src_ids = Vec::new();
    let mut tgt_ids = Vec::new();
    for i in 0..n_source + n_target {
        let is_src = i < n_source;
        let family = if is_src { source } else { source.other() };
        let mut rng = seed::child_rng(seed::derive_labeled(seed, "eval"), i as u64);
        let mut topics: Vec<usize> = if is_src {
            (0..half).collect()
        } else {
            (half..TOPICS.len()).collect()
        };
        topics.shuffle(&mut rng);
        topics.truncate(cfg.topics_per_author);
        let id = author_id(family, id_offset + i);
        let profile = AuthorProfile::draw(id.clone(), family, topics, &mut rng);
        records.extend(author_records(&profile, &cfg, &mut rng));
        if is_src {
            src_ids.push(id);
        } else {
            tgt_ids.push(id);
        }
    }
    Ok((AuthorCorpus::from_records(records), src_ids, tgt_ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::text;

    #[test]
    fn families_have_their_markers() {
        let c = synth_corpus(&SynthConfig {
            n_authors: 10,
            texts_per_author: 6,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(c.n_authors(), 10);
        assert_eq!(c.len(), 60);
        for r in c.records() {
            match family_of(&r.author_id).unwrap() {
                Family::Loud => {
                    assert!(!r.text.chars().any(char::is_lowercase), "{}", r.text);
                    assert!(r.text.contains("!!"));
                    assert!(r.text.split_whitespace().any(text::is_contraction));
                }
                Family::Calm => {
                    assert!(!r.text.chars().any(char::is_uppercase), "{}", r.text);
                    assert!(r.text.ends_with("..."));
                    assert!(!r.text.contains('\''));
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n_authors: 4,
            texts_per_author: 3,
            seed: 5,
            ..SynthConfig::default()
        };
        assert_eq!(synth_corpus(&cfg).unwrap(), synth_corpus(&cfg).unwrap());
        let other = synth_corpus(&SynthConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(synth_corpus(&cfg).unwrap(), other);
    }

    #[test]
    fn eval_authors_share_no_content() {
        let (c, src, tgt) = synth_eval_corpus(Family::Loud, 3, 3, 5, 1000, 1).unwrap();
        assert!(src.iter().all(|a| family_of(a) == Some(Family::Loud)));
        assert!(tgt.iter().all(|a| family_of(a) == Some(Family::Calm)));
        for s in &src {
            for t in &tgt {
                for a in c.texts_of(s).unwrap() {
                    for b in c.texts_of(t).unwrap() {
                        assert_eq!(metrics::sim(a, b), 0.0, "{a} | {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SynthConfig { n_authors: 0, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { topics_per_author: 11, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { filler_rate: 1.5, ..SynthConfig::default() }.validate().is_err());
    }
}
