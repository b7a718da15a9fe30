//! Lexical helpers shared by the corpus, neutralizer, embedders and metrics.

use std::collections::HashMap;
use std::sync::OnceLock;

/// Identifier recorded alongside every token count.
pub const TOKEN_COUNTER_ID: &str = "ws-punct-v1";

/// Counts tokens the way the corpus filters do: every maximal run of
/// alphanumerics (apostrophes included) is one token, every other
/// non-whitespace character is one token.
pub fn count_tokens(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if is_word_char(c) {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Splits text into word runs (keeps original case, strips punctuation).
pub fn word_runs(text: &str) -> Vec<&str> {
    text.split(|c: char| !is_word_char(c))
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .collect()
}

pub const EMOTICONS: &[&str] = &[
    ":-)", ":-(", ":-D", ":)", ":(", ":D", ";)", ":P", ":p", ":/", ":O", "xD", "XD", "<3", "^^", "^_^",
    "T_T", ":3",
];

/// Removes emoticons, longest first.
pub fn strip_emoticons(text: &str) -> String {
    let mut out = text.to_string();
    for e in sorted_emoticons() {
        out = remove_token(&out, e);
    }
    out
}

pub fn count_emoticons(text: &str) -> usize {
    let mut rest = text.to_string();
    let mut n = 0;
    for e in sorted_emoticons() {
        let before = rest.len();
        rest = remove_token(&rest, e);
        n += (before - rest.len()) / e.len();
    }
    n
}

/// Removes `token` where it is not glued to alphanumerics on either side.
fn remove_token(text: &str, token: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let bytes = text.as_bytes();
    while i < text.len() {
        if text[i..].starts_with(token) {
            let prev_ok = text[..i]
                .chars()
                .next_back()
                .is_none_or(|c| !c.is_alphanumeric());
            let next_ok = text[i + token.len()..]
                .chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric());
            if prev_ok && next_ok {
                i += token.len();
                continue;
            }
        }
        let ch = text[i..].chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
        debug_assert!(i <= bytes.len());
    }
    out
}

fn sorted_emoticons() -> &'static [&'static str] {
    static SORTED: OnceLock<Vec<&'static str>> = OnceLock::new();
    SORTED.get_or_init(|| {
        let mut v = EMOTICONS.to_vec();
        v.sort_by_key(|e| std::cmp::Reverse(e.len()));
        v
    })
}

/// Contraction to expansion, lowercase keys.
pub const CONTRACTIONS: &[(&str, &str)] = &[
    ("ain't", "is not"),
    ("aren't", "are not"),
    ("can't", "cannot"),
    ("couldn't", "could not"),
    ("didn't", "did not"),
    ("doesn't", "does not"),
    ("don't", "do not"),
    ("hadn't", "had not"),
    ("hasn't", "has not"),
    ("haven't", "have not"),
    ("he's", "he is"),
    ("i'd", "i would"),
    ("i'll", "i will"),
    ("i'm", "i am"),
    ("i've", "i have"),
    ("isn't", "is not"),
    ("it'll", "it will"),
    ("it's", "it is"),
    ("let's", "let us"),
    ("she's", "she is"),
    ("shouldn't", "should not"),
    ("that's", "that is"),
    ("there's", "there is"),
    ("they'll", "they will"),
    ("they're", "they are"),
    ("they've", "they have"),
    ("wasn't", "was not"),
    ("we'll", "we will"),
    ("we're", "we are"),
    ("we've", "we have"),
    ("weren't", "were not"),
    ("what's", "what is"),
    ("won't", "will not"),
    ("wouldn't", "would not"),
    ("you'd", "you would"),
    ("you'll", "you will"),
    ("you're", "you are"),
    ("you've", "you have"),
];

pub fn contraction_map() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| CONTRACTIONS.iter().copied().collect())
}

pub fn is_contraction(word: &str) -> bool {
    contraction_map().contains_key(word.to_lowercase().as_str())
}

/// Function words. Used both as the stopword list for content-word
/// similarity and as the function-word block of the feature embedder.
pub const FUNCTION_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as",
    "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by",
    "can", "cannot", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his",
    "how", "i", "if", "in", "into", "is", "it", "its", "just", "me", "more", "most", "my", "near",
    "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "out",
    "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under",
    "until", "up", "us", "very", "was", "we", "were", "what", "when", "where", "which", "while",
    "who", "why", "will", "with", "would", "you", "your", "really", "let", "got",
];

pub fn is_function_word(word: &str) -> bool {
    static SET: OnceLock<std::collections::HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| FUNCTION_WORDS.iter().copied().collect())
        .contains(word)
}

/// Discourse markers and interjections. Dropped by the neutralizer and
/// ignored by content-word similarity.
pub const DISCOURSE_MARKERS: &[&str] = &[
    "dude", "wow", "seriously", "totally", "omg", "literally", "honestly", "perhaps", "apparently",
    "admittedly", "frankly", "supposedly", "lol", "lmao", "haha", "hahaha", "yeah", "yay", "ugh",
    "hmm", "well", "anyway", "basically", "actually", "bro", "man", "oh", "ah", "alas", "indeed",
];

pub fn is_discourse_marker(word: &str) -> bool {
    DISCOURSE_MARKERS.contains(&word)
}

/// Case/punctuation/emoticon-insensitive normal form: lowercase words with
/// contractions expanded, joined by single spaces.
pub fn normalize_surface(text: &str) -> Vec<String> {
    let lowered = strip_emoticons(text).to_lowercase();
    let contractions = contraction_map();
    let mut out = Vec::new();
    for w in word_runs(&lowered) {
        match contractions.get(w) {
            Some(exp) => out.extend(exp.split(' ').map(str::to_string)),
            None => out.push(w.to_string()),
        }
    }
    out
}

/// Content words of `text` after surface normalization: no function words,
/// no discourse markers.
pub fn content_words(text: &str) -> Vec<String> {
    normalize_surface(text)
        .into_iter()
        .filter(|w| !is_function_word(w) && !is_discourse_marker(w) && w.chars().any(char::is_alphabetic))
        .collect()
}

/// Collapses runs of whitespace and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_counts() {
        assert_eq!(count_tokens("hello world"), 2);
        assert_eq!(count_tokens("HELLO!!! how r u :)"), 9);
        assert_eq!(count_tokens("it's fine."), 3);
        assert_eq!(count_tokens("   "), 0);
    }

    #[test]
    fn emoticons_removed_only_when_standalone() {
        assert_eq!(strip_emoticons("nice :) day"), "nice  day");
        assert_eq!(strip_emoticons("xDx"), "xDx");
        assert_eq!(count_emoticons("a :D b :D <3"), 3);
    }

    #[test]
    fn surface_normalization() {
        assert_eq!(
            normalize_surface("IT'S Great!!! :)"),
            vec!["it", "is", "great"]
        );
        assert_eq!(content_words("The soup is HOT"), vec!["soup", "hot"]);
        assert_eq!(content_words("TOTALLY, THEY'RE DONE!!! :D"), vec!["done"]);
        assert_eq!(content_words("honestly, they are done..."), vec!["done"]);
    }
}
