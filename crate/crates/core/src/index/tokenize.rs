//! Shared tokenizer: lowercasing, stopword removal, and a light plural
//! stemmer. The same pipeline is used for indexing, query parsing, and
//! every feature extractor, so surface variants always meet in the same
//! normalized form.

use std::collections::HashSet;
use std::sync::OnceLock;

/// Characters allowed inside a token besides alphanumerics. They keep
/// unit-like symbols ("m/s^2"), hyphenated terms ("x-ray"), identifiers
/// ("A0535+262"), and decimal numbers in one piece.
const CONNECTORS: [char; 6] = ['/', '^', '.', '-', '_', '+'];

fn default_stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// True when `word` (lowercased) is on the bundled stopword list.
pub fn is_stopword(word: &str) -> bool {
    default_stopwords().contains(word)
}

/// Light plural stemmer. Deliberately conservative: it only folds common
/// plural endings, so "forces" and "force" share a stem while "mass" and
/// "versus" are left alone. Input must already be lowercased.
pub fn stem(word: &str) -> String {
    let n = word.len();
    if n < 4 || !word.ends_with('s') {
        return word.to_string();
    }
    if word.ends_with("sses") {
        return word[..n - 2].to_string(); // masses -> mass
    }
    if word.ends_with("ies") && n > 4 {
        return format!("{}y", &word[..n - 3]); // galaxies -> galaxy
    }
    if word.ends_with("xes")
        || word.ends_with("ches")
        || word.ends_with("shes")
        || word.ends_with("zes")
        || word.ends_with("oes")
    {
        return word[..n - 2].to_string(); // boxes -> box
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return word.to_string(); // mass, versus, axis
    }
    word[..n - 1].to_string() // forces -> force
}

/// Tokens that look like symbols, codes, or units skip the stemmer:
/// anything with a digit, a '/' or '^', or an uppercase letter beyond the
/// first character ("keV", "NGC") in the original surface form.
fn bypasses_stemmer(surface: &str) -> bool {
    surface
        .chars()
        .any(|c| c.is_ascii_digit() || c == '/' || c == '^')
        || surface.chars().skip(1).any(|c| c.is_uppercase())
}

/// Split raw text into surface words without any normalization beyond the
/// token character rules. Used by scanners that need original case.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut words = Vec::new();
    let mut start = None;
    let is_token_char = |c: char| c.is_alphanumeric() || CONNECTORS.contains(&c);
    for (i, ch) in text.char_indices() {
        if is_token_char(ch) {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            words.push(&text[s..i]);
        }
    }
    if let Some(s) = start {
        words.push(&text[s..]);
    }
    // Trim stray connector characters from the edges of each word.
    words
        .into_iter()
        .filter_map(|w| {
            let w = w.trim_matches(|c: char| CONNECTORS.contains(&c));
            (!w.is_empty()).then_some(w)
        })
        .collect()
}

/// Full normalization pipeline: split, lowercase, drop stopwords, stem.
/// A token's position is its index in the returned vector, so positions
/// count surviving tokens only and adjacency is adjacency after stopword
/// removal.
pub fn tokenize(text: &str) -> Vec<String> {
    split_words(text)
        .into_iter()
        .filter_map(|surface| {
            let lower = surface.to_lowercase();
            if is_stopword(&lower) {
                return None;
            }
            if bypasses_stemmer(surface) {
                Some(lower)
            } else {
                Some(stem(&lower))
            }
        })
        .collect()
}
