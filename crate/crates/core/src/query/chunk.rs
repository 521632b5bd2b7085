//! Lexicon-driven part-of-speech tagging and noun-phrase chunking.
//!
//! The tagger is a lookup table with suffix heuristics for unknown words;
//! the chunker extracts maximal `ADJ* NOUN+` runs over surface words, so
//! plural forms survive (phrases are display text, not index terms).

use crate::index::split_words;
use crate::{Error, Result};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Noun,
    Adj,
    Det,
    Prep,
    Verb,
    Conj,
    Adv,
    Num,
}

impl Tag {
    fn parse(s: &str) -> Option<Tag> {
        match s {
            "NOUN" => Some(Tag::Noun),
            "ADJ" => Some(Tag::Adj),
            "DET" => Some(Tag::Det),
            "PREP" => Some(Tag::Prep),
            "VERB" => Some(Tag::Verb),
            "CONJ" => Some(Tag::Conj),
            "ADV" => Some(Tag::Adv),
            "NUM" => Some(Tag::Num),
            _ => None,
        }
    }
}

const ADJ_SUFFIXES: [&str; 8] = ["al", "ic", "ous", "ive", "ian", "ary", "like", "less"];

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: HashMap<String, Tag>,
}

impl Lexicon {
    /// Parse TSV lines `word<TAB>TAG`; `#` comments and blanks skipped.
    pub fn parse(text: &str) -> Result<Lexicon> {
        let mut words = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(word), Some(tag)) = (cols.next(), cols.next()) else {
                return Err(Error::format(
                    "lexicon",
                    format!("line {}: expected 2 tab-separated columns", lineno + 1),
                ));
            };
            let tag = Tag::parse(tag.trim()).ok_or_else(|| {
                Error::format(
                    "lexicon",
                    format!("line {}: unknown tag {tag:?}", lineno + 1),
                )
            })?;
            words.insert(word.trim().to_lowercase(), tag);
        }
        Ok(Lexicon { words })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Tag one lowercased word. Unknown words with digits are numbers,
    /// adjective-looking suffixes are adjectives, the rest are nouns.
    pub fn tag(&self, word: &str) -> Tag {
        if let Some(&tag) = self.words.get(word) {
            return tag;
        }
        if word.chars().any(|c| c.is_ascii_digit()) {
            return Tag::Num;
        }
        for suffix in ADJ_SUFFIXES {
            if word.len() > suffix.len() + 2 && word.ends_with(suffix) {
                return Tag::Adj;
            }
        }
        Tag::Noun
    }

    /// Noun phrases in `text`: maximal `ADJ* NOUN+` word runs, returned
    /// as lowercased surface words.
    pub fn noun_phrases(&self, text: &str) -> Vec<Vec<String>> {
        let words: Vec<String> = split_words(text)
            .into_iter()
            .map(str::to_lowercase)
            .collect();
        let tags: Vec<Tag> = words.iter().map(|w| self.tag(w)).collect();
        let mut phrases = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let start = i;
            while i < words.len() && tags[i] == Tag::Adj {
                i += 1;
            }
            let noun_start = i;
            while i < words.len() && tags[i] == Tag::Noun {
                i += 1;
            }
            if i > noun_start {
                phrases.push(words[start..i].to_vec());
            } else {
                // Adjectives without a following noun head are dropped.
                i = start.max(i) + 1;
            }
        }
        phrases
    }
}
