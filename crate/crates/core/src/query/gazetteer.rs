//! Entity gazetteer: surface forms mapped to canonical names with priors.
//!
//! Surfaces are normalized with the index tokenizer at load time, so
//! lookups run over the same stemmed tokens the query produces. Matching
//! is greedy longest-first, left to right, without overlaps.

use std::collections::HashMap;

use crate::index::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EntityMatch {
    pub canonical: String,
    /// Gazetteer prior scaled by span length over canonical length.
    pub rho: f64,
    /// Matched token span [start, end) in the tokenized query.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<Vec<String>, (String, f64)>,
    max_len: usize,
}

impl Gazetteer {
    /// Parse TSV lines `surface<TAB>canonical<TAB>prior`. Blank lines and
    /// `#` comments are skipped. Later duplicates of a normalized surface
    /// replace earlier ones.
    pub fn parse(text: &str) -> Result<Gazetteer> {
        let mut entries = HashMap::new();
        let mut max_len = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(surface), Some(canonical), Some(prior)) =
                (cols.next(), cols.next(), cols.next())
            else {
                return Err(Error::format(
                    "gazetteer",
                    format!("line {}: expected 3 tab-separated columns", lineno + 1),
                ));
            };
            let prior: f64 = prior.trim().parse().map_err(|_| {
                Error::format(
                    "gazetteer",
                    format!("line {}: bad prior {prior:?}", lineno + 1),
                )
            })?;
            if !(0.0..=1.0).contains(&prior) {
                return Err(Error::format(
                    "gazetteer",
                    format!("line {}: prior {prior} outside [0, 1]", lineno + 1),
                ));
            }
            let key = tokenize(surface);
            if key.is_empty() {
                return Err(Error::format(
                    "gazetteer",
                    format!("line {}: surface normalizes to nothing", lineno + 1),
                ));
            }
            max_len = max_len.max(key.len());
            entries.insert(key, (canonical.trim().to_string(), prior));
        }
        Ok(Gazetteer { entries, max_len })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Greedy longest-first matching over normalized query tokens.
    pub fn find(&self, tokens: &[String]) -> Vec<EntityMatch> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            let mut advanced = false;
            for span in (1..=longest).rev() {
                if let Some((canonical, prior)) = self.entries.get(&tokens[i..i + span]) {
                    let canonical_len = tokenize(canonical).len().max(1);
                    out.push(EntityMatch {
                        canonical: canonical.clone(),
                        rho: prior * span as f64 / canonical_len as f64,
                        start: i,
                        end: i + span,
                    });
                    i += span;
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                i += 1;
            }
        }
        out
    }
}
