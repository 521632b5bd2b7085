//! Reference rankers: BM25, fielded BM25F, a TTF-ITTF vector-space
//! scorer, and language-model trees over the pooled table text.
//!
//! All rankers share the candidate set (tables matching at least one
//! query term), descending-score order with ascending-id tie break, and
//! a top-k cut, so runs differ only in the scoring function.

use std::collections::HashMap;

use crate::corpus::{FieldType, FIELD_COUNT};
use crate::index::{FieldScope, Index};
use crate::params::{FieldWeights, SdmWeights};
use crate::ranker::{build_union_terms, QueryNode, Ranked, UNORDERED_WIDTH};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Bm25Params {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// BM25F parameters: per-field term-frequency boosts and per-field `b`.
/// Length normalization uses the whole-table length ratio modulated by
/// the field's `b`, so uniform boosts of 1 with a uniform `b` recover
/// plain BM25 over the pooled text exactly.
#[derive(Debug, Clone)]
pub struct Bm25fParams {
    pub k1: f64,
    pub b: [f64; FIELD_COUNT],
    pub weights: [f64; FIELD_COUNT],
}

impl Bm25fParams {
    pub fn uniform(k1: f64, b: f64) -> Bm25fParams {
        Bm25fParams {
            k1,
            b: [b; FIELD_COUNT],
            weights: [1.0; FIELD_COUNT],
        }
    }
}

impl Default for Bm25fParams {
    /// Standard field emphasis rescaled to mean boost 1, shared b = 0.75.
    fn default() -> Bm25fParams {
        let standard = FieldWeights::standard();
        let mut weights = [0.0; FIELD_COUNT];
        for field in FieldType::ALL {
            weights[field.ord()] = standard.get(field) * FIELD_COUNT as f64;
        }
        Bm25fParams {
            k1: 1.2,
            b: [0.75; FIELD_COUNT],
            weights,
        }
    }
}

/// `ln((N − df + 0.5)/(df + 0.5) + 1)`: positive for every df ≤ N.
fn bm25_idf(n_tables: usize, df: u32) -> f64 {
    let n = n_tables as f64;
    let df = f64::from(df);
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

fn mean_table_len(index: &Index) -> f64 {
    if index.table_count() == 0 {
        return 0.0;
    }
    let total: u64 = index.tables().iter().map(|t| t.union_len()).sum();
    total as f64 / index.table_count() as f64
}

fn dedupe(tokens: &[String]) -> Result<Vec<&str>> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let mut seen = Vec::new();
    for token in tokens {
        if !seen.contains(&token.as_str()) {
            seen.push(token.as_str());
        }
    }
    Ok(seen)
}

fn sorted_top_k(mut scored: Vec<Ranked>, k: usize) -> Vec<Ranked> {
    scored.sort_unstable_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.table_id.cmp(&b.table_id))
    });
    scored.truncate(k);
    scored
}

/// BM25 over the pooled table text. Duplicate query tokens count once.
pub fn bm25(index: &Index, tokens: &[String], params: Bm25Params, k: usize) -> Result<Vec<Ranked>> {
    let terms = dedupe(tokens)?;
    let avgdl = mean_table_len(index);
    let owned: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
    let mut scored = Vec::new();
    for table in index.candidates(&owned) {
        let dl = index.scope_len(table, FieldScope::Union) as f64;
        let norm = if avgdl > 0.0 {
            (1.0 - params.b) + params.b * dl / avgdl
        } else {
            1.0
        };
        let mut score = 0.0;
        for term in &terms {
            let c = index.term_count_in(term, table, FieldScope::Union) as f64;
            if c > 0.0 {
                let idf = bm25_idf(index.table_count(), index.df(term, FieldScope::Union));
                score += idf * c * (params.k1 + 1.0) / (c + params.k1 * norm);
            }
        }
        scored.push(Ranked {
            table_id: index.table(table).table_id.clone(),
            score,
        });
    }
    Ok(sorted_top_k(scored, k))
}

/// BM25F: per-field boosted term frequencies pooled before saturation.
pub fn bm25f(
    index: &Index,
    tokens: &[String],
    params: &Bm25fParams,
    k: usize,
) -> Result<Vec<Ranked>> {
    let terms = dedupe(tokens)?;
    let avgdl = mean_table_len(index);
    let owned: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
    let mut scored = Vec::new();
    for table in index.candidates(&owned) {
        let dl = index.scope_len(table, FieldScope::Union) as f64;
        let mut score = 0.0;
        for term in &terms {
            let mut pseudo_tf = 0.0;
            for field in FieldType::ALL {
                let c = index.term_count_in(term, table, FieldScope::Single(field)) as f64;
                if c > 0.0 {
                    let fi = field.ord();
                    let norm = if avgdl > 0.0 {
                        (1.0 - params.b[fi]) + params.b[fi] * dl / avgdl
                    } else {
                        1.0
                    };
                    pseudo_tf += params.weights[fi] * c / norm;
                }
            }
            if pseudo_tf > 0.0 {
                let idf = bm25_idf(index.table_count(), index.df(term, FieldScope::Union));
                score += idf * pseudo_tf * (params.k1 + 1.0) / (pseudo_tf + params.k1);
            }
        }
        scored.push(Ranked {
            table_id: index.table(table).table_id.clone(),
            score,
        });
    }
    Ok(sorted_top_k(scored, k))
}

/// Vector-space scorer: tables as TTF·ITTF vectors over their full
/// vocabulary, the query as raw term counts, cosine similarity. The
/// inverse table frequency is `ln((N + 1)/(df + 1))`.
pub fn tablerank(index: &Index, tokens: &[String], k: usize) -> Result<Vec<Ranked>> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let ittf = |term: &str| {
        let df = f64::from(index.df(term, FieldScope::Union));
        ((index.table_count() as f64 + 1.0) / (df + 1.0)).ln()
    };
    let mut query: HashMap<&str, f64> = HashMap::new();
    for token in tokens {
        *query.entry(token.as_str()).or_insert(0.0) += 1.0;
    }
    let query_norm = query.values().map(|w| w * w).sum::<f64>().sqrt();
    let owned: Vec<String> = query.keys().map(|t| t.to_string()).collect();
    let mut scored = Vec::new();
    for table in index.candidates(&owned) {
        let mut dot = 0.0;
        let mut norm_sq = 0.0;
        for (term, count) in index.table_vector(table) {
            let w = count as f64 * ittf(term);
            norm_sq += w * w;
            if let Some(qw) = query.get(term) {
                dot += qw * w;
            }
        }
        let score = if norm_sq > 0.0 {
            dot / (norm_sq.sqrt() * query_norm)
        } else {
            0.0
        };
        scored.push(Ranked {
            table_id: index.table(table).table_id.clone(),
            score,
        });
    }
    Ok(sorted_top_k(scored, k))
}

/// Sequential-dependence tree over the pooled table text: unigrams plus
/// ordered and unordered bigram windows. One token reduces to bag of
/// words.
pub fn build_sdm_query(tokens: &[String], sdm: &SdmWeights) -> Result<QueryNode> {
    if tokens.len() < 2 {
        return build_union_terms(tokens);
    }
    let scope = Some(FieldScope::Union);
    let unigrams = build_union_terms(tokens)?;
    let ordered = QueryNode::And(
        tokens
            .windows(2)
            .map(|pair| QueryNode::OrderedWindow {
                terms: pair.to_vec(),
                scope,
            })
            .collect(),
    );
    let unordered = QueryNode::And(
        tokens
            .windows(2)
            .map(|pair| QueryNode::UnorderedWindow {
                terms: pair.to_vec(),
                width: UNORDERED_WIDTH,
                scope,
            })
            .collect(),
    );
    Ok(QueryNode::WAnd(vec![
        (sdm.term, unigrams),
        (sdm.ordered, ordered),
        (sdm.unordered, unordered),
    ]))
}
