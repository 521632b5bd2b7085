//! Brute-force scoring oracle for integration tests.
//!
//! Recomputes every probability from the raw records plus a
//! collection-statistics TSV dump, sharing only the tokenizer with the
//! engine. Everything is rescanned on demand — no index, no caches — so a
//! disagreement with the engine points at the engine.

use std::collections::HashMap;

use crate::corpus::{FieldType, TableRecord, FIELD_COUNT};
use crate::index::{tokenize, FieldScope, WindowMode};
use crate::params::{CorpusModel, ModelParams, SmoothingParams};
use crate::ranker::QueryNode;
use crate::{Error, Result};

struct OracleTable {
    table_id: String,
    /// Tokenized text units per field.
    units: [Vec<Vec<String>>; FIELD_COUNT],
    numeric_cells: u32,
    total_cells: u32,
}

pub struct Oracle<'a> {
    params: &'a ModelParams,
    tables: Vec<OracleTable>,
    /// Per-field collection term frequency, parsed from the TSV dump.
    ctf: HashMap<(String, FieldType), u64>,
    /// Tokens per field, derived by summing the dump.
    field_tokens: [u64; FIELD_COUNT],
}

impl<'a> Oracle<'a> {
    pub fn new(
        records: &[TableRecord],
        stats_tsv: &str,
        params: &'a ModelParams,
    ) -> Result<Oracle<'a>> {
        let mut ctf = HashMap::new();
        let mut field_tokens = [0u64; FIELD_COUNT];
        let mut lines = stats_tsv.lines();
        if lines.next() != Some("term\tfield\tctf\tdf") {
            return Err(Error::format("stats tsv", "missing header"));
        }
        for line in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::format("stats tsv", format!("bad row {line:?}")));
            }
            let field = FieldType::from_name(cols[1])
                .ok_or_else(|| Error::format("stats tsv", format!("bad field {:?}", cols[1])))?;
            let n: u64 = cols[2]
                .parse()
                .map_err(|_| Error::format("stats tsv", format!("bad count {:?}", cols[2])))?;
            ctf.insert((cols[0].to_string(), field), n);
            field_tokens[field.ord()] += n;
        }

        let tables = records
            .iter()
            .map(|r| {
                let mut units: [Vec<Vec<String>>; FIELD_COUNT] = Default::default();
                for (field, texts) in r.fields.iter() {
                    units[field.ord()] = texts.iter().map(|t| tokenize(t)).collect();
                }
                OracleTable {
                    table_id: r.table_id.clone(),
                    units,
                    numeric_cells: r.numeric_cell_count,
                    total_cells: r.total_cell_count,
                }
            })
            .collect();

        Ok(Oracle {
            params,
            tables,
            ctf,
            field_tokens,
        })
    }

    pub fn table_ids(&self) -> impl Iterator<Item = &str> {
        self.tables.iter().map(|t| t.table_id.as_str())
    }

    fn fields_of(scope: FieldScope) -> Vec<FieldType> {
        match scope {
            FieldScope::Single(f) => vec![f],
            FieldScope::Union => FieldType::ALL.to_vec(),
        }
    }

    fn table_len(&self, table: usize, scope: FieldScope) -> u64 {
        Self::fields_of(scope)
            .iter()
            .flat_map(|f| &self.tables[table].units[f.ord()])
            .map(|u| u.len() as u64)
            .sum()
    }

    fn term_count(&self, table: usize, term: &str, scope: FieldScope) -> u64 {
        Self::fields_of(scope)
            .iter()
            .flat_map(|f| &self.tables[table].units[f.ord()])
            .flat_map(|u| u.iter())
            .filter(|t| *t == term)
            .count() as u64
    }

    fn window_count(
        &self,
        table: usize,
        terms: &[String],
        scope: FieldScope,
        mode: WindowMode,
    ) -> u64 {
        if terms.len() == 1 {
            return self.term_count(table, &terms[0], scope);
        }
        let mut count = 0;
        for f in Self::fields_of(scope) {
            for unit in &self.tables[table].units[f.ord()] {
                count += match mode {
                    WindowMode::Ordered => unit
                        .windows(terms.len())
                        .filter(|w| w.iter().zip(terms).all(|(a, b)| a == b))
                        .count() as u64,
                    WindowMode::Unordered { width } => (0..unit.len())
                        .filter(|&s| {
                            let span = &unit[s..unit.len().min(s + width as usize)];
                            terms.iter().all(|t| span.contains(t))
                        })
                        .count() as u64,
                };
            }
        }
        count
    }

    fn scope_tokens(&self, scope: FieldScope) -> u64 {
        Self::fields_of(scope)
            .iter()
            .map(|f| self.field_tokens[f.ord()])
            .sum()
    }

    fn term_ctf(&self, term: &str, scope: FieldScope) -> u64 {
        Self::fields_of(scope)
            .iter()
            .filter_map(|&f| self.ctf.get(&(term.to_string(), f)))
            .sum()
    }

    fn collection_scope(&self, leaf_scope: FieldScope) -> FieldScope {
        match self.params.corpus_model {
            CorpusModel::PerFieldType => leaf_scope,
            CorpusModel::Global => FieldScope::Union,
        }
    }

    fn collection_prob(&self, occurrences: u64, scope: FieldScope) -> f64 {
        let tokens = self.scope_tokens(scope);
        if occurrences == 0 || tokens == 0 {
            0.5 / (tokens as f64 + 1.0)
        } else {
            occurrences as f64 / tokens as f64
        }
    }

    fn smooth(&self, c: u64, len: u64, coll: f64, s: SmoothingParams) -> f64 {
        let denom = len as f64 + s.mu;
        let dirichlet = if denom > 0.0 {
            (c as f64 + s.mu * coll) / denom
        } else {
            coll
        };
        let p = s.lambda * dirichlet + (1.0 - s.lambda) * coll;
        p.max(f64::MIN_POSITIVE).ln()
    }

    fn smoothing_for(&self, scope: FieldScope) -> SmoothingParams {
        match scope {
            FieldScope::Single(_) => self.params.fielded,
            FieldScope::Union => self.params.full_text,
        }
    }

    fn term_log(&self, table: usize, term: &str, scope: FieldScope) -> f64 {
        let coll_scope = self.collection_scope(scope);
        let coll = self.collection_prob(self.term_ctf(term, coll_scope), coll_scope);
        self.smooth(
            self.term_count(table, term, scope),
            self.table_len(table, scope),
            coll,
            self.smoothing_for(scope),
        )
    }

    fn window_log(
        &self,
        table: usize,
        terms: &[String],
        scope: FieldScope,
        mode: WindowMode,
    ) -> f64 {
        let coll_scope = self.collection_scope(scope);
        let coll_count: u64 = (0..self.tables.len())
            .map(|t| self.window_count(t, terms, coll_scope, mode))
            .sum();
        let coll = self.collection_prob(coll_count, coll_scope);
        self.smooth(
            self.window_count(table, terms, scope, mode),
            self.table_len(table, scope),
            coll,
            self.smoothing_for(scope),
        )
    }

    fn mixture(&self, leaf: impl Fn(FieldScope) -> f64) -> f64 {
        let mut p = 0.0;
        for field in FieldType::ALL {
            let w = self.params.field_weights.get(field);
            if w > 0.0 {
                p += w * leaf(FieldScope::Single(field)).exp();
            }
        }
        p.max(f64::MIN_POSITIVE).ln()
    }

    /// Log-belief of `node` for the table at `table` (positional, in record
    /// order). Panics on empty operators — oracle inputs are fixed trees.
    pub fn score(&self, node: &QueryNode, table: usize) -> f64 {
        match node {
            QueryNode::Term { stem, scope } => match scope {
                Some(s) => self.term_log(table, stem, *s),
                None => self.mixture(|s| self.term_log(table, stem, s)),
            },
            QueryNode::OrderedWindow { terms, scope } => match scope {
                Some(s) => self.window_log(table, terms, *s, WindowMode::Ordered),
                None => self.mixture(|s| self.window_log(table, terms, s, WindowMode::Ordered)),
            },
            QueryNode::UnorderedWindow {
                terms,
                width,
                scope,
            } => {
                let mode = WindowMode::Unordered { width: *width };
                match scope {
                    Some(s) => self.window_log(table, terms, *s, mode),
                    None => self.mixture(|s| self.window_log(table, terms, s, mode)),
                }
            }
            QueryNode::And(children) => {
                children.iter().map(|c| self.score(c, table)).sum::<f64>() / children.len() as f64
            }
            QueryNode::WAnd(children) => {
                let total: f64 = children.iter().map(|(w, _)| w).sum();
                children
                    .iter()
                    .map(|(w, c)| w / total * self.score(c, table))
                    .sum()
            }
            QueryNode::WSum(children) => {
                let total: f64 = children.iter().map(|(w, _)| w).sum();
                let p: f64 = children
                    .iter()
                    .map(|(w, c)| w / total * self.score(c, table).exp())
                    .sum();
                p.max(f64::MIN_POSITIVE).ln()
            }
            QueryNode::Max(children) => children
                .iter()
                .map(|c| self.score(c, table))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Score with the numeric-content prior applied per the parameters.
    pub fn score_ranked(&self, node: &QueryNode, table: usize) -> f64 {
        let mut s = self.score(node, table);
        if self.params.prior_enabled {
            let t = &self.tables[table];
            s += (f64::from(t.numeric_cells) + 1.0).ln() - (f64::from(t.total_cells) + 2.0).ln();
        }
        s
    }

    /// Full ranking over tables matching at least one leaf term, sorted by
    /// descending score with ascending-id ties, truncated to `k`.
    pub fn rank_ids(&self, node: &QueryNode, k: usize) -> Vec<(String, f64)> {
        let stems = node.leaf_terms();
        let mut out: Vec<(String, f64)> = (0..self.tables.len())
            .filter(|&t| {
                stems
                    .iter()
                    .any(|s| self.term_count(t, s, FieldScope::Union) > 0)
            })
            .map(|t| (self.tables[t].table_id.clone(), self.score_ranked(node, t)))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out.truncate(k);
        out
    }
}
