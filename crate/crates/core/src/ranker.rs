//! Structured-query ranking with smoothed field language models.
//!
//! Queries are operator trees over term and window leaves. Every leaf
//! produces a probability estimated from the index with two-stage
//! smoothing (Dirichlet toward the collection model, then linear
//! interpolation with it); operators combine child beliefs in log space.
//! Scores are comparable within one query only.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::FieldType;
use crate::index::{FieldScope, Index, WindowMode};
use crate::params::{CorpusModel, FieldWeights, ModelParams, SdmWeights, SmoothingParams};
use crate::{Error, Result};

/// Width of the unordered proximity window used for concept evidence.
pub const UNORDERED_WIDTH: u32 = 8;

/// A node of the query operator tree.
///
/// Leaves with `scope: None` are scored as a weighted mixture over all
/// eight fields; a concrete scope restricts the evidence to one field or
/// to the pooled table.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryNode {
    Term {
        stem: String,
        scope: Option<FieldScope>,
    },
    /// Terms at consecutive positions, in order ("#1").
    OrderedWindow {
        terms: Vec<String>,
        scope: Option<FieldScope>,
    },
    /// All terms within a span of `width` positions ("#uw8").
    UnorderedWindow {
        terms: Vec<String>,
        width: u32,
        scope: Option<FieldScope>,
    },
    /// Mean of child log-beliefs (geometric mean of beliefs).
    And(Vec<QueryNode>),
    /// Weighted sum of child log-beliefs; weights normalized at evaluation.
    WAnd(Vec<(f64, QueryNode)>),
    /// Weighted sum of child beliefs in probability space; weights
    /// normalized at evaluation.
    WSum(Vec<(f64, QueryNode)>),
    /// Maximum child belief.
    Max(Vec<QueryNode>),
}

impl QueryNode {
    pub fn term_in(stem: impl Into<String>, field: FieldType) -> QueryNode {
        QueryNode::Term {
            stem: stem.into(),
            scope: Some(FieldScope::Single(field)),
        }
    }

    /// Collect every leaf term, including window members. Used for
    /// candidate generation.
    pub fn leaf_terms(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_leaves(&self, out: &mut Vec<String>) {
        match self {
            QueryNode::Term { stem, .. } => out.push(stem.clone()),
            QueryNode::OrderedWindow { terms, .. } | QueryNode::UnorderedWindow { terms, .. } => {
                out.extend(terms.iter().cloned())
            }
            QueryNode::And(children) | QueryNode::Max(children) => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
            QueryNode::WAnd(children) | QueryNode::WSum(children) => {
                children.iter().for_each(|(_, c)| c.collect_leaves(out))
            }
        }
    }

    /// Render in the structured query language the tree mirrors:
    /// `#and`, `#wand`, `#wsum`, `#max`, `#1`, `#uw<width>`, with field
    /// restrictions as a `.(field)` suffix.
    pub fn to_query_string(&self) -> String {
        let mut out = String::new();
        self.render(&mut out, 0);
        out
    }

    fn render(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match self {
            QueryNode::Term { stem, scope } => {
                let _ = write!(out, "{pad}{stem}{}", scope_suffix(*scope));
            }
            QueryNode::OrderedWindow { terms, scope } => {
                let _ = write!(
                    out,
                    "{pad}#1( {} ){}",
                    terms.join(" "),
                    scope_suffix(*scope)
                );
            }
            QueryNode::UnorderedWindow {
                terms,
                width,
                scope,
            } => {
                let _ = write!(
                    out,
                    "{pad}#uw{width}( {} ){}",
                    terms.join(" "),
                    scope_suffix(*scope)
                );
            }
            QueryNode::And(children) => {
                // An #and over same-scoped plain terms prints on one line
                // with the restriction lifted onto the operator.
                if let Some((stems, scope)) = uniform_term_children(children) {
                    let _ = write!(
                        out,
                        "{pad}#and( {} ){}",
                        stems.join(" "),
                        scope_suffix(scope)
                    );
                } else {
                    let _ = writeln!(out, "{pad}#and(");
                    for child in children {
                        child.render(out, depth + 1);
                        out.push('\n');
                    }
                    let _ = write!(out, "{pad})");
                }
            }
            QueryNode::WAnd(children) => render_weighted(out, "#wand", children, depth),
            QueryNode::WSum(children) => render_weighted(out, "#wsum", children, depth),
            QueryNode::Max(children) => {
                let _ = writeln!(out, "{pad}#max(");
                for child in children {
                    child.render(out, depth + 1);
                    out.push('\n');
                }
                let _ = write!(out, "{pad})");
            }
        }
    }
}

fn scope_suffix(scope: Option<FieldScope>) -> String {
    match scope {
        None => String::new(),
        Some(FieldScope::Single(f)) => format!(".({})", f.name()),
        Some(FieldScope::Union) => ".(union)".to_string(),
    }
}

fn uniform_term_children(children: &[QueryNode]) -> Option<(Vec<&str>, Option<FieldScope>)> {
    let mut stems = Vec::with_capacity(children.len());
    let mut shared: Option<Option<FieldScope>> = None;
    for child in children {
        match child {
            QueryNode::Term { stem, scope } => {
                match shared {
                    None => shared = Some(*scope),
                    Some(s) if s == *scope => {}
                    _ => return None,
                }
                stems.push(stem.as_str());
            }
            _ => return None,
        }
    }
    shared.map(|scope| (stems, scope))
}

fn render_weighted(out: &mut String, name: &str, children: &[(f64, QueryNode)], depth: usize) {
    let pad = "  ".repeat(depth);
    // Single-line form when every child is a plain term (the per-token
    // field mixture); nested operators get one line each.
    let flat = children
        .iter()
        .all(|(_, c)| matches!(c, QueryNode::Term { .. }));
    if flat {
        let _ = write!(out, "{pad}{name}(");
        for (weight, child) in children {
            let mut leaf = String::new();
            child.render(&mut leaf, 0);
            let _ = write!(out, " {} {}", fmt_weight(*weight), leaf);
        }
        let _ = write!(out, " )");
    } else {
        let _ = writeln!(out, "{pad}{name}(");
        for (weight, child) in children {
            let mut rendered = String::new();
            child.render(&mut rendered, depth + 1);
            let trimmed = rendered.trim_start();
            let _ = writeln!(out, "{pad}  {} {}", fmt_weight(*weight), trimmed);
        }
        let _ = write!(out, "{pad})");
    }
}

/// Weights print with up to four decimals, trailing zeros trimmed.
fn fmt_weight(w: f64) -> String {
    let mut s = format!("{w:.4}");
    while s.contains('.') && s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

/// Smoothed probability of evidence with count `c` in a stretch of
/// `len` tokens, backed by collection probability `coll`:
/// `λ·(c + μ·coll)/(len + μ) + (1−λ)·coll`. An empty stretch with μ = 0
/// falls back to the collection model outright.
pub fn smoothed_prob(c: u64, len: u64, coll: f64, s: SmoothingParams) -> f64 {
    let denom = len as f64 + s.mu;
    let dirichlet = if denom > 0.0 {
        (c as f64 + s.mu * coll) / denom
    } else {
        coll
    };
    s.lambda * dirichlet + (1.0 - s.lambda) * coll
}

pub fn smoothed_log_prob(c: u64, len: u64, coll: f64, s: SmoothingParams) -> f64 {
    smoothed_prob(c, len, coll, s).max(f64::MIN_POSITIVE).ln()
}

/// Log of the numeric-content prior: (numeric cells + 1)/(cells + 2).
pub fn numeric_prior_log(numeric_cells: u32, total_cells: u32) -> f64 {
    (f64::from(numeric_cells) + 1.0).ln() - (f64::from(total_cells) + 2.0).ln()
}

/// One ranked result.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub table_id: String,
    pub score: f64,
}

#[derive(Hash, PartialEq, Eq)]
struct WindowKey {
    terms: Vec<String>,
    scope: FieldScope,
    mode: WindowMode,
}

/// Scores query trees against one index. Collection statistics for window
/// evidence are computed exactly by index scan and cached per evaluator,
/// so an evaluator is meant to live for one query.
pub struct Evaluator<'a> {
    index: &'a Index,
    params: &'a ModelParams,
    window_coll: RefCell<HashMap<WindowKey, u64>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(index: &'a Index, params: &'a ModelParams) -> Evaluator<'a> {
        Evaluator {
            index,
            params,
            window_coll: RefCell::new(HashMap::new()),
        }
    }

    fn smoothing_for(&self, scope: FieldScope) -> SmoothingParams {
        match scope {
            FieldScope::Single(_) => self.params.fielded,
            FieldScope::Union => self.params.full_text,
        }
    }

    /// Scope whose statistics back the collection model for a leaf.
    fn collection_scope(&self, leaf_scope: FieldScope) -> FieldScope {
        match self.params.corpus_model {
            CorpusModel::PerFieldType => leaf_scope,
            CorpusModel::Global => FieldScope::Union,
        }
    }

    /// Collection probability with the unseen floor 0.5/(tokens + 1).
    fn collection_prob(&self, occurrences: u64, scope: FieldScope) -> f64 {
        let tokens = self.index.scope_token_count(scope);
        if occurrences == 0 || tokens == 0 {
            0.5 / (tokens as f64 + 1.0)
        } else {
            occurrences as f64 / tokens as f64
        }
    }

    fn term_log_prob(&self, stem: &str, table: u32, scope: FieldScope) -> f64 {
        let c = self.index.term_count_in(stem, table, scope);
        let len = self.index.scope_len(table, scope);
        let coll_scope = self.collection_scope(scope);
        let coll = self.collection_prob(self.index.ctf(stem, coll_scope), coll_scope);
        smoothed_log_prob(c, len, coll, self.smoothing_for(scope))
    }

    fn window_log_prob(
        &self,
        terms: &[String],
        table: u32,
        scope: FieldScope,
        mode: WindowMode,
    ) -> f64 {
        let c = self.index.window_count(table, terms, scope, mode);
        let len = self.index.scope_len(table, scope);
        let coll_scope = self.collection_scope(scope);
        let key = WindowKey {
            terms: terms.to_vec(),
            scope: coll_scope,
            mode,
        };
        let coll_count = {
            let mut cache = self.window_coll.borrow_mut();
            match cache.get(&key) {
                Some(&n) => n,
                None => {
                    let n = self.index.window_collection_count(terms, coll_scope, mode);
                    cache.insert(key, n);
                    n
                }
            }
        };
        let coll = self.collection_prob(coll_count, coll_scope);
        smoothed_log_prob(c, len, coll, self.smoothing_for(scope))
    }

    /// Mixture over all fields for an unrestricted leaf, in belief space.
    fn mixture_log_prob(&self, leaf: impl Fn(FieldScope) -> f64) -> f64 {
        let mut p = 0.0;
        for field in FieldType::ALL {
            let weight = self.params.field_weights.get(field);
            if weight > 0.0 {
                p += weight * leaf(FieldScope::Single(field)).exp();
            }
        }
        p.max(f64::MIN_POSITIVE).ln()
    }

    /// Log-belief of `node` for one table. Empty operators are an error.
    pub fn evaluate(&self, node: &QueryNode, table: u32) -> Result<f64> {
        match node {
            QueryNode::Term { stem, scope } => Ok(match scope {
                Some(s) => self.term_log_prob(stem, table, *s),
                None => self.mixture_log_prob(|s| self.term_log_prob(stem, table, s)),
            }),
            QueryNode::OrderedWindow { terms, scope } => {
                self.eval_window(terms, table, *scope, WindowMode::Ordered)
            }
            QueryNode::UnorderedWindow {
                terms,
                width,
                scope,
            } => self.eval_window(
                terms,
                table,
                *scope,
                WindowMode::Unordered { width: *width },
            ),
            QueryNode::And(children) => {
                if children.is_empty() {
                    return Err(Error::EmptyOperator("#and"));
                }
                let mut sum = 0.0;
                for child in children {
                    sum += self.evaluate(child, table)?;
                }
                Ok(sum / children.len() as f64)
            }
            QueryNode::WAnd(children) => {
                let weights = normalized_weights(children, "#wand")?;
                let mut sum = 0.0;
                for ((_, child), w) in children.iter().zip(weights) {
                    sum += w * self.evaluate(child, table)?;
                }
                Ok(sum)
            }
            QueryNode::WSum(children) => {
                let weights = normalized_weights(children, "#wsum")?;
                // log-sum-exp over weighted beliefs
                let mut logs = Vec::with_capacity(children.len());
                for (_, child) in children {
                    logs.push(self.evaluate(child, table)?);
                }
                let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logs
                    .iter()
                    .zip(weights)
                    .map(|(l, w)| w * (l - m).exp())
                    .sum();
                Ok(m + sum.max(f64::MIN_POSITIVE).ln())
            }
            QueryNode::Max(children) => {
                if children.is_empty() {
                    return Err(Error::EmptyOperator("#max"));
                }
                let mut best = f64::NEG_INFINITY;
                for child in children {
                    best = best.max(self.evaluate(child, table)?);
                }
                Ok(best)
            }
        }
    }

    fn eval_window(
        &self,
        terms: &[String],
        table: u32,
        scope: Option<FieldScope>,
        mode: WindowMode,
    ) -> Result<f64> {
        if terms.is_empty() {
            return Err(Error::EmptyOperator(match mode {
                WindowMode::Ordered => "#1",
                WindowMode::Unordered { .. } => "#uw",
            }));
        }
        Ok(match scope {
            Some(s) => self.window_log_prob(terms, table, s, mode),
            None => self.mixture_log_prob(|s| self.window_log_prob(terms, table, s, mode)),
        })
    }
}

fn normalized_weights(children: &[(f64, QueryNode)], op: &'static str) -> Result<Vec<f64>> {
    if children.is_empty() {
        return Err(Error::EmptyOperator(op));
    }
    if children.iter().any(|(w, _)| *w < 0.0 || !w.is_finite()) {
        return Err(Error::format(
            "query tree",
            format!("{op} weights must be finite and nonnegative"),
        ));
    }
    let sum: f64 = children.iter().map(|(w, _)| w).sum();
    if sum <= 0.0 {
        return Err(Error::format(
            "query tree",
            format!("{op} weights must not all be zero"),
        ));
    }
    Ok(children.iter().map(|(w, _)| w / sum).collect())
}

/// Score all candidate tables (those matching at least one leaf term) and
/// return the top `k` by score, ties broken by ascending table id.
pub fn rank(
    index: &Index,
    node: &QueryNode,
    params: &ModelParams,
    k: usize,
) -> Result<Vec<Ranked>> {
    let evaluator = Evaluator::new(index, params);
    let stems = node.leaf_terms();
    let mut scored = Vec::new();
    for table in index.candidates(&stems) {
        let mut score = evaluator.evaluate(node, table)?;
        if params.prior_enabled {
            let entry = index.table(table);
            score += numeric_prior_log(entry.numeric_cells, entry.total_cells);
        }
        scored.push(Ranked {
            table_id: index.table(table).table_id.clone(),
            score,
        });
    }
    scored.sort_unstable_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.table_id.cmp(&b.table_id))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Per-token field mixture: an `#and` over one `#wsum` of field-restricted
/// terms per query token. The `#and` applies the 1/|q| exponent with |q|
/// counted in tokens.
pub fn build_query_terms(tokens: &[String], weights: &FieldWeights) -> Result<QueryNode> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let children = tokens
        .iter()
        .map(|token| {
            QueryNode::WSum(
                FieldType::ALL
                    .iter()
                    .map(|&f| (weights.get(f), QueryNode::term_in(token.clone(), f)))
                    .collect(),
            )
        })
        .collect();
    Ok(QueryNode::And(children))
}

/// Bag-of-words tree over the pooled table, the degenerate single-field
/// form of [`build_query_terms`].
pub fn build_union_terms(tokens: &[String]) -> Result<QueryNode> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(QueryNode::And(
        tokens
            .iter()
            .map(|t| QueryNode::Term {
                stem: t.clone(),
                scope: Some(FieldScope::Union),
            })
            .collect(),
    ))
}

/// Sequential-dependence evidence for one concept inside one field:
/// unigrams, exact-order bigrams, and unordered-window bigrams.
fn sdm_in_field(tokens: &[String], field: FieldType, sdm: &SdmWeights) -> QueryNode {
    let scope = Some(FieldScope::Single(field));
    let unigrams = QueryNode::And(
        tokens
            .iter()
            .map(|t| QueryNode::term_in(t.clone(), field))
            .collect(),
    );
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
    QueryNode::WAnd(vec![
        (sdm.term, unigrams),
        (sdm.ordered, ordered),
        (sdm.unordered, unordered),
    ])
}

/// Concept evidence: the best single field, where each field contributes
/// sequential-dependence evidence over the concept tokens. Single-token
/// concepts reduce to the best field-restricted term.
pub fn build_concept_node(tokens: &[String], sdm: &SdmWeights) -> Result<QueryNode> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let children = FieldType::ALL
        .iter()
        .map(|&field| {
            if tokens.len() == 1 {
                QueryNode::term_in(tokens[0].clone(), field)
            } else {
                sdm_in_field(tokens, field, sdm)
            }
        })
        .collect();
    Ok(QueryNode::Max(children))
}

/// Quantity evidence: the best single field containing the unit symbols.
pub fn build_quantity_node(symbol_tokens: &[String]) -> Result<QueryNode> {
    if symbol_tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let children = FieldType::ALL
        .iter()
        .map(|&field| {
            QueryNode::And(
                symbol_tokens
                    .iter()
                    .map(|t| QueryNode::term_in(t.clone(), field))
                    .collect(),
            )
        })
        .collect();
    Ok(QueryNode::Max(children))
}

/// Combine the token, concept, and quantity components with masses
/// (1−α−β, α, β). Components that are absent drop out and the remaining
/// masses renormalize; a lone component is returned bare.
pub fn build_full_query(
    terms: Option<QueryNode>,
    concepts: Vec<(f64, QueryNode)>,
    quantities: Vec<(f64, QueryNode)>,
    alpha: f64,
    beta: f64,
) -> Result<QueryNode> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) || alpha + beta > 1.0 {
        return Err(Error::format(
            "model parameters",
            format!("invalid component masses alpha={alpha}, beta={beta}"),
        ));
    }
    let mut components: Vec<(f64, QueryNode)> = Vec::new();
    let term_mass = 1.0 - alpha - beta;
    if let Some(node) = terms {
        if term_mass > 0.0 {
            components.push((term_mass, node));
        }
    }
    if !concepts.is_empty() && alpha > 0.0 {
        components.push((alpha, QueryNode::WAnd(concepts)));
    }
    if !quantities.is_empty() && beta > 0.0 {
        components.push((beta, QueryNode::WAnd(quantities)));
    }
    match components.len() {
        0 => Err(Error::EmptyQuery),
        1 => Ok(components.pop().unwrap().1),
        _ => Ok(QueryNode::WAnd(components)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FieldType, NumericMatcher, TableRecord};

    fn record(table_id: &str, field: FieldType, units: &[&str]) -> TableRecord {
        let mut r = TableRecord::new(table_id, "doc");
        for unit in units {
            r.fields.push(field, *unit);
        }
        r.refresh_cell_counts(&NumericMatcher::new());
        r
    }

    /// Pure maximum-likelihood params: beliefs equal in-field frequency.
    fn mle_params() -> ModelParams {
        ModelParams {
            fielded: SmoothingParams {
                lambda: 1.0,
                mu: 0.0,
            },
            full_text: SmoothingParams {
                lambda: 1.0,
                mu: 0.0,
            },
            prior_enabled: false,
            ..ModelParams::default()
        }
    }

    #[test]
    fn smoothing_matches_hand_computation() {
        // (c=1, len=2, coll=0.01) with λ=0.81, μ=2:
        // 0.81·(1 + 0.02)/4 + 0.19·0.01 = 0.20845
        let s = SmoothingParams {
            lambda: 0.81,
            mu: 2.0,
        };
        assert!((smoothed_prob(1, 2, 0.01, s) - 0.20845).abs() < 1e-9);
    }

    #[test]
    fn smoothing_collapses_to_collection_model_on_empty_field() {
        let s = SmoothingParams {
            lambda: 0.81,
            mu: 2.0,
        };
        assert!((smoothed_prob(0, 0, 0.07, s) - 0.07).abs() < 1e-15);
        // μ = 0 on an empty field falls back to the collection model too.
        let s0 = SmoothingParams {
            lambda: 0.81,
            mu: 0.0,
        };
        assert!((smoothed_prob(0, 0, 0.07, s0) - 0.07).abs() < 1e-15);
    }

    #[test]
    fn smoothing_mle_limit() {
        let s = SmoothingParams {
            lambda: 1.0,
            mu: 0.0,
        };
        assert!((smoothed_prob(3, 10, 0.123, s) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn max_takes_the_best_child() {
        // caption of t1: "gravity gravity mass unit unit unit unit unit
        // unit unit" gives MLE beliefs 0.2 and 0.5 for two leaves.
        let records = vec![record(
            "t1",
            FieldType::Caption,
            &["gravity gravity mass mass mass mass mass unit unit unit"],
        )];
        let index = Index::build(&records).unwrap();
        let params = mle_params();
        let ev = Evaluator::new(&index, &params);
        let gravity = QueryNode::term_in("gravity", FieldType::Caption); // 0.2
        let mass = QueryNode::term_in("mass", FieldType::Caption); // 0.5
        let node = QueryNode::Max(vec![gravity.clone(), mass.clone()]);
        let got = ev.evaluate(&node, 0).unwrap();
        assert!((got - 0.5f64.ln()).abs() < 1e-12);
        // Removing the non-maximal child changes nothing.
        let alone = ev.evaluate(&QueryNode::Max(vec![mass]), 0).unwrap();
        assert_eq!(got, alone);
    }

    #[test]
    fn and_is_geometric_mean_wand_weighted() {
        let records = vec![record(
            "t1",
            FieldType::Caption,
            &["gravity gravity mass mass mass mass mass unit unit unit"],
        )];
        let index = Index::build(&records).unwrap();
        let params = mle_params();
        let ev = Evaluator::new(&index, &params);
        let g = QueryNode::term_in("gravity", FieldType::Caption); // 0.2
        let m = QueryNode::term_in("mass", FieldType::Caption); // 0.5
        let and = ev
            .evaluate(&QueryNode::And(vec![g.clone(), m.clone()]), 0)
            .unwrap();
        assert!((and - (0.2f64.ln() + 0.5f64.ln()) / 2.0).abs() < 1e-12);
        let wand = ev
            .evaluate(
                &QueryNode::WAnd(vec![(0.85, g.clone()), (0.15, m.clone())]),
                0,
            )
            .unwrap();
        assert!((wand - (0.85 * 0.2f64.ln() + 0.15 * 0.5f64.ln())).abs() < 1e-12);
        // WAnd weights are scale invariant.
        let scaled = ev
            .evaluate(
                &QueryNode::WAnd(vec![(8.5, g.clone()), (1.5, m.clone())]),
                0,
            )
            .unwrap();
        assert!((wand - scaled).abs() < 1e-12);
        // WSum mixes beliefs in probability space.
        let wsum = ev
            .evaluate(&QueryNode::WSum(vec![(0.25, g), (0.75, m)]), 0)
            .unwrap();
        assert!((wsum - (0.25 * 0.2 + 0.75 * 0.5f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_operators_error() {
        let index = Index::build(&[record("t1", FieldType::Caption, &["x"])]).unwrap();
        let params = mle_params();
        let ev = Evaluator::new(&index, &params);
        for node in [
            QueryNode::And(vec![]),
            QueryNode::WAnd(vec![]),
            QueryNode::WSum(vec![]),
            QueryNode::Max(vec![]),
        ] {
            assert!(matches!(
                ev.evaluate(&node, 0),
                Err(Error::EmptyOperator(_))
            ));
        }
    }

    #[test]
    fn builders_reject_empty_input() {
        assert!(matches!(
            build_query_terms(&[], &FieldWeights::standard()),
            Err(Error::EmptyQuery)
        ));
        assert!(matches!(
            build_concept_node(&[], &SdmWeights::default()),
            Err(Error::EmptyQuery)
        ));
        assert!(matches!(build_quantity_node(&[]), Err(Error::EmptyQuery)));
    }

    #[test]
    fn query_terms_shape() {
        let tokens = vec!["newtonian".to_string(), "gravity".to_string()];
        let node = build_query_terms(&tokens, &FieldWeights::standard()).unwrap();
        match &node {
            QueryNode::And(children) => {
                assert_eq!(children.len(), 2);
                for child in children {
                    match child {
                        QueryNode::WSum(fields) => assert_eq!(fields.len(), 8),
                        other => panic!("expected #wsum per token, got {other:?}"),
                    }
                }
            }
            other => panic!("expected #and, got {other:?}"),
        }
    }

    #[test]
    fn concept_node_shape() {
        let tokens = vec!["newtonian".to_string(), "gravity".to_string()];
        let node = build_concept_node(&tokens, &SdmWeights::default()).unwrap();
        match &node {
            QueryNode::Max(fields) => {
                assert_eq!(fields.len(), 8);
                match &fields[0] {
                    QueryNode::WAnd(parts) => {
                        assert_eq!(parts.len(), 3);
                        assert_eq!(parts[0].0, 0.85);
                        assert_eq!(parts[1].0, 0.10);
                        assert_eq!(parts[2].0, 0.05);
                    }
                    other => panic!("expected #wand parts, got {other:?}"),
                }
            }
            other => panic!("expected #max over fields, got {other:?}"),
        }
        // Single-token concepts degenerate to restricted terms.
        let single = build_concept_node(&["meson".to_string()], &SdmWeights::default()).unwrap();
        match single {
            QueryNode::Max(children) => {
                assert!(children.iter().all(|c| matches!(c, QueryNode::Term { .. })))
            }
            other => panic!("expected #max of terms, got {other:?}"),
        }
    }

    #[test]
    fn full_query_drops_absent_components() {
        let tokens = vec!["meson".to_string()];
        let terms = build_query_terms(&tokens, &FieldWeights::standard()).unwrap();
        // No concepts or quantities: the token component comes back bare.
        let bare = build_full_query(Some(terms.clone()), vec![], vec![], 0.25, 0.15).unwrap();
        assert_eq!(bare, terms);
        // α = β = 0 gives the token component even when concepts exist.
        let concept = build_concept_node(&tokens, &SdmWeights::default()).unwrap();
        let zeroed = build_full_query(
            Some(terms.clone()),
            vec![(1.0, concept.clone())],
            vec![],
            0.0,
            0.0,
        )
        .unwrap();
        assert_eq!(zeroed, terms);
        // All three present: a three-way #wand.
        let quantity = build_quantity_node(&["mev".to_string()]).unwrap();
        let full = build_full_query(
            Some(terms),
            vec![(1.0, concept)],
            vec![(1.0, quantity)],
            0.25,
            0.15,
        )
        .unwrap();
        match full {
            QueryNode::WAnd(parts) => {
                assert_eq!(parts.len(), 3);
                assert!((parts[0].0 - 0.60).abs() < 1e-12);
                assert!((parts[1].0 - 0.25).abs() < 1e-12);
                assert!((parts[2].0 - 0.15).abs() < 1e-12);
            }
            other => panic!("expected #wand, got {other:?}"),
        }
    }

    #[test]
    fn ranking_is_deterministic_with_id_tiebreak() {
        let records = vec![
            record("b", FieldType::Caption, &["gravity model"]),
            record("a", FieldType::Caption, &["gravity model"]),
            record("c", FieldType::Caption, &["unrelated words"]),
        ];
        let index = Index::build(&records).unwrap();
        let params = mle_params();
        let node = build_query_terms(&["gravity".to_string()], &params.field_weights).unwrap();
        let ranked = rank(&index, &node, &params, 10).unwrap();
        let ids: Vec<_> = ranked.iter().map(|r| r.table_id.as_str()).collect();
        // a and b tie exactly; ascending id breaks the tie; c matches no
        // query term and is omitted.
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(ranked[0].score, ranked[1].score);
        // k = 0 yields an empty ranking.
        assert!(rank(&index, &node, &params, 0).unwrap().is_empty());
    }

    #[test]
    fn numeric_prior_prefers_numeric_twin() {
        let mut textual = TableRecord::new("t_text", "doc");
        textual
            .fields
            .push(FieldType::Caption, "thermal conductivity");
        for cell in ["alpha", "beta", "gamma", "delta"] {
            textual.fields.push(FieldType::CellValue, cell);
        }
        let mut numeric = TableRecord::new("t_num", "doc");
        numeric
            .fields
            .push(FieldType::Caption, "thermal conductivity");
        for cell in ["1.2", "3.4", "5.6", "7.8"] {
            numeric.fields.push(FieldType::CellValue, cell);
        }
        let matcher = NumericMatcher::new();
        textual.refresh_cell_counts(&matcher);
        numeric.refresh_cell_counts(&matcher);
        let index = Index::build(&[textual, numeric]).unwrap();

        let tokens = vec!["thermal".to_string(), "conductivity".to_string()];
        let node = build_query_terms(&tokens, &FieldWeights::standard()).unwrap();
        let mut params = ModelParams {
            prior_enabled: false,
            ..ModelParams::default()
        };
        let without = rank(&index, &node, &params, 10).unwrap();
        // Identical text statistics: tie, broken by ascending id.
        assert_eq!(without[0].table_id, "t_num");
        assert_eq!(without[0].score, without[1].score);
        params.prior_enabled = true;
        let with = rank(&index, &node, &params, 10).unwrap();
        assert_eq!(with[0].table_id, "t_num");
        assert!(with[0].score > with[1].score);
    }
}
