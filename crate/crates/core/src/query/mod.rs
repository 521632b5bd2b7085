//! Query understanding: entity and noun-phrase concepts, keyness
//! weighting, and quantity-type detection with unit expansion.
//!
//! The output of [`analyze`] feeds the structured-query builders: each
//! concept becomes proximity evidence, each detected quantity type
//! becomes unit-symbol evidence, and the raw tokens remain the backbone.

pub mod chunk;
pub mod gazetteer;
pub mod quantity;

use serde::{Deserialize, Serialize};

use crate::corpus::{FieldType, TableRecord};
use crate::index::{tokenize, FieldScope, Index};
use crate::params::ModelParams;
use crate::ranker::{
    build_concept_node, build_full_query, build_quantity_node, build_query_terms, QueryNode,
};
use crate::{Error, Result};

pub use chunk::{Lexicon, Tag};
pub use gazetteer::{EntityMatch, Gazetteer};
pub use quantity::{
    mine_records, mine_text, MinedUnit, Ontology, QuantityModel, BACKGROUND, DEFAULT_THRESHOLD,
};

/// Bundled defaults, compiled in so the engine works out of the box.
pub const DEFAULT_GAZETTEER: &str = include_str!("../../data/gazetteer.tsv");
pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");
pub const DEFAULT_ONTOLOGY: &str = include_str!("../../data/ontology.txt");

/// How concepts are selected from the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConceptMode {
    /// Gazetteer entities, weighted by prior.
    Entity,
    /// Noun-phrase chunks, weighted by corpus keyness.
    NounPhrase,
}

/// One selected concept with its mixture weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Concept {
    /// Display form: canonical entity name or surface phrase.
    pub display: String,
    /// Index terms used for matching.
    pub tokens: Vec<String>,
    pub weight: f64,
}

/// One detected quantity type with its unit symbols.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityPick {
    pub name: String,
    pub weight: f64,
    pub probability: f64,
    pub symbols: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryAnalysis {
    pub tokens: Vec<String>,
    pub concepts: Vec<Concept>,
    pub quantities: Vec<QuantityPick>,
}

/// Number of keyness features: two per non-cell field.
pub const KEYNESS_FEATURES: usize = 14;

/// Keyness features of a phrase against the index: for each of the seven
/// non-cell fields, mean ln(1 + ctf) and mean idf over the phrase tokens.
pub fn keyness_features(index: &Index, tokens: &[String]) -> [f64; KEYNESS_FEATURES] {
    let mut out = [0.0; KEYNESS_FEATURES];
    let n = tokens.len().max(1) as f64;
    let fields: Vec<FieldType> = FieldType::ALL
        .iter()
        .copied()
        .filter(|f| *f != FieldType::CellValue)
        .collect();
    for (fi, field) in fields.iter().enumerate() {
        let scope = FieldScope::Single(*field);
        let tables = index.table_count() as f64;
        for token in tokens {
            let ctf = index.ctf(token, scope) as f64;
            let df = index.df(token, scope) as f64;
            out[2 * fi] += (1.0 + ctf).ln() / n;
            out[2 * fi + 1] += ((tables + 1.0) / (df + 1.0)).ln() / n;
        }
    }
    out
}

/// Unsupervised keyness: the mean of the idf features. Rare-in-text
/// phrases score high; boilerplate scores near zero.
pub fn keyness_score(index: &Index, tokens: &[String]) -> f64 {
    let f = keyness_features(index, tokens);
    (0..KEYNESS_FEATURES / 2).map(|i| f[2 * i + 1]).sum::<f64>() / (KEYNESS_FEATURES / 2) as f64
}

/// Everything needed to understand queries. Build once per index, reuse
/// per query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryIntel {
    #[serde(skip, default = "default_gazetteer")]
    pub gazetteer: Gazetteer,
    #[serde(skip, default = "default_lexicon")]
    pub lexicon: Lexicon,
    pub quantities: QuantityModel,
}

fn default_gazetteer() -> Gazetteer {
    Gazetteer::parse(DEFAULT_GAZETTEER).expect("bundled gazetteer parses")
}

fn default_lexicon() -> Lexicon {
    Lexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
}

impl QueryIntel {
    /// Mine the records with the given resources and train the quantity
    /// classifier on what was found.
    pub fn build(
        records: &[TableRecord],
        gazetteer: Gazetteer,
        lexicon: Lexicon,
        ontology: Ontology,
    ) -> Result<QueryIntel> {
        let mined = mine_records(records, &ontology, &lexicon);
        let quantities = QuantityModel::train(ontology, mined)?;
        Ok(QueryIntel {
            gazetteer,
            lexicon,
            quantities,
        })
    }

    /// Build from the compiled-in gazetteer, lexicon, and ontology.
    pub fn build_default(records: &[TableRecord]) -> Result<QueryIntel> {
        QueryIntel::build(
            records,
            default_gazetteer(),
            default_lexicon(),
            Ontology::parse(DEFAULT_ONTOLOGY)?,
        )
    }
}

/// Analyze a raw query: tokenize, select concepts, classify quantities.
/// Concept weights are normalized to sum to one; quantity weights are
/// uniform over the deduplicated detected types.
pub fn analyze(
    query: &str,
    index: &Index,
    intel: &QueryIntel,
    mode: ConceptMode,
) -> Result<QueryAnalysis> {
    let tokens = tokenize(query);
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let mut concepts: Vec<Concept> = match mode {
        ConceptMode::Entity => intel
            .gazetteer
            .find(&tokens)
            .into_iter()
            .map(|m| Concept {
                tokens: tokenize(&m.canonical),
                display: m.canonical,
                weight: m.rho,
            })
            .collect(),
        ConceptMode::NounPhrase => intel
            .lexicon
            .noun_phrases(query)
            .into_iter()
            .filter_map(|words| {
                let display = words.join(" ");
                let toks = tokenize(&display);
                if toks.is_empty() {
                    return None;
                }
                let weight = keyness_score(index, &toks);
                Some(Concept {
                    display,
                    tokens: toks,
                    weight,
                })
            })
            .collect(),
    };
    concepts.retain(|c| !c.tokens.is_empty() && c.weight > 0.0);
    let total: f64 = concepts.iter().map(|c| c.weight).sum();
    if total > 0.0 {
        for c in &mut concepts {
            c.weight /= total;
        }
    }

    let mut quantities: Vec<QuantityPick> = Vec::new();
    for concept in &concepts {
        for (name, probability) in intel.quantities.classify(&concept.tokens) {
            if quantities.iter().any(|q| q.name == name) {
                continue;
            }
            let symbols = intel
                .quantities
                .ontology
                .get(&name)
                .map(|t| t.symbols.clone())
                .unwrap_or_default();
            quantities.push(QuantityPick {
                name,
                weight: 0.0,
                probability,
                symbols,
            });
        }
    }
    let n = quantities.len() as f64;
    for q in &mut quantities {
        q.weight = 1.0 / n;
    }

    Ok(QueryAnalysis {
        tokens,
        concepts,
        quantities,
    })
}

/// Evidence tree for one quantity type: the best (symbol, field) match.
pub fn build_quantity_type_node(symbols: &[String]) -> Result<QueryNode> {
    let mut children = Vec::new();
    for symbol in symbols {
        let tokens = tokenize(symbol);
        if tokens.is_empty() {
            continue;
        }
        children.push(build_quantity_node(&tokens)?);
    }
    if children.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(if children.len() == 1 {
        children.pop().unwrap()
    } else {
        QueryNode::Max(children)
    })
}

/// Assemble the final ranked-retrieval tree from an analysis.
pub fn build_analyzed_query(analysis: &QueryAnalysis, params: &ModelParams) -> Result<QueryNode> {
    let terms = build_query_terms(&analysis.tokens, &params.field_weights)?;
    let concepts: Vec<(f64, QueryNode)> = analysis
        .concepts
        .iter()
        .map(|c| Ok((c.weight, build_concept_node(&c.tokens, &params.sdm)?)))
        .collect::<Result<_>>()?;
    let quantities: Vec<(f64, QueryNode)> = analysis
        .quantities
        .iter()
        .map(|q| Ok((q.weight, build_quantity_type_node(&q.symbols)?)))
        .collect::<Result<_>>()?;
    build_full_query(Some(terms), concepts, quantities, params.alpha, params.beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NumericMatcher;

    fn record(table_id: &str, field: FieldType, units: &[&str]) -> TableRecord {
        let mut r = TableRecord::new(table_id, "doc");
        for unit in units {
            r.fields.push(field, *unit);
        }
        r.refresh_cell_counts(&NumericMatcher::new());
        r
    }

    #[test]
    fn bundled_data_parses() {
        let g = default_gazetteer();
        assert!(g.len() > 10);
        let l = default_lexicon();
        assert!(l.len() > 100);
        let o = Ontology::parse(DEFAULT_ONTOLOGY).unwrap();
        assert!(o.classes().count() >= 20);
        assert_eq!(o.type_of_symbol("N"), Some("Force"));
        assert_eq!(o.type_of_symbol("m/s^2"), Some("Acceleration"));
        // The background class exists but carries no symbols.
        assert!(o.get(BACKGROUND).unwrap().symbols.is_empty());
    }

    #[test]
    fn keyness_prefers_rare_phrases() {
        let records = vec![
            record(
                "t1",
                FieldType::Caption,
                &["best-fit parameters of the model"],
            ),
            record(
                "t2",
                FieldType::Caption,
                &["best-fit parameters of the spectrum"],
            ),
            record("t3", FieldType::Caption, &["meson oscillation summary"]),
        ];
        let index = Index::build(&records).unwrap();
        let common = keyness_score(&index, &tokenize("best-fit parameters"));
        let rare = keyness_score(&index, &tokenize("meson oscillation"));
        assert!(rare > common);
        let f = keyness_features(&index, &tokenize("meson"));
        assert_eq!(f.len(), KEYNESS_FEATURES);
        // ctf features live in even slots: caption is the third non-cell
        // field in declaration order (title, abstract, caption, …).
        assert!(f[4] > 0.0);
    }

    #[test]
    fn quantity_type_node_unions_symbols() {
        let node = build_quantity_type_node(&["N".to_string(), "kN".to_string()]).unwrap();
        match node {
            QueryNode::Max(children) => assert_eq!(children.len(), 2),
            other => panic!("expected #max over symbols, got {other:?}"),
        }
        let single = build_quantity_type_node(&["keV".to_string()]).unwrap();
        assert!(matches!(single, QueryNode::Max(_))); // per-field #max
    }
}
