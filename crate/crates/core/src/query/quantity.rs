//! Quantity types: the unit ontology, unit mining from table text, and a
//! logistic-regression classifier mapping phrases to quantity types.
//!
//! Mining is self-supervising: phrases found next to a known unit symbol
//! become labeled examples, and the classifier generalizes from them to
//! phrases that never appear with a unit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::TableRecord;
use crate::index::tokenize;
use crate::query::chunk::{Lexicon, Tag};
use crate::{Error, Result};

/// Name of the background class. It competes in language-model scoring
/// to absorb unit-less phrases, but is never emitted as a prediction.
pub const BACKGROUND: &str = "Dimensionless";

/// Probability threshold for emitting a quantity type.
pub const DEFAULT_THRESHOLD: f64 = 0.65;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantityType {
    pub name: String,
    /// Case-sensitive unit symbols, e.g. `N`, `keV`, `m/s^2`.
    pub symbols: Vec<String>,
    pub description: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Ontology {
    types: Vec<QuantityType>,
}

impl Ontology {
    /// Parse TSV lines `name<TAB>symbols<TAB>description`, symbols comma
    /// separated and possibly empty (the background class has none).
    pub fn parse(text: &str) -> Result<Ontology> {
        let mut types = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(name), Some(symbols), Some(description)) =
                (cols.next(), cols.next(), cols.next())
            else {
                return Err(Error::format(
                    "ontology",
                    format!("line {}: expected 3 tab-separated columns", lineno + 1),
                ));
            };
            types.push(QuantityType {
                name: name.trim().to_string(),
                symbols: symbols
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                description: description.trim().to_string(),
            });
        }
        if !types.iter().any(|t| t.name == BACKGROUND) {
            return Err(Error::format(
                "ontology",
                format!("missing the {BACKGROUND} background class"),
            ));
        }
        Ok(Ontology { types })
    }

    pub fn types(&self) -> &[QuantityType] {
        &self.types
    }

    /// Real (non-background) classes, in file order.
    pub fn classes(&self) -> impl Iterator<Item = &QuantityType> {
        self.types.iter().filter(|t| t.name != BACKGROUND)
    }

    pub fn get(&self, name: &str) -> Option<&QuantityType> {
        self.types.iter().find(|t| t.name == name)
    }

    /// Exact case-sensitive symbol lookup.
    pub fn type_of_symbol(&self, symbol: &str) -> Option<&str> {
        self.types
            .iter()
            .find(|t| t.symbols.iter().any(|s| s == symbol))
            .map(|t| t.name.as_str())
    }
}

/// A phrase mined next to a unit symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedUnit {
    /// Lowercased surface phrase, e.g. "applied force".
    pub phrase: String,
    /// Index terms of the phrase.
    pub tokens: Vec<String>,
    /// The matched symbol, verbatim.
    pub symbol: String,
    pub type_name: String,
}

/// Maximum words in a mined phrase.
const MAX_PHRASE: usize = 4;

fn strip_outer(word: &str) -> &str {
    word.trim_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '"' | '\''))
}

/// Mine `text` for `phrase [in|of] SYMBOL` and `phrase (SYMBOL)` shapes.
/// The phrase must chunk as `ADJ* NOUN+` reading backwards from the
/// symbol; bare numbers or verbs in front of a unit produce nothing.
pub fn mine_text(text: &str, ontology: &Ontology, lexicon: &Lexicon) -> Vec<MinedUnit> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    for (i, raw) in words.iter().enumerate() {
        let w = strip_outer(raw);
        let symbol = if let Some(inner) = w.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
            inner
        } else {
            w
        };
        let Some(type_name) = ontology.type_of_symbol(symbol) else {
            continue;
        };
        // Optional connective between phrase and symbol.
        let mut j = i;
        if j > 0 {
            let prev = strip_outer(words[j - 1]).to_lowercase();
            if prev == "in" || prev == "of" {
                j -= 1;
            }
        }
        // Walk backwards: NOUN+ then ADJ*.
        let mut start = j;
        while start > 0 && j - (start - 1) <= MAX_PHRASE {
            let word = strip_outer(words[start - 1]).to_lowercase();
            if lexicon.tag(&word) == Tag::Noun && !word.is_empty() {
                start -= 1;
            } else {
                break;
            }
        }
        let noun_start = start;
        if noun_start == j {
            continue; // no noun head
        }
        while start > 0 && j - (start - 1) <= MAX_PHRASE {
            let word = strip_outer(words[start - 1]).to_lowercase();
            if lexicon.tag(&word) == Tag::Adj && !word.is_empty() {
                start -= 1;
            } else {
                break;
            }
        }
        let phrase_words: Vec<String> = words[start..j]
            .iter()
            .map(|w| strip_outer(w).to_lowercase())
            .collect();
        let phrase = phrase_words.join(" ");
        let tokens = tokenize(&phrase);
        if tokens.is_empty() {
            continue;
        }
        out.push(MinedUnit {
            phrase,
            tokens,
            symbol: symbol.to_string(),
            type_name: type_name.to_string(),
        });
    }
    out
}

/// Mine every text unit of every record, in corpus order.
pub fn mine_records(
    records: &[TableRecord],
    ontology: &Ontology,
    lexicon: &Lexicon,
) -> Vec<MinedUnit> {
    let mut out = Vec::new();
    for record in records {
        for (_, units) in record.fields.iter() {
            for unit in units {
                out.extend(mine_text(unit, ontology, lexicon));
            }
        }
    }
    out
}

/// Language models over the type descriptions: one pseudo-document per
/// type plus a pooled background, Jelinek-Mercer smoothed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeLm {
    names: Vec<String>,
    docs: Vec<HashMap<String, u64>>,
    lens: Vec<u64>,
    pool: HashMap<String, u64>,
    pool_len: u64,
}

const LM_LAMBDA: f64 = 0.8;

impl TypeLm {
    pub fn build(ontology: &Ontology) -> TypeLm {
        let mut names = Vec::new();
        let mut docs = Vec::new();
        let mut lens = Vec::new();
        let mut pool: HashMap<String, u64> = HashMap::new();
        let mut pool_len = 0;
        for t in ontology.types() {
            let tokens = tokenize(&t.description);
            let mut doc: HashMap<String, u64> = HashMap::new();
            for token in &tokens {
                *doc.entry(token.clone()).or_insert(0) += 1;
                *pool.entry(token.clone()).or_insert(0) += 1;
            }
            pool_len += tokens.len() as u64;
            names.push(t.name.clone());
            lens.push(tokens.len() as u64);
            docs.push(doc);
        }
        TypeLm {
            names,
            docs,
            lens,
            pool,
            pool_len,
        }
    }

    fn type_ix(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Mean log probability of the phrase tokens under one type's model,
    /// mixed with the pooled background and floored for unseen tokens.
    pub fn mean_log_prob(&self, tokens: &[String], name: &str) -> f64 {
        let Some(ix) = self.type_ix(name) else {
            return f64::MIN_POSITIVE.ln();
        };
        let floor = 0.5 / (self.pool_len as f64 + 1.0);
        let mut sum = 0.0;
        for token in tokens {
            let own = *self.docs[ix].get(token).unwrap_or(&0) as f64;
            let own_p = if self.lens[ix] > 0 {
                own / self.lens[ix] as f64
            } else {
                0.0
            };
            let pool = *self.pool.get(token).unwrap_or(&0) as f64;
            let pool_p = if self.pool_len > 0 {
                pool / self.pool_len as f64
            } else {
                0.0
            };
            let p = (LM_LAMBDA * own_p + (1.0 - LM_LAMBDA) * pool_p).max(floor);
            sum += p.ln();
        }
        sum / tokens.len().max(1) as f64
    }

    /// Types ranked by descending phrase likelihood; ties break on name.
    pub fn ranking(&self, tokens: &[String]) -> Vec<(String, f64)> {
        let mut scored: Vec<(String, f64)> = self
            .names
            .iter()
            .map(|n| (n.clone(), self.mean_log_prob(tokens, n)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored
    }

    /// Softmax posterior over all types (background included) from the
    /// summed log likelihoods.
    pub fn posterior(&self, tokens: &[String], name: &str) -> f64 {
        let logs: Vec<f64> = self
            .names
            .iter()
            .map(|n| self.mean_log_prob(tokens, n) * tokens.len().max(1) as f64)
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        match self.type_ix(name) {
            Some(ix) => (logs[ix] - m).exp() / z,
            None => 0.0,
        }
    }
}

pub const N_FEATURES: usize = 4;

/// Per-(phrase, type) features driving the classifier:
/// reciprocal rank, posterior, mined co-occurrence rate, name/symbol
/// overlap. All lie in [0, 1].
pub fn features(
    tokens: &[String],
    type_name: &str,
    lm: &TypeLm,
    mined: &[MinedUnit],
    ontology: &Ontology,
) -> [f64; N_FEATURES] {
    let ranking = lm.ranking(tokens);
    let rank = ranking
        .iter()
        .position(|(n, _)| n == type_name)
        .map(|p| p + 1)
        .unwrap_or(ranking.len().max(1));
    let recip_rank = 1.0 / rank as f64;
    let posterior = lm.posterior(tokens, type_name);

    let shares = |m: &MinedUnit| m.tokens.iter().any(|t| tokens.contains(t));
    let sharing = mined.iter().filter(|m| shares(m)).count();
    let sharing_same = mined
        .iter()
        .filter(|m| m.type_name == type_name && shares(m))
        .count();
    let cooc = if sharing > 0 {
        sharing_same as f64 / sharing as f64
    } else {
        0.0
    };

    let overlap = ontology
        .get(type_name)
        .map(|t| {
            let name_tokens = tokenize(&t.name);
            tokens.iter().any(|tok| {
                name_tokens.contains(tok) || t.symbols.iter().any(|s| s.to_lowercase() == *tok)
            })
        })
        .unwrap_or(false);

    [recip_rank, posterior, cooc, f64::from(u8::from(overlap))]
}

/// Logistic-regression weights: one per feature plus a bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classifier {
    pub weights: Vec<f64>,
    pub threshold: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean logistic loss and its gradient for examples `(x, y)`.
pub fn loss_and_grad(weights: &[f64], xs: &[[f64; N_FEATURES]], ys: &[f64]) -> (f64, Vec<f64>) {
    let n = xs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; N_FEATURES + 1];
    for (x, &y) in xs.iter().zip(ys) {
        let z = weights[N_FEATURES] + x.iter().zip(weights).map(|(xi, wi)| xi * wi).sum::<f64>();
        let p = sigmoid(z);
        // Clamped log-loss keeps the objective finite at saturation.
        let eps = 1e-12;
        loss -= y * p.max(eps).ln() + (1.0 - y) * (1.0 - p).max(eps).ln();
        let d = p - y;
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += d * xi;
        }
        grad[N_FEATURES] += d;
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    (loss, grad)
}

impl Classifier {
    /// Full-batch gradient descent from zero weights. Stops when the
    /// loss improves by less than 1e-6 or after 10 000 iterations.
    pub fn train(xs: &[[f64; N_FEATURES]], ys: &[f64]) -> Result<Classifier> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Training(
                "need a nonempty, aligned feature/label set".to_string(),
            ));
        }
        let mut weights = vec![0.0; N_FEATURES + 1];
        let lr = 2.0;
        let mut last = f64::INFINITY;
        for _ in 0..10_000 {
            let (loss, grad) = loss_and_grad(&weights, xs, ys);
            if (last - loss).abs() < 1e-6 {
                break;
            }
            last = loss;
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
        }
        Ok(Classifier {
            weights,
            threshold: DEFAULT_THRESHOLD,
        })
    }

    pub fn prob(&self, x: &[f64; N_FEATURES]) -> f64 {
        let z = self.weights[N_FEATURES]
            + x.iter()
                .zip(&self.weights)
                .map(|(xi, wi)| xi * wi)
                .sum::<f64>();
        sigmoid(z)
    }
}

/// Trained quantity intelligence: everything needed to classify phrases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantityModel {
    pub ontology: Ontology,
    pub lm: TypeLm,
    pub mined: Vec<MinedUnit>,
    pub classifier: Classifier,
}

impl QuantityModel {
    /// Build training pairs from mined units (each mined phrase is a
    /// positive for its type and a negative for every other class) and
    /// fit the classifier.
    pub fn train(ontology: Ontology, mined: Vec<MinedUnit>) -> Result<QuantityModel> {
        let lm = TypeLm::build(&ontology);
        if mined.is_empty() {
            return Err(Error::Training(
                "no unit-tagged phrases were mined from the corpus".to_string(),
            ));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for unit in &mined {
            for class in ontology.classes() {
                xs.push(features(&unit.tokens, &class.name, &lm, &mined, &ontology));
                ys.push(f64::from(u8::from(class.name == unit.type_name)));
            }
        }
        let classifier = Classifier::train(&xs, &ys)?;
        Ok(QuantityModel {
            ontology,
            lm,
            mined,
            classifier,
        })
    }

    /// Quantity types whose probability clears the threshold, sorted by
    /// descending probability. Empty means dimensionless.
    pub fn classify(&self, tokens: &[String]) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for class in self.ontology.classes() {
            let x = features(tokens, &class.name, &self.lm, &self.mined, &self.ontology);
            let p = self.classifier.prob(&x);
            if p >= self.classifier.threshold {
                out.push((class.name.clone(), p));
            }
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}
