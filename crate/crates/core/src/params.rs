//! Model parameters shared by the ranker, the baselines, and the CLI.

use serde::{Deserialize, Serialize};

use crate::corpus::{FieldType, FIELD_COUNT};
use crate::{Error, Result};

/// Two-stage smoothing: a Dirichlet-smoothed field estimate interpolated
/// with the collection model,
/// `p(w|f) = λ·(c + μ·p(w|C))/(|f| + μ) + (1−λ)·p(w|C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub lambda: f64,
    pub mu: f64,
}

impl SmoothingParams {
    /// Default for scoring tables as single full-text documents.
    pub const FULL_TEXT: SmoothingParams = SmoothingParams {
        lambda: 0.58,
        mu: 250.0,
    };

    /// Default for scoring individual short fields.
    pub const FIELDED: SmoothingParams = SmoothingParams {
        lambda: 0.81,
        mu: 2.0,
    };

    pub fn new(lambda: f64, mu: f64) -> Result<SmoothingParams> {
        if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
            return Err(Error::format(
                "smoothing parameters",
                format!("lambda must lie in [0,1], got {lambda}"),
            ));
        }
        if mu < 0.0 || !mu.is_finite() {
            return Err(Error::format(
                "smoothing parameters",
                format!("mu must be nonnegative, got {mu}"),
            ));
        }
        Ok(SmoothingParams { lambda, mu })
    }
}

/// Which collection model backs the smoothing: statistics of the same
/// field type, or the whole corpus regardless of field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorpusModel {
    #[default]
    PerFieldType,
    Global,
}

/// Mixture weights p(f|t) over the eight fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "std::collections::BTreeMap<String, f64>")]
#[serde(into = "std::collections::BTreeMap<String, f64>")]
pub struct FieldWeights([f64; FIELD_COUNT]);

impl FieldWeights {
    /// Starting-point weights: captions and prose context dominate, cell
    /// values contribute least.
    pub fn standard() -> FieldWeights {
        let mut w = FieldWeights([0.0; FIELD_COUNT]);
        w.set(FieldType::ArticleTitle, 0.15);
        w.set(FieldType::Abstract, 0.10);
        w.set(FieldType::Caption, 0.25);
        w.set(FieldType::ReferringSentence, 0.15);
        w.set(FieldType::Footnote, 0.05);
        w.set(FieldType::RowHeader, 0.12);
        w.set(FieldType::ColumnHeader, 0.12);
        w.set(FieldType::CellValue, 0.06);
        w
    }

    pub fn uniform() -> FieldWeights {
        FieldWeights([1.0 / FIELD_COUNT as f64; FIELD_COUNT])
    }

    pub fn from_array(weights: [f64; FIELD_COUNT]) -> Result<FieldWeights> {
        let mut fw = FieldWeights(weights);
        fw.validate()?;
        fw.renormalize();
        Ok(fw)
    }

    pub fn get(&self, field: FieldType) -> f64 {
        self.0[field.ord()]
    }

    pub fn set(&mut self, field: FieldType, weight: f64) {
        self.0[field.ord()] = weight;
    }

    fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::format(
                "field weights",
                "weights must be finite and nonnegative",
            ));
        }
        if self.0.iter().sum::<f64>() <= 0.0 {
            return Err(Error::format(
                "field weights",
                "weights must not all be zero",
            ));
        }
        Ok(())
    }

    /// Scale so the weights sum to one.
    pub fn renormalize(&mut self) {
        let sum: f64 = self.0.iter().sum();
        if sum > 0.0 {
            for w in &mut self.0 {
                *w /= sum;
            }
        }
    }
}

impl TryFrom<std::collections::BTreeMap<String, f64>> for FieldWeights {
    type Error = Error;

    fn try_from(map: std::collections::BTreeMap<String, f64>) -> Result<FieldWeights> {
        let mut fw = FieldWeights([0.0; FIELD_COUNT]);
        for (name, weight) in map {
            let field = FieldType::from_name(&name)
                .ok_or_else(|| Error::format("field weights", format!("unknown field `{name}`")))?;
            fw.set(field, weight);
        }
        fw.validate()?;
        fw.renormalize();
        Ok(fw)
    }
}

impl From<FieldWeights> for std::collections::BTreeMap<String, f64> {
    fn from(fw: FieldWeights) -> Self {
        FieldType::ALL
            .iter()
            .map(|&f| (f.name().to_string(), fw.get(f)))
            .collect()
    }
}

impl Default for FieldWeights {
    fn default() -> Self {
        FieldWeights::standard()
    }
}

/// Sequential-dependence weights over the unigram / exact-order /
/// unordered-window evidence of a multi-word concept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdmWeights {
    pub term: f64,
    pub ordered: f64,
    pub unordered: f64,
}

impl Default for SdmWeights {
    fn default() -> Self {
        SdmWeights {
            term: 0.85,
            ordered: 0.10,
            unordered: 0.05,
        }
    }
}

/// Everything the ranker needs to score a query against the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub field_weights: FieldWeights,
    /// Mass of the concept component in the full query.
    pub alpha: f64,
    /// Mass of the quantity component in the full query.
    pub beta: f64,
    pub sdm: SdmWeights,
    /// Smoothing for field-restricted evidence.
    pub fielded: SmoothingParams,
    /// Smoothing for whole-table (union) evidence.
    pub full_text: SmoothingParams,
    pub corpus_model: CorpusModel,
    /// Multiply scores by the numeric-content prior.
    pub prior_enabled: bool,
    /// Results returned per query.
    pub k: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            field_weights: FieldWeights::standard(),
            alpha: 0.25,
            beta: 0.15,
            sdm: SdmWeights::default(),
            fielded: SmoothingParams::FIELDED,
            full_text: SmoothingParams::FULL_TEXT,
            corpus_model: CorpusModel::PerFieldType,
            prior_enabled: true,
            k: 100,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta > 1.0 {
            return Err(Error::format(
                "model parameters",
                format!(
                    "component weights must satisfy alpha, beta >= 0 and alpha + beta <= 1 \
                     (got alpha={}, beta={})",
                    self.alpha, self.beta
                ),
            ));
        }
        SmoothingParams::new(self.fielded.lambda, self.fielded.mu)?;
        SmoothingParams::new(self.full_text.lambda, self.full_text.mu)?;
        Ok(())
    }
}
