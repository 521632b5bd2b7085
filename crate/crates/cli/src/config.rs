//! Layered configuration: compiled-in defaults, then an optional file,
//! then command-line flags. Unknown keys are rejected.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tablefind_core::query::ConceptMode;
use tablefind_core::{CorpusModel, FieldWeights, ModelParams, SdmWeights, SmoothingParams};

/// The configuration shipped inside the binary.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Ranker {
    Full,
    Bm25,
    Bm25f,
    LmBow,
    LmSdm,
    Tablerank,
}

impl Ranker {
    pub fn name(self) -> &'static str {
        match self {
            Ranker::Full => "full",
            Ranker::Bm25 => "bm25",
            Ranker::Bm25f => "bm25f",
            Ranker::LmBow => "lm-bow",
            Ranker::LmSdm => "lm-sdm",
            Ranker::Tablerank => "tablerank",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub search: SearchCfg,
    #[serde(default)]
    pub model: ModelCfg,
    #[serde(default)]
    pub quantity: QuantityCfg,
    #[serde(default)]
    pub eval: EvalCfg,
    #[serde(default)]
    pub sweep: SweepCfg,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub gazetteer: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchCfg {
    pub ranker: Ranker,
    pub concepts: ConceptMode,
    pub k: usize,
}

impl Default for SearchCfg {
    fn default() -> Self {
        SearchCfg {
            ranker: Ranker::Full,
            concepts: ConceptMode::Entity,
            k: 100,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelCfg {
    pub alpha: f64,
    pub beta: f64,
    pub prior: bool,
    pub corpus_model: CorpusModel,
    pub fielded: SmoothingCfg,
    pub full_text: SmoothingCfg,
    pub sdm: SdmCfg,
    pub field_weights: Option<FieldWeights>,
}

impl Default for ModelCfg {
    fn default() -> Self {
        ModelCfg {
            alpha: 0.25,
            beta: 0.15,
            prior: true,
            corpus_model: CorpusModel::PerFieldType,
            fielded: SmoothingCfg {
                lambda: 0.81,
                mu: 2.0,
            },
            full_text: SmoothingCfg {
                lambda: 0.58,
                mu: 250.0,
            },
            sdm: SdmCfg::default(),
            field_weights: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingCfg {
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdmCfg {
    pub term: f64,
    pub ordered: f64,
    pub unordered: f64,
}

impl Default for SdmCfg {
    fn default() -> Self {
        SdmCfg {
            term: 0.85,
            ordered: 0.10,
            unordered: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantityCfg {
    pub threshold: f64,
}

impl Default for QuantityCfg {
    fn default() -> Self {
        QuantityCfg { threshold: 0.65 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCfg {
    pub ap_cutoff: usize,
    pub ndcg_cutoff: usize,
    pub err_cutoff: usize,
}

impl Default for EvalCfg {
    fn default() -> Self {
        EvalCfg {
            ap_cutoff: 100,
            ndcg_cutoff: 20,
            err_cutoff: 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepCfg {
    pub folds: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for SweepCfg {
    fn default() -> Self {
        SweepCfg {
            folds: 3,
            alphas: vec![0.0, 0.15, 0.25, 0.40],
            betas: vec![0.0, 0.10, 0.15, 0.25],
        }
    }
}

impl Config {
    /// Load a config file, or the compiled-in defaults when `path` is None.
    pub fn load(path: Option<&PathBuf>) -> Result<Config> {
        let text = match path {
            Some(p) => std::borrow::Cow::Owned(
                std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?,
            ),
            None => std::borrow::Cow::Borrowed(DEFAULT_CONFIG),
        };
        let cfg: Config = toml::from_str(&text)
            .map_err(anyhow::Error::from)
            .with_context(|| match path {
                Some(p) => format!("parsing config {}", p.display()),
                None => "parsing the compiled-in default config".to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.model_params()?;
        if !(0.0..=1.0).contains(&self.quantity.threshold) {
            bail!("quantity.threshold must lie in [0,1]");
        }
        if self.sweep.folds == 0 {
            bail!("sweep.folds must be at least 1");
        }
        Ok(())
    }

    /// Assemble the ranking parameters this config describes.
    pub fn model_params(&self) -> Result<ModelParams> {
        let params = ModelParams {
            field_weights: self.model.field_weights.clone().unwrap_or_default(),
            alpha: self.model.alpha,
            beta: self.model.beta,
            sdm: SdmWeights {
                term: self.model.sdm.term,
                ordered: self.model.sdm.ordered,
                unordered: self.model.sdm.unordered,
            },
            fielded: SmoothingParams::new(self.model.fielded.lambda, self.model.fielded.mu)?,
            full_text: SmoothingParams::new(self.model.full_text.lambda, self.model.full_text.mu)?,
            corpus_model: self.model.corpus_model,
            prior_enabled: self.model.prior,
            k: self.search.k,
        };
        params.validate()?;
        Ok(params)
    }
}
