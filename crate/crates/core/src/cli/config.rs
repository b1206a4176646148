//! `--config` documents and the resolved per-command settings.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::clustering::InitMethod;
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::eval::{AblationBase, AblationParam};
use crate::gradcheck::GradcheckConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Recall,
    Map100,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    /// Number of clusters; must be set by flag or config.
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub init: InitMethod,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k: 0,
            max_iters: 100,
            tol: 1e-6,
            init: InitMethod::Kmeanspp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub metric: Metric,
    /// Recall cutoffs.
    pub k: Vec<usize>,
    /// Truncate embeddings to this many leading dimensions first.
    pub dims: Option<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            metric: Metric::Recall,
            k: vec![1],
            dims: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub param: Option<AblationParam>,
    pub values: Vec<f64>,
    /// Number of seeds; run `i` uses `seed + i`.
    pub seeds: usize,
    pub base: AblationBase,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            param: None,
            values: Vec::new(),
            seeds: 5,
            base: AblationBase::default(),
        }
    }
}

/// Contents of a `--config` file. Every field is optional; flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub synth: SyntheticSpec,
    pub cluster: ClusterSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub ablate: AblateSection,
    pub gradcheck: GradcheckConfig,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.threads == Some(0) {
            return Err(Error::param("threads must be at least 1"));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_documents_fill_defaults() {
        let c = RunConfig::from_json_str(r#"{"seed": 3, "train": {"lr": 0.01, "loss": {"r1": 0.5}}}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.train.loss.r1, 0.5);
        assert_eq!(c.train.loss.margin, 0.3);
        assert_eq!(c.eval.k, vec![1]);
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::from_json_str(r#"{"sede": 1}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"threads": 0}"#).is_err());
        assert!(RunConfig::from_json_str("[").is_err());
        assert!(RunConfig::from_json_str(r#"{"eval": {"metric": "ndcg"}}"#).is_err());
    }
}
