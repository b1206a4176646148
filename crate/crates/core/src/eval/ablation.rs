//! Grid ablations over the selection ratios and the cluster count on
//! synthetic data, scored by Recall@K on a held-out split.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_fit, KMeansConfig};
use crate::data::{synth_split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{recall_at_k, truncate_dims};
use crate::trainer::{train, FeatureSelection, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationParam {
    R1,
    R2,
    R3,
    K,
}

impl AblationParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::R1 => "r1",
            Self::R2 => "r2",
            Self::R3 => "r3",
            Self::K => "k",
        }
    }

    pub fn validate_value(self, v: f64) -> Result<()> {
        let ok = match self {
            Self::R1 | Self::R2 => v > 0.0 && v <= 1.0,
            Self::R3 => (0.0..1.0).contains(&v),
            Self::K => v >= 2.0 && v.fract() == 0.0 && v <= u32::MAX as f64,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("{v} is not a valid {} value", self.name())))
        }
    }
}

impl FromStr for AblationParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r1" => Ok(Self::R1),
            "r2" => Ok(Self::R2),
            "r3" => Ok(Self::R3),
            "k" => Ok(Self::K),
            _ => Err(Error::param(format!("unknown ablation parameter {s:?}"))),
        }
    }
}

impl fmt::Display for AblationParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a comma-separated list of finite numbers such as `0.05,0.1,1`.
pub fn parse_grid_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            let p = part.trim();
            match p.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::param(format!("grid value {p:?} is not a finite number"))),
            }
        })
        .collect()
}

/// Everything an ablation run holds fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationBase {
    /// Data generator; its seed is replaced by each run seed.
    pub data: SyntheticSpec,
    pub holdout_per_class: usize,
    /// Training config; its seed is replaced by each run seed.
    pub train: TrainConfig,
    /// Cluster the training vectors into this many pseudo classes before
    /// training instead of using the generated labels. Overridden by a `k` grid.
    pub cluster_k: Option<usize>,
    pub kmeans_max_iters: usize,
    pub recall_k: usize,
    /// Also report Recall@K after truncating embeddings to this many dimensions.
    pub report_dims: Option<usize>,
}

impl Default for AblationBase {
    fn default() -> Self {
        Self {
            data: SyntheticSpec {
                true_classes: 20,
                per_class: 50,
                dim: 64,
                intra_noise: 0.1,
                conflict_ratio: 0.0,
                seed: 0,
            },
            holdout_per_class: 10,
            train: TrainConfig::default(),
            cluster_k: None,
            kmeans_max_iters: 100,
            recall_k: 1,
            report_dims: None,
        }
    }
}

/// One (value, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub value: f64,
    pub seed: u64,
    pub recall: f64,
    pub recall_truncated: Option<f64>,
}

/// Aggregate over seeds for one grid value. Standard deviations use the
/// `n - 1` denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: f64,
    pub seeds: usize,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub truncated_mean: Option<f64>,
    pub truncated_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub param: AblationParam,
    pub recall_k: usize,
    pub report_dims: Option<usize>,
    pub rows: Vec<AblationRow>,
    pub runs: Vec<AblationRun>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

impl AblationTable {
    pub fn row(&self, value: f64) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.value == value)
    }

    /// Summary rows followed by a blank line and the per-seed raw values.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        let _ = writeln!(out, "{}\tseeds\trecall_mean\trecall_std\ttruncated_mean\ttruncated_std", self.param);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
                r.value,
                r.seeds,
                r.recall_mean,
                r.recall_std,
                opt(r.truncated_mean),
                opt(r.truncated_std)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{}\tseed\trecall\trecall_truncated", self.param);
        for r in &self.runs {
            let _ = writeln!(out, "{}\t{}\t{:.6}\t{}", r.value, r.seed, r.recall, opt(r.recall_truncated));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Runs every (value, seed) cell: synthesize, optionally cluster, train,
/// encode the held-out split and score it. Cells run concurrently; each owns
/// its seeded state, so the table does not depend on scheduling.
pub fn run_ablation(param: AblationParam, values: &[f64], base: &AblationBase, seeds: &[u64]) -> Result<AblationTable> {
    if values.len() < 2 {
        return Err(Error::param("an ablation needs at least 2 grid values"));
    }
    if seeds.len() < 3 {
        return Err(Error::param("an ablation needs at least 3 seeds"));
    }
    for (i, &v) in values.iter().enumerate() {
        param.validate_value(v)?;
        if values[..i].contains(&v) {
            return Err(Error::param(format!("grid value {v} appears twice")));
        }
    }
    if base.recall_k == 0 {
        return Err(Error::param("recall cutoff K must be at least 1"));
    }

    let cells: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let runs = cells
        .par_iter()
        .map(|&(value, seed)| run_cell(param, value, base, seed))
        .collect::<Result<Vec<_>>>()?;

    let rows = values
        .iter()
        .map(|&value| {
            let mine: Vec<&AblationRun> = runs.iter().filter(|r| r.value == value).collect();
            let recalls: Vec<f64> = mine.iter().map(|r| r.recall).collect();
            let (recall_mean, recall_std) = mean_std(&recalls);
            let truncated: Option<Vec<f64>> = mine.iter().map(|r| r.recall_truncated).collect();
            let t = truncated.map(|t| mean_std(&t));
            AblationRow {
                value,
                seeds: mine.len(),
                recall_mean,
                recall_std,
                truncated_mean: t.map(|t| t.0),
                truncated_std: t.map(|t| t.1),
            }
        })
        .collect();

    Ok(AblationTable {
        param,
        recall_k: base.recall_k,
        report_dims: base.report_dims,
        rows,
        runs,
    })
}

fn run_cell(param: AblationParam, value: f64, base: &AblationBase, seed: u64) -> Result<AblationRun> {
    let spec = SyntheticSpec {
        seed,
        ..base.data.clone()
    };
    let split = synth_split(&spec, base.holdout_per_class)?;

    let mut cfg = TrainConfig {
        seed,
        ..base.train.clone()
    };
    let mut cluster_k = base.cluster_k;
    match param {
        AblationParam::R1 => cfg.loss.r1 = value,
        AblationParam::R2 => {
            cfg.loss.r2 = value;
            cfg.features = FeatureSelection::Mask;
        }
        AblationParam::R3 => cfg.features = FeatureSelection::Dropout { r3: value },
        AblationParam::K => cluster_k = Some(value as usize),
    }

    let train_set = match cluster_k {
        Some(k) => {
            let km = KMeansConfig {
                max_iters: base.kmeans_max_iters,
                ..KMeansConfig::new(k, seed)
            };
            let clusters = kmeans_fit(&split.train, &km)?;
            let labels = clusters.assignments.iter().map(|&a| a as i64).collect();
            split.train.with_labels(Some(labels))?
        }
        None => split.train,
    };

    let outcome = train(&train_set, &cfg)?;
    let encoded = outcome.encoder.encode_set(&split.holdout)?;
    let recall = recall_at_k(&encoded, base.recall_k)?;
    let recall_truncated = match base.report_dims {
        Some(d) => Some(recall_at_k(&truncate_dims(&encoded, d)?, base.recall_k)?),
        None => None,
    };
    Ok(AblationRun {
        value,
        seed,
        recall,
        recall_truncated,
    })
}
