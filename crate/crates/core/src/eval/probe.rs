//! Linear probe: a cosine classifier trained on frozen embeddings.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{dot, normalize_in_place, Matrix};
use crate::rng::{purpose, stream};
use crate::selection::{full_softmax_loss, LossConfig, PrototypeMatrix, MIN_NORM};
use crate::trainer::{OptimizerKind, OptimizerParams, ParamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub scale: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.01,
            batch_size: 64,
            scale: 16.0,
            seed: 0,
        }
    }
}

/// Top-1 accuracy on `test` of a classifier fit on `train` for `epochs` with step size `lr`.
pub fn linear_probe(train: &EmbeddingSet, test: &EmbeddingSet, epochs: usize, lr: f64) -> Result<f64> {
    linear_probe_with(
        train,
        test,
        &ProbeConfig {
            epochs,
            lr,
            ..Default::default()
        },
    )
}

pub fn linear_probe_with(train: &EmbeddingSet, test: &EmbeddingSet, cfg: &ProbeConfig) -> Result<f64> {
    if train.dim() != test.dim() {
        return Err(Error::shape(format!("train dimension {} vs test dimension {}", train.dim(), test.dim())));
    }
    if cfg.batch_size == 0 || !(cfg.lr >= 0.0) || !(cfg.scale > 0.0) {
        return Err(Error::param("probe needs batch size >= 1, lr >= 0 and scale > 0"));
    }
    let train_labels = train.class_labels()?;
    let test_labels = test.class_labels()?;
    let seen: BTreeSet<usize> = train_labels.iter().copied().collect();
    if let Some(l) = test_labels.iter().find(|l| !seen.contains(l)) {
        return Err(Error::LabelSpaceMismatch(format!("test label {l} never occurs in the training split")));
    }
    let k = (seen.last().copied().unwrap_or(0) + 1).max(2);
    let d = train.dim();

    let mut rng = stream(cfg.seed, purpose::PROBE, 0);
    let mut init = Matrix::zeros(k, d);
    for x in init.as_mut_slice() {
        *x = StandardNormal.sample(&mut rng);
    }
    let mut w = PrototypeMatrix::from_unnormalized(init)?;
    let loss_cfg = LossConfig {
        margin: 0.0,
        scale: cfg.scale,
        r1: 1.0,
        r2: 1.0,
        seed: cfg.seed,
    };
    let opt = OptimizerParams::new(OptimizerKind::Adamw, cfg.lr, 0.0);
    let mut state = ParamState::new(k * d);
    let inputs = train.to_matrix();
    let mut order: Vec<usize> = (0..train.count()).collect();
    let all: Vec<usize> = (0..d).collect();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, purpose::PROBE, 1 + epoch as u64));
        for chunk in order.chunks(cfg.batch_size) {
            let batch = inputs.select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let out = full_softmax_loss(&batch, &labels, &w, &loss_cfg)?;
            let grads = out.grad_prototypes.expect("full softmax returns prototype gradients");
            for c in 0..k {
                let column = w.column_mut(c);
                state.update_block(&opt, c * d, column, grads.row(c), &all);
                normalize_in_place(column, MIN_NORM).ok_or(Error::DegeneratePrototype(c))?;
            }
        }
    }

    let correct = (0..test.count())
        .filter(|&i| {
            let x = test.row_f64(i);
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for c in 0..k {
                let s = dot(&x, w.column(c));
                if s > best_score {
                    best = c;
                    best_score = s;
                }
            }
            best == test_labels[i]
        })
        .count();
    Ok(correct as f64 / test.count() as f64)
}
