use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterResult;
use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::rng::{purpose, stream};
use crate::selection::{backward, dropout_loss, plan_step, LossConfig, PrototypeMatrix, SelectionPlan, MIN_NORM};
use crate::trainer::{EncoderInit, LinearEncoder, OptimizerKind, OptimizerParams, ParamState};

/// How the per-step feature regularizer is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FeatureSelection {
    /// Batch-shared random feature mask with ratio `loss.r2`.
    #[default]
    Mask,
    /// Per-sample Dropout with drop ratio `r3`; every feature enters the loss.
    Dropout { r3: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PrototypeInit {
    /// Normalized per-class means of the initially encoded data.
    #[default]
    Centroids,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub loss: LossConfig,
    pub features: FeatureSelection,
    /// Output dimension; 0 keeps the input dimension.
    pub output_dim: usize,
    pub encoder_init: EncoderInit,
    pub prototype_init: PrototypeInit,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            optimizer: OptimizerKind::Adamw,
            lr: 0.001,
            weight_decay: 0.05,
            loss: LossConfig::default(),
            features: FeatureSelection::Mask,
            output_dim: 0,
            encoder_init: EncoderInit::Random,
            prototype_init: PrototypeInit::Centroids,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::param(format!("lr {} must be finite and >= 0", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::param(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        if let FeatureSelection::Dropout { r3 } = self.features {
            if !(0.0..1.0).contains(&r3) {
                return Err(Error::param(format!("dropout ratio {r3} must lie in [0, 1)")));
            }
        }
        self.loss.validate()
    }

    pub fn optimizer_params(&self) -> OptimizerParams {
        OptimizerParams::new(self.optimizer, self.lr, self.weight_decay)
    }

    /// Loss settings with the run seed, so one seed drives every stream.
    pub fn seeded_loss(&self) -> LossConfig {
        LossConfig {
            seed: self.seed,
            ..self.loss.clone()
        }
    }
}

/// Unit-normalized centroids as class prototypes.
pub fn init_prototypes(clusters: &ClusterResult) -> Result<PrototypeMatrix> {
    PrototypeMatrix::from_unnormalized(clusters.centroids.clone())
}

/// Encoder, prototypes and optimizer state of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub encoder: LinearEncoder,
    pub prototypes: PrototypeMatrix,
    pub cfg: TrainConfig,
    encoder_state: ParamState,
    prototype_state: ParamState,
    step: u64,
}

impl Trainer {
    pub fn new(encoder: LinearEncoder, prototypes: PrototypeMatrix, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if encoder.output_dim() != prototypes.dim() {
            return Err(Error::shape(format!(
                "encoder emits {} dimensions, prototypes have {}",
                encoder.output_dim(),
                prototypes.dim()
            )));
        }
        let encoder_state = ParamState::new(encoder.weights.as_slice().len());
        let prototype_state = ParamState::new(prototypes.classes() * prototypes.dim());
        Ok(Self {
            encoder,
            prototypes,
            cfg,
            encoder_state,
            prototype_state,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Selection for the next step: fresh class subset and, in mask mode, a fresh feature mask.
    pub fn next_plan(&self, labels: &[usize]) -> Result<SelectionPlan> {
        let loss = self.cfg.seeded_loss();
        let mut plan = plan_step(
            labels,
            self.prototypes.classes(),
            self.prototypes.dim(),
            &LossConfig {
                r2: if matches!(self.cfg.features, FeatureSelection::Mask) { loss.r2 } else { 1.0 },
                ..loss
            },
            self.step,
        )?;
        plan.step = self.step;
        Ok(plan)
    }

    /// One forward/backward pass and one optimizer update. Only the
    /// prototype columns in the plan's class subset, and only their masked
    /// coordinates, are touched. Returns the step loss.
    pub fn train_step(&mut self, inputs: &Matrix, labels: &[usize], plan: &SelectionPlan) -> Result<f64> {
        let cache = self.encoder.encode_cached(inputs)?;
        let loss_cfg = self.cfg.seeded_loss();
        let (out, mask) = match self.cfg.features {
            FeatureSelection::Mask => (
                backward(&cache.outputs, labels, &self.prototypes, plan, &loss_cfg)?,
                Some(plan.feature_mask.as_slice()),
            ),
            FeatureSelection::Dropout { r3 } => (
                dropout_loss(
                    &cache.outputs,
                    labels,
                    &self.prototypes,
                    plan.class_subset.clone(),
                    &loss_cfg,
                    r3,
                    plan.step,
                )?,
                None,
            ),
        };
        let grad_e = out.grad_embeddings.as_ref().expect("backward fills gradients");
        let grad_w = out.grad_prototypes.as_ref().expect("backward fills gradients");

        let opt = self.cfg.optimizer_params();
        let grad_enc = self.encoder.backward(inputs, &cache, grad_e, mask);
        self.encoder_state
            .update_all(&opt, self.encoder.weights.as_mut_slice(), grad_enc.as_slice());

        let d = self.prototypes.dim();
        let active: Vec<usize> = match self.cfg.features {
            FeatureSelection::Mask => plan.active_features(),
            FeatureSelection::Dropout { .. } => (0..d).collect(),
        };
        for (slot, &class) in out.classes.iter().enumerate() {
            let before = self.prototypes.column(class).to_vec();
            let column = self.prototypes.column_mut(class);
            self.prototype_state
                .update_block(&opt, class * d, column, grad_w.row(slot), &active);
            if column != before.as_slice() {
                renormalize_selected(column, &active);
            }
        }

        self.step += 1;
        Ok(out.loss)
    }
}

/// Rescales the `active` coordinates so the whole column has unit norm while
/// the other coordinates keep their exact values.
fn renormalize_selected(column: &mut [f64], active: &[usize]) {
    let mut inactive_sq = 0.0;
    let mut is_active = vec![false; column.len()];
    for &a in active {
        is_active[a] = true;
    }
    for (j, &v) in column.iter().enumerate() {
        if !is_active[j] {
            inactive_sq += v * v;
        }
    }
    let target = (1.0 - inactive_sq).max(0.0).sqrt();
    let current = norm(&active.iter().map(|&a| column[a]).collect::<Vec<_>>());
    if current >= MIN_NORM && target > 0.0 {
        let s = target / current;
        for &a in active {
            column[a] *= s;
        }
    } else {
        crate::linalg::normalize_in_place(column, MIN_NORM);
    }
}

/// What [`train`] returns.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: LinearEncoder,
    pub prototypes: PrototypeMatrix,
    /// Loss of every step in order.
    pub losses: Vec<f64>,
}

/// Builds the initial encoder and prototypes for `data` under `cfg`.
pub fn initial_trainer(data: &EmbeddingSet, cfg: &TrainConfig) -> Result<Trainer> {
    cfg.validate()?;
    let labels = data.class_labels()?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut distinct = labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::param("training labels must cover at least 2 classes"));
    }

    let d_out = if cfg.output_dim == 0 { data.dim() } else { cfg.output_dim };
    let encoder = LinearEncoder::init(data.dim(), d_out, cfg.encoder_init, cfg.seed)?;
    let prototypes = match cfg.prototype_init {
        PrototypeInit::Random => PrototypeMatrix::random(k, d_out, cfg.seed)?,
        PrototypeInit::Centroids => {
            let encoded = encoder.encode(&data.to_matrix())?;
            let mut clusters = ClusterResult::from_labels(&encoded, &labels, k)?;
            // labels may have gaps; classes without members start from a random direction
            let fallback = PrototypeMatrix::random(k, d_out, cfg.seed)?;
            for c in 0..k {
                if norm(clusters.centroids.row(c)) < MIN_NORM {
                    clusters.centroids.row_mut(c).copy_from_slice(fallback.column(c));
                }
            }
            init_prototypes(&clusters)?
        }
    };
    Trainer::new(encoder, prototypes, cfg.clone())
}

/// Runs `cfg.epochs` epochs of shuffled mini-batches over `data` (inputs with
/// pseudo labels). Epoch `e` is ordered by a permutation drawn from `(seed, e)`.
pub fn train(data: &EmbeddingSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = initial_trainer(data, cfg)?;
    let labels = data.class_labels()?;
    let inputs = data.to_matrix();
    let n = data.count();
    let mut losses = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, purpose::SHUFFLE, epoch as u64));
        for chunk in order.chunks(cfg.batch_size) {
            let batch = inputs.select_rows(chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let plan = trainer.next_plan(&batch_labels)?;
            losses.push(trainer.train_step(&batch, &batch_labels, &plan)?);
        }
    }
    Ok(TrainOutcome {
        encoder: trainer.encoder,
        prototypes: trainer.prototypes,
        losses,
    })
}
