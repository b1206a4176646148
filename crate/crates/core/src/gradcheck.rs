//! Central finite-difference check of the selection loss gradients on
//! random small instances.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, normalize_in_place, Matrix};
use crate::rng::{purpose, stream, StreamRng};
use crate::selection::{backward, forward, plan_step, LossConfig, PrototypeMatrix, SelectionPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    /// Finite-difference step.
    pub step: f64,
    pub max_batch: usize,
    pub max_dim: usize,
    pub max_classes: usize,
    /// Logit scales are drawn uniformly from `[1, max_scale]`.
    pub max_scale: f64,
    /// Negates the analytic gradient, to confirm the checker can fail.
    pub inject_sign_flip: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            tol: 1e-5,
            seed: 0,
            step: 1e-6,
            max_batch: 4,
            max_dim: 16,
            max_classes: 32,
            max_scale: 8.0,
            inject_sign_flip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub batch: usize,
    pub dim: usize,
    pub classes: usize,
    pub subset: usize,
    pub active_features: usize,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tol: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub trials: Vec<TrialReport>,
}

/// `max|a - n| / max(max|a|, max|n|)`, or 0 when both are identically zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// One random instance of the loss inputs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub batch: Matrix,
    pub labels: Vec<usize>,
    pub prototypes: PrototypeMatrix,
    pub plan: SelectionPlan,
    pub loss: LossConfig,
}

fn gaussian(rng: &mut StreamRng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for x in m.as_mut_slice() {
        *x = StandardNormal.sample(rng);
    }
    m
}

/// Masked cosine of every positive pair, used to stay clear of the margin
/// branch switch and of `θ = 0`.
fn positive_cosines(inst: &Instance) -> Vec<f64> {
    let active = inst.plan.active_features();
    let gather = |v: &[f64]| -> Vec<f64> {
        let mut u: Vec<f64> = active.iter().map(|&a| v[a]).collect();
        normalize_in_place(&mut u, 0.0);
        u
    };
    (0..inst.batch.rows())
        .map(|i| dot(&gather(inst.batch.row(i)), &gather(inst.prototypes.column(inst.labels[i]))))
        .collect()
}

/// Draws instance `trial` under `cfg.seed`, redrawing until it sits away
/// from the non-smooth points of the margin.
pub fn random_instance(cfg: &GradcheckConfig, trial: usize) -> Result<Instance> {
    let mut rng = stream(cfg.seed, purpose::GRADCHECK, trial as u64);
    loop {
        let b = rng.random_range(1..=cfg.max_batch.max(1));
        let d = rng.random_range(2..=cfg.max_dim.max(2));
        let k = rng.random_range(2..=cfg.max_classes.max(2));
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
        let loss = LossConfig {
            margin: rng.random_range(0.0..0.5),
            scale: rng.random_range(1.0..=cfg.max_scale.max(1.0)),
            r1: rng.random_range(0.05..=1.0),
            r2: rng.random_range(0.3..=1.0),
            seed: rng.random(),
        };
        if (d as f64 * loss.r2).round() < 1.0 {
            continue;
        }
        let plan = plan_step(&labels, k, d, &loss, trial as u64)?;
        let batch = gaussian(&mut rng, b, d);
        let prototypes = match PrototypeMatrix::from_unnormalized(gaussian(&mut rng, k, d)) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let inst = Instance {
            batch,
            labels,
            prototypes,
            plan,
            loss,
        };
        let kink = (std::f64::consts::PI - inst.loss.margin).cos();
        let smooth = positive_cosines(&inst)
            .iter()
            .all(|&c| c.is_finite() && (c - kink).abs() > 1e-3 && c < 1.0 - 1e-6);
        if smooth {
            return Ok(inst);
        }
    }
}

/// Analytic and central-difference gradients of one instance, flattened as
/// embeddings first, then the selected prototype rows.
pub fn gradients(inst: &Instance, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let out = backward(&inst.batch, &inst.labels, &inst.prototypes, &inst.plan, &inst.loss)?;
    let mut analytic = out.grad_embeddings.expect("backward returns gradients").into_vec();
    analytic.extend(out.grad_prototypes.expect("backward returns gradients").into_vec());

    let loss_at = |batch: &Matrix, w: &PrototypeMatrix| -> Result<f64> {
        Ok(forward(batch, &inst.labels, w, &inst.plan, &inst.loss)?.loss)
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut batch = inst.batch.clone();
    for idx in 0..batch.as_slice().len() {
        let orig = batch.as_slice()[idx];
        batch.as_mut_slice()[idx] = orig + h;
        let up = loss_at(&batch, &inst.prototypes)?;
        batch.as_mut_slice()[idx] = orig - h;
        let down = loss_at(&batch, &inst.prototypes)?;
        batch.as_mut_slice()[idx] = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    let mut w = inst.prototypes.clone();
    for &c in &inst.plan.class_subset {
        for a in 0..w.dim() {
            let orig = w.column(c)[a];
            w.column_mut(c)[a] = orig + h;
            let up = loss_at(&inst.batch, &w)?;
            w.column_mut(c)[a] = orig - h;
            let down = loss_at(&inst.batch, &w)?;
            w.column_mut(c)[a] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    Ok((analytic, numeric))
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.trials == 0 {
        return Err(Error::param("gradcheck needs at least one trial"));
    }
    if !(cfg.tol > 0.0) || !(cfg.step > 0.0) {
        return Err(Error::param("tolerance and step must be positive"));
    }
    let mut trials = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let inst = random_instance(cfg, t)?;
        let (mut analytic, numeric) = gradients(&inst, cfg.step)?;
        if cfg.inject_sign_flip {
            analytic.iter_mut().for_each(|g| *g = -*g);
        }
        trials.push(TrialReport {
            trial: t,
            batch: inst.batch.rows(),
            dim: inst.batch.cols(),
            classes: inst.prototypes.classes(),
            subset: inst.plan.class_subset.len(),
            active_features: inst.plan.active_features().len(),
            rel_error: relative_error(&analytic, &numeric),
        });
    }
    let max_rel_error = trials.iter().map(|t| t.rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        tol: cfg.tol,
        max_rel_error,
        passed: max_rel_error < cfg.tol,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, -2.0], &[1.0, -2.0]), 0.0);
        assert_eq!(relative_error(&[1.0], &[-1.0]), 2.0);
    }

    #[test]
    fn passes_and_sign_flip_fails() {
        let cfg = GradcheckConfig {
            trials: 10,
            ..Default::default()
        };
        let ok = run_gradcheck(&cfg).unwrap();
        assert!(ok.passed, "max rel error {}", ok.max_rel_error);
        let bad = run_gradcheck(&GradcheckConfig {
            inject_sign_flip: true,
            ..cfg
        })
        .unwrap();
        assert!(!bad.passed);
        assert!(run_gradcheck(&GradcheckConfig {
            trials: 0,
            ..Default::default()
        })
        .is_err());
    }
}
