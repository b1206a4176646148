//! Additive-angular-margin softmax over a class subset and a feature mask.
//!
//! For a batch row `e_i` with label `y_i`, a class subset `S` and a mask `Γ`:
//!
//! ```text
//! ê_i = Γ⊙e_i / ‖Γ⊙e_i‖          ŵ_j = Γ⊙w_j / ‖Γ⊙w_j‖
//! c_ij = ŵ_jᵀ ê_i,               z_ij = s·c_ij                 (j ≠ y_i)
//! z_iy = s·cos(θ + m)  if θ + m ≤ π, else s·(cos θ − m·sin m)
//! L = (1/b) Σ_i [ logsumexp_j z_ij − z_iy ]
//! ```
//!
//! Gradients flow back through the margin and both sub-vector
//! normalizations. Coordinates outside `Γ` and classes outside `S` receive
//! exact zeros.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::selection::{LossConfig, PrototypeMatrix, SelectionPlan, MIN_NORM};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean over the batch.
    pub loss: f64,
    /// `b × |S|`, column order follows `classes`.
    pub probs: Matrix,
    /// The class subset the columns of `probs` and rows of `grad_prototypes` refer to.
    pub classes: Vec<usize>,
    /// `b × d`, present after [`backward`].
    pub grad_embeddings: Option<Matrix>,
    /// `|S| × d`, present after [`backward`].
    pub grad_prototypes: Option<Matrix>,
}

impl LossOutput {
    pub fn per_class_argmax(&self) -> Vec<usize> {
        self.probs
            .iter_rows()
            .map(|r| {
                let mut best = 0;
                for (j, &p) in r.iter().enumerate() {
                    if p > r[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect()
    }
}

/// Loss and probabilities only.
pub fn forward(
    batch: &Matrix,
    labels: &[usize],
    w: &PrototypeMatrix,
    plan: &SelectionPlan,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    evaluate(batch, labels, w, plan, cfg.margin, cfg.scale, false)
}

/// Loss, probabilities and analytic gradients.
pub fn backward(
    batch: &Matrix,
    labels: &[usize],
    w: &PrototypeMatrix,
    plan: &SelectionPlan,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    evaluate(batch, labels, w, plan, cfg.margin, cfg.scale, true)
}

/// Plain softmax over every class and every feature (with gradients).
/// The margin is taken from `cfg`; pass `margin = 0` for the unmodified loss.
pub fn full_softmax_loss(batch: &Matrix, labels: &[usize], w: &PrototypeMatrix, cfg: &LossConfig) -> Result<LossOutput> {
    let plan = SelectionPlan::full(w.classes(), w.dim());
    evaluate(batch, labels, w, &plan, cfg.margin, cfg.scale, true)
}

/// Positive-class logit (before scaling) and its derivative in `cos θ`.
pub(crate) fn margin_logit(cos: f64, margin: f64) -> (f64, f64) {
    if margin == 0.0 {
        return (cos, 1.0);
    }
    let c = cos.clamp(-1.0, 1.0);
    let threshold = (std::f64::consts::PI - margin).cos();
    if c > threshold {
        let theta = c.acos();
        let sin_t = theta.sin();
        let value = (theta + margin).cos();
        // d/dc cos(acos c + m) = sin(θ + m) / sin θ; the direction it multiplies
        // vanishes with sin θ, so the degenerate point contributes nothing.
        let deriv = if sin_t > 0.0 { (theta + margin).sin() / sin_t } else { 0.0 };
        (value, deriv)
    } else {
        (c - margin * margin.sin(), 1.0)
    }
}

struct SampleTerms {
    loss: f64,
    probs: Vec<f64>,
    /// dL/dc_ij for every slot j, already divided by the batch size.
    grad_cos: Vec<f64>,
}

fn validate(batch: &Matrix, labels: &[usize], w: &PrototypeMatrix, plan: &SelectionPlan) -> Result<Vec<usize>> {
    let d = w.dim();
    if batch.cols() != d {
        return Err(Error::shape(format!("batch dimension {} vs prototype dimension {d}", batch.cols())));
    }
    if batch.rows() == 0 {
        return Err(Error::EmptySet);
    }
    if labels.len() != batch.rows() {
        return Err(Error::shape(format!("{} labels for {} rows", labels.len(), batch.rows())));
    }
    if plan.feature_mask.len() != d {
        return Err(Error::shape(format!("mask of length {} for dimension {d}", plan.feature_mask.len())));
    }
    if plan.class_subset.is_empty() || plan.class_subset.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::param("class subset must be non-empty, sorted and distinct"));
    }
    if let Some(&c) = plan.class_subset.last().filter(|&&c| c >= w.classes()) {
        return Err(Error::param(format!("class {c} outside the {} prototypes", w.classes())));
    }
    labels
        .iter()
        .enumerate()
        .map(|(row, &label)| plan.slot(label).ok_or(Error::LabelNotSelected { row, label }))
        .collect()
}

/// Gathers `v[active]` and normalizes it.
fn masked_unit(v: &[f64], active: &[usize]) -> Option<(Vec<f64>, f64)> {
    let mut u: Vec<f64> = active.iter().map(|&a| v[a]).collect();
    let n = crate::linalg::norm(&u);
    if !(n >= MIN_NORM) {
        return None;
    }
    for x in &mut u {
        *x /= n;
    }
    Some((u, n))
}

/// Back-propagates `g = dL/dû` through `û = u/‖u‖` and scatters into `d` coordinates.
fn normalize_backward(g: &[f64], unit: &[f64], norm: f64, active: &[usize], out: &mut [f64]) {
    let radial = dot(g, unit);
    for ((&a, &gi), &ui) in active.iter().zip(g).zip(unit) {
        out[a] = (gi - radial * ui) / norm;
    }
}

fn evaluate(
    batch: &Matrix,
    labels: &[usize],
    w: &PrototypeMatrix,
    plan: &SelectionPlan,
    margin: f64,
    scale: f64,
    with_grad: bool,
) -> Result<LossOutput> {
    if !(margin >= 0.0 && margin < std::f64::consts::PI) || !(scale > 0.0) {
        return Err(Error::param(format!("margin {margin} / scale {scale} out of range")));
    }
    let slots = validate(batch, labels, w, plan)?;
    let active = plan.active_features();
    if active.is_empty() {
        return Err(Error::param("feature mask selects nothing"));
    }
    let b = batch.rows();
    let d = w.dim();
    let classes = &plan.class_subset;

    let protos: Vec<(Vec<f64>, f64)> = classes
        .iter()
        .map(|&c| masked_unit(w.column(c), &active).ok_or(Error::DegeneratePrototype(c)))
        .collect::<Result<_>>()?;
    let embeds: Vec<(Vec<f64>, f64)> = (0..b)
        .map(|i| masked_unit(batch.row(i), &active).ok_or(Error::DegenerateVector(i)))
        .collect::<Result<_>>()?;

    let inv_b = 1.0 / b as f64;
    let terms: Vec<SampleTerms> = (0..b)
        .into_par_iter()
        .map(|i| {
            let e = &embeds[i].0;
            let pos = slots[i];
            let mut logits: Vec<f64> = protos.iter().map(|(p, _)| scale * dot(p, e)).collect();
            let (pos_logit, pos_deriv) = margin_logit(logits[pos] / scale, margin);
            logits[pos] = scale * pos_logit;

            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let probs: Vec<f64> = exps.iter().map(|x| x / sum).collect();
            let loss = max + sum.ln() - logits[pos];

            let grad_cos = probs
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let delta = if j == pos { 1.0 } else { 0.0 };
                    let chain = if j == pos { pos_deriv } else { 1.0 };
                    scale * (p - delta) * chain * inv_b
                })
                .collect();
            SampleTerms { loss, probs, grad_cos }
        })
        .collect();

    let loss = terms.iter().map(|t| t.loss).sum::<f64>() * inv_b;
    let mut probs = Matrix::zeros(b, classes.len());
    for (i, t) in terms.iter().enumerate() {
        probs.row_mut(i).copy_from_slice(&t.probs);
    }

    let (grad_embeddings, grad_prototypes) = if with_grad {
        let dp = active.len();
        let mut ge = Matrix::zeros(b, d);
        for (i, t) in terms.iter().enumerate() {
            let mut g_unit = vec![0.0; dp];
            for (gc, (p, _)) in t.grad_cos.iter().zip(&protos) {
                for (g, &pv) in g_unit.iter_mut().zip(p) {
                    *g += gc * pv;
                }
            }
            let (unit, norm) = &embeds[i];
            normalize_backward(&g_unit, unit, *norm, &active, ge.row_mut(i));
        }

        let mut gw = Matrix::zeros(classes.len(), d);
        for (j, (unit, norm)) in protos.iter().enumerate() {
            let mut g_unit = vec![0.0; dp];
            // fixed batch order keeps the reduction reproducible
            for (t, (e, _)) in terms.iter().zip(&embeds) {
                let gc = t.grad_cos[j];
                for (g, &ev) in g_unit.iter_mut().zip(e) {
                    *g += gc * ev;
                }
            }
            normalize_backward(&g_unit, unit, *norm, &active, gw.row_mut(j));
        }
        (Some(ge), Some(gw))
    } else {
        (None, None)
    };

    Ok(LossOutput {
        loss,
        probs,
        classes: classes.clone(),
        grad_embeddings,
        grad_prototypes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(margin: f64, scale: f64) -> LossConfig {
        LossConfig {
            margin,
            scale,
            r1: 1.0,
            r2: 1.0,
            seed: 0,
        }
    }

    fn two_class() -> (Matrix, PrototypeMatrix) {
        let batch = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let w = PrototypeMatrix::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        (batch, w)
    }

    #[test]
    fn analytic_two_class_value() {
        let (batch, w) = two_class();
        let out = forward(&batch, &[0], &w, &SelectionPlan::full(2, 2), &cfg(0.0, 1.0)).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((out.loss - expected).abs() < 1e-15);
        assert!((out.loss - 0.3133).abs() < 1e-4);
        let full = full_softmax_loss(&batch, &[0], &w, &cfg(0.0, 1.0)).unwrap();
        assert!((full.loss - expected).abs() < 1e-15);
    }

    #[test]
    fn margin_never_lowers_loss() {
        let batch = Matrix::from_rows(&[vec![0.8, 0.6, 0.0], vec![-0.6, 0.0, 0.8]]).unwrap();
        let w = PrototypeMatrix::from_unnormalized(
            Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let plan = SelectionPlan::full(3, 3);
        let plain = forward(&batch, &[0, 0], &w, &plan, &cfg(0.0, 64.0)).unwrap();
        let marg = forward(&batch, &[0, 0], &w, &plan, &cfg(0.3, 64.0)).unwrap();
        assert!(marg.loss >= plain.loss);
    }

    #[test]
    fn margin_fallback_branch() {
        let m = 0.3;
        let c = (std::f64::consts::PI - 0.1).cos();
        let (v, dv) = margin_logit(c, m);
        assert_eq!(v, c - m * m.sin());
        assert_eq!(dv, 1.0);
        let (v2, _) = margin_logit(0.5, m);
        assert!((v2 - (0.5f64.acos() + m).cos()).abs() < 1e-15);
    }

    #[test]
    fn label_outside_subset() {
        let (batch, w) = two_class();
        let plan = SelectionPlan {
            step: 0,
            class_subset: vec![1],
            feature_mask: vec![true, true],
        };
        let r = forward(&batch, &[0], &w, &plan, &cfg(0.0, 1.0));
        assert!(matches!(r, Err(Error::LabelNotSelected { row: 0, label: 0 })));
    }

    #[test]
    fn zero_masked_subvector() {
        let (batch, w) = two_class();
        let plan = SelectionPlan {
            step: 0,
            class_subset: vec![0, 1],
            feature_mask: vec![false, true],
        };
        let r = forward(&batch, &[0], &w, &plan, &cfg(0.0, 1.0));
        assert!(matches!(r, Err(Error::DegenerateVector(0)) | Err(Error::DegeneratePrototype(0))));
    }

    #[test]
    fn one_hot_probabilities_zero_gradient() {
        let batch = Matrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        let w = PrototypeMatrix::new(Matrix::identity(3)).unwrap();
        let out = backward(&batch, &[1], &w, &SelectionPlan::full(3, 3), &cfg(0.0, 100.0)).unwrap();
        let ge = out.grad_embeddings.unwrap();
        let gw = out.grad_prototypes.unwrap();
        assert!(crate::linalg::norm(ge.as_slice()) < 1e-6);
        assert!(crate::linalg::norm(gw.as_slice()) < 1e-6);
    }

    #[test]
    fn masked_coordinates_get_exact_zeros() {
        let batch = Matrix::from_rows(&[vec![0.5, 0.5, 0.5, 0.5], vec![0.1, -0.7, 0.7, 0.1]]).unwrap();
        let w = PrototypeMatrix::from_unnormalized(
            Matrix::from_rows(&[vec![1.0, 0.2, 0.0, 0.3], vec![0.0, 1.0, 0.4, -0.2], vec![0.3, 0.3, -1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        let plan = SelectionPlan {
            step: 0,
            class_subset: vec![0, 2],
            feature_mask: vec![true, false, true, false],
        };
        let out = backward(&batch, &[0, 2], &w, &plan, &cfg(0.3, 64.0)).unwrap();
        for row in out.grad_embeddings.unwrap().iter_rows().chain(out.grad_prototypes.unwrap().iter_rows()) {
            assert_eq!(row[1].to_bits(), 0);
            assert_eq!(row[3].to_bits(), 0);
        }
        for r in out.probs.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
