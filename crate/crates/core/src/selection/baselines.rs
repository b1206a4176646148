//! Instance-discrimination NCE and per-sample Dropout, kept for contrast with
//! the class/feature selection loss.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::{purpose, stream};
use crate::selection::{backward, LossConfig, LossOutput, PrototypeMatrix, SelectionPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct NceOutput {
    pub loss: f64,
    pub grad_anchors: Matrix,
    pub grad_positives: Matrix,
    /// One `m_neg × d` block per anchor.
    pub grad_negatives: Vec<Matrix>,
}

/// InfoNCE over raw dot products with the positive inside the denominator,
/// averaged over the batch. `negatives[i]` holds the negatives of anchor `i`.
pub fn instance_nce_loss(anchors: &Matrix, positives: &Matrix, negatives: &[Matrix], temperature: f64) -> Result<NceOutput> {
    let b = anchors.rows();
    let d = anchors.cols();
    if b == 0 {
        return Err(Error::EmptySet);
    }
    if positives.rows() != b || positives.cols() != d || negatives.len() != b {
        return Err(Error::shape("anchors, positives and negatives must share batch size and dimension"));
    }
    let m = negatives[0].rows();
    if m == 0 {
        return Err(Error::param("at least one negative per anchor is required"));
    }
    if negatives.iter().any(|n| n.rows() != m || n.cols() != d) {
        return Err(Error::shape("every anchor needs the same number of negatives"));
    }
    if !(temperature > 0.0) {
        return Err(Error::param(format!("temperature {temperature} must be positive")));
    }

    let inv_t = 1.0 / temperature;
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut ga = Matrix::zeros(b, d);
    let mut gp = Matrix::zeros(b, d);
    let mut gn = vec![Matrix::zeros(m, d); b];

    for i in 0..b {
        let a = anchors.row(i);
        let mut logits = Vec::with_capacity(m + 1);
        logits.push(dot(positives.row(i), a) * inv_t);
        logits.extend(negatives[i].iter_rows().map(|n| dot(n, a) * inv_t));

        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += max + sum.ln() - logits[0];

        let coef: Vec<f64> = exps
            .iter()
            .enumerate()
            .map(|(j, e)| (e / sum - if j == 0 { 1.0 } else { 0.0 }) * inv_t * inv_b)
            .collect();

        let gai = ga.row_mut(i);
        for (g, &p) in gai.iter_mut().zip(positives.row(i)) {
            *g += coef[0] * p;
        }
        for (j, n) in negatives[i].iter_rows().enumerate() {
            for (g, &v) in gai.iter_mut().zip(n) {
                *g += coef[j + 1] * v;
            }
        }
        for (g, &av) in gp.row_mut(i).iter_mut().zip(a) {
            *g = coef[0] * av;
        }
        for j in 0..m {
            for (g, &av) in gn[i].row_mut(j).iter_mut().zip(a) {
                *g = coef[j + 1] * av;
            }
        }
    }

    Ok(NceOutput {
        loss: loss * inv_b,
        grad_anchors: ga,
        grad_positives: gp,
        grad_negatives: gn,
    })
}

/// Independent Bernoulli keep-mask per sample and coordinate (`b × d`, row-major).
pub fn dropout_mask(b: usize, d: usize, r3: f64, seed: u64, step: u64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&r3) {
        return Err(Error::param(format!("dropout ratio {r3} must lie in [0, 1)")));
    }
    if r3 == 0.0 {
        return Ok(vec![true; b * d]);
    }
    let mut rng = stream(seed, purpose::DROPOUT, step);
    Ok((0..b * d).map(|_| rng.random::<f64>() >= r3).collect())
}

/// Zeroes dropped coordinates and scales survivors by `1/(1−r3)`.
pub fn apply_dropout(batch: &Matrix, keep: &[bool], r3: f64) -> Matrix {
    let scale = 1.0 / (1.0 - r3);
    let data = batch
        .as_slice()
        .iter()
        .zip(keep)
        .map(|(&x, &k)| if k { x * scale } else { 0.0 })
        .collect();
    Matrix::from_vec(batch.rows(), batch.cols(), data).expect("same shape")
}

/// Dropout on the embeddings followed by the margin softmax over `classes`
/// with every feature kept. Gradients are taken with respect to the
/// un-dropped embeddings.
///
/// A row whose every coordinate is dropped has no direction; it adds zero
/// loss and zero gradient but still counts in the batch mean, and its
/// probability row is uniform.
pub fn dropout_loss(
    batch: &Matrix,
    labels: &[usize],
    w: &PrototypeMatrix,
    classes: Vec<usize>,
    cfg: &LossConfig,
    r3: f64,
    step: u64,
) -> Result<LossOutput> {
    let (b, d) = (batch.rows(), batch.cols());
    let keep = dropout_mask(b, d, r3, cfg.seed, step)?;
    let dropped = apply_dropout(batch, &keep, r3);
    let alive: Vec<usize> = (0..b).filter(|&i| keep[i * d..(i + 1) * d].contains(&true)).collect();
    let plan = SelectionPlan {
        step,
        class_subset: classes,
        feature_mask: vec![true; w.dim()],
    };
    let scale = 1.0 / (1.0 - r3);

    if alive.len() == b {
        let mut out = backward(&dropped, labels, w, &plan, cfg)?;
        if let Some(ge) = out.grad_embeddings.as_mut() {
            for (g, &k) in ge.as_mut_slice().iter_mut().zip(&keep) {
                *g = if k { *g * scale } else { 0.0 };
            }
        }
        return Ok(out);
    }

    let s = plan.class_subset.len();
    let mut probs = Matrix::from_vec(b, s, vec![1.0 / s as f64; b * s]).expect("shape");
    let mut grad_e = Matrix::zeros(b, d);
    let mut grad_w = Matrix::zeros(s, d);
    let mut loss = 0.0;
    if !alive.is_empty() {
        let sub_labels: Vec<usize> = alive.iter().map(|&i| labels[i]).collect();
        let out = backward(&dropped.select_rows(&alive), &sub_labels, w, &plan, cfg)?;
        // the sub-batch mean is over |alive| rows; rescale to the full batch
        let frac = alive.len() as f64 / b as f64;
        loss = out.loss * frac;
        let ge = out.grad_embeddings.expect("backward fills gradients");
        for (r, &i) in alive.iter().enumerate() {
            probs.row_mut(i).copy_from_slice(out.probs.row(r));
            for (j, g) in grad_e.row_mut(i).iter_mut().enumerate() {
                if keep[i * d + j] {
                    *g = ge.row(r)[j] * scale * frac;
                }
            }
        }
        let gw = out.grad_prototypes.expect("backward fills gradients");
        for (o, &g) in grad_w.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *o = g * frac;
        }
    }
    Ok(LossOutput {
        loss,
        probs,
        classes: plan.class_subset,
        grad_embeddings: Some(grad_e),
        grad_prototypes: Some(grad_w),
    })
}

/// Dropout contrast over the full class set.
pub fn dropout_forward(
    batch: &Matrix,
    labels: &[usize],
    w: &PrototypeMatrix,
    cfg: &LossConfig,
    r3: f64,
    step: u64,
) -> Result<LossOutput> {
    dropout_loss(batch, labels, w, (0..w.classes()).collect(), cfg, r3, step)
}
