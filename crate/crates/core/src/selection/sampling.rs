//! Per-step random class subsets and feature masks.
//!
//! Both draws are pure functions of `(seed, step)` through their own named
//! streams, so resampling one never perturbs the other.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use crate::selection::{LossConfig, SelectionPlan};

fn round_count(total: usize, ratio: f64) -> usize {
    (total as f64 * ratio).round() as usize
}

fn distinct_positives(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::LabelOutOfRange {
            row,
            label: l as i64,
            bound: k,
        });
    }
    let mut pos = labels.to_vec();
    pos.sort_unstable();
    pos.dedup();
    Ok(pos)
}

/// Batch positives plus uniformly drawn negatives, `round(k·r1)` classes in total.
///
/// Fails with [`Error::SubsetTooSmall`] when the batch holds more distinct
/// positives than the subset size allows.
pub fn sample_classes(labels: &[usize], k: usize, r1: f64, seed: u64, step: u64) -> Result<Vec<usize>> {
    if !(r1 > 0.0 && r1 <= 1.0) {
        return Err(Error::param(format!("r1 {r1} must lie in (0, 1]")));
    }
    let positives = distinct_positives(labels, k)?;
    let size = round_count(k, r1);
    if size < positives.len() {
        return Err(Error::SubsetTooSmall {
            subset: size,
            positives: positives.len(),
        });
    }
    Ok(fill_subset(positives, k, size, seed, step))
}

/// Like [`sample_classes`], but the subset grows to hold every positive
/// instead of failing.
pub fn sample_classes_floored(labels: &[usize], k: usize, r1: f64, seed: u64, step: u64) -> Result<Vec<usize>> {
    if !(r1 > 0.0 && r1 <= 1.0) {
        return Err(Error::param(format!("r1 {r1} must lie in (0, 1]")));
    }
    let positives = distinct_positives(labels, k)?;
    let size = round_count(k, r1).max(positives.len());
    Ok(fill_subset(positives, k, size, seed, step))
}

fn fill_subset(positives: Vec<usize>, k: usize, size: usize, seed: u64, step: u64) -> Vec<usize> {
    if size >= k {
        return (0..k).collect();
    }
    let mut is_pos = vec![false; k];
    for &p in &positives {
        is_pos[p] = true;
    }
    let negatives: Vec<usize> = (0..k).filter(|&c| !is_pos[c]).collect();
    let mut rng = stream(seed, purpose::CLASS_SAMPLE, step);
    let mut subset = positives;
    subset.extend(
        index::sample(&mut rng, negatives.len(), size - subset.len())
            .into_iter()
            .map(|i| negatives[i]),
    );
    subset.sort_unstable();
    subset
}

/// Exactly `round(d·r2)` coordinates switched on, shared by the whole batch.
pub fn sample_feature_mask(d: usize, r2: f64, seed: u64, step: u64) -> Result<Vec<bool>> {
    if !(r2 > 0.0 && r2 <= 1.0) {
        return Err(Error::param(format!("r2 {r2} must lie in (0, 1]")));
    }
    let on = round_count(d, r2);
    if on == 0 {
        return Err(Error::param(format!("round({d} * {r2}) selects no features")));
    }
    let mut mask = vec![false; d];
    if on == d {
        mask.fill(true);
        return Ok(mask);
    }
    let mut rng = stream(seed, purpose::MASK, step);
    for i in index::sample(&mut rng, d, on) {
        mask[i] = true;
    }
    Ok(mask)
}

/// Selection used by training: floored class subset and a fresh mask.
pub fn plan_step(labels: &[usize], k: usize, d: usize, cfg: &LossConfig, step: u64) -> Result<SelectionPlan> {
    Ok(SelectionPlan {
        step,
        class_subset: sample_classes_floored(labels, k, cfg.r1, cfg.seed, step)?,
        feature_mask: sample_feature_mask(d, cfg.r2, cfg.seed, step)?,
    })
}
