//! Recall@K and mAP@100 under cosine similarity.
//!
//! Neighbors are ordered by similarity, ties going to the lower item index.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};

pub const MAP_CUTOFF: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub map_at_100: Option<f64>,
    pub dims_used: usize,
    pub config: serde_json::Value,
}

fn row_norms(set: &EmbeddingSet) -> Result<Vec<f64>> {
    (0..set.count())
        .map(|i| {
            let n = set.row(i).iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            if n > 0.0 && n.is_finite() {
                Ok(n)
            } else {
                Err(Error::DegenerateVector(i))
            }
        })
        .collect()
}

#[inline]
fn cosine(a: &[f32], b: &[f32], na: f64, nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    // adding +0.0 turns -0.0 into +0.0, so total_cmp sees orthogonal items as tied
    dot / (na * nb) + 0.0
}

/// Rank (0-based) of the best same-class neighbor of every item, or `None`
/// when the item has no other member of its class.
fn first_hit_ranks(set: &EmbeddingSet, labels: &[i64], norms: &[f64]) -> Vec<Option<usize>> {
    let n = set.count();
    (0..n)
        .into_par_iter()
        .map(|q| {
            let sims: Vec<f64> = (0..n)
                .map(|j| cosine(set.row(q), set.row(j), norms[q], norms[j]))
                .collect();
            // earliest-ranked same-class item: highest similarity, then lowest index
            let best = (0..n)
                .filter(|&j| j != q && labels[j] == labels[q])
                .fold(None, |acc: Option<usize>, j| match acc {
                    Some(b) if sims[b] >= sims[j] => Some(b),
                    _ => Some(j),
                })?;
            let s = sims[best];
            let ahead = (0..n)
                .filter(|&j| j != q && (sims[j] > s || (sims[j] == s && j < best)))
                .count();
            Some(ahead)
        })
        .collect()
}

fn check_queries(set: &EmbeddingSet) -> Result<&[i64]> {
    let labels = set.labels().ok_or(Error::MissingLabels)?;
    let mut counts: HashMap<i64, (usize, usize)> = HashMap::new();
    for (row, &l) in labels.iter().enumerate() {
        counts.entry(l).or_insert((0, row)).0 += 1;
    }
    if let Some((&label, &(_, row))) = counts.iter().filter(|(_, (c, _))| *c < 2).min_by_key(|(_, (_, r))| *r) {
        return Err(Error::SingletonClass { row, label });
    }
    Ok(labels)
}

/// Fraction of items whose `k` nearest neighbors (self excluded) contain an
/// item of the same class.
pub fn recall_at_k(set: &EmbeddingSet, k: usize) -> Result<f64> {
    Ok(recall_at_ks(set, &[k])?[&k])
}

/// Recall at several cutoffs from a single neighbor scan.
pub fn recall_at_ks(set: &EmbeddingSet, ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    if ks.iter().any(|&k| k == 0) {
        return Err(Error::param("recall cutoff K must be at least 1"));
    }
    let labels = check_queries(set)?;
    let norms = row_norms(set)?;
    let ranks = first_hit_ranks(set, labels, &norms);
    let n = set.count() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r < k)).count();
            (k, hits as f64 / n)
        })
        .collect())
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Average precision of a ranked relevance list truncated at `cutoff`,
/// normalized by `min(total_relevant, cutoff)`. Accumulated in double-double
/// so the result is the correctly rounded value of the exact rational.
pub fn average_precision(ranked_relevance: &[bool], total_relevant: usize, cutoff: usize) -> f64 {
    let denom = total_relevant.min(cutoff);
    if denom == 0 {
        return 0.0;
    }
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    let mut hits = 0u32;
    for (i, _) in ranked_relevance.iter().take(cutoff).enumerate().filter(|(_, &r)| r) {
        hits += 1;
        let h = f64::from(hits);
        let rank = (i + 1) as f64;
        let q = h / rank;
        let r = (-q).mul_add(rank, h) / rank;
        let (s, e) = two_sum(hi, q);
        hi = s;
        lo += e + r;
    }
    let den = denom as f64;
    let q = hi / den;
    let rem = (-q).mul_add(den, hi) + lo;
    q + rem / den
}

/// Mean AP@100 of `queries` against `gallery`; relevance is label equality.
/// Queries without any relevant gallery item are left out of the mean.
pub fn map_at_100(queries: &EmbeddingSet, gallery: &EmbeddingSet) -> Result<f64> {
    map_at_cutoff(queries, gallery, MAP_CUTOFF)
}

pub fn map_at_cutoff(queries: &EmbeddingSet, gallery: &EmbeddingSet, cutoff: usize) -> Result<f64> {
    if cutoff == 0 {
        return Err(Error::param("mAP cutoff must be at least 1"));
    }
    if queries.dim() != gallery.dim() {
        return Err(Error::shape(format!(
            "query dimension {} vs gallery dimension {}",
            queries.dim(),
            gallery.dim()
        )));
    }
    let ql = queries.labels().ok_or(Error::MissingLabels)?;
    let gl = gallery.labels().ok_or(Error::MissingLabels)?;
    let qn = row_norms(queries)?;
    let gn = row_norms(gallery)?;
    let g = gallery.count();
    let keep = cutoff.min(g);

    let aps: Vec<Option<f64>> = (0..queries.count())
        .into_par_iter()
        .map(|q| {
            let relevant = gl.iter().filter(|&&l| l == ql[q]).count();
            if relevant == 0 {
                return None;
            }
            let sims: Vec<f64> = (0..g)
                .map(|j| cosine(queries.row(q), gallery.row(j), qn[q], gn[j]))
                .collect();
            let order = |a: &usize, b: &usize| sims[*b].total_cmp(&sims[*a]).then(a.cmp(b));
            let mut idx: Vec<usize> = (0..g).collect();
            if keep < g {
                idx.select_nth_unstable_by(keep - 1, order);
                idx.truncate(keep);
            }
            idx.sort_unstable_by(order);
            let rel: Vec<bool> = idx.iter().map(|&j| gl[j] == ql[q]).collect();
            Some(average_precision(&rel, relevant, cutoff))
        })
        .collect();

    let valid: Vec<f64> = aps.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::NoRelevantQueries);
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}
