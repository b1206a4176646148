//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use unicom::data::{default_ids, EmbeddingSet};
use unicom::linalg::Matrix;

/// Sum of squared deviations of one integer cluster, as an exact fraction.
pub fn cluster_cost(points: &[[i64; 2]]) -> Ratio<i64> {
    if points.is_empty() {
        return Ratio::from_integer(0);
    }
    let m = points.len() as i64;
    let sq: i64 = points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
    let sx: i64 = points.iter().map(|p| p[0]).sum();
    let sy: i64 = points.iter().map(|p| p[1]).sum();
    Ratio::new(m * sq - sx * sx - sy * sy, m)
}

/// Best partition of `points` into at most `k` groups, by enumeration.
pub fn exhaustive_optimum(points: &[[i64; 2]], k: usize) -> (Ratio<i64>, Vec<usize>) {
    let n = points.len();
    let mut best = None;
    let mut labels = vec![0usize; n];
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        let cost: Ratio<i64> = (0..k)
            .map(|g| {
                let members: Vec<[i64; 2]> = (0..n).filter(|&i| labels[i] == g).map(|i| points[i]).collect();
                cluster_cost(&members)
            })
            .sum();
        if best.as_ref().map_or(true, |(b, _)| cost < *b) {
            best = Some((cost, labels.clone()));
        }
    }
    let (cost, labels) = best.unwrap();
    (cost / Ratio::from_integer(n as i64), labels)
}

pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

pub fn cos(a: &[f32], b: &[f32]) -> f64 {
    let n = |v: &[f32]| v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    dot / (n(a) * n(b))
}

/// Every other index, sorted by descending similarity, ties by index.
pub fn ranked(query: &[f32], gallery: &EmbeddingSet, skip: Option<usize>) -> Vec<usize> {
    let sims: Vec<f64> = (0..gallery.count()).map(|j| cos(query, gallery.row(j))).collect();
    let mut idx: Vec<usize> = (0..gallery.count()).filter(|&j| Some(j) != skip).collect();
    idx.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
    idx
}

pub fn brute_recall(set: &EmbeddingSet, k: usize) -> f64 {
    let labels = set.labels().unwrap();
    let hits = (0..set.count())
        .filter(|&q| ranked(set.row(q), set, Some(q)).iter().take(k).any(|&j| labels[j] == labels[q]))
        .count();
    hits as f64 / set.count() as f64
}

pub fn exact_ap(rel: &[bool], total: usize) -> BigRational {
    let mut acc = BigRational::from_integer(BigInt::from(0));
    let mut hits = 0i64;
    for (i, &r) in rel.iter().take(100).enumerate() {
        if r {
            hits += 1;
            acc += BigRational::new(BigInt::from(hits), BigInt::from(i as i64 + 1));
        }
    }
    acc / BigRational::from_integer(BigInt::from(total.min(100) as i64))
}

pub fn brute_map(queries: &EmbeddingSet, gallery: &EmbeddingSet) -> f64 {
    let ql = queries.labels().unwrap();
    let gl = gallery.labels().unwrap();
    let mut aps = Vec::new();
    for q in 0..queries.count() {
        let total = gl.iter().filter(|&&l| l == ql[q]).count();
        if total == 0 {
            continue;
        }
        let rel: Vec<bool> = ranked(queries.row(q), gallery, None).iter().map(|&j| gl[j] == ql[q]).collect();
        aps.push(exact_ap(&rel, total).to_f64().unwrap());
    }
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// Small-integer coordinates, so exact similarity ties are common.
pub fn random_labeled(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> EmbeddingSet {
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        loop {
            let row: Vec<f32> = (0..d).map(|_| rng.random_range(-2i32..=2) as f32).collect();
            if row.iter().any(|&x| x != 0.0) {
                values.extend(row);
                break;
            }
        }
    }
    let mut labels: Vec<i64> = (0..n).map(|i| if i < 2 * classes { (i % classes) as i64 } else { rng.random_range(0..classes as i64) }).collect();
    labels.shuffle(rng);
    EmbeddingSet::new(d, values, default_ids("x", n), Some(labels)).unwrap()
}

/// Masked, renormalized margin softmax written straight from its definition.
pub fn reference_loss(e: &Matrix, labels: &[usize], w: &Matrix, subset: &[usize], mask: &[bool], m: f64, s: f64) -> f64 {
    let masked_unit = |v: &[f64]| -> Vec<f64> {
        let kept: Vec<f64> = v.iter().zip(mask).map(|(&x, &on)| if on { x } else { 0.0 }).collect();
        let n = kept.iter().map(|x| x * x).sum::<f64>().sqrt();
        kept.iter().map(|x| x / n).collect()
    };
    let mut total = 0.0;
    for i in 0..e.rows() {
        let ei = masked_unit(e.row(i));
        let logits: Vec<f64> = subset
            .iter()
            .map(|&j| {
                let wj = masked_unit(w.row(j));
                let c: f64 = ei.iter().zip(&wj).map(|(a, b)| a * b).sum();
                if j != labels[i] {
                    s * c
                } else if c.acos() + m <= std::f64::consts::PI {
                    s * (c.acos() + m).cos()
                } else {
                    s * (c - m * m.sin())
                }
            })
            .collect();
        let pos = logits[subset.iter().position(|&j| j == labels[i]).unwrap()];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - pos;
    }
    total / e.rows() as f64
}
