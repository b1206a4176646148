//! Offline k-means producing pseudo labels and initial prototypes.
//!
//! Lloyd iterations on squared Euclidean distance. Assignment runs in
//! parallel over points; centroid sums are accumulated sequentially in point
//! order so the result does not depend on the worker count.

use rand::Rng;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::rng::{purpose, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    #[default]
    Kmeanspp,
    RandomPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyClusterPolicy {
    /// Re-seed an empty cluster at the point farthest from its own centroid.
    #[default]
    RespawnFarthest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative objective improvement drops below this.
    pub tol: f64,
    pub init: InitMethod,
    pub seed: u64,
    pub empty_cluster_policy: EmptyClusterPolicy,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 100,
            tol: 1e-6,
            init: InitMethod::Kmeanspp,
            seed,
            empty_cluster_policy: EmptyClusterPolicy::RespawnFarthest,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if self.k > n {
            return Err(Error::param(format!("k = {} exceeds the {n} points", self.k)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param(format!("tol {} must be >= 0", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// k rows, one centroid per cluster.
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Objective after every assignment step. The last entry is the
    /// objective of the returned centroids and assignments.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    /// Cluster result whose centroids are the per-label means of `data`.
    /// Labels without members get a zero centroid.
    pub fn from_labels(data: &Matrix, labels: &[usize], k: usize) -> Result<Self> {
        if labels.len() != data.rows() {
            return Err(Error::shape(format!("{} labels for {} rows", labels.len(), data.rows())));
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::LabelOutOfRange {
                row,
                label: l as i64,
                bound: k,
            });
        }
        let (centroids, _) = member_means(data, labels, k);
        let obj = objective_rows(data, &centroids, labels);
        Ok(Self {
            centroids,
            assignments: labels.to_vec(),
            objective_trace: vec![obj],
            iterations_run: 0,
        })
    }
}

/// Maps each point to its nearest centroid, ties to the lowest index.
pub fn assign(data: &EmbeddingSet, centroids: &Matrix) -> Result<Vec<usize>> {
    if data.dim() != centroids.cols() {
        return Err(Error::shape(format!(
            "data dimension {} vs centroid dimension {}",
            data.dim(),
            centroids.cols()
        )));
    }
    if centroids.rows() == 0 {
        return Err(Error::param("no centroids"));
    }
    Ok(assign_rows(&data.to_matrix(), centroids))
}

/// `(1/n) Σ ‖x_i − c_{y_i}‖²`.
pub fn objective(data: &EmbeddingSet, centroids: &Matrix, assignments: &[usize]) -> Result<f64> {
    if data.dim() != centroids.cols() {
        return Err(Error::shape("data and centroid dimensions differ"));
    }
    if assignments.len() != data.count() {
        return Err(Error::shape(format!(
            "{} assignments for {} points",
            assignments.len(),
            data.count()
        )));
    }
    if let Some((row, &a)) = assignments.iter().enumerate().find(|(_, &a)| a >= centroids.rows()) {
        return Err(Error::LabelOutOfRange {
            row,
            label: a as i64,
            bound: centroids.rows(),
        });
    }
    Ok(objective_rows(&data.to_matrix(), centroids, assignments))
}

pub fn kmeans_fit(data: &EmbeddingSet, cfg: &KMeansConfig) -> Result<ClusterResult> {
    kmeans_fit_matrix(&data.to_matrix(), cfg)
}

pub fn kmeans_fit_matrix(x: &Matrix, cfg: &KMeansConfig) -> Result<ClusterResult> {
    let n = x.rows();
    cfg.validate(n)?;
    let k = cfg.k;

    let mut centroids = match cfg.init {
        InitMethod::Kmeanspp => init_kmeanspp(x, k, cfg.seed),
        InitMethod::RandomPoints => {
            let mut rng = stream(cfg.seed, purpose::KMEANS, 0);
            x.select_rows(&index::sample(&mut rng, n, k).into_vec())
        }
    };

    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations_run = 0;
    for it in 0..cfg.max_iters {
        iterations_run = it + 1;
        let next = assign_rows(x, &centroids);
        let unchanged = next == assignments;
        assignments = next;
        let obj = objective_rows(x, &centroids, &assignments);
        let prev = trace.last().copied();
        trace.push(obj);

        let (means, counts) = member_means(x, &assignments, k);
        for c in 0..k {
            if counts[c] > 0 {
                centroids.row_mut(c).copy_from_slice(means.row(c));
            }
        }
        respawn_empty(x, &mut centroids, &mut assignments);

        if unchanged {
            break;
        }
        if let Some(prev) = prev {
            if prev - obj <= cfg.tol * prev.abs() {
                break;
            }
        }
    }

    let final_obj = objective_rows(x, &centroids, &assignments);
    if final_obj < *trace.last().expect("at least one iteration") {
        trace.push(final_obj);
    }
    Ok(ClusterResult {
        centroids,
        assignments,
        objective_trace: trace,
        iterations_run,
    })
}

fn nearest(row: &[f64], centroids: &Matrix) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter_rows().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

pub(crate) fn assign_rows(x: &Matrix, centroids: &Matrix) -> Vec<usize> {
    (0..x.rows())
        .into_par_iter()
        .map(|i| nearest(x.row(i), centroids))
        .collect()
}

pub(crate) fn objective_rows(x: &Matrix, centroids: &Matrix, assignments: &[usize]) -> f64 {
    let total: f64 = assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(x.row(i), centroids.row(a)))
        .sum();
    total / x.rows() as f64
}

/// Per-cluster means, summed in point order. Empty clusters come back as zero rows.
fn member_means(x: &Matrix, assignments: &[usize], k: usize) -> (Matrix, Vec<usize>) {
    let mut sums = Matrix::zeros(k, x.cols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, &v) in sums.row_mut(a).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            for s in sums.row_mut(c) {
                *s /= inv;
            }
        }
    }
    (sums, counts)
}

/// Moves the point farthest from its centroid into each empty cluster, then
/// refreshes the donor cluster's mean.
fn respawn_empty(x: &Matrix, centroids: &mut Matrix, assignments: &mut [usize]) {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &a) in assignments.iter().enumerate() {
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(x.row(i), centroids.row(a));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        // k <= n guarantees some cluster holds two or more points
        let p = far.expect("a cluster with at least two members exists");
        let donor = assignments[p];
        assignments[p] = c;
        counts[donor] -= 1;
        counts[c] = 1;
        centroids.row_mut(c).copy_from_slice(x.row(p));

        let mut sum = vec![0.0; x.cols()];
        for (i, &a) in assignments.iter().enumerate() {
            if a == donor {
                for (s, &v) in sum.iter_mut().zip(x.row(i)) {
                    *s += v;
                }
            }
        }
        for (dst, s) in centroids.row_mut(donor).iter_mut().zip(sum) {
            *dst = s / counts[donor] as f64;
        }
    }
}

fn init_kmeanspp(x: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = x.rows();
    let mut rng = stream(seed, purpose::KMEANS, 0);
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;

    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                cum += w;
                pick = Some(i);
                if cum > u {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point duplicates a chosen one
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        taken[pick] = true;
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(x.row(i), x.row(pick));
            if nd < *d {
                *d = nd;
            }
        }
    }
    x.select_rows(&chosen)
}
