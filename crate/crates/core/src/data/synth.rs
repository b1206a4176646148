//! Synthetic embedding sets with controlled inter-class conflict.
//!
//! True classes are unit-sphere centers with Gaussian jitter. A random subset
//! of the classes is split in two: the same concept ends up under two pseudo
//! labels, which is the conflict the class-sampling loss is meant to tolerate.

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{default_ids, EmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::{normalize_in_place, Matrix};
use crate::rng::{purpose, stream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub true_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub intra_noise: f64,
    pub conflict_ratio: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            true_classes: 10,
            per_class: 50,
            dim: 64,
            intra_noise: 0.1,
            conflict_ratio: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.conflict_ratio) {
            return Err(Error::param(format!(
                "conflict_ratio {} outside [0, 1]",
                self.conflict_ratio
            )));
        }
        if self.true_classes < 2 {
            return Err(Error::param("at least 2 true classes are required"));
        }
        if self.per_class < 2 {
            return Err(Error::param("at least 2 samples per class are required"));
        }
        if self.dim == 0 {
            return Err(Error::ZeroDim);
        }
        if !(self.intra_noise >= 0.0) || !self.intra_noise.is_finite() {
            return Err(Error::param(format!("intra_noise {} must be finite and >= 0", self.intra_noise)));
        }
        Ok(())
    }

    pub fn conflicted_classes(&self) -> usize {
        (self.true_classes as f64 * self.conflict_ratio).round() as usize
    }

    pub fn pseudo_classes(&self) -> usize {
        self.true_classes + self.conflicted_classes()
    }
}

/// Output of [`synth_split`]: a pseudo-labeled training set plus a held-out
/// set drawn around the same class centers.
#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub train: EmbeddingSet,
    pub train_truth: Vec<i64>,
    /// Held-out samples labeled with their true class.
    pub holdout: EmbeddingSet,
    pub centers: Matrix,
}

/// Draws a conflict-controlled dataset. Returns the set labeled with pseudo
/// labels and, separately, the ground-truth class of every row.
pub fn synth_conflict_dataset(spec: &SyntheticSpec) -> Result<(EmbeddingSet, Vec<i64>)> {
    spec.validate()?;
    let mut rng = stream(spec.seed, purpose::SYNTH, 0);
    let centers = draw_centers(spec, &mut rng)?;

    let c = spec.true_classes;
    let conflicted = {
        let mut v = index::sample(&mut rng, c, spec.conflicted_classes()).into_vec();
        v.sort_unstable();
        v
    };

    let n = c * spec.per_class;
    let samples = draw_samples(&centers, spec.per_class, spec.intra_noise, &mut rng)?;
    let truth: Vec<i64> = (0..n).map(|i| (i / spec.per_class) as i64).collect();
    let mut pseudo = truth.clone();

    for (rank, &class) in conflicted.iter().enumerate() {
        let mut members: Vec<usize> = (class * spec.per_class..(class + 1) * spec.per_class).collect();
        members.shuffle(&mut rng);
        // second half moves to the class's twin label
        for &row in &members[spec.per_class / 2..] {
            pseudo[row] = (c + rank) as i64;
        }
    }

    let set = EmbeddingSet::from_matrix(&samples, Some(default_ids("s", n)), Some(pseudo))?;
    Ok((set, truth))
}

/// [`synth_conflict_dataset`] plus `holdout_per_class` fresh samples per true
/// class. The training part is identical to the unsplit call.
pub fn synth_split(spec: &SyntheticSpec, holdout_per_class: usize) -> Result<SyntheticSplit> {
    let (train, train_truth) = synth_conflict_dataset(spec)?;
    let mut rng = stream(spec.seed, purpose::SYNTH, 0);
    let centers = draw_centers(spec, &mut rng)?;

    let mut hrng = stream(spec.seed, purpose::SYNTH, 1);
    let samples = draw_samples(&centers, holdout_per_class, spec.intra_noise, &mut hrng)?;
    let labels = (0..samples.rows())
        .map(|i| (i / holdout_per_class.max(1)) as i64)
        .collect();
    let holdout = EmbeddingSet::from_matrix(&samples, Some(default_ids("h", samples.rows())), Some(labels))?;
    Ok(SyntheticSplit {
        train,
        train_truth,
        holdout,
        centers,
    })
}

fn draw_centers(spec: &SyntheticSpec, rng: &mut StreamRng) -> Result<Matrix> {
    let mut centers = Matrix::zeros(spec.true_classes, spec.dim);
    for i in 0..spec.true_classes {
        loop {
            let row = centers.row_mut(i);
            for x in row.iter_mut() {
                *x = StandardNormal.sample(rng);
            }
            if normalize_in_place(row, 1e-12).is_some() {
                break;
            }
        }
    }
    Ok(centers)
}

fn draw_samples(centers: &Matrix, per_class: usize, sigma: f64, rng: &mut StreamRng) -> Result<Matrix> {
    let d = centers.cols();
    let mut out = Matrix::zeros(centers.rows() * per_class, d);
    for class in 0..centers.rows() {
        for s in 0..per_class {
            let row_idx = class * per_class + s;
            let row = out.row_mut(row_idx);
            for (x, &c) in row.iter_mut().zip(centers.row(class)) {
                let z: f64 = StandardNormal.sample(rng);
                *x = c + sigma * z;
            }
            normalize_in_place(row, 1e-12).ok_or(Error::DegenerateVector(row_idx))?;
        }
    }
    Ok(out)
}
