use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalize_in_place, Matrix};
use crate::rng::{purpose, stream};

/// Minimum norm accepted when normalizing prototypes and masked sub-vectors.
pub const MIN_NORM: f64 = 1e-12;

/// Class prototypes, one unit-norm row per pseudo class.
///
/// Stored `k × d` (row `j` is the prototype of class `j`), the transpose of the
/// usual `d × k` prototype matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeMatrix {
    weights: Matrix,
}

impl PrototypeMatrix {
    /// Wraps rows that are already unit norm (within 1e-6).
    pub fn new(weights: Matrix) -> Result<Self> {
        Self::check_shape(&weights)?;
        for j in 0..weights.rows() {
            let n = crate::linalg::norm(weights.row(j));
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::param(format!("prototype {j} has norm {n}, expected 1")));
            }
        }
        Ok(Self { weights })
    }

    /// Normalizes every row; zero rows are an error.
    pub fn from_unnormalized(mut weights: Matrix) -> Result<Self> {
        Self::check_shape(&weights)?;
        for j in 0..weights.rows() {
            normalize_in_place(weights.row_mut(j), MIN_NORM).ok_or(Error::DegeneratePrototype(j))?;
        }
        Ok(Self { weights })
    }

    /// Gaussian directions, normalized.
    pub fn random(k: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, purpose::INIT, 1);
        let mut w = Matrix::zeros(k, d);
        for x in w.as_mut_slice() {
            *x = StandardNormal.sample(&mut rng);
        }
        Self::from_unnormalized(w)
    }

    fn check_shape(w: &Matrix) -> Result<()> {
        if w.rows() < 2 {
            return Err(Error::param(format!("need at least 2 classes, got {}", w.rows())));
        }
        if w.cols() == 0 {
            return Err(Error::ZeroDim);
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.weights.row(j)
    }

    pub(crate) fn column_mut(&mut self, j: usize) -> &mut [f64] {
        self.weights.row_mut(j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.weights
    }
}

/// Margin-softmax and selection hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Additive angular margin on the positive class.
    pub margin: f64,
    /// Logit scale.
    pub scale: f64,
    /// Fraction of classes kept per step.
    pub r1: f64,
    /// Fraction of feature dimensions kept per step.
    pub r2: f64,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.3,
            scale: 64.0,
            r1: 0.1,
            r2: 1.0,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0 && self.margin < std::f64::consts::PI) {
            return Err(Error::param(format!("margin {} must lie in [0, pi)", self.margin)));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::param(format!("scale {} must be positive", self.scale)));
        }
        if !(self.r1 > 0.0 && self.r1 <= 1.0) {
            return Err(Error::param(format!("r1 {} must lie in (0, 1]", self.r1)));
        }
        if !(self.r2 > 0.0 && self.r2 <= 1.0) {
            return Err(Error::param(format!("r2 {} must lie in (0, 1]", self.r2)));
        }
        Ok(())
    }
}

/// Classes and feature coordinates used at one training step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub step: u64,
    /// Sorted, distinct class indices.
    pub class_subset: Vec<usize>,
    pub feature_mask: Vec<bool>,
}

impl SelectionPlan {
    /// Every class, every feature.
    pub fn full(k: usize, d: usize) -> Self {
        Self {
            step: 0,
            class_subset: (0..k).collect(),
            feature_mask: vec![true; d],
        }
    }

    pub fn active_features(&self) -> Vec<usize> {
        self.feature_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }

    /// Position of `class` inside the subset.
    pub fn slot(&self, class: usize) -> Option<usize> {
        self.class_subset.binary_search(&class).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_settings() {
        let c = LossConfig::default();
        assert_eq!(c.margin, 0.3);
        assert_eq!(c.scale, 64.0);
        assert_eq!(c.r1, 0.1);
        c.validate().unwrap();
    }

    #[test]
    fn validation() {
        let bad = [
            LossConfig { r1: 0.0, ..Default::default() },
            LossConfig { r2: 0.0, ..Default::default() },
            LossConfig { r2: 1.5, ..Default::default() },
            LossConfig { scale: 0.0, ..Default::default() },
            LossConfig { margin: -0.1, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn prototypes_need_two_classes_and_unit_rows() {
        assert!(PrototypeMatrix::new(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap()).is_err());
        assert!(PrototypeMatrix::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap()).is_err());
        let p = PrototypeMatrix::from_unnormalized(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(p.column(1), &[0.0, 1.0]);
        assert!(matches!(
            PrototypeMatrix::from_unnormalized(Matrix::zeros(2, 2)),
            Err(Error::DegeneratePrototype(0))
        ));
    }
}
