use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Longest id the on-disk id table can hold.
pub const MAX_ID_BYTES: usize = u16::MAX as usize;

/// `n` rows of `d`-dimensional embeddings with unique ids and optional labels.
///
/// Vectors are stored as `f32`, the on-disk element type, so a save/load cycle
/// reproduces every field bit for bit. Arithmetic elsewhere widens to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: Vec<f32>,
    ids: Vec<String>,
    labels: Option<Vec<i64>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, vectors: Vec<f32>, ids: Vec<String>, labels: Option<Vec<i64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        if ids.is_empty() {
            return Err(Error::EmptySet);
        }
        let n = ids.len();
        if vectors.len() != n * dim {
            return Err(Error::shape(format!(
                "{} values for {n} rows of dimension {dim}",
                vectors.len()
            )));
        }
        validate_ids(&ids)?;
        if let Some(l) = &labels {
            validate_labels(l, n)?;
        }
        Ok(Self {
            dim,
            vectors,
            ids,
            labels,
        })
    }

    /// Builds a set from `f64` rows, rounding to `f32`. Ids default to the row index.
    pub fn from_matrix(m: &Matrix, ids: Option<Vec<String>>, labels: Option<Vec<i64>>) -> Result<Self> {
        let ids = ids.unwrap_or_else(|| default_ids("", m.rows()));
        let vectors = m.as_slice().iter().map(|&x| x as f32).collect();
        Self::new(m.cols(), vectors, ids, labels)
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| f64::from(x)).collect()
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Labels as indices, or [`Error::MissingLabels`].
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        let l = self.labels.as_ref().ok_or(Error::MissingLabels)?;
        Ok(l.iter().map(|&x| x as usize).collect())
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.vectors.iter().map(|&x| f64::from(x)).collect();
        Matrix::from_vec(self.count(), self.dim, data).expect("shape checked at construction")
    }

    pub fn with_labels(&self, labels: Option<Vec<i64>>) -> Result<Self> {
        if let Some(l) = &labels {
            validate_labels(l, self.count())?;
        }
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    /// Same ids and labels, new vectors.
    pub fn with_vectors(&self, m: &Matrix) -> Result<Self> {
        if m.rows() != self.count() {
            return Err(Error::shape(format!("{} rows for a set of {}", m.rows(), self.count())));
        }
        Self::from_matrix(m, Some(self.ids.clone()), self.labels.clone())
    }

    /// Rows with `f64` norm within `tol` of one.
    pub fn is_unit_norm(&self, tol: f64) -> bool {
        (0..self.count()).all(|i| {
            let n: f64 = self.row(i).iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            (n - 1.0).abs() <= tol
        })
    }
}

pub fn default_ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn validate_ids(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for (row, id) in ids.iter().enumerate() {
        if id.len() > MAX_ID_BYTES {
            return Err(Error::IdTooLong {
                row,
                len: id.len(),
                max: MAX_ID_BYTES,
            });
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

fn validate_labels(labels: &[i64], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l < 0) {
        return Err(Error::NegativeLabel { row, label });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_zero_dim() {
        assert!(matches!(EmbeddingSet::new(3, vec![], vec![], None), Err(Error::EmptySet)));
        assert!(matches!(
            EmbeddingSet::new(0, vec![], vec!["a".into()], None),
            Err(Error::ZeroDim)
        ));
    }

    #[test]
    fn rejects_duplicate_ids_and_negative_labels() {
        let dup = EmbeddingSet::new(1, vec![1.0, 1.0], vec!["a".into(), "a".into()], None);
        assert!(matches!(dup, Err(Error::DuplicateId(id)) if id == "a"));
        let neg = EmbeddingSet::new(1, vec![1.0, 1.0], vec!["a".into(), "b".into()], Some(vec![0, -1]));
        assert!(matches!(neg, Err(Error::NegativeLabel { row: 1, label: -1 })));
    }

    #[test]
    fn label_gaps_are_allowed() {
        let s = EmbeddingSet::new(1, vec![1.0, 1.0], default_ids("x", 2), Some(vec![0, 7])).unwrap();
        assert_eq!(s.class_labels().unwrap(), vec![0, 7]);
    }
}
