//! Compact embeddings: prefix truncation and PCA.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{normalize_in_place, Matrix};

/// Keeps the first `d_prime` coordinates and renormalizes each row.
pub fn truncate_dims(set: &EmbeddingSet, d_prime: usize) -> Result<EmbeddingSet> {
    if d_prime == 0 || d_prime > set.dim() {
        return Err(Error::param(format!("cannot keep {d_prime} of {} dimensions", set.dim())));
    }
    let mut m = Matrix::zeros(set.count(), d_prime);
    for i in 0..set.count() {
        let row = m.row_mut(i);
        for (o, &x) in row.iter_mut().zip(set.row(i)) {
            *o = f64::from(x);
        }
        normalize_in_place(row, 1e-12).ok_or(Error::DegenerateVector(i))?;
    }
    EmbeddingSet::from_matrix(&m, Some(set.ids().to_vec()), set.labels().map(<[i64]>::to_vec))
}

/// Mean and leading covariance eigenvectors of a fit set.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d_prime × d`, one principal axis per row, largest eigenvalue first.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn fit(set: &EmbeddingSet, d_prime: usize) -> Result<Self> {
        let d = set.dim();
        if d_prime == 0 || d_prime > d {
            return Err(Error::param(format!("cannot keep {d_prime} of {d} dimensions")));
        }
        let n = set.count();
        if n < d_prime {
            return Err(Error::RankDeficient(d_prime));
        }
        let x = set.to_matrix();
        let mut mean = vec![0.0; d];
        for r in x.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut centered = vec![0.0; d];
        for r in x.iter_rows() {
            for ((c, &v), &m) in centered.iter_mut().zip(r).zip(&mean) {
                *c = v - m;
            }
            for a in 0..d {
                for b in a..d {
                    cov[(a, b)] += centered[a] * centered[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] /= n as f64;
                cov[(b, a)] = cov[(a, b)];
            }
        }

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let floor = top * 1e-10 + f64::MIN_POSITIVE;
        if eig.eigenvalues[order[d_prime - 1]] <= floor {
            return Err(Error::RankDeficient(d_prime));
        }

        let mut components = Matrix::zeros(d_prime, d);
        for (r, &c) in order.iter().take(d_prime).enumerate() {
            let v = eig.eigenvectors.column(c);
            // sign convention: largest-magnitude coordinate positive
            let mut pivot = 0;
            for i in 1..d {
                if v[i].abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..d {
                components[(r, i)] = sign * v[i];
            }
        }
        let eigenvalues = order.iter().take(d_prime).map(|&c| eig.eigenvalues[c]).collect();
        Ok(Self {
            mean,
            components,
            eigenvalues,
        })
    }

    /// Centered coordinates along the principal axes, not renormalized.
    pub fn project(&self, set: &EmbeddingSet) -> Result<Matrix> {
        if set.dim() != self.mean.len() {
            return Err(Error::shape(format!("set dimension {} vs PCA dimension {}", set.dim(), self.mean.len())));
        }
        let k = self.components.rows();
        let mut out = Matrix::zeros(set.count(), k);
        let mut centered = vec![0.0; self.mean.len()];
        for i in 0..set.count() {
            for ((c, &v), &m) in centered.iter_mut().zip(set.row(i)).zip(&self.mean) {
                *c = f64::from(v) - m;
            }
            for (r, o) in out.row_mut(i).iter_mut().enumerate() {
                *o = crate::linalg::dot(&centered, self.components.row(r));
            }
        }
        Ok(out)
    }
}

/// Fits PCA on `fit_set`, projects `apply_set` onto the top `d_prime` axes and renormalizes.
pub fn pca_reduce(fit_set: &EmbeddingSet, apply_set: &EmbeddingSet, d_prime: usize) -> Result<EmbeddingSet> {
    let model = PcaModel::fit(fit_set, d_prime)?;
    let mut proj = model.project(apply_set)?;
    for i in 0..proj.rows() {
        normalize_in_place(proj.row_mut(i), 1e-12).ok_or(Error::DegenerateVector(i))?;
    }
    EmbeddingSet::from_matrix(&proj, Some(apply_set.ids().to_vec()), apply_set.labels().map(<[i64]>::to_vec))
}
