use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::{purpose, stream};

/// Rows whose projection norm falls below this cannot be normalized.
pub const MIN_PROJECTION_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderInit {
    /// Identity (requires `input_dim == output_dim`).
    Identity,
    /// Gaussian entries with variance `1/input_dim`.
    #[default]
    Random,
}

/// Single linear layer followed by L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    /// `input_dim × output_dim`.
    pub weights: Matrix,
}

/// Forward values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    pub outputs: Matrix,
    pub norms: Vec<f64>,
}

impl LinearEncoder {
    pub fn new(weights: Matrix) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::ZeroDim);
        }
        Ok(Self { weights })
    }

    pub fn init(input_dim: usize, output_dim: usize, init: EncoderInit, seed: u64) -> Result<Self> {
        match init {
            EncoderInit::Identity => {
                if input_dim != output_dim {
                    return Err(Error::param(format!(
                        "identity init needs equal dimensions, got {input_dim} and {output_dim}"
                    )));
                }
                Self::new(Matrix::identity(input_dim))
            }
            EncoderInit::Random => {
                let mut rng = stream(seed, purpose::INIT, 0);
                let std = 1.0 / (input_dim as f64).sqrt();
                let mut w = Matrix::zeros(input_dim, output_dim);
                for x in w.as_mut_slice() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x = z * std;
                }
                Self::new(w)
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn encode(&self, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.encode_cached(inputs)?.outputs)
    }

    pub fn encode_cached(&self, inputs: &Matrix) -> Result<EncodeCache> {
        let mut z = inputs.matmul(&self.weights)?;
        let mut norms = Vec::with_capacity(z.rows());
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            let n = dot(row, row).sqrt();
            if !(n >= MIN_PROJECTION_NORM) {
                return Err(Error::DegenerateVector(i));
            }
            for x in row.iter_mut() {
                *x /= n;
            }
            norms.push(n);
        }
        Ok(EncodeCache { outputs: z, norms })
    }

    /// Encodes a whole set, keeping ids and labels.
    pub fn encode_set(&self, set: &EmbeddingSet) -> Result<EmbeddingSet> {
        let out = self.encode(&set.to_matrix())?;
        set.with_vectors(&out)
    }

    /// `dL/dW` given `dL/de` for each output row.
    ///
    /// With `mask`, the output gradient is restricted to the masked
    /// coordinates first. That is exact when the loss only sees the
    /// direction of the masked sub-vector, which makes it invariant to the
    /// other coordinates of the pre-normalization projection.
    pub fn backward(&self, inputs: &Matrix, cache: &EncodeCache, grad_out: &Matrix, mask: Option<&[bool]>) -> Matrix {
        let d = self.output_dim();
        let mut gz = Matrix::zeros(grad_out.rows(), d);
        for i in 0..grad_out.rows() {
            let g = grad_out.row(i);
            let e = cache.outputs.row(i);
            let radial = dot(g, e);
            let inv = 1.0 / cache.norms[i];
            for (j, o) in gz.row_mut(i).iter_mut().enumerate() {
                if mask.is_some_and(|m| !m[j]) {
                    continue;
                }
                *o = (g[j] - radial * e[j]) * inv;
            }
        }
        // dW = Xᵀ · dZ
        let mut gw = Matrix::zeros(self.input_dim(), d);
        for i in 0..inputs.rows() {
            let x = inputs.row(i);
            let gzi = gz.row(i);
            for (p, &xp) in x.iter().enumerate() {
                if xp == 0.0 {
                    continue;
                }
                for (o, &g) in gw.row_mut(p).iter_mut().zip(gzi) {
                    *o += xp * g;
                }
            }
        }
        gw
    }
}
