//! AdamW and SGD with momentum, with per-element state so that sparse
//! updates (a few prototype columns, a few feature coordinates) leave the
//! moments of untouched parameters alone.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Adamw,
    SgdMomentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum: f64,
}

impl OptimizerParams {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum: 0.9,
        }
    }
}

/// Optimizer state for one flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: Vec<u32>,
}

impl ParamState {
    pub fn new(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: vec![0; len],
        }
    }

    /// Updates `params[i]` for every `i` in `indices` with gradient `grads[i]`.
    pub fn update_indices(&mut self, opt: &OptimizerParams, params: &mut [f64], grads: &[f64], indices: impl Iterator<Item = usize>) {
        for i in indices {
            self.update_one(opt, i, &mut params[i], grads[i]);
        }
    }

    /// Updates `block[a]` for every `a` in `active`, where `block` starts at
    /// `offset` in the flat buffer this state tracks.
    pub fn update_block(&mut self, opt: &OptimizerParams, offset: usize, block: &mut [f64], grads: &[f64], active: &[usize]) {
        for &a in active {
            self.update_one(opt, offset + a, &mut block[a], grads[a]);
        }
    }

    /// Dense update of the whole buffer.
    pub fn update_all(&mut self, opt: &OptimizerParams, params: &mut [f64], grads: &[f64]) {
        let n = params.len();
        self.update_indices(opt, params, grads, 0..n);
    }

    #[inline]
    fn update_one(&mut self, opt: &OptimizerParams, i: usize, w: &mut f64, g: f64) {
        self.steps[i] += 1;
        match opt.kind {
            OptimizerKind::Adamw => {
                let t = self.steps[i] as i32;
                // decoupled decay: applied to the weight, never seen by the moments
                *w *= 1.0 - opt.lr * opt.weight_decay;
                let m = &mut self.first[i];
                let v = &mut self.second[i];
                *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
                *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
                let m_hat = *m / (1.0 - opt.beta1.powi(t));
                let v_hat = *v / (1.0 - opt.beta2.powi(t));
                *w -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
            }
            OptimizerKind::SgdMomentum => {
                let buf = &mut self.first[i];
                *buf = opt.momentum * *buf + g + opt.weight_decay * *w;
                *w -= opt.lr * *buf;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_decay_is_decoupled() {
        let opt = OptimizerParams::new(OptimizerKind::Adamw, 0.001, 0.05);
        let mut w = vec![0.7, -1.3, 2.0];
        let before = w.clone();
        let mut st = ParamState::new(3);
        st.update_all(&opt, &mut w, &[0.0; 3]);
        for (a, b) in w.iter().zip(&before) {
            assert_eq!(*a, b * (1.0 - 0.001 * 0.05));
        }
    }

    #[test]
    fn zero_lr_is_identity() {
        for kind in [OptimizerKind::Adamw, OptimizerKind::SgdMomentum] {
            let opt = OptimizerParams::new(kind, 0.0, 0.05);
            let mut w = vec![0.1, 0.2];
            let mut st = ParamState::new(2);
            for _ in 0..3 {
                st.update_all(&opt, &mut w, &[1.0, -4.0]);
            }
            assert_eq!(w, vec![0.1, 0.2]);
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let opt = OptimizerParams::new(OptimizerKind::Adamw, 0.01, 0.0);
        let mut w = vec![1.0];
        let mut st = ParamState::new(1);
        st.update_all(&opt, &mut w, &[3.0]);
        assert!((w[0] - (1.0 - 0.01)).abs() < 1e-9);
    }

    #[test]
    fn sparse_update_leaves_other_state() {
        let opt = OptimizerParams::new(OptimizerKind::Adamw, 0.1, 0.0);
        let mut w = vec![1.0, 1.0];
        let mut st = ParamState::new(2);
        st.update_indices(&opt, &mut w, &[1.0, 1.0], [1].into_iter());
        assert_eq!(w[0], 1.0);
        assert_eq!(st.steps, vec![0, 1]);
    }
}
