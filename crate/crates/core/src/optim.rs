//! Row-sparse optimizers for embedding tables.
//!
//! Adam here is the lazy variant: each row keeps its own step counter and its
//! moments only decay when the row receives a gradient. Rows absent from a
//! gradient are left bitwise untouched, moments included.

use crate::embedding::{EmbeddingMatrix, SparseGrad};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            return Err(Error::config(format!("eps must be non-negative, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Per-row Adam moments and step counters for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: EmbeddingMatrix,
    pub v: EmbeddingMatrix,
    pub steps: Vec<u64>,
}

impl AdamState {
    pub fn for_params(params: &EmbeddingMatrix) -> Self {
        AdamState {
            m: EmbeddingMatrix::zeros(params.rows(), params.dim()),
            v: EmbeddingMatrix::zeros(params.rows(), params.dim()),
            steps: vec![0; params.rows()],
        }
    }

    pub fn reset(&mut self) {
        self.m.as_mut_slice().fill(0.0);
        self.v.as_mut_slice().fill(0.0);
        self.steps.fill(0);
    }

    pub fn matches(&self, params: &EmbeddingMatrix) -> bool {
        self.m.same_shape(params) && self.v.same_shape(params) && self.steps.len() == params.rows()
    }
}

/// Applies one optimizer step to the rows present in `grads`.
pub fn step(
    params: &mut EmbeddingMatrix,
    grads: &SparseGrad,
    state: &mut AdamState,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if grads.dim() != params.dim() {
        return Err(Error::contract(format!(
            "gradient width {} does not match parameter width {}",
            grads.dim(),
            params.dim()
        )));
    }
    if !state.matches(params) {
        return Err(Error::contract("optimizer state shape does not match parameters"));
    }
    if let Some(bad) = grads.ids().iter().find(|&&id| id as usize >= params.rows()) {
        return Err(Error::contract(format!(
            "gradient row {bad} outside a {}-row matrix",
            params.rows()
        )));
    }

    match cfg.kind {
        OptimizerKind::Sgd => {
            for (id, g) in grads.iter() {
                for (p, g) in params.row_mut(id as usize).iter_mut().zip(g) {
                    *p -= cfg.lr * g;
                }
            }
        }
        OptimizerKind::Adam => {
            for (id, g) in grads.iter() {
                let row = id as usize;
                state.steps[row] += 1;
                let t = state.steps[row] as i32;
                let bias1 = 1.0 - cfg.beta1.powi(t);
                let bias2 = 1.0 - cfg.beta2.powi(t);
                let m = state.m.row_mut(row);
                for (m, g) in m.iter_mut().zip(g) {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                }
                let v = state.v.row_mut(row);
                for (v, g) in v.iter_mut().zip(g) {
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                }
                let (m, v) = (state.m.row(row), state.v.row(row));
                for ((p, m), v) in params.row_mut(row).iter_mut().zip(m).zip(v) {
                    let m_hat = m / bias1;
                    let v_hat = v / bias2;
                    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                }
            }
        }
    }
    Ok(())
}
