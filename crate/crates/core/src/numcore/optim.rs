use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::NumError;

fn check_grad(param: &Matrix, grad: &Matrix) -> Result<(), NumError> {
    param.check_same_shape(grad, "optimizer step")?;
    if !grad.is_finite() {
        return Err(NumError::NonFinite("gradient".into()));
    }
    Ok(())
}

/// `param -= lr * grad`. Rejects non-finite gradients without touching `param`.
pub fn sgd_step(param: &mut Matrix, grad: &Matrix, lr: f64) -> Result<(), NumError> {
    check_grad(param, grad)?;
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= lr * g;
    }
    if !param.is_finite() {
        return Err(NumError::NonFinite("parameter after sgd step".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter matrix.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(
    param: &mut Matrix,
    state: &mut AdamState,
    grad: &Matrix,
    lr: f64,
    cfg: AdamConfig,
) -> Result<(), NumError> {
    check_grad(param, grad)?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(state.m.data_mut().iter_mut().zip(state.v.data_mut().iter_mut()))
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    if !param.is_finite() {
        return Err(NumError::NonFinite("parameter after adam step".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer over an ordered list of parameter matrices.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    adam: AdamConfig,
    states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, shapes: &[(usize, usize)]) -> Self {
        let states = match kind {
            OptimizerKind::Adam => shapes.iter().map(|&(r, c)| AdamState::new(r, c)).collect(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Self {
            kind,
            lr,
            adam: AdamConfig::default(),
            states,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    /// Applies one update to every parameter. All gradients are validated
    /// before any parameter is modified.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<(), NumError> {
        if params.len() != grads.len() {
            return Err(NumError::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            check_grad(p, g)?;
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    sgd_step(p, g, self.lr)?;
                }
            }
            OptimizerKind::Adam => {
                for ((p, g), s) in params.iter_mut().zip(grads).zip(self.states.iter_mut()) {
                    adam_step(p, s, g, self.lr, self.adam)?;
                }
            }
        }
        Ok(())
    }
}
