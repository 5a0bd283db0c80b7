//! SGD, Adam and AdamW over flat parameter slices.
//!
//! Adam folds weight decay into the gradient; AdamW applies it directly to
//! the parameters (`p -= lr * wd * p`) before the moment update. SGD uses the
//! coupled form. Bias correction follows the usual `1 - beta^t` convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    #[default]
    AdamW,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::AdamW),
            _ => Err(Error::config(format!("unknown optimizer {s:?}, expected sgd, adam or adamw"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
        })
    }
}

/// First and second moments for one parameter array; empty for SGD.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> Moments<T> {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Moments::default(),
            _ => Moments { m: vec![T::zero(); len], v: vec![T::zero(); len] },
        }
    }

    /// Mutable views for arrays that must follow a rewired layer.
    pub fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        if self.m.is_empty() {
            Vec::new()
        } else {
            vec![&mut self.m[..], &mut self.v[..]]
        }
    }
}

/// Hyperparameters for one update of one parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    /// 1-based update counter used for bias correction.
    pub t: u64,
}

/// Applies one update in place. A non-finite gradient aborts before any
/// parameter is touched.
pub fn optimizer_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    state: &mut Moments<T>,
    hp: StepParams,
    what: &str,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!("{what}: {} parameters but {} gradients", params.len(), grads.len())));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { what: format!("gradient of {what} at index {i} ({})", grads[i]), step: hp.t });
    }
    let lr = T::of(hp.lr);
    let wd = T::of(hp.weight_decay);
    if hp.kind == OptimizerKind::Sgd {
        for (p, &g) in params.iter_mut().zip(grads) {
            *p = *p - lr * (g + wd * *p);
        }
        return Ok(());
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(format!("{what}: optimizer moments do not match the parameters")));
    }
    let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
    let (one_b1, one_b2) = (T::of(1.0 - ADAM_BETA1), T::of(1.0 - ADAM_BETA2));
    let t = hp.t.max(1) as i32;
    let bc1 = T::of(1.0 - ADAM_BETA1.powi(t));
    let bc2 = T::of(1.0 - ADAM_BETA2.powi(t));
    let eps = T::of(ADAM_EPS);
    let decoupled = hp.kind == OptimizerKind::AdamW;
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let g = if decoupled {
            *p = *p - lr * wd * *p;
            g
        } else {
            g + wd * *p
        };
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
