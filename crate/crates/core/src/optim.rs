//! First-order optimizers over a [`ParamStore`].

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Momentum coefficient for SGD.
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::Config { field: field.into(), reason: reason.into() })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("train.optimizer.learning_rate", "must be a positive finite number");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("train.optimizer.beta", "betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("train.optimizer.eps", "must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("train.optimizer.momentum", "must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Optimizer with per-parameter moment buffers, shaped like their parameters.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: OptimizerConfig, store: &ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let zeros = |_: usize| -> Vec<Vec<T>> {
            store.iter().map(|(_, _, t)| alloc::vec![T::zero(); t.numel()]).collect()
        };
        let second = match config.kind {
            OptimizerKind::Adam => zeros(0),
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Ok(OptimizerState { config, step: 0, first: zeros(0), second })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated `grad` buffers and clears them.
    /// Parameters without a gradient (frozen or unused) are left untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let c = self.config;
        let lr = T::from_f64_lossy(c.learning_rate);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let t = store.get_mut(id);
            let g = match t.grad() {
                Some(g) if t.requires_grad() => g.to_vec(),
                _ => continue,
            };
            match c.kind {
                OptimizerKind::SgdMomentum => {
                    let mu = T::from_f64_lossy(c.momentum);
                    let m = &mut self.first[i];
                    for ((p, v), &gv) in t.data_mut().iter_mut().zip(m.iter_mut()).zip(&g) {
                        *v = mu * *v + gv;
                        *p = *p - lr * *v;
                    }
                }
                OptimizerKind::Adam => {
                    let b1 = T::from_f64_lossy(c.beta1);
                    let b2 = T::from_f64_lossy(c.beta2);
                    let eps = T::from_f64_lossy(c.eps);
                    let bc1 = T::from_f64_lossy(1.0 - Float::powf(c.beta1, self.step as f64));
                    let bc2 = T::from_f64_lossy(1.0 - Float::powf(c.beta2, self.step as f64));
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (((p, mi), vi), &gv) in t.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(&g) {
                        *mi = b1 * *mi + (T::one() - b1) * gv;
                        *vi = b2 * *vi + (T::one() - b2) * gv * gv;
                        let mhat = *mi / bc1;
                        let vhat = *vi / bc2;
                        *p = *p - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            t.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn quadratic_store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("x", Tensor::new(&[2], alloc::vec![3.0, -2.0]).unwrap()).unwrap();
        s
    }

    fn run(kind: OptimizerKind, lr: f64, steps: usize) -> Vec<f64> {
        let mut store = quadratic_store();
        let cfg = OptimizerConfig { kind, learning_rate: lr, ..Default::default() };
        let mut opt = OptimizerState::new(cfg, &store).unwrap();
        let id = store.find("x").unwrap();
        for _ in 0..steps {
            let g: Vec<f64> = store.get(id).data().iter().map(|v| 2.0 * v).collect();
            store.get_mut(id).accumulate_grad(&g).unwrap();
            opt.step(&mut store);
        }
        store.get(id).data().to_vec()
    }

    #[test]
    fn both_kinds_minimize_a_quadratic() {
        for kind in [OptimizerKind::Adam, OptimizerKind::SgdMomentum] {
            let x = run(kind, 0.05, 500);
            assert!(x.iter().all(|v| v.abs() < 1e-2), "{kind:?} ended at {x:?}");
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let x = run(OptimizerKind::Adam, 0.1, 1);
        assert!((x[0] - 2.9).abs() < 1e-6 && (x[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = quadratic_store();
        let id = store.find("x").unwrap();
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &store).unwrap();
        store.get_mut(id).accumulate_grad(&[1.0, 1.0]).unwrap();
        store.set_trainable(&[id], false);
        opt.step(&mut store);
        assert_eq!(store.get(id).data(), &[3.0, -2.0]);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        let store = quadratic_store();
        let cfg = OptimizerConfig { learning_rate: 0.0, ..Default::default() };
        assert!(OptimizerState::new(cfg, &store).is_err());
    }
}
