//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    SgdMomentum,
    AdamLike,
}

/// Optimizer state for one parameter vector.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

const MOMENTUM: f32 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let v = match kind {
            OptimizerKind::SgdMomentum => Vec::new(),
            OptimizerKind::AdamLike => vec![0.0; n_params],
        };
        Optimizer {
            kind,
            lr: lr as f32,
            m: vec![0.0; n_params],
            v,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::SgdMomentum => {
                for ((p, g), m) in params.iter_mut().zip(grads).zip(self.m.iter_mut()) {
                    *m = MOMENTUM * *m + g;
                    *p -= self.lr * *m;
                }
            }
            OptimizerKind::AdamLike => {
                self.t += 1;
                let bc1 = 1.0 - BETA1.powi(self.t as i32);
                let bc2 = 1.0 - BETA2.powi(self.t as i32);
                for ((p, &g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    *m = (BETA1 * *m as f64 + (1.0 - BETA1) * g as f64) as f32;
                    *v = (BETA2 * *v as f64 + (1.0 - BETA2) * (g as f64) * (g as f64)) as f32;
                    let mh = *m as f64 / bc1;
                    let vh = *v as f64 / bc2;
                    *p -= (self.lr as f64 * mh / (vh.sqrt() + EPS)) as f32;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_moves_against_gradient() {
        let mut opt = Optimizer::new(OptimizerKind::AdamLike, 0.1, 2);
        let mut p = vec![1.0f32, -1.0];
        opt.step(&mut p, &[1.0, -1.0]);
        assert!(p[0] < 1.0);
        assert!(p[1] > -1.0);
    }

    #[test]
    fn sgd_momentum_accumulates_velocity() {
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum, 0.1, 1);
        let mut p = vec![0.0f32];
        opt.step(&mut p, &[1.0]);
        let d1 = -p[0];
        opt.step(&mut p, &[1.0]);
        let d2 = -p[0] - d1;
        assert!(d2 > d1, "second step should be larger under momentum");
    }
}
