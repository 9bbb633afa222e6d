//! Minibatch training driver. Deterministic given `(data, config, seed)`:
//! fixed init, fixed shuffle order, reductions in fixed order.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{loss_grad, LossKind};
use super::network::{Network, Params};
use super::optim::{Optimizer, OptimizerKind};
use super::tensor::Tensor;
use super::NnError;
use crate::seed;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            optimizer: OptimizerKind::AdamLike,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(NnError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(NnError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Trains from a fresh fan-in init; returns final parameters and the per-epoch
/// mean training loss.
pub fn train(
    net: &Network,
    data: &Tensor,
    targets: &Tensor,
    loss_kind: LossKind,
    cfg: &TrainConfig,
) -> Result<(Params, Vec<f64>), NnError> {
    cfg.validate()?;
    let params = net.init_params(cfg.seed);
    train_from(net, params, data, targets, loss_kind, cfg)
}

/// Trains starting from the given parameters (warm start).
pub fn train_from(
    net: &Network,
    mut params: Params,
    data: &Tensor,
    targets: &Tensor,
    loss_kind: LossKind,
    cfg: &TrainConfig,
) -> Result<(Params, Vec<f64>), NnError> {
    cfg.validate()?;
    let n = data.shape()[0];
    if n == 0 {
        return Err(NnError::InvalidConfig("empty training data".into()));
    }
    let sample_numel: usize = net.input_shape().iter().product();
    let target_numel = targets.numel() / n;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, params.len());
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::stream(cfg.seed, 0x7368_7566_666c_65);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let (xb, yb) = gather(data, targets, chunk, net.input_shape(), target_numel, sample_numel);
            let cache = net.forward_cached(&params, &xb)?;
            let (value, grad) = loss_grad(loss_kind, cache.output(), &yb)?;
            if !value.is_finite() {
                return Err(NnError::TrainingDiverged { epoch });
            }
            epoch_loss += value * chunk.len() as f64;
            let (pgrads, _) = net.backward(&params, &cache, &grad);
            opt.step(params.as_mut_slice(), &pgrads);
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(NnError::TrainingDiverged { epoch });
        }
        curve.push(epoch_loss);
    }
    Ok((params, curve))
}

/// Copies the rows at `idx` into contiguous batch tensors.
pub fn gather(
    data: &Tensor,
    targets: &Tensor,
    idx: &[usize],
    input_shape: &[usize],
    target_numel: usize,
    sample_numel: usize,
) -> (Tensor, Tensor) {
    let mut xshape = vec![idx.len()];
    xshape.extend_from_slice(input_shape);
    let mut xb = Vec::with_capacity(idx.len() * sample_numel);
    let mut yb = Vec::with_capacity(idx.len() * target_numel);
    for &i in idx {
        xb.extend_from_slice(&data.data()[i * sample_numel..(i + 1) * sample_numel]);
        yb.extend_from_slice(&targets.data()[i * target_numel..(i + 1) * target_numel]);
    }
    (
        Tensor::from_vec(&xshape, xb),
        Tensor::from_vec(&[idx.len(), target_numel], yb),
    )
}
