//! Minimal differentiable-computation substrate.
//!
//! Sized for the small networks used here: dense layers, 2-D convolution and
//! transposed convolution that stride along the time axis only, residual
//! blocks, the usual activations and losses, and first-order optimizers.
//! `backward` also returns the gradient with respect to the network input,
//! which the latent-space optimization relies on.
//!
//! All tensor data is `f32`; loss reductions accumulate in `f64`. Parallel
//! sections only ever split work along batch rows, never along a reduction,
//! so results are bit-identical regardless of thread count.

mod gemm;
mod layer;
mod loss;
mod model_io;
mod network;
mod optim;
mod tensor;
mod train;

pub use layer::LayerSpec;
pub use loss::{loss, loss_grad, loss_per_row, LossKind};
pub use model_io::{load_params, save_params};
pub use network::{Cache, Network, Params};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::Tensor;
pub use train::{gather, train, train_from, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error at layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },
    #[error("non-finite loss input")]
    NonFiniteLossInput,
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("model io: {0}")]
    ModelIo(String),
}
