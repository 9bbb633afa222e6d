//! Classifier architecture shared by the judge and the One-vs-All evaluator:
//! a residual convolutional feature extractor over 256×2×1 inputs followed by
//! a task head.

use crate::nn::{LayerSpec, Network};
use crate::sim::SAMPLE_LEN;

/// Feature extractor: strided entry convolution, two residual blocks with a
/// stride-2 downsample between them, dense projection to 128 features.
pub fn feature_extractor_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::BatchNormFree,
        LayerSpec::Conv2D { filters: 32, kernel: (3, 2), stride: 1 },
        LayerSpec::ReLU,
        LayerSpec::Residual { filters: 32, kernel: 3 },
        LayerSpec::Conv2D { filters: 32, kernel: (3, 1), stride: 2 },
        LayerSpec::ReLU,
        LayerSpec::Residual { filters: 32, kernel: 3 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 128 },
        LayerSpec::ReLU,
    ]
}

/// Guards architecture drift; changing the extractor must be deliberate.
pub const FEATURE_EXTRACTOR_PARAM_COUNT: usize = 540_160;

pub enum HeadKind {
    /// Dense + softmax (closed-set / judge classifier).
    Softmax,
    /// Dense + per-head sigmoid (One-vs-All).
    Sigmoid,
}

/// Extractor plus a `outputs`-way head.
pub fn classifier_net(outputs: usize, head: HeadKind) -> Network {
    let mut layers = feature_extractor_layers();
    layers.push(LayerSpec::Dense { units: outputs });
    layers.push(match head {
        HeadKind::Softmax => LayerSpec::Softmax,
        HeadKind::Sigmoid => LayerSpec::Sigmoid,
    });
    Network::new(&[SAMPLE_LEN, 2, 1], layers).expect("classifier architecture is static")
}
