//! Generative outlier models: VAE and conditional VAE trained on known
//! outlier samples, and the plain autoencoder the blind methods build on.
//!
//! The encoder is a convolutional trunk (two strided convolutions, flatten)
//! followed by a dense head emitting `2L` values for the stochastic models or
//! `L` for the plain autoencoder. The decoder is dense, reshape, then three
//! transposed convolutions back to 256×2×1. The conditional variant consumes
//! a one-hot class vector on both sides: concatenated to the trunk features
//! at the encoder head, and to `z` at the decoder input. The trunk is
//! identical across conditioned and unconditioned models, so a single-class
//! CVAE trains like a plain VAE with one constant extra input.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::nn::{
    load_params, loss_grad, save_params, LayerSpec, LossKind, Network, NnError, Optimizer,
    OptimizerKind, Params, Tensor,
};
use crate::seed;
use crate::sim::{SignalSample, SimError, SAMPLE_LEN};

/// Latent dimension used across the pipeline unless overridden.
pub const DEFAULT_LATENT_DIM: usize = 32;
/// Generated-outlier budget used by the experiments unless overridden.
pub const GENERATION_BUDGET: usize = 7500;

const SAMPLE_NUMEL: usize = SAMPLE_LEN * 2;
const TRUNK_FEATURES: usize = 64 * 32;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("label out of range: {label} with {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("class {class} has {got} samples, need at least {needed}")]
    ClassTooSmall { class: usize, got: usize, needed: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("model io: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GenTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Weight on the KL term of the objective.
    pub beta: f64,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        GenTrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            beta: 1.0,
        }
    }
}

/// Loss components recorded per epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

// ---------------------------------------------------------------------------
// architectures
// ---------------------------------------------------------------------------

fn trunk_net() -> Network {
    Network::new(
        &[SAMPLE_LEN, 2, 1],
        vec![
            LayerSpec::BatchNormFree,
            LayerSpec::Conv2D { filters: 16, kernel: (5, 2), stride: 2 },
            LayerSpec::ReLU,
            LayerSpec::Conv2D { filters: 32, kernel: (5, 1), stride: 2 },
            LayerSpec::ReLU,
            LayerSpec::Flatten,
        ],
    )
    .expect("encoder trunk is static")
}

fn head_net(latent_dim: usize, num_classes: usize, stochastic: bool) -> Network {
    let out = if stochastic { 2 * latent_dim } else { latent_dim };
    Network::new(
        &[TRUNK_FEATURES + num_classes],
        vec![LayerSpec::Dense { units: out }],
    )
    .expect("encoder head is static")
}

fn decoder_net(latent_dim: usize, num_classes: usize) -> Network {
    Network::new(
        &[latent_dim + num_classes],
        vec![
            LayerSpec::Dense { units: TRUNK_FEATURES },
            LayerSpec::Reshape { shape: vec![64, 1, 32] },
            LayerSpec::ConvT2D { filters: 32, kernel: (5, 1), stride: 2 },
            LayerSpec::ReLU,
            LayerSpec::ConvT2D { filters: 16, kernel: (5, 2), stride: 2 },
            LayerSpec::ReLU,
            LayerSpec::ConvT2D { filters: 1, kernel: (1, 1), stride: 1 },
        ],
    )
    .expect("decoder architecture is static")
}

fn image_batch(samples: &[&SignalSample], rows: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(rows.len() * SAMPLE_NUMEL);
    for &si in rows {
        data.extend(samples[si].flat());
    }
    Tensor::from_vec(&[rows.len(), SAMPLE_LEN, 2, 1], data)
}

/// Centered one-hot encoding of a class: `delta(k, c) - 1/K`. Carries the
/// same information as the raw one-hot for any K; for a single class the
/// encoding is identically zero, so conditioning on one class is exactly
/// inert and the model reduces to its unconditioned twin.
fn class_encoding(class: usize, num_classes: usize) -> impl Iterator<Item = f32> {
    let mean = 1.0 / num_classes as f32;
    (0..num_classes).map(move |k| f32::from(k == class) - mean)
}

/// Appends centered one-hot columns to a feature matrix.
fn concat_onehot(features: &Tensor, labels: &[usize], num_classes: usize) -> Tensor {
    if num_classes == 0 {
        return features.clone();
    }
    let rows = features.shape()[0];
    let cols = features.numel() / rows;
    let w = cols + num_classes;
    let mut data = vec![0.0f32; rows * w];
    for r in 0..rows {
        data[r * w..r * w + cols].copy_from_slice(&features.data()[r * cols..(r + 1) * cols]);
        for (dst, v) in data[r * w + cols..(r + 1) * w].iter_mut().zip(class_encoding(labels[r], num_classes)) {
            *dst = v;
        }
    }
    Tensor::from_vec(&[rows, w], data)
}

fn decoder_input(z: &[Vec<f32>], labels: Option<(&[usize], usize)>) -> Tensor {
    let l = z.first().map(|v| v.len()).unwrap_or(0);
    let k = labels.map(|(_, k)| k).unwrap_or(0);
    let mut data = vec![0.0f32; z.len() * (l + k)];
    for (bi, zv) in z.iter().enumerate() {
        data[bi * (l + k)..bi * (l + k) + l].copy_from_slice(zv);
        if let Some((labels, num_classes)) = labels {
            for (dst, v) in data[bi * (l + k) + l..(bi + 1) * (l + k)]
                .iter_mut()
                .zip(class_encoding(labels[bi], num_classes))
            {
                *dst = v;
            }
        }
    }
    Tensor::from_vec(&[z.len(), l + k], data)
}

// ---------------------------------------------------------------------------
// models
// ---------------------------------------------------------------------------

/// Encoder parameter bundle shared by all three model kinds.
struct Encoder {
    trunk: Network,
    head: Network,
    trunk_params: Params,
    head_params: Params,
    num_classes: usize,
}

impl Encoder {
    fn forward(&self, samples: &[&SignalSample], labels: &[usize]) -> Result<Tensor, GenError> {
        let rows: Vec<usize> = (0..samples.len()).collect();
        let x = image_batch(samples, &rows);
        let feats = self.trunk.forward(&self.trunk_params, &x)?;
        let head_in = concat_onehot(&feats, labels, self.num_classes);
        Ok(self.head.forward(&self.head_params, &head_in)?)
    }
}

/// Variational autoencoder; encoder emits `(mu, logvar)`.
pub struct VaeModel {
    pub latent_dim: usize,
    pub loss_curve: Vec<EpochLoss>,
    encoder: Encoder,
    decoder: Network,
    dec_params: Params,
}

/// Conditional VAE: one-hot class input on both encoder and decoder.
pub struct CvaeModel {
    pub latent_dim: usize,
    pub num_classes: usize,
    pub loss_curve: Vec<EpochLoss>,
    encoder: Encoder,
    decoder: Network,
    dec_params: Params,
}

/// Deterministic autoencoder used by the blind generation methods.
pub struct AeModel {
    pub latent_dim: usize,
    pub loss_curve: Vec<f64>,
    encoder: Encoder,
    decoder: Network,
    dec_params: Params,
}

// ---------------------------------------------------------------------------
// shared VAE/CVAE trainer
// ---------------------------------------------------------------------------

struct VaeParts {
    encoder: Encoder,
    decoder: Network,
    dec_params: Params,
    curve: Vec<EpochLoss>,
}

/// `num_classes == 0` trains an unconditioned VAE.
fn train_vae_parts(
    samples: &[&SignalSample],
    labels: &[usize],
    num_classes: usize,
    latent_dim: usize,
    cfg: &GenTrainConfig,
) -> Result<VaeParts, GenError> {
    let n = samples.len();
    let trunk = trunk_net();
    let head = head_net(latent_dim, num_classes, true);
    let decoder = decoder_net(latent_dim, num_classes);
    let mut trunk_params = trunk.init_params(seed::derive(cfg.seed, 0x656e63));
    let mut head_params = head.init_params(seed::derive(cfg.seed, 0x6865_6164));
    let mut dec_params = decoder.init_params(seed::derive(cfg.seed, 0x646563));
    // Condition weights start at zero: a conditioned model begins at exactly
    // the unconditioned model's function and learns the class offsets from
    // nothing. The live rows are rescaled to the unconditioned fan-in limit.
    condition_aware_init(&mut head_params, TRUNK_FEATURES, num_classes, 2 * latent_dim);
    condition_aware_init(&mut dec_params, latent_dim, num_classes, TRUNK_FEATURES);
    let mut trunk_opt =
        Optimizer::new(OptimizerKind::AdamLike, cfg.learning_rate, trunk_params.len());
    let mut head_opt = Optimizer::new(OptimizerKind::AdamLike, cfg.learning_rate, head_params.len());
    let mut dec_opt = Optimizer::new(OptimizerKind::AdamLike, cfg.learning_rate, dec_params.len());

    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = seed::stream(cfg.seed, 0x7661_6573_6866);
    let mut noise_rng = seed::stream(cfg.seed, 0x7661_656e_6f69);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut sums = EpochLoss { total: 0.0, reconstruction: 0.0, kl: 0.0 };

        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let x = image_batch(samples, chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();

            let trunk_cache = trunk.forward_cached(&trunk_params, &x)?;
            let head_in = concat_onehot(trunk_cache.output(), &batch_labels, num_classes);
            let head_cache = head.forward_cached(&head_params, &head_in)?;
            let enc_out = head_cache.output().clone(); // (B, 2L)

            // reparameterize: z = mu + exp(logvar/2) * eta
            let mut z = vec![vec![0.0f32; latent_dim]; b];
            let mut eta = vec![0.0f32; b * latent_dim];
            for (bi, zrow) in z.iter_mut().enumerate() {
                for d in 0..latent_dim {
                    let mu = enc_out.data()[bi * 2 * latent_dim + d];
                    let lv = enc_out.data()[bi * 2 * latent_dim + latent_dim + d];
                    let e = seed::randn(&mut noise_rng) as f32;
                    eta[bi * latent_dim + d] = e;
                    zrow[d] = mu + (0.5 * lv).exp() * e;
                }
            }
            let zin = decoder_input(
                &z,
                (num_classes > 0).then_some((batch_labels.as_slice(), num_classes)),
            );

            let dec_cache = decoder.forward_cached(&dec_params, &zin)?;
            let recon = dec_cache.output().clone();

            // reconstruction: squared error summed per sample, mean over batch
            let (mse, mse_grad) = loss_grad(LossKind::Mse, &recon, &x)?;
            let recon_term = mse * SAMPLE_NUMEL as f64;
            let mut recon_grad = mse_grad;
            for v in recon_grad.data_mut() {
                *v *= SAMPLE_NUMEL as f32;
            }

            let (kl, kl_grad) = loss_grad(LossKind::GaussianKl, &enc_out, &enc_out)?;
            let total = recon_term + cfg.beta * kl;
            if !total.is_finite() {
                return Err(GenError::TrainingDiverged { epoch });
            }

            let (dec_grads, dz_full) = decoder.backward(&dec_params, &dec_cache, &recon_grad);

            // route the decoder input gradient back through reparameterization
            let mut enc_out_grad = Tensor::zeros(enc_out.shape());
            {
                let g = enc_out_grad.data_mut();
                let zin_w = latent_dim + num_classes;
                for bi in 0..b {
                    for d in 0..latent_dim {
                        let dzv = dz_full.data()[bi * zin_w + d];
                        let lv = enc_out.data()[bi * 2 * latent_dim + latent_dim + d];
                        let e = eta[bi * latent_dim + d];
                        g[bi * 2 * latent_dim + d] += dzv; // dz/dmu = 1
                        g[bi * 2 * latent_dim + latent_dim + d] +=
                            dzv * e * 0.5 * (0.5 * lv).exp();
                    }
                }
                for (gv, &kv) in g.iter_mut().zip(kl_grad.data()) {
                    *gv += cfg.beta as f32 * kv;
                }
            }

            let (head_grads, head_in_grad) = head.backward(&head_params, &head_cache, &enc_out_grad);
            let feats_grad = strip_onehot_cols(&head_in_grad, num_classes);
            let (trunk_grads, _) = trunk.backward(&trunk_params, &trunk_cache, &feats_grad);

            trunk_opt.step(trunk_params.as_mut_slice(), &trunk_grads);
            head_opt.step(head_params.as_mut_slice(), &head_grads);
            dec_opt.step(dec_params.as_mut_slice(), &dec_grads);

            sums.total += total * b as f64;
            sums.reconstruction += recon_term * b as f64;
            sums.kl += kl * b as f64;
        }

        let epoch_loss = EpochLoss {
            total: sums.total / n as f64,
            reconstruction: sums.reconstruction / n as f64,
            kl: sums.kl / n as f64,
        };
        if !epoch_loss.total.is_finite()
            || !trunk_params.is_finite()
            || !head_params.is_finite()
            || !dec_params.is_finite()
        {
            return Err(GenError::TrainingDiverged { epoch });
        }
        curve.push(epoch_loss);
    }

    Ok(VaeParts {
        encoder: Encoder { trunk, head, trunk_params, head_params, num_classes },
        decoder,
        dec_params,
        curve,
    })
}

/// Adjusts the first dense layer of a conditioned network: the weight rows
/// fed by the one-hot inputs (stored `(shared_in + k, out)` row-major, so at
/// the end of the block) are zeroed, and the live rows are rescaled so their
/// spread matches the fan-in of the unconditioned network. A `k`-class model
/// thereby starts at exactly the function its unconditioned twin starts at.
fn condition_aware_init(params: &mut Params, shared_in: usize, k: usize, out: usize) {
    if k == 0 {
        return;
    }
    let rescale = (((shared_in + k) as f64) / (shared_in as f64)).sqrt() as f32;
    let p = params.as_mut_slice();
    for v in p[..shared_in * out].iter_mut() {
        *v *= rescale;
    }
    p[shared_in * out..(shared_in + k) * out].fill(0.0);
}

/// Drops the trailing one-hot columns from a `(B, F + K)` gradient.
fn strip_onehot_cols(grad: &Tensor, num_classes: usize) -> Tensor {
    if num_classes == 0 {
        return grad.clone();
    }
    let rows = grad.shape()[0];
    let w = grad.numel() / rows;
    let cols = w - num_classes;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        data.extend_from_slice(&grad.data()[r * w..r * w + cols]);
    }
    Tensor::from_vec(&[rows, cols], data)
}

// ---------------------------------------------------------------------------
// public operations
// ---------------------------------------------------------------------------

pub fn train_vae(
    samples: &[&SignalSample],
    latent_dim: usize,
    cfg: &GenTrainConfig,
) -> Result<VaeModel, GenError> {
    if samples.len() < 50 {
        return Err(GenError::TooFewSamples { needed: 50, got: samples.len() });
    }
    let labels = vec![0usize; samples.len()];
    let parts = train_vae_parts(samples, &labels, 0, latent_dim, cfg)?;
    Ok(VaeModel {
        latent_dim,
        loss_curve: parts.curve,
        encoder: parts.encoder,
        decoder: parts.decoder,
        dec_params: parts.dec_params,
    })
}

pub fn train_cvae(
    samples: &[(&SignalSample, usize)],
    num_classes: usize,
    latent_dim: usize,
    cfg: &GenTrainConfig,
) -> Result<CvaeModel, GenError> {
    if num_classes == 0 {
        return Err(GenError::LabelOutOfRange { label: 0, num_classes: 0 });
    }
    let mut counts = vec![0usize; num_classes];
    for &(_, label) in samples {
        if label >= num_classes {
            return Err(GenError::LabelOutOfRange { label, num_classes });
        }
        counts[label] += 1;
    }
    for (class, &got) in counts.iter().enumerate() {
        if got < 10 {
            return Err(GenError::ClassTooSmall { class, got, needed: 10 });
        }
    }
    let (xs, labels): (Vec<&SignalSample>, Vec<usize>) = samples.iter().copied().unzip();
    let parts = train_vae_parts(&xs, &labels, num_classes, latent_dim, cfg)?;
    Ok(CvaeModel {
        latent_dim,
        num_classes,
        loss_curve: parts.curve,
        encoder: parts.encoder,
        decoder: parts.decoder,
        dec_params: parts.dec_params,
    })
}

impl VaeModel {
    /// Deterministic encoding: the posterior mean.
    pub fn encode(&self, samples: &[&SignalSample]) -> Result<Tensor, GenError> {
        let out = self.encoder.forward(samples, &vec![0; samples.len()])?;
        Ok(take_mu(&out, self.latent_dim))
    }

    pub fn decode(&self, z: &Tensor) -> Result<Vec<SignalSample>, GenError> {
        decode_with(&self.decoder, &self.dec_params, z)
    }

    pub fn save(&self, path: &Path) -> Result<(), GenError> {
        save_model(path, ModelKind::Vae, self.latent_dim, 0, &self.encoder, &self.dec_params, &self.decoder)
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        let (meta, encoder, dec_params) = load_model(path, ModelKind::Vae)?;
        Ok(VaeModel {
            latent_dim: meta.latent_dim,
            loss_curve: Vec::new(),
            encoder,
            decoder: decoder_net(meta.latent_dim, 0),
            dec_params,
        })
    }
}

fn take_mu(enc_out: &Tensor, latent_dim: usize) -> Tensor {
    let rows = enc_out.shape()[0];
    let mut mu = Vec::with_capacity(rows * latent_dim);
    for bi in 0..rows {
        mu.extend_from_slice(&enc_out.data()[bi * 2 * latent_dim..bi * 2 * latent_dim + latent_dim]);
    }
    Tensor::from_vec(&[rows, latent_dim], mu)
}

/// Draws `count` samples by decoding standard-normal latents.
pub fn sample_vae(
    model: &VaeModel,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SignalSample>, GenError> {
    let mut out = Vec::with_capacity(count);
    for chunk in chunked(count, 256) {
        let z: Vec<Vec<f32>> = (0..chunk)
            .map(|_| (0..model.latent_dim).map(|_| seed::randn(rng) as f32).collect())
            .collect();
        out.extend(model.decode(&decoder_input(&z, None))?);
    }
    Ok(out)
}

impl CvaeModel {
    pub fn decode(&self, z: &Tensor, labels: &[usize]) -> Result<Vec<SignalSample>, GenError> {
        for &l in labels {
            if l >= self.num_classes {
                return Err(GenError::LabelOutOfRange { label: l, num_classes: self.num_classes });
            }
        }
        let rows = z.shape()[0];
        let zs: Vec<Vec<f32>> = (0..rows)
            .map(|bi| z.data()[bi * self.latent_dim..(bi + 1) * self.latent_dim].to_vec())
            .collect();
        let zin = decoder_input(&zs, Some((labels, self.num_classes)));
        decode_with(&self.decoder, &self.dec_params, &zin)
    }

    pub fn save(&self, path: &Path) -> Result<(), GenError> {
        save_model(path, ModelKind::Cvae, self.latent_dim, self.num_classes, &self.encoder, &self.dec_params, &self.decoder)
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        let (meta, encoder, dec_params) = load_model(path, ModelKind::Cvae)?;
        Ok(CvaeModel {
            latent_dim: meta.latent_dim,
            num_classes: meta.num_classes,
            loss_curve: Vec::new(),
            encoder,
            decoder: decoder_net(meta.latent_dim, meta.num_classes),
            dec_params,
        })
    }
}

/// Exact floor/remainder split of `total` across `num_classes` classes:
/// class c gets `total / num_classes`, plus one while `c < total % num_classes`.
pub fn proportional_counts(total: usize, num_classes: usize) -> Vec<usize> {
    let base = total / num_classes;
    let rem = total % num_classes;
    (0..num_classes).map(|c| base + usize::from(c < rem)).collect()
}

/// Draws labeled samples, exactly `floor(total/K)` per class with the
/// remainder assigned to the lowest class ids.
pub fn sample_cvae(
    model: &CvaeModel,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(SignalSample, usize)>, GenError> {
    if total < model.num_classes {
        return Err(GenError::TooFewSamples { needed: model.num_classes, got: total });
    }
    let counts = proportional_counts(total, model.num_classes);
    let mut out = Vec::with_capacity(total);
    for (class, &count) in counts.iter().enumerate() {
        for chunk in chunked(count, 256) {
            let z: Vec<Vec<f32>> = (0..chunk)
                .map(|_| (0..model.latent_dim).map(|_| seed::randn(rng) as f32).collect())
                .collect();
            let labels = vec![class; chunk];
            let zt = Tensor::from_vec(
                &[chunk, model.latent_dim],
                z.iter().flatten().copied().collect(),
            );
            for s in model.decode(&zt, &labels)? {
                out.push((s, class));
            }
        }
    }
    Ok(out)
}

pub fn train_autoencoder(
    samples: &[&SignalSample],
    latent_dim: usize,
    cfg: &GenTrainConfig,
) -> Result<AeModel, GenError> {
    if samples.is_empty() {
        return Err(GenError::TooFewSamples { needed: 1, got: 0 });
    }
    let trunk = trunk_net();
    let head = head_net(latent_dim, 0, false);
    let decoder = decoder_net(latent_dim, 0);
    // end-to-end composition trained with plain MSE against flat targets
    let mut layers = trunk.layers().to_vec();
    layers.extend(head.layers().to_vec());
    layers.extend(decoder.layers().to_vec());
    layers.push(LayerSpec::Flatten);
    let composed = Network::new(&[SAMPLE_LEN, 2, 1], layers).expect("ae composes");

    let rows: Vec<usize> = (0..samples.len()).collect();
    let x = image_batch(samples, &rows);
    let targets = Tensor::from_vec(
        &[samples.len(), SAMPLE_NUMEL],
        samples.iter().flat_map(|s| s.flat()).collect(),
    );
    let tcfg = crate::nn::TrainConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
        optimizer: OptimizerKind::AdamLike,
    };
    let (params, curve) = crate::nn::train(&composed, &x, &targets, LossKind::Mse, &tcfg)
        .map_err(|e| match e {
            NnError::TrainingDiverged { epoch } => GenError::TrainingDiverged { epoch },
            other => GenError::Nn(other),
        })?;

    let trunk_len = trunk.param_count();
    let head_len = head.param_count();
    let p = params.as_slice();
    Ok(AeModel {
        latent_dim,
        loss_curve: curve,
        encoder: Encoder {
            trunk,
            head,
            trunk_params: Params::from_vec(p[..trunk_len].to_vec()),
            head_params: Params::from_vec(p[trunk_len..trunk_len + head_len].to_vec()),
            num_classes: 0,
        },
        decoder,
        dec_params: Params::from_vec(p[trunk_len + head_len..].to_vec()),
    })
}

impl AeModel {
    pub fn encode(&self, samples: &[&SignalSample]) -> Result<Tensor, GenError> {
        self.encoder.forward(samples, &vec![0; samples.len()])
    }

    pub fn decode(&self, z: &Tensor) -> Result<Vec<SignalSample>, GenError> {
        decode_with(&self.decoder, &self.dec_params, z)
    }

    /// Decoder network and parameters, for callers that differentiate
    /// through the decoder.
    pub fn decoder_parts(&self) -> (&Network, &Params) {
        (&self.decoder, &self.dec_params)
    }

    /// Corrupts the decoder so every decode is non-finite (error-path tests).
    #[cfg(test)]
    pub(crate) fn poison_for_tests(&mut self) {
        self.dec_params.as_mut_slice().fill(f32::MAX);
    }

    pub fn save(&self, path: &Path) -> Result<(), GenError> {
        save_model(path, ModelKind::Ae, self.latent_dim, 0, &self.encoder, &self.dec_params, &self.decoder)
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        let (meta, encoder, dec_params) = load_model(path, ModelKind::Ae)?;
        Ok(AeModel {
            latent_dim: meta.latent_dim,
            loss_curve: Vec::new(),
            encoder,
            decoder: decoder_net(meta.latent_dim, 0),
            dec_params,
        })
    }
}

fn decode_with(
    decoder: &Network,
    params: &Params,
    z: &Tensor,
) -> Result<Vec<SignalSample>, GenError> {
    let out = decoder.forward(params, z)?;
    let rows = z.shape()[0];
    let mut samples = Vec::with_capacity(rows);
    for bi in 0..rows {
        samples.push(SignalSample::from_flat(
            &out.data()[bi * SAMPLE_NUMEL..(bi + 1) * SAMPLE_NUMEL],
        )?);
    }
    Ok(samples)
}

fn chunked(total: usize, size: usize) -> impl Iterator<Item = usize> {
    let full = total / size;
    let rem = total % size;
    (0..full).map(move |_| size).chain((rem > 0).then_some(rem))
}

// ---------------------------------------------------------------------------
// model files: ORNN parameter blob (trunk, head, decoder) + JSON sidecar
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vae,
    Cvae,
    Ae,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    kind: ModelKind,
    latent_dim: usize,
    num_classes: usize,
}

fn combined_hash(trunk: &Network, head: &Network, decoder: &Network) -> u64 {
    trunk.spec_hash() ^ head.spec_hash().rotate_left(1) ^ decoder.spec_hash().rotate_left(2)
}

fn save_model(
    path: &Path,
    kind: ModelKind,
    latent_dim: usize,
    num_classes: usize,
    encoder: &Encoder,
    dec_params: &Params,
    decoder: &Network,
) -> Result<(), GenError> {
    let mut all = encoder.trunk_params.as_slice().to_vec();
    all.extend_from_slice(encoder.head_params.as_slice());
    all.extend_from_slice(dec_params.as_slice());
    save_params(path, combined_hash(&encoder.trunk, &encoder.head, decoder), &all)?;
    let meta = ModelMeta { kind, latent_dim, num_classes };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| GenError::Io(e.to_string()))?;
    std::fs::write(meta_path(path), json).map_err(|e| GenError::Io(e.to_string()))?;
    Ok(())
}

fn load_model(path: &Path, want: ModelKind) -> Result<(ModelMeta, Encoder, Params), GenError> {
    let json = std::fs::read_to_string(meta_path(path)).map_err(|e| GenError::Io(e.to_string()))?;
    let meta: ModelMeta = serde_json::from_str(&json).map_err(|e| GenError::Io(e.to_string()))?;
    if meta.kind != want {
        return Err(GenError::Io(format!(
            "model kind mismatch: file is {:?}, expected {:?}",
            meta.kind, want
        )));
    }
    let (trunk, head, decoder) = match meta.kind {
        ModelKind::Vae => (
            trunk_net(),
            head_net(meta.latent_dim, 0, true),
            decoder_net(meta.latent_dim, 0),
        ),
        ModelKind::Cvae => (
            trunk_net(),
            head_net(meta.latent_dim, meta.num_classes, true),
            decoder_net(meta.latent_dim, meta.num_classes),
        ),
        ModelKind::Ae => (
            trunk_net(),
            head_net(meta.latent_dim, 0, false),
            decoder_net(meta.latent_dim, 0),
        ),
    };
    let all = load_params(path, combined_hash(&trunk, &head, &decoder))?;
    let (t_len, h_len) = (trunk.param_count(), head.param_count());
    if all.len() != t_len + h_len + decoder.param_count() {
        return Err(GenError::Io("parameter count mismatch".into()));
    }
    let encoder = Encoder {
        trunk,
        head,
        trunk_params: Params::from_vec(all[..t_len].to_vec()),
        head_params: Params::from_vec(all[t_len..t_len + h_len].to_vec()),
        num_classes: meta.num_classes,
    };
    Ok((meta, encoder, Params::from_vec(all[t_len + h_len..].to_vec())))
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta.json");
    std::path::PathBuf::from(os)
}
