//! Blind outlier generation by constrained latent optimization.
//!
//! For an authorized sample `x`, a latent point near its encoding that the
//! judge classifier scores as the outlier class is found by descending
//! `||E(x) - z|| + lambda * cross_entropy(onehot(|A|), C(D(z)))`. The judge
//! is an `|A|+1`-way closed-set classifier whose extra class has no real
//! training data; after each round of generation it is retrained on the
//! authorized samples plus the generated outliers, sharpening the next round.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{classifier_net, HeadKind};
use crate::generative::{AeModel, GenError};
use crate::nn::{train_from, Network, NnError, OptimizerKind, Params, Tensor, TrainConfig};
use crate::seed;
use crate::sim::{samples_to_tensor, SignalSample, SAMPLE_LEN};

#[derive(Debug, Error)]
pub enum LatentOptError {
    #[error("need at least 2 authorized classes, got {0}")]
    TooFewClasses(usize),
    #[error("label out of range: {label} with {num_authorized} authorized classes")]
    LabelOutOfRange { label: usize, num_authorized: usize },
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("non-finite objective")]
    NonFiniteObjective,
    #[error("algorithm1 unstable: {aborted} of {total} latent optimizations aborted in iteration {iteration}")]
    Algorithm1Unstable { aborted: usize, total: usize, iteration: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// `|A|+1`-way judge: authorized classes keep their indices, index `|A|` is
/// the outlier class.
pub struct JudgeClassifier {
    pub num_authorized: usize,
    net: Network,
    params: Params,
}

impl JudgeClassifier {
    pub fn outlier_class(&self) -> usize {
        self.num_authorized
    }

    /// Class probabilities, one row per sample.
    pub fn probabilities(&self, samples: &[&SignalSample]) -> Result<Tensor, LatentOptError> {
        let x = samples_to_tensor(samples);
        Ok(self.net.forward(&self.params, &x)?)
    }

    /// Argmax class per sample.
    pub fn predict(&self, samples: &[&SignalSample]) -> Result<Vec<usize>, LatentOptError> {
        let probs = self.probabilities(samples)?;
        let cols = self.num_authorized + 1;
        Ok(probs
            .data()
            .chunks(cols)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect())
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Judge network and parameters, for callers that differentiate
    /// through the classifier.
    pub fn network_parts(&self) -> (&Network, &Params) {
        (&self.net, &self.params)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JudgeTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for JudgeTrainConfig {
    fn default() -> Self {
        JudgeTrainConfig { learning_rate: 1e-3, batch_size: 64, epochs: 12, seed: 0 }
    }
}

fn onehot_targets(labels: &[usize], classes: usize) -> Tensor {
    let mut data = vec![0.0f32; labels.len() * classes];
    for (r, &l) in labels.iter().enumerate() {
        data[r * classes + l] = 1.0;
    }
    Tensor::from_vec(&[labels.len(), classes], data)
}

/// Trains the initial judge on authorized samples only; the outlier class
/// starts with zero training samples.
pub fn train_judge(
    labeled: &[(&SignalSample, usize)],
    num_authorized: usize,
    cfg: &JudgeTrainConfig,
) -> Result<JudgeClassifier, LatentOptError> {
    if num_authorized < 2 {
        return Err(LatentOptError::TooFewClasses(num_authorized));
    }
    for &(_, label) in labeled {
        if label >= num_authorized {
            return Err(LatentOptError::LabelOutOfRange { label, num_authorized });
        }
    }
    let net = classifier_net(num_authorized + 1, HeadKind::Softmax);
    let params = net.init_params(cfg.seed);
    let judge = JudgeClassifier { num_authorized, net, params };
    retrain_judge(judge, labeled, cfg)
}

/// Warm-start retraining on a (possibly outlier-augmented) labeled set.
/// Labels must lie in `0..=num_authorized`, with `num_authorized` = outlier.
pub fn retrain_judge(
    judge: JudgeClassifier,
    labeled: &[(&SignalSample, usize)],
    cfg: &JudgeTrainConfig,
) -> Result<JudgeClassifier, LatentOptError> {
    let classes = judge.num_authorized + 1;
    for &(_, label) in labeled {
        if label >= classes {
            return Err(LatentOptError::LabelOutOfRange {
                label,
                num_authorized: judge.num_authorized,
            });
        }
    }
    let samples: Vec<&SignalSample> = labeled.iter().map(|&(s, _)| s).collect();
    let labels: Vec<usize> = labeled.iter().map(|&(_, l)| l).collect();
    let x = samples_to_tensor(&samples);
    let targets = onehot_targets(&labels, classes);
    let tcfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
        optimizer: OptimizerKind::AdamLike,
    };
    let (params, _) = train_from(
        &judge.net,
        judge.params,
        &x,
        &targets,
        crate::nn::LossKind::CrossEntropy,
        &tcfg,
    )
    .map_err(|e| match e {
        NnError::TrainingDiverged { epoch } => LatentOptError::TrainingDiverged { epoch },
        other => LatentOptError::Nn(other),
    })?;
    Ok(JudgeClassifier { num_authorized: judge.num_authorized, net: judge.net, params })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptConfig {
    pub inner_steps: usize,
    pub inner_lr: f64,
    /// Outer iterations of generate-then-retrain.
    pub outer_iters: usize,
    /// Weight balancing the proximity and judge terms.
    pub lambda: f64,
    pub init_noise_std: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            inner_steps: 200,
            inner_lr: 0.05,
            outer_iters: 3,
            lambda: 1.0,
            init_noise_std: 0.01,
        }
    }
}

impl OptConfig {
    fn validate(&self) -> Result<(), LatentOptError> {
        if self.inner_steps == 0 || self.outer_iters == 0 {
            return Err(LatentOptError::Nn(NnError::InvalidConfig(
                "inner_steps and outer_iters must be >= 1".into(),
            )));
        }
        Ok(())
    }
}

const PROB_EPS: f64 = 1e-7;

/// `||E(x) - z|| + lambda * cross_entropy(onehot(|A|), C(D(z)))`.
pub fn outlier_objective(
    z: &[f32],
    x: &SignalSample,
    ae: &AeModel,
    judge: &JudgeClassifier,
    lambda: f64,
) -> Result<f64, LatentOptError> {
    let anchor = ae.encode(&[x])?;
    let zt = Tensor::from_vec(&[1, z.len()], z.to_vec());
    let (dec, dec_params) = ae.decoder_parts();
    let recon = dec.forward(dec_params, &zt)?;
    let probs = judge.net.forward(&judge.params, &recon.reshaped(&[1, SAMPLE_LEN, 2, 1]))?;
    let value = objective_rows(anchor.data(), z, 1, z.len(), probs.data(), judge.num_authorized, lambda)[0];
    if !value.is_finite() {
        return Err(LatentOptError::NonFiniteObjective);
    }
    Ok(value)
}

/// Per-row objective values.
fn objective_rows(
    anchors: &[f32],
    z: &[f32],
    rows: usize,
    l: usize,
    probs: &[f32],
    num_authorized: usize,
    lambda: f64,
) -> Vec<f64> {
    let classes = num_authorized + 1;
    (0..rows)
        .map(|r| {
            let dist = euclid(&anchors[r * l..(r + 1) * l], &z[r * l..(r + 1) * l]);
            let p_out = (probs[r * classes + num_authorized] as f64).clamp(PROB_EPS, 1.0);
            dist + lambda * (-p_out.ln())
        })
        .collect()
}

fn euclid(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Result of a batched run of latent optimizations.
struct BatchOpt {
    best_z: Vec<f32>,
    best_obj: Vec<f64>,
    init_obj: Vec<f64>,
    aborted: Vec<bool>,
}

/// Gradient descent on a batch of latent points against a frozen judge.
/// Returns the best iterate per row.
fn optimize_batch(
    anchors: &Tensor,
    judge: &JudgeClassifier,
    ae: &AeModel,
    cfg: &OptConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<BatchOpt, LatentOptError> {
    let rows = anchors.shape()[0];
    let l = anchors.numel() / rows;
    let classes = judge.num_authorized + 1;
    let (dec, dec_params) = ae.decoder_parts();

    let mut z: Vec<f32> = anchors
        .data()
        .iter()
        .map(|&v| v + (cfg.init_noise_std * seed::randn(rng)) as f32)
        .collect();
    let mut best_z = z.clone();
    let mut best_obj = vec![f64::INFINITY; rows];
    let mut init_obj = vec![f64::NAN; rows];
    let mut aborted = vec![false; rows];

    for step in 0..=cfg.inner_steps {
        let zt = Tensor::from_vec(&[rows, l], z.clone());
        let dec_cache = dec.forward_cached(dec_params, &zt)?;
        let judge_in = dec_cache.output().clone().reshaped(&[rows, SAMPLE_LEN, 2, 1]);
        let judge_cache = judge.net.forward_cached(&judge.params, &judge_in)?;
        let probs = judge_cache.output();

        let objs = objective_rows(
            anchors.data(),
            &z,
            rows,
            l,
            probs.data(),
            judge.num_authorized,
            cfg.lambda,
        );
        for (r, &o) in objs.iter().enumerate() {
            if aborted[r] {
                continue;
            }
            if step == 0 {
                init_obj[r] = o;
            }
            if !o.is_finite() {
                aborted[r] = true;
                continue;
            }
            if o < best_obj[r] {
                best_obj[r] = o;
                best_z[r * l..(r + 1) * l].copy_from_slice(&z[r * l..(r + 1) * l]);
            }
        }
        if step == cfg.inner_steps {
            break;
        }

        // d objective / d probs: only the outlier-class column is active
        let mut probs_grad = Tensor::zeros(probs.shape());
        for r in 0..rows {
            if aborted[r] {
                continue;
            }
            let p_out =
                (probs.data()[r * classes + judge.num_authorized] as f64).clamp(PROB_EPS, 1.0);
            probs_grad.data_mut()[r * classes + judge.num_authorized] =
                (-cfg.lambda / p_out) as f32;
        }
        let (_, judge_in_grad) = judge.net.backward(&judge.params, &judge_cache, &probs_grad);
        let (_, dz_dec) = dec.backward(
            dec_params,
            &dec_cache,
            &judge_in_grad.reshaped(dec_cache.output().shape()),
        );

        for r in 0..rows {
            if aborted[r] {
                continue;
            }
            let ar = &anchors.data()[r * l..(r + 1) * l];
            let dist = euclid(ar, &z[r * l..(r + 1) * l]);
            for d in 0..l {
                let zv = z[r * l + d];
                let prox = if dist > 0.0 {
                    ((zv as f64 - ar[d] as f64) / dist) as f32
                } else {
                    0.0
                };
                let g = prox + dz_dec.data()[r * l + d];
                z[r * l + d] = zv - (cfg.inner_lr as f32) * g;
            }
        }
    }

    Ok(BatchOpt { best_z, best_obj, init_obj, aborted })
}

/// Single-sample latent optimization; returns the best iterate.
pub fn optimize_latent(
    x: &SignalSample,
    ae: &AeModel,
    judge: &JudgeClassifier,
    cfg: &OptConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Vec<f32>, f64), LatentOptError> {
    cfg.validate()?;
    let anchor = ae.encode(&[x])?;
    let out = optimize_batch(&anchor, judge, ae, cfg, rng)?;
    if out.aborted[0] {
        return Err(LatentOptError::NonFiniteObjective);
    }
    Ok((out.best_z, out.best_obj[0]))
}

/// Per-iteration bookkeeping from [`run_algorithm1`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationStats {
    pub aborted: usize,
    pub attempted: usize,
    pub mean_initial_objective: f64,
    pub mean_final_objective: f64,
}

pub struct Algorithm1Output {
    pub samples: Vec<SignalSample>,
    pub judge: JudgeClassifier,
    pub iterations: Vec<IterationStats>,
    pub retrain_count: usize,
    /// Fraction of the returned samples the final judge assigns to the
    /// outlier class.
    pub self_label_fraction: f64,
    /// `(initial, best)` objective per sample of the final iteration.
    pub final_objectives: Vec<(f64, f64)>,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Algorithm1Config {
    pub opt: OptConfig,
    pub judge: JudgeTrainConfig,
    /// Warm-start epochs for each retraining round.
    pub retrain_epochs: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for Algorithm1Config {
    fn default() -> Self {
        Algorithm1Config {
            opt: OptConfig::default(),
            judge: JudgeTrainConfig::default(),
            retrain_epochs: 5,
            count: crate::generative::GENERATION_BUDGET,
            seed: 0,
        }
    }
}

/// Iterative blind generation: train a judge, optimize one latent per
/// authorized sample (cycling until `count` is reached), decode, retrain the
/// judge on the union, repeat. Returns the last iteration's decoded set.
pub fn run_algorithm1(
    labeled: &[(&SignalSample, usize)],
    ae: &AeModel,
    num_authorized: usize,
    cfg: &Algorithm1Config,
) -> Result<Algorithm1Output, LatentOptError> {
    cfg.opt.validate()?;
    let start = Instant::now();
    let judge_cfg = JudgeTrainConfig { seed: seed::derive(cfg.seed, 0x6a75_6467_65), ..cfg.judge };
    let mut judge = train_judge(labeled, num_authorized, &judge_cfg)?;

    let anchors_all: Vec<&SignalSample> = labeled.iter().map(|&(s, _)| s).collect();
    let mut iterations = Vec::with_capacity(cfg.opt.outer_iters);
    let mut retrain_count = 0usize;
    let mut outliers: Vec<SignalSample> = Vec::new();
    let mut final_objectives: Vec<(f64, f64)> = Vec::new();

    for iteration in 0..cfg.opt.outer_iters {
        let mut rng = seed::stream(cfg.seed, 0x6f70_7431 ^ iteration as u64);
        outliers = Vec::with_capacity(cfg.count);
        final_objectives = Vec::with_capacity(cfg.count);
        let mut aborted_total = 0usize;
        let mut attempted = 0usize;
        let mut init_sum = 0.0f64;
        let mut final_sum = 0.0f64;
        let mut produced = 0usize;

        let mut cursor = 0usize;
        while produced < cfg.count {
            let batch = (cfg.count - produced).min(128);
            let batch_refs: Vec<&SignalSample> = (0..batch)
                .map(|i| anchors_all[(cursor + i) % anchors_all.len()])
                .collect();
            cursor = (cursor + batch) % anchors_all.len();
            let anchors = ae.encode(&batch_refs)?;
            let out = optimize_batch(&anchors, &judge, ae, &cfg.opt, &mut rng)?;

            attempted += batch;
            let l = ae.latent_dim;
            let mut keep: Vec<Vec<f32>> = Vec::with_capacity(batch);
            for r in 0..batch {
                if out.aborted[r] {
                    aborted_total += 1;
                    continue;
                }
                init_sum += out.init_obj[r];
                final_sum += out.best_obj[r];
                final_objectives.push((out.init_obj[r], out.best_obj[r]));
                keep.push(out.best_z[r * l..(r + 1) * l].to_vec());
            }
            if !keep.is_empty() {
                let zt = Tensor::from_vec(
                    &[keep.len(), l],
                    keep.iter().flatten().copied().collect(),
                );
                outliers.extend(ae.decode(&zt)?);
                produced += keep.len();
            }
            if aborted_total * 2 > attempted {
                return Err(LatentOptError::Algorithm1Unstable {
                    aborted: aborted_total,
                    total: attempted,
                    iteration,
                });
            }
        }

        let ok = (attempted - aborted_total).max(1) as f64;
        iterations.push(IterationStats {
            aborted: aborted_total,
            attempted,
            mean_initial_objective: init_sum / ok,
            mean_final_objective: final_sum / ok,
        });

        // retrain between iterations only; the last set is returned as-is
        if iteration + 1 < cfg.opt.outer_iters {
            let mut union: Vec<(&SignalSample, usize)> = labeled.to_vec();
            for s in &outliers {
                union.push((s, num_authorized));
            }
            let retrain_cfg = JudgeTrainConfig {
                epochs: cfg.retrain_epochs,
                seed: seed::derive(cfg.seed, 0x7265_7472 ^ iteration as u64),
                ..cfg.judge
            };
            judge = retrain_judge(judge, &union, &retrain_cfg)?;
            retrain_count += 1;
        }
    }

    let refs: Vec<&SignalSample> = outliers.iter().collect();
    let predictions = judge.predict(&refs)?;
    let outlier_hits = predictions.iter().filter(|&&p| p == num_authorized).count();
    let self_label_fraction = outlier_hits as f64 / outliers.len().max(1) as f64;

    Ok(Algorithm1Output {
        samples: outliers,
        judge,
        iterations,
        retrain_count,
        self_label_fraction,
        final_objectives,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
