//! Open-set evaluation: the One-vs-All classifier, the train/val/test split
//! protocol, and the accuracy metric over the `|A|+1`-way decision.
//!
//! Split protocol: 70% of each authorized transmitter's samples (per
//! transmitter, stratified) plus all known-outlier samples form a pool that
//! is shuffled and split 80/20 into train and validation; the test set is
//! the remaining 30% of the authorized samples plus every sample of the
//! held-out unknown transmitters. Generated outliers, when present, are
//! split 80/20 by the same rule and appended, so paired arms differ only by
//! the appended samples.

pub mod sweep;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{classifier_net, HeadKind};
use crate::generative::GenError;
use crate::latent_opt::LatentOptError;
use crate::mvee::MveeError;
use crate::nn::{
    loss, loss_grad, Network, NnError, Optimizer, OptimizerKind, Params, Tensor,
};
use crate::seed;
use crate::sim::{samples_to_tensor, Corpus, SignalSample, SimError};

#[derive(Debug, Error)]
pub enum OpenSetError {
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("population too small: need {needed} transmitters, corpus has {got}")]
    PopulationTooSmall { needed: usize, got: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Mvee(#[from] MveeError),
    #[error(transparent)]
    LatentOpt(#[from] LatentOptError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(String),
}

/// Ground truth / prediction over the open-set decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpenSetLabel {
    /// Index into the authorized set (head index, not tx id).
    Authorized(usize),
    Outlier,
}

/// Transmitter id sets defining one experiment split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub authorized: Vec<u16>,
    pub known_outliers: Vec<u16>,
    pub test_outliers: Vec<u16>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), OpenSetError> {
        if self.authorized.len() < 2 {
            return Err(OpenSetError::InvalidSplitSpec(format!(
                "need at least 2 authorized transmitters, got {}",
                self.authorized.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in self
            .authorized
            .iter()
            .chain(&self.known_outliers)
            .chain(&self.test_outliers)
        {
            if !seen.insert(*id) {
                return Err(OpenSetError::InvalidSplitSpec(format!(
                    "transmitter {id} appears in more than one of A/K/O"
                )));
            }
        }
        Ok(())
    }
}

/// Materialized split. Labels refer to head indices assigned in sorted
/// authorized-id order (see `class_of_tx`).
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Vec<(SignalSample, OpenSetLabel)>,
    pub val: Vec<(SignalSample, OpenSetLabel)>,
    pub test: Vec<(SignalSample, OpenSetLabel)>,
    pub class_of_tx: BTreeMap<u16, usize>,
    /// Digest of the sample assignment, for paired-arm logging.
    pub hash: u64,
}

pub fn make_split(corpus: &Corpus, spec: &SplitSpec) -> Result<Split, OpenSetError> {
    spec.validate()?;
    let counts = &corpus.manifest.per_tx_counts;
    for id in spec
        .authorized
        .iter()
        .chain(&spec.known_outliers)
        .chain(&spec.test_outliers)
    {
        if !counts.contains_key(id) {
            return Err(OpenSetError::InvalidSplitSpec(format!(
                "transmitter {id} not present in corpus"
            )));
        }
    }

    let mut sorted_a = spec.authorized.clone();
    sorted_a.sort_unstable();
    let class_of_tx: BTreeMap<u16, usize> =
        sorted_a.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut pool: Vec<(SignalSample, OpenSetLabel)> = Vec::new();
    let mut test: Vec<(SignalSample, OpenSetLabel)> = Vec::new();

    // authorized: per-transmitter 70/30 before pooling
    for (&tx, &class) in &class_of_tx {
        let mut samples = corpus.samples_of(tx);
        let mut rng = seed::stream(spec.seed, 0x7370_6c69_7400 | tx as u64);
        samples.shuffle(&mut rng);
        let n_trainval = samples.len() * 7 / 10;
        for (i, s) in samples.into_iter().enumerate() {
            let entry = ((*s).clone(), OpenSetLabel::Authorized(class));
            if i < n_trainval {
                pool.push(entry);
            } else {
                test.push(entry);
            }
        }
    }
    // known outliers: every sample goes to the pool
    for &tx in &spec.known_outliers {
        for s in corpus.samples_of(tx) {
            pool.push(((*s).clone(), OpenSetLabel::Outlier));
        }
    }
    // unknown outliers: every sample goes to the test set
    for &tx in &spec.test_outliers {
        for s in corpus.samples_of(tx) {
            test.push(((*s).clone(), OpenSetLabel::Outlier));
        }
    }

    let mut rng = seed::stream(spec.seed, 0x706f_6f6c);
    pool.shuffle(&mut rng);
    let n_train = pool.len() * 8 / 10;
    let val = pool.split_off(n_train);
    let train = pool;

    let hash = split_hash(&train, &val, &test);
    Ok(Split { train, val, test, class_of_tx, hash })
}

fn split_hash(
    train: &[(SignalSample, OpenSetLabel)],
    val: &[(SignalSample, OpenSetLabel)],
    test: &[(SignalSample, OpenSetLabel)],
) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for (name, set) in [("train", train), ("val", val), ("test", test)] {
        eat(name.as_bytes());
        eat(&(set.len() as u64).to_le_bytes());
        for (s, label) in set {
            let tag = match label {
                OpenSetLabel::Authorized(c) => *c as u64,
                OpenSetLabel::Outlier => u64::MAX,
            };
            eat(&tag.to_le_bytes());
            // first row is enough to fingerprint the sample
            eat(&s.rows()[0][0].to_le_bytes());
            eat(&s.rows()[0][1].to_le_bytes());
        }
    }
    h
}

// ---------------------------------------------------------------------------
// One-vs-All model
// ---------------------------------------------------------------------------

/// Shared feature extractor with `|A|` parallel binary heads and a rejection
/// threshold.
pub struct OvaModel {
    pub num_classes: usize,
    pub tau: f64,
    net: Network,
    params: Params,
    pub best_val_loss: f64,
    pub epochs_run: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OvaTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stopping patience on validation loss.
    pub patience: usize,
    pub seed: u64,
    /// Per-head threshold for rejection.
    pub tau: f64,
}

impl Default for OvaTrainConfig {
    fn default() -> Self {
        OvaTrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 30,
            patience: 10,
            seed: 0,
            tau: 0.5,
        }
    }
}

/// Per-head binary targets: authorized class i sets head i to 1, outliers
/// set every head to 0.
pub fn ova_target(label: OpenSetLabel, num_classes: usize) -> Vec<f32> {
    let mut t = vec![0.0f32; num_classes];
    if let OpenSetLabel::Authorized(c) = label {
        t[c] = 1.0;
    }
    t
}

fn to_tensors(
    set: &[(SignalSample, OpenSetLabel)],
    num_classes: usize,
) -> (Tensor, Tensor) {
    let refs: Vec<&SignalSample> = set.iter().map(|(s, _)| s).collect();
    let x = samples_to_tensor(&refs);
    let mut targets = Vec::with_capacity(set.len() * num_classes);
    for (_, label) in set {
        targets.extend(ova_target(*label, num_classes));
    }
    (x, Tensor::from_vec(&[set.len(), num_classes], targets))
}

/// Trains the One-vs-All classifier with per-head binary cross-entropy and
/// best-validation-loss selection. `augmentation` samples are generated
/// outliers appended to the training set (all of them — validation keeps
/// real samples only, so epoch selection is not steered by generator
/// texture).
pub fn train_ova(
    train: &[(SignalSample, OpenSetLabel)],
    val: &[(SignalSample, OpenSetLabel)],
    num_classes: usize,
    cfg: &OvaTrainConfig,
    augmentation: &[SignalSample],
) -> Result<OvaModel, OpenSetError> {
    if train.is_empty() {
        return Err(OpenSetError::InvalidSplitSpec("empty training set".into()));
    }
    let mut train_set: Vec<(SignalSample, OpenSetLabel)> = train.to_vec();
    let val_set: Vec<(SignalSample, OpenSetLabel)> = val.to_vec();
    train_set.extend(
        augmentation
            .iter()
            .map(|s| (s.clone(), OpenSetLabel::Outlier)),
    );

    let net = classifier_net(num_classes, HeadKind::Sigmoid);
    let mut params = net.init_params(cfg.seed);
    let mut opt = Optimizer::new(OptimizerKind::AdamLike, cfg.learning_rate, params.len());

    let (train_x, train_t) = to_tensors(&train_set, num_classes);
    let (val_x, val_t) = to_tensors(&val_set, num_classes);
    let n = train_set.len();
    let sample_numel: usize = net.input_shape().iter().product();

    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = seed::stream(cfg.seed, 0x6f76_6173_6866);
    let mut best: Option<(f64, Params)> = None;
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (xb, tb) = crate::nn::gather(
                &train_x,
                &train_t,
                chunk,
                net.input_shape(),
                num_classes,
                sample_numel,
            );
            let cache = net.forward_cached(&params, &xb)?;
            let (value, grad) = loss_grad(crate::nn::LossKind::Bce, cache.output(), &tb)?;
            if !value.is_finite() {
                return Err(OpenSetError::TrainingDiverged { epoch });
            }
            let (pgrads, _) = net.backward(&params, &cache, &grad);
            opt.step(params.as_mut_slice(), &pgrads);
        }
        epochs_run = epoch + 1;

        let val_loss = if val_set.is_empty() {
            0.0
        } else {
            let out = net.forward(&params, &val_x)?;
            loss(crate::nn::LossKind::Bce, &out, &val_t)?
        };
        if !val_loss.is_finite() || !params.is_finite() {
            return Err(OpenSetError::TrainingDiverged { epoch });
        }
        let improved = best.as_ref().map(|(b, _)| val_loss < *b).unwrap_or(true);
        if improved {
            best = Some((val_loss, Params::from_vec(params.as_slice().to_vec())));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (best_val_loss, best_params) = best.expect("at least one epoch ran");
    Ok(OvaModel {
        num_classes,
        tau: cfg.tau,
        net,
        params: best_params,
        best_val_loss,
        epochs_run,
    })
}

impl OvaModel {
    /// Raw per-head sigmoid outputs.
    pub fn head_outputs(&self, samples: &[&SignalSample]) -> Result<Tensor, OpenSetError> {
        let x = samples_to_tensor(samples);
        Ok(self.net.forward(&self.params, &x)?)
    }

    pub fn predict(&self, sample: &SignalSample) -> Result<OpenSetLabel, OpenSetError> {
        Ok(self.predict_batch(&[sample])?[0])
    }

    pub fn predict_batch(
        &self,
        samples: &[&SignalSample],
    ) -> Result<Vec<OpenSetLabel>, OpenSetError> {
        let out = self.head_outputs(samples)?;
        Ok(out
            .data()
            .chunks(self.num_classes)
            .map(|heads| decide(heads, self.tau))
            .collect())
    }

    pub fn params(&self) -> &Params {
        &self.params
    }
}

/// Decision rule: every head below `tau` rejects; otherwise the argmax head
/// wins, ties broken toward the lowest index.
pub fn decide(heads: &[f32], tau: f64) -> OpenSetLabel {
    let mut best = 0usize;
    for (i, &v) in heads.iter().enumerate() {
        if v > heads[best] {
            best = i;
        }
    }
    if (heads[best] as f64) < tau {
        OpenSetLabel::Outlier
    } else {
        OpenSetLabel::Authorized(best)
    }
}

/// Accuracy over the full `|A|+1`-way decision.
pub fn evaluate(
    model: &OvaModel,
    test: &[(SignalSample, OpenSetLabel)],
) -> Result<f64, OpenSetError> {
    if test.is_empty() {
        return Err(OpenSetError::EmptyTestSet);
    }
    let refs: Vec<&SignalSample> = test.iter().map(|(s, _)| s).collect();
    let mut correct = 0usize;
    // chunk to bound peak memory on large test sets
    let mut offset = 0usize;
    for chunk in refs.chunks(512) {
        let preds = model.predict_batch(chunk)?;
        for (p, (_, truth)) in preds.iter().zip(&test[offset..offset + chunk.len()]) {
            if p == truth {
                correct += 1;
            }
        }
        offset += chunk.len();
    }
    Ok(correct as f64 / test.len() as f64)
}
