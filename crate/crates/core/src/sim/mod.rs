//! Synthetic transmitter corpus.
//!
//! Each simulated transmitter is a set of analog impairment parameters (IQ
//! imbalance, PA nonlinearity, CFO, phase noise, DC offset) applied to a
//! fixed preamble waveform; a block-fading channel with AWGN sits on top.
//! The impairment chain order is fixed: IQ imbalance, then PA, then CFO,
//! then phase noise, then DC offset.

mod corpus_io;

pub use corpus_io::{load_corpus, save_corpus};

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Tensor;
use crate::seed;

/// IQ samples kept per packet.
pub const SAMPLE_LEN: usize = 256;
/// Length of the repeated QPSK seed sequence in the preamble.
pub const PREAMBLE_PERIOD: usize = 16;
/// Reserved tx id labelling generated outlier samples in corpus files.
pub const OUTLIER_TX_ID: u16 = u16::MAX;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("empty population")]
    EmptyPopulation,
    #[error("impairment overflow")]
    ImpairmentOverflow,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("corrupt corpus at byte {offset}")]
    CorruptCorpus { offset: u64 },
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("corpus io: {0}")]
    Io(String),
}

/// Minimal complex value; serializes as `{re, im}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct C64 {
    pub re: f64,
    pub im: f64,
}

impl C64 {
    pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        C64 { re, im }
    }

    pub fn mul(self, o: C64) -> C64 {
        C64::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    pub fn add(self, o: C64) -> C64 {
        C64::new(self.re + o.re, self.im + o.im)
    }

    pub fn scale(self, s: f64) -> C64 {
        C64::new(self.re * s, self.im * s)
    }

    pub fn abs_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> f64 {
        self.abs_sq().sqrt()
    }

    /// e^(i*theta)
    pub fn cis(theta: f64) -> C64 {
        C64::new(theta.cos(), theta.sin())
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// One packet's 256 IQ samples: column 0 = I, column 1 = Q.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSample {
    iq: Vec<[f32; 2]>,
}

impl SignalSample {
    /// Validates shape and finiteness.
    pub fn from_rows(iq: Vec<[f32; 2]>) -> Result<Self, SimError> {
        if iq.len() != SAMPLE_LEN {
            return Err(SimError::InvalidConfig(format!(
                "signal sample needs {SAMPLE_LEN} rows, got {}",
                iq.len()
            )));
        }
        if !iq.iter().all(|r| r[0].is_finite() && r[1].is_finite()) {
            return Err(SimError::ImpairmentOverflow);
        }
        Ok(SignalSample { iq })
    }

    pub fn from_complex(v: &[C64]) -> Result<Self, SimError> {
        Self::from_rows(v.iter().map(|c| [c.re as f32, c.im as f32]).collect())
    }

    pub fn rows(&self) -> &[[f32; 2]] {
        &self.iq
    }

    /// Flat row-major copy (I, Q per row), 512 values.
    pub fn flat(&self) -> Vec<f32> {
        self.iq.iter().flat_map(|r| [r[0], r[1]]).collect()
    }

    pub fn from_flat(data: &[f32]) -> Result<Self, SimError> {
        if data.len() != SAMPLE_LEN * 2 {
            return Err(SimError::InvalidConfig(format!(
                "expected {} values, got {}",
                SAMPLE_LEN * 2,
                data.len()
            )));
        }
        Self::from_rows(data.chunks(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn peak_abs(&self) -> f32 {
        self.iq
            .iter()
            .flat_map(|r| [r[0].abs(), r[1].abs()])
            .fold(0.0, f32::max)
    }

    /// Largest complex modulus sqrt(i^2 + q^2) across the rows.
    pub fn peak_modulus(&self) -> f32 {
        self.iq
            .iter()
            .map(|r| (r[0] as f64 * r[0] as f64 + r[1] as f64 * r[1] as f64).sqrt() as f32)
            .fold(0.0, f32::max)
    }

    /// Divides every entry by `d`. Division (not reciprocal multiply) keeps
    /// entries at or below 1.0 exactly when `d` is the corpus peak.
    fn normalize_by(&mut self, d: f32) {
        for r in self.iq.iter_mut() {
            r[0] /= d;
            r[1] /= d;
        }
    }
}

/// Packs samples into a `(n, 256, 2, 1)` network input tensor.
pub fn samples_to_tensor(samples: &[&SignalSample]) -> Tensor {
    let mut data = Vec::with_capacity(samples.len() * SAMPLE_LEN * 2);
    for s in samples {
        data.extend(s.flat());
    }
    Tensor::from_vec(&[samples.len(), SAMPLE_LEN, 2, 1], data)
}

/// The impairment parameter set defining one simulated fingerprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmitterProfile {
    pub tx_id: u16,
    /// IQ gain imbalance (dimensionless).
    pub iq_gain_imbalance: f64,
    /// IQ phase imbalance (radians).
    pub iq_phase_imbalance: f64,
    /// Carrier frequency offset in cycles per sample.
    pub cfo: f64,
    /// Wiener phase-walk increment std (radians per step).
    pub phase_noise_std: f64,
    /// Linear PA gain.
    pub pa_a1: f64,
    /// Cubic PA coefficient.
    pub pa_a3: f64,
    pub dc_offset: C64,
}

impl TransmitterProfile {
    /// Identity chain: output equals input for any waveform.
    pub fn identity(tx_id: u16) -> Self {
        TransmitterProfile {
            tx_id,
            iq_gain_imbalance: 0.0,
            iq_phase_imbalance: 0.0,
            cfo: 0.0,
            phase_noise_std: 0.0,
            pa_a1: 1.0,
            pa_a3: 0.0,
            dc_offset: C64::ZERO,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let c = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(SimError::InvalidProfile(format!("tx {}: {msg}", self.tx_id)))
            }
        };
        c(self.iq_gain_imbalance.abs() < 0.5, "|gain imbalance| must be < 0.5")?;
        c(self.iq_phase_imbalance.abs() < 0.5, "|phase imbalance| must be < 0.5")?;
        c(self.cfo.abs() < 0.01, "|cfo| must be < 0.01")?;
        c(
            (0.0..0.1).contains(&self.phase_noise_std),
            "phase_noise_std must be in [0, 0.1)",
        )?;
        c(self.pa_a1 > 0.0, "pa_a1 must be > 0")?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    Awgn,
    RayleighBlock,
    RicianBlock,
}

/// `snr_db >= 200` stands for a noiseless channel.
pub const NOISELESS_SNR_DB: f64 = 200.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub model: ChannelModel,
    pub snr_db: f64,
    /// Rician K-factor in dB; only read for `RicianBlock`.
    pub rician_k_db: f64,
}

impl ChannelConfig {
    pub fn awgn(snr_db: f64) -> Self {
        ChannelConfig { model: ChannelModel::Awgn, snr_db, rician_k_db: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if (-10.0..=60.0).contains(&self.snr_db) || self.snr_db >= NOISELESS_SNR_DB {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(format!(
                "snr_db {} outside [-10, 60] (use >= {NOISELESS_SNR_DB} for noiseless)",
                self.snr_db
            )))
        }
    }
}

/// How a corpus file came to be; stored in the JSON manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum GeneratorInfo {
    Simulated {
        packets_min: u32,
        packets_max: u32,
        channel: ChannelConfig,
    },
    Vae {
        latent_dim: usize,
    },
    Cvae {
        latent_dim: usize,
        num_classes: usize,
        per_class_counts: Vec<u32>,
    },
    Ellipsoid {
        delta: f64,
        latent_dim: usize,
    },
    LatentOpt {
        outer_iters: usize,
        inner_steps: usize,
        inner_lr: f64,
        lambda: f64,
        latent_dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub generator: GeneratorInfo,
    pub per_tx_counts: BTreeMap<u16, u32>,
    pub profiles: Vec<TransmitterProfile>,
}

/// A labeled sample set plus the profiles and manifest that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub samples: Vec<(SignalSample, u16)>,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn profiles(&self) -> &[TransmitterProfile] {
        &self.manifest.profiles
    }

    pub fn tx_ids(&self) -> Vec<u16> {
        self.manifest.per_tx_counts.keys().copied().collect()
    }

    /// Samples belonging to one transmitter.
    pub fn samples_of(&self, tx_id: u16) -> Vec<&SignalSample> {
        self.samples
            .iter()
            .filter(|(_, id)| *id == tx_id)
            .map(|(s, _)| s)
            .collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let known: std::collections::BTreeSet<u16> =
            self.manifest.profiles.iter().map(|p| p.tx_id).collect();
        let mut counts: BTreeMap<u16, u32> = BTreeMap::new();
        let mut peak = 0.0f32;
        for (s, id) in &self.samples {
            if *id != OUTLIER_TX_ID && !known.contains(id) {
                return Err(SimError::ManifestMismatch(format!(
                    "sample tx id {id} has no profile"
                )));
            }
            *counts.entry(*id).or_insert(0) += 1;
            peak = peak.max(s.peak_abs());
        }
        if counts != self.manifest.per_tx_counts {
            return Err(SimError::ManifestMismatch(
                "per-transmitter counts differ from manifest".into(),
            ));
        }
        if peak > 1.0 {
            return Err(SimError::InvalidConfig(format!(
                "corpus peak amplitude {peak} exceeds 1.0"
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

const PREAMBLE_SEED: u64 = 0x5052_4541_4d42; // fixed; the waveform is a constant

/// Fixed preamble: 16 pseudorandom QPSK symbols tiled 16 times, unit peak.
pub fn gen_base_preamble() -> Vec<C64> {
    let mut rng = seed::stream(PREAMBLE_SEED, 0);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let base: Vec<C64> = (0..PREAMBLE_PERIOD)
        .map(|_| {
            let bits: u8 = rng.gen_range(0..4);
            let re = if bits & 1 == 0 { inv_sqrt2 } else { -inv_sqrt2 };
            let im = if bits & 2 == 0 { inv_sqrt2 } else { -inv_sqrt2 };
            C64::new(re, im)
        })
        .collect();
    let mut out = Vec::with_capacity(SAMPLE_LEN);
    for _ in 0..SAMPLE_LEN / PREAMBLE_PERIOD {
        out.extend_from_slice(&base);
    }
    // QPSK symbols already have unit modulus, so the peak is 1 by construction.
    out
}

/// Applies the transmitter fingerprint chain to a waveform.
pub fn apply_impairments(
    x: &[C64],
    p: &TransmitterProfile,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<C64>, SimError> {
    let (sin_phi, cos_phi) = p.iq_phase_imbalance.sin_cos();
    let gain_i = 1.0 + p.iq_gain_imbalance;
    let gain_q = 1.0 - p.iq_gain_imbalance;
    let mut theta = 0.0f64;
    let mut out = Vec::with_capacity(x.len());
    for (n, &v) in x.iter().enumerate() {
        // IQ imbalance: gain split across branches, phase error on Q
        let mut y = C64::new(
            gain_i * v.re * cos_phi,
            gain_q * (v.re * sin_phi + v.im * cos_phi),
        );
        // memoryless cubic PA
        y = y.scale(p.pa_a1 + p.pa_a3 * y.abs_sq());
        // CFO phase ramp
        y = y.mul(C64::cis(std::f64::consts::TAU * p.cfo * n as f64));
        // Wiener phase noise
        if p.phase_noise_std > 0.0 {
            theta += p.phase_noise_std * seed::randn(rng);
            y = y.mul(C64::cis(theta));
        }
        y = y.add(p.dc_offset);
        if !y.is_finite() {
            return Err(SimError::ImpairmentOverflow);
        }
        out.push(y);
    }
    Ok(out)
}

/// Block fading (one complex gain per packet) plus AWGN at the target SNR.
pub fn apply_channel(x: &[C64], ch: &ChannelConfig, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let h = match ch.model {
        ChannelModel::Awgn => C64::new(1.0, 0.0),
        ChannelModel::RayleighBlock => {
            C64::new(seed::randn(rng), seed::randn(rng)).scale(std::f64::consts::FRAC_1_SQRT_2)
        }
        ChannelModel::RicianBlock => {
            let k = 10f64.powf(ch.rician_k_db / 10.0);
            let los = C64::new((k / (k + 1.0)).sqrt(), 0.0);
            let nlos = C64::new(seed::randn(rng), seed::randn(rng))
                .scale((1.0 / (2.0 * (k + 1.0))).sqrt());
            los.add(nlos)
        }
    };
    let mut out: Vec<C64> = x.iter().map(|v| v.mul(h)).collect();
    if ch.snr_db < NOISELESS_SNR_DB {
        let p_sig = out.iter().map(|v| v.abs_sq()).sum::<f64>() / out.len().max(1) as f64;
        let p_noise = p_sig / 10f64.powf(ch.snr_db / 10.0);
        let s = (p_noise / 2.0).sqrt();
        for v in out.iter_mut() {
            *v = v.add(C64::new(s * seed::randn(rng), s * seed::randn(rng)));
        }
    }
    out
}

/// Documented parameter ranges for synthetic populations.
pub mod ranges {
    pub const GAIN_IMBALANCE: (f64, f64) = (-0.15, 0.15);
    pub const PHASE_IMBALANCE: (f64, f64) = (-0.15, 0.15);
    pub const CFO: (f64, f64) = (-0.003, 0.003);
    pub const PHASE_NOISE_STD: (f64, f64) = (0.0, 0.02);
    pub const PA_A1: (f64, f64) = (0.9, 1.1);
    pub const PA_A3: (f64, f64) = (-0.08, 0.0);
    pub const DC_RADIUS: f64 = 0.03;
}

/// Draws `n` transmitter profiles uniformly from the documented ranges.
pub fn synth_population(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<TransmitterProfile>, SimError> {
    if n == 0 {
        return Err(SimError::EmptyPopulation);
    }
    let mut out = Vec::with_capacity(n);
    for tx_id in 0..n {
        let u = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| rng.gen_range(lo..=hi);
        let r = ranges::DC_RADIUS * rng.gen::<f64>().sqrt();
        let ang = std::f64::consts::TAU * rng.gen::<f64>();
        let p = TransmitterProfile {
            tx_id: tx_id as u16,
            iq_gain_imbalance: u(rng, ranges::GAIN_IMBALANCE),
            iq_phase_imbalance: u(rng, ranges::PHASE_IMBALANCE),
            cfo: u(rng, ranges::CFO),
            phase_noise_std: u(rng, ranges::PHASE_NOISE_STD),
            pa_a1: u(rng, ranges::PA_A1),
            pa_a3: u(rng, ranges::PA_A3),
            dc_offset: C64::new(r * ang.cos(), r * ang.sin()),
        };
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusGenConfig {
    pub packets_min: u32,
    pub packets_max: u32,
    pub channel: ChannelConfig,
    pub seed: u64,
}

impl Default for CorpusGenConfig {
    fn default() -> Self {
        // Desk-scale packet counts; heterogeneous like the real capture but
        // small enough that full sweeps stay cheap.
        CorpusGenConfig {
            packets_min: 100,
            packets_max: 300,
            channel: ChannelConfig::awgn(25.0),
            seed: 0,
        }
    }
}

/// Simulates a labeled corpus. Transmitters run in parallel, each on its own
/// `(seed, tx_id)` substream, so the result is identical to sequential
/// generation.
pub fn generate_corpus(
    profiles: &[TransmitterProfile],
    cfg: &CorpusGenConfig,
) -> Result<Corpus, SimError> {
    if profiles.is_empty() {
        return Err(SimError::EmptyPopulation);
    }
    if cfg.packets_min > cfg.packets_max || cfg.packets_min == 0 {
        return Err(SimError::InvalidConfig(format!(
            "bad packet range [{}, {}]",
            cfg.packets_min, cfg.packets_max
        )));
    }
    cfg.channel.validate()?;
    for p in profiles {
        p.validate()?;
    }
    let preamble = gen_base_preamble();

    let per_tx: Vec<Result<Vec<(SignalSample, u16)>, SimError>> = profiles
        .par_iter()
        .map(|p| {
            let mut rng = seed::stream(cfg.seed, p.tx_id as u64);
            let count = rng.gen_range(cfg.packets_min..=cfg.packets_max);
            let mut samples = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let y = apply_impairments(&preamble, p, &mut rng)?;
                let y = apply_channel(&y, &cfg.channel, &mut rng);
                samples.push((SignalSample::from_complex(&y)?, p.tx_id));
            }
            Ok(samples)
        })
        .collect();

    let mut samples = Vec::new();
    for r in per_tx {
        samples.extend(r?);
    }

    // corpus-wide normalization to unit peak amplitude (complex modulus, so
    // an identity-chain corpus stays equal to the unit-peak preamble)
    let peak = samples
        .iter()
        .map(|(s, _)| s.peak_modulus())
        .fold(0.0f32, f32::max);
    if peak > 0.0 {
        for (s, _) in samples.iter_mut() {
            s.normalize_by(peak);
        }
    }

    let mut per_tx_counts = BTreeMap::new();
    for (_, id) in &samples {
        *per_tx_counts.entry(*id).or_insert(0u32) += 1;
    }
    let corpus = Corpus {
        samples,
        manifest: CorpusManifest {
            seed: cfg.seed,
            generator: GeneratorInfo::Simulated {
                packets_min: cfg.packets_min,
                packets_max: cfg.packets_max,
                channel: cfg.channel,
            },
            per_tx_counts,
            profiles: profiles.to_vec(),
        },
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Wraps generated outlier samples as a corpus under the reserved tx id.
/// Amplitudes above 1 are scaled down to keep the corpus invariant; quieter
/// sets are left untouched so generator energy cues survive.
pub fn outlier_corpus(
    samples: Vec<SignalSample>,
    generator: GeneratorInfo,
    seed_value: u64,
) -> Corpus {
    let mut samples: Vec<(SignalSample, u16)> =
        samples.into_iter().map(|s| (s, OUTLIER_TX_ID)).collect();
    let peak = samples
        .iter()
        .map(|(s, _)| s.peak_abs())
        .fold(0.0f32, f32::max);
    if peak > 1.0 {
        for (s, _) in samples.iter_mut() {
            s.normalize_by(peak);
        }
    }
    let mut per_tx_counts = BTreeMap::new();
    if !samples.is_empty() {
        per_tx_counts.insert(OUTLIER_TX_ID, samples.len() as u32);
    }
    Corpus {
        samples,
        manifest: CorpusManifest {
            seed: seed_value,
            generator,
            per_tx_counts,
            profiles: Vec::new(),
        },
    }
}

#[cfg(test)]
mod tests;
