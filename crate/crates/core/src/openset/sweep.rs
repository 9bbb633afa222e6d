//! Experiment sweeps: accuracy of augmented vs non-augmented training as the
//! known-outlier or authorized set grows, plus the shell-thickness tuning
//! table for the ellipsoidal method.
//!
//! Every cell is fully seeded; rows are sorted by cell key before writing so
//! the CSV bytes do not depend on execution order. The two timing columns
//! are wall-clock measurements and are the only nondeterministic fields.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate, make_split, train_ova, OpenSetError, OpenSetLabel, OvaTrainConfig, Split, SplitSpec,
};
use crate::generative::{
    sample_cvae, sample_vae, train_autoencoder, train_cvae, train_vae, AeModel, GenTrainConfig,
};
use crate::latent_opt::{run_algorithm1, Algorithm1Config};
use crate::mvee::generate_ellipsoidal_outliers;
use crate::seed;
use crate::sim::{Corpus, SignalSample, OUTLIER_TX_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisedMethod {
    Vae,
    Cvae,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlindMethod {
    Ellipsoid,
    LatentOpt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Nonaug,
    Aug,
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arm::Nonaug => write!(f, "nonaug"),
            Arm::Aug => write!(f, "aug"),
        }
    }
}

/// One results row; column order mirrors the CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub a_size: usize,
    pub k_size: usize,
    pub delta: Option<f64>,
    pub seed: u64,
    pub arm: Arm,
    pub accuracy: f64,
    pub train_seconds: f64,
    pub gen_seconds: f64,
}

pub const CSV_HEADER: &str = "method,A,K,delta,seed,arm,accuracy,train_seconds,gen_seconds";

impl CsvRow {
    fn sort_key(&self) -> (String, usize, usize, String, u64, u8) {
        (
            self.method.clone(),
            self.a_size,
            self.k_size,
            format!("{:?}", self.delta),
            self.seed,
            match self.arm {
                Arm::Nonaug => 0,
                Arm::Aug => 1,
            },
        )
    }

    fn to_line(&self) -> String {
        let delta = self.delta.map(|d| format!("{d}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{:.6},{:.3},{:.3}",
            self.method,
            self.a_size,
            self.k_size,
            delta,
            self.seed,
            self.arm,
            self.accuracy,
            self.train_seconds,
            self.gen_seconds
        )
    }
}

/// Shell-thickness tuning table entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellLog {
    pub method: String,
    pub a_size: usize,
    pub k_size: usize,
    pub seed: u64,
    pub split_hash: String,
    pub ae_seconds: f64,
}

/// Run metadata written as the JSON manifest beside the CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub tuned_delta: Option<f64>,
    pub cells: Vec<CellLog>,
    pub gen_seconds_by_method: BTreeMap<String, f64>,
    /// latent-opt / ellipsoid generation wall-clock ratio, when both ran.
    pub blind_gen_seconds_ratio: Option<f64>,
}

pub struct SweepOutput {
    pub rows: Vec<CsvRow>,
    pub delta_table: Vec<DeltaRow>,
    pub manifest: RunManifest,
}

impl SweepOutput {
    pub fn csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_line());
            out.push('\n');
        }
        out
    }

    pub fn delta_csv_string(&self) -> String {
        let mut out = String::from("delta,val_accuracy\n");
        for row in &self.delta_table {
            out.push_str(&format!("{},{:.6}\n", row.delta, row.val_accuracy));
        }
        out
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<(), OpenSetError> {
        std::fs::create_dir_all(dir).map_err(|e| OpenSetError::Io(e.to_string()))?;
        std::fs::write(dir.join(format!("{name}.csv")), self.csv_string())
            .map_err(|e| OpenSetError::Io(e.to_string()))?;
        if !self.delta_table.is_empty() {
            std::fs::write(dir.join(format!("{name}_delta_sweep.csv")), self.delta_csv_string())
                .map_err(|e| OpenSetError::Io(e.to_string()))?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| OpenSetError::Io(e.to_string()))?;
        std::fs::write(dir.join(format!("{name}_manifest.json")), manifest)
            .map_err(|e| OpenSetError::Io(e.to_string()))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// supervised sweep
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupervisedSweepConfig {
    pub a_size: usize,
    pub k_sizes: Vec<usize>,
    pub o_size: usize,
    pub method: SupervisedMethod,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub latent_dim: usize,
    pub master_seed: u64,
    pub train: OvaTrainConfig,
    pub gen: GenTrainConfig,
}

impl Default for SupervisedSweepConfig {
    fn default() -> Self {
        SupervisedSweepConfig {
            a_size: 10,
            k_sizes: vec![5, 10, 15, 20, 25],
            o_size: 10,
            method: SupervisedMethod::Cvae,
            seeds: vec![0, 1, 2],
            budget: crate::generative::GENERATION_BUDGET,
            latent_dim: crate::generative::DEFAULT_LATENT_DIM,
            master_seed: 0,
            train: OvaTrainConfig::default(),
            gen: GenTrainConfig::default(),
        }
    }
}

fn corpus_tx_ids(corpus: &Corpus) -> Vec<u16> {
    corpus.tx_ids().into_iter().filter(|&id| id != OUTLIER_TX_ID).collect()
}

fn pick<T: Copy>(pool: &[T], n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<T> {
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(rng);
    shuffled.truncate(n);
    shuffled
}

/// Authorized samples of the train+val pool with their class labels; this is
/// the blind methods' training material (test data never leaks in).
fn pool_authorized(split: &Split) -> Vec<(&SignalSample, usize)> {
    split
        .train
        .iter()
        .chain(&split.val)
        .filter_map(|(s, l)| match l {
            OpenSetLabel::Authorized(c) => Some((s, *c)),
            OpenSetLabel::Outlier => None,
        })
        .collect()
}

pub fn run_supervised_sweep(
    corpus: &Corpus,
    cfg: &SupervisedSweepConfig,
) -> Result<SweepOutput, OpenSetError> {
    let ids = corpus_tx_ids(corpus);
    let max_k = cfg.k_sizes.iter().copied().max().unwrap_or(0);
    let needed = cfg.a_size + max_k + cfg.o_size;
    if ids.len() < needed {
        return Err(OpenSetError::PopulationTooSmall { needed, got: ids.len() });
    }

    // one fixed authorized set for the whole sweep
    let authorized = pick(&ids, cfg.a_size, &mut seed::stream(cfg.master_seed, 0x41));
    let rest: Vec<u16> = ids.iter().copied().filter(|id| !authorized.contains(id)).collect();

    let method_name = match cfg.method {
        SupervisedMethod::Vae => "vae",
        SupervisedMethod::Cvae => "cvae",
    };

    let cells: Vec<(usize, u64)> = cfg
        .k_sizes
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();

    let results: Vec<Result<(Vec<CsvRow>, CellLog), OpenSetError>> = cells
        .par_iter()
        .map(|&(k_size, seed_val)| {
            let cell_tag = seed::derive(seed_val, k_size as u64);
            let mut rng = seed::stream(cfg.master_seed, 0x4b4f ^ cell_tag);
            let drawn = pick(&rest, k_size + cfg.o_size, &mut rng);
            let known = drawn[..k_size].to_vec();
            let test_outliers = drawn[k_size..].to_vec();

            let spec = SplitSpec {
                authorized: authorized.clone(),
                known_outliers: known.clone(),
                test_outliers,
                seed: seed::derive(cfg.master_seed, 0x7370 ^ cell_tag),
            };
            let split = make_split(corpus, &spec)?;

            // generator trains on every sample of the known outliers
            let gen_cfg = GenTrainConfig {
                seed: seed::derive(cfg.master_seed, 0x6765 ^ cell_tag),
                ..cfg.gen
            };
            let gen_start = Instant::now();
            let generated: Vec<SignalSample> = match cfg.method {
                SupervisedMethod::Vae => {
                    let y: Vec<&SignalSample> = known
                        .iter()
                        .flat_map(|&tx| corpus.samples_of(tx))
                        .collect();
                    let model = train_vae(&y, cfg.latent_dim, &gen_cfg)?;
                    sample_vae(&model, cfg.budget, &mut seed::stream(gen_cfg.seed, 0x73))?
                }
                SupervisedMethod::Cvae => {
                    let y: Vec<(&SignalSample, usize)> = known
                        .iter()
                        .enumerate()
                        .flat_map(|(class, &tx)| {
                            corpus.samples_of(tx).into_iter().map(move |s| (s, class))
                        })
                        .collect();
                    let model = train_cvae(&y, k_size, cfg.latent_dim, &gen_cfg)?;
                    sample_cvae(&model, cfg.budget, &mut seed::stream(gen_cfg.seed, 0x73))?
                        .into_iter()
                        .map(|(s, _)| s)
                        .collect()
                }
            };
            let gen_seconds = gen_start.elapsed().as_secs_f64();

            let train_cfg = OvaTrainConfig {
                seed: seed::derive(cfg.master_seed, 0x6f76 ^ cell_tag),
                ..cfg.train
            };
            let mut rows = Vec::with_capacity(2);
            for (arm, aug) in [(Arm::Nonaug, &[][..]), (Arm::Aug, &generated[..])] {
                let t0 = Instant::now();
                let model = train_ova(&split.train, &split.val, cfg.a_size, &train_cfg, aug)?;
                let train_seconds = t0.elapsed().as_secs_f64();
                let accuracy = evaluate(&model, &split.test)?;
                rows.push(CsvRow {
                    method: method_name.to_string(),
                    a_size: cfg.a_size,
                    k_size,
                    delta: None,
                    seed: seed_val,
                    arm,
                    accuracy,
                    train_seconds,
                    gen_seconds: if arm == Arm::Aug { gen_seconds } else { 0.0 },
                });
            }
            let log = CellLog {
                method: method_name.to_string(),
                a_size: cfg.a_size,
                k_size,
                seed: seed_val,
                split_hash: format!("{:016x}", split.hash),
                ae_seconds: 0.0,
            };
            Ok((rows, log))
        })
        .collect();

    let mut rows = Vec::new();
    let mut cells_log = Vec::new();
    let mut gen_totals: BTreeMap<String, f64> = BTreeMap::new();
    for r in results {
        let (cell_rows, log) = r?;
        for row in &cell_rows {
            if row.arm == Arm::Aug {
                *gen_totals.entry(row.method.clone()).or_insert(0.0) += row.gen_seconds;
            }
        }
        rows.extend(cell_rows);
        cells_log.push(log);
    }
    rows.sort_by_key(|r| r.sort_key());
    cells_log.sort_by_key(|c| (c.method.clone(), c.a_size, c.k_size, c.seed));

    Ok(SweepOutput {
        rows,
        delta_table: Vec::new(),
        manifest: RunManifest {
            config: serde_json::to_value(cfg).map_err(|e| OpenSetError::Io(e.to_string()))?,
            tuned_delta: None,
            cells: cells_log,
            gen_seconds_by_method: gen_totals,
            blind_gen_seconds_ratio: None,
        },
    })
}

// ---------------------------------------------------------------------------
// blind sweep
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlindSweepConfig {
    pub a_sizes: Vec<usize>,
    pub o_size: usize,
    pub methods: Vec<BlindMethod>,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub latent_dim: usize,
    /// Shell thicknesses tried at `tune_a` before the main runs.
    pub delta_grid: Vec<f64>,
    /// Authorized-set size at which delta is tuned.
    pub tune_a: usize,
    pub master_seed: u64,
    pub train: OvaTrainConfig,
    pub ae: GenTrainConfig,
    pub algo1: Algorithm1Config,
}

impl Default for BlindSweepConfig {
    fn default() -> Self {
        BlindSweepConfig {
            a_sizes: vec![5, 10, 15, 20, 25],
            o_size: 10,
            methods: vec![BlindMethod::Ellipsoid, BlindMethod::LatentOpt],
            seeds: vec![0, 1, 2],
            budget: crate::generative::GENERATION_BUDGET,
            latent_dim: crate::generative::DEFAULT_LATENT_DIM,
            delta_grid: vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6],
            tune_a: 5,
            master_seed: 0,
            train: OvaTrainConfig::default(),
            ae: GenTrainConfig::default(),
            algo1: Algorithm1Config::default(),
        }
    }
}

struct BlindCell {
    split: Split,
    ae: AeModel,
    ae_seconds: f64,
    authorized_pool: Vec<(SignalSample, usize)>,
}

fn prepare_blind_cell(
    corpus: &Corpus,
    authorized: Vec<u16>,
    test_outliers: Vec<u16>,
    split_seed: u64,
    latent_dim: usize,
    ae_cfg: &GenTrainConfig,
) -> Result<BlindCell, OpenSetError> {
    let spec = SplitSpec {
        authorized,
        known_outliers: Vec::new(),
        test_outliers,
        seed: split_seed,
    };
    let split = make_split(corpus, &spec)?;
    let pool: Vec<(SignalSample, usize)> = pool_authorized(&split)
        .into_iter()
        .map(|(s, c)| (s.clone(), c))
        .collect();
    let refs: Vec<&SignalSample> = pool.iter().map(|(s, _)| s).collect();
    let t0 = Instant::now();
    let ae = train_autoencoder(&refs, latent_dim, ae_cfg)?;
    let ae_seconds = t0.elapsed().as_secs_f64();
    Ok(BlindCell { split, ae, ae_seconds, authorized_pool: pool })
}

/// Generates blind outliers for one cell; returns the samples and the
/// method-specific generation wall-clock (the shared autoencoder is excluded
/// so the two methods' costs stay comparable).
fn generate_blind(
    cell: &BlindCell,
    method: BlindMethod,
    delta: f64,
    budget: usize,
    algo1: &Algorithm1Config,
    gen_seed: u64,
) -> Result<(Vec<SignalSample>, f64), OpenSetError> {
    let t0 = Instant::now();
    let samples = match method {
        BlindMethod::Ellipsoid => {
            let refs: Vec<&SignalSample> = cell.authorized_pool.iter().map(|(s, _)| s).collect();
            generate_ellipsoidal_outliers(&cell.ae, &refs, delta, budget, gen_seed)?.samples
        }
        BlindMethod::LatentOpt => {
            let labeled: Vec<(&SignalSample, usize)> =
                cell.authorized_pool.iter().map(|(s, c)| (s, *c)).collect();
            let classes = cell.split.class_of_tx.len();
            let cfg = Algorithm1Config { count: budget, seed: gen_seed, ..*algo1 };
            run_algorithm1(&labeled, &cell.ae, classes, &cfg)?.samples
        }
    };
    Ok((samples, t0.elapsed().as_secs_f64()))
}

pub fn run_blind_sweep(corpus: &Corpus, cfg: &BlindSweepConfig) -> Result<SweepOutput, OpenSetError> {
    let ids = corpus_tx_ids(corpus);
    let max_a = cfg.a_sizes.iter().copied().max().unwrap_or(0).max(cfg.tune_a);
    let needed = max_a + cfg.o_size;
    if ids.len() < needed {
        return Err(OpenSetError::PopulationTooSmall { needed, got: ids.len() });
    }

    // held-out unknowns fixed for the whole sweep, authorized drawn per cell
    let test_outliers = pick(&ids, cfg.o_size, &mut seed::stream(cfg.master_seed, 0x4f));
    let rest: Vec<u16> = ids.iter().copied().filter(|id| !test_outliers.contains(id)).collect();

    let pick_a = |a_size: usize, seed_val: u64| -> Vec<u16> {
        let tag = seed::derive(seed_val, a_size as u64);
        pick(&rest, a_size, &mut seed::stream(cfg.master_seed, 0x41 ^ tag))
    };
    let split_seed = |a_size: usize, seed_val: u64| {
        seed::derive(cfg.master_seed, 0x7370 ^ seed::derive(seed_val, a_size as u64))
    };
    let gen_seed = |a_size: usize, seed_val: u64, method: u64| {
        seed::derive(cfg.master_seed, method ^ seed::derive(seed_val, a_size as u64))
    };

    // shell thickness tuned once on validation accuracy, then fixed
    let mut delta_table = Vec::new();
    let mut tuned_delta = None;
    if cfg.methods.contains(&BlindMethod::Ellipsoid) {
        let seed_val = *cfg.seeds.first().unwrap_or(&0);
        let cell = prepare_blind_cell(
            corpus,
            pick_a(cfg.tune_a, seed_val),
            test_outliers.clone(),
            split_seed(cfg.tune_a, seed_val),
            cfg.latent_dim,
            &GenTrainConfig { seed: gen_seed(cfg.tune_a, seed_val, 0x6165), ..cfg.ae },
        )?;
        let train_cfg = OvaTrainConfig {
            seed: seed::derive(cfg.master_seed, 0x7475_6e65),
            ..cfg.train
        };
        let mut best: Option<(f64, f64)> = None;
        for &delta in &cfg.delta_grid {
            let (generated, _) = generate_blind(
                &cell,
                BlindMethod::Ellipsoid,
                delta,
                cfg.budget,
                &cfg.algo1,
                gen_seed(cfg.tune_a, seed_val, 0x6474),
            )?;
            let model = train_ova(
                &cell.split.train,
                &cell.split.val,
                cfg.tune_a,
                &train_cfg,
                &generated,
            )?;
            // validation accuracy: real validation samples plus a fresh
            // held-out batch from the same generator, labeled outlier, so
            // both authorized retention and rejection weigh in
            let (holdout, _) = generate_blind(
                &cell,
                BlindMethod::Ellipsoid,
                delta,
                (cfg.budget / 5).max(1),
                &cfg.algo1,
                gen_seed(cfg.tune_a, seed_val, 0x6876),
            )?;
            let mut val_all = cell.split.val.clone();
            val_all.extend(holdout.into_iter().map(|s| (s, OpenSetLabel::Outlier)));
            let val_accuracy = evaluate(&model, &val_all)?;
            delta_table.push(DeltaRow { delta, val_accuracy });
            if best.map(|(acc, _)| val_accuracy > acc).unwrap_or(true) {
                best = Some((val_accuracy, delta));
            }
        }
        tuned_delta = best.map(|(_, d)| d);
    }
    let delta = tuned_delta.unwrap_or(0.0);

    let cells: Vec<(usize, u64)> = cfg
        .a_sizes
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();

    let results: Vec<Result<(Vec<CsvRow>, Vec<CellLog>), OpenSetError>> = cells
        .par_iter()
        .map(|&(a_size, seed_val)| {
            let cell = prepare_blind_cell(
                corpus,
                pick_a(a_size, seed_val),
                test_outliers.clone(),
                split_seed(a_size, seed_val),
                cfg.latent_dim,
                &GenTrainConfig { seed: gen_seed(a_size, seed_val, 0x6165), ..cfg.ae },
            )?;
            let train_cfg = OvaTrainConfig {
                seed: seed::derive(cfg.master_seed, 0x6f76 ^ seed::derive(seed_val, a_size as u64)),
                ..cfg.train
            };

            // the non-augmented arm is method-independent: train once
            let t0 = Instant::now();
            let base_model = train_ova(&cell.split.train, &cell.split.val, a_size, &train_cfg, &[])?;
            let base_seconds = t0.elapsed().as_secs_f64();
            let base_accuracy = evaluate(&base_model, &cell.split.test)?;

            let mut rows = Vec::new();
            let mut logs = Vec::new();
            for &method in &cfg.methods {
                let (name, method_tag, delta_field) = match method {
                    BlindMethod::Ellipsoid => ("ellipsoid", 0x6474, Some(delta)),
                    BlindMethod::LatentOpt => ("latent_opt", 0x6c6f, None),
                };
                let (generated, gen_seconds) = generate_blind(
                    &cell,
                    method,
                    delta,
                    cfg.budget,
                    &cfg.algo1,
                    gen_seed(a_size, seed_val, method_tag),
                )?;
                let t0 = Instant::now();
                let model =
                    train_ova(&cell.split.train, &cell.split.val, a_size, &train_cfg, &generated)?;
                let train_seconds = t0.elapsed().as_secs_f64();
                let accuracy = evaluate(&model, &cell.split.test)?;

                rows.push(CsvRow {
                    method: name.to_string(),
                    a_size,
                    k_size: 0,
                    delta: delta_field,
                    seed: seed_val,
                    arm: Arm::Nonaug,
                    accuracy: base_accuracy,
                    train_seconds: base_seconds,
                    gen_seconds: 0.0,
                });
                rows.push(CsvRow {
                    method: name.to_string(),
                    a_size,
                    k_size: 0,
                    delta: delta_field,
                    seed: seed_val,
                    arm: Arm::Aug,
                    accuracy,
                    train_seconds,
                    gen_seconds,
                });
                logs.push(CellLog {
                    method: name.to_string(),
                    a_size,
                    k_size: 0,
                    seed: seed_val,
                    split_hash: format!("{:016x}", cell.split.hash),
                    ae_seconds: cell.ae_seconds,
                });
            }
            Ok((rows, logs))
        })
        .collect();

    let mut rows = Vec::new();
    let mut cells_log = Vec::new();
    let mut gen_totals: BTreeMap<String, f64> = BTreeMap::new();
    for r in results {
        let (cell_rows, logs) = r?;
        for row in &cell_rows {
            if row.arm == Arm::Aug {
                *gen_totals.entry(row.method.clone()).or_insert(0.0) += row.gen_seconds;
            }
        }
        rows.extend(cell_rows);
        cells_log.extend(logs);
    }
    rows.sort_by_key(|r| r.sort_key());
    cells_log.sort_by_key(|c| (c.method.clone(), c.a_size, c.k_size, c.seed));

    let ratio = match (gen_totals.get("latent_opt"), gen_totals.get("ellipsoid")) {
        (Some(&l), Some(&e)) if e > 0.0 => Some(l / e),
        _ => None,
    };

    Ok(SweepOutput {
        rows,
        delta_table,
        manifest: RunManifest {
            config: serde_json::to_value(cfg).map_err(|e| OpenSetError::Io(e.to_string()))?,
            tuned_delta,
            cells: cells_log,
            gen_seconds_by_method: gen_totals,
            blind_gen_seconds_ratio: ratio,
        },
    })
}
