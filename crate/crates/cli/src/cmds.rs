//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use openrf_core::generative::{
    proportional_counts, sample_cvae, sample_vae, train_autoencoder, train_cvae, train_vae,
    AeModel, CvaeModel, GenTrainConfig, VaeModel, DEFAULT_LATENT_DIM, GENERATION_BUDGET,
};
use openrf_core::latent_opt::{run_algorithm1, Algorithm1Config, JudgeTrainConfig, OptConfig};
use openrf_core::mvee::generate_ellipsoidal_outliers;
use openrf_core::openset::sweep::{
    run_blind_sweep, run_supervised_sweep, BlindMethod, BlindSweepConfig, CsvRow,
    SupervisedMethod, SupervisedSweepConfig, SweepOutput,
};
use openrf_core::openset::{evaluate as ova_evaluate, make_split, train_ova, OvaTrainConfig, SplitSpec};
use openrf_core::seed;
use openrf_core::sim::{
    generate_corpus, load_corpus, outlier_corpus, save_corpus, synth_population, ChannelConfig,
    ChannelModel, Corpus, CorpusGenConfig, GeneratorInfo, SignalSample, OUTLIER_TX_ID,
};

use crate::plot::{line_chart, Series, COLORS};
use crate::{
    runtime, usage, ChannelArg, CliError, EvaluateArgs, GenerateArgs, Globals, MethodArg,
    ModelArg, ReportArgs, SimulateArgs, SweepArgs, SweepKindArg, TrainGenArgs,
};

pub(crate) fn simulate(g: &Globals, args: &SimulateArgs) -> Result<(), CliError> {
    let (default_tx, default_min, default_max) = if g.paper_scale {
        (71, 200, 1500)
    } else {
        (40, 100, 300)
    };
    let tx = args.tx.or(g.file.tx).unwrap_or(default_tx);
    let packets_min = args.packets_min.or(g.file.packets_min).unwrap_or(default_min);
    let packets_max = args.packets_max.or(g.file.packets_max).unwrap_or(default_max);
    let snr_db = args.snr.or(g.file.snr).unwrap_or(25.0);
    let model = match args.channel.unwrap_or(ChannelArg::Awgn) {
        ChannelArg::Awgn => ChannelModel::Awgn,
        ChannelArg::Rayleigh => ChannelModel::RayleighBlock,
        ChannelArg::Rician => ChannelModel::RicianBlock,
    };
    let channel = ChannelConfig {
        model,
        snr_db,
        rician_k_db: args.rician_k.unwrap_or(10.0),
    };

    let profiles =
        synth_population(tx, &mut seed::stream(g.seed, 0x706f_70)).map_err(usage_or_runtime)?;
    let cfg = CorpusGenConfig { packets_min, packets_max, channel, seed: g.seed };
    let corpus = generate_corpus(&profiles, &cfg).map_err(usage_or_runtime)?;
    let path = resolve_out(g, &args.output);
    save_corpus(&corpus, &path).map_err(runtime)?;

    println!("wrote {} ({} samples)", path.display(), corpus.samples.len());
    for (tx_id, count) in &corpus.manifest.per_tx_counts {
        println!("tx {tx_id:>3}: {count} packets");
    }
    Ok(())
}

fn usage_or_runtime(e: openrf_core::sim::SimError) -> CliError {
    use openrf_core::sim::SimError::*;
    match e {
        EmptyPopulation | InvalidConfig(_) | InvalidProfile(_) => usage(e.to_string()),
        other => runtime(other),
    }
}

pub(crate) fn train_gen(g: &Globals, args: &TrainGenArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus).map_err(runtime)?;
    if args.ids.is_empty() {
        return Err(usage("--ids must name at least one transmitter"));
    }
    let latent = args.latent.or(g.file.latent).unwrap_or(DEFAULT_LATENT_DIM);
    let cfg = GenTrainConfig {
        learning_rate: args.learning_rate.unwrap_or(1e-3),
        batch_size: args.batch_size.unwrap_or(64),
        epochs: args.epochs.or(g.file.gen_epochs).unwrap_or(30),
        seed: g.seed,
        beta: args.beta.unwrap_or(1.0),
    };
    let path = resolve_out(g, &args.output);

    match args.model {
        ModelArg::Vae => {
            let samples = collect_samples(&corpus, &args.ids)?;
            let model = train_vae(&samples, latent, &cfg).map_err(runtime)?;
            model.save(&path).map_err(runtime)?;
            print_curve("vae", model.loss_curve.iter().map(|e| e.total));
        }
        ModelArg::Cvae => {
            let labeled = collect_labeled(&corpus, &args.ids)?;
            let model = train_cvae(&labeled, args.ids.len(), latent, &cfg).map_err(runtime)?;
            model.save(&path).map_err(runtime)?;
            print_curve("cvae", model.loss_curve.iter().map(|e| e.total));
        }
        ModelArg::Ae => {
            let samples = collect_samples(&corpus, &args.ids)?;
            let model = train_autoencoder(&samples, latent, &cfg).map_err(runtime)?;
            model.save(&path).map_err(runtime)?;
            print_curve("ae", model.loss_curve.iter().copied());
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn print_curve(name: &str, curve: impl Iterator<Item = f64>) {
    let values: Vec<f64> = curve.collect();
    if let (Some(first), Some(last)) = (values.first(), values.last()) {
        println!("{name} training loss: {first:.4} -> {last:.4} over {} epochs", values.len());
    }
}

fn collect_samples<'c>(
    corpus: &'c Corpus,
    ids: &[u16],
) -> Result<Vec<&'c SignalSample>, CliError> {
    let mut out = Vec::new();
    for &id in ids {
        let samples = corpus.samples_of(id);
        if samples.is_empty() {
            return Err(usage(format!("transmitter {id} not present in corpus")));
        }
        out.extend(samples);
    }
    Ok(out)
}

fn collect_labeled<'c>(
    corpus: &'c Corpus,
    ids: &[u16],
) -> Result<Vec<(&'c SignalSample, usize)>, CliError> {
    let mut out = Vec::new();
    for (class, &id) in ids.iter().enumerate() {
        let samples = corpus.samples_of(id);
        if samples.is_empty() {
            return Err(usage(format!("transmitter {id} not present in corpus")));
        }
        out.extend(samples.into_iter().map(|s| (s, class)));
    }
    Ok(out)
}

pub(crate) fn generate(g: &Globals, args: &GenerateArgs) -> Result<(), CliError> {
    let count = args.count.or(g.file.budget).unwrap_or(GENERATION_BUDGET);
    let path = resolve_out(g, &args.output);

    let (samples, info) = match args.method {
        MethodArg::Vae => {
            let model = VaeModel::load(&args.model).map_err(|e| usage(format!("--model: {e}")))?;
            let samples = sample_vae(&model, count, &mut seed::stream(g.seed, 0x7661))
                .map_err(runtime)?;
            (samples, GeneratorInfo::Vae { latent_dim: model.latent_dim })
        }
        MethodArg::Cvae => {
            let model = CvaeModel::load(&args.model).map_err(|e| usage(format!("--model: {e}")))?;
            let labeled = sample_cvae(&model, count, &mut seed::stream(g.seed, 0x6376))
                .map_err(runtime)?;
            let counts: Vec<u32> = proportional_counts(count, model.num_classes)
                .into_iter()
                .map(|c| c as u32)
                .collect();
            println!(
                "per-class counts: {}",
                counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            );
            (
                labeled.into_iter().map(|(s, _)| s).collect(),
                GeneratorInfo::Cvae {
                    latent_dim: model.latent_dim,
                    num_classes: model.num_classes,
                    per_class_counts: counts,
                },
            )
        }
        MethodArg::Ellipsoid => {
            let delta = args.delta.ok_or_else(|| {
                usage(
                    "--method ellipsoid needs --delta; run `sweep --kind blind` first to tune \
                     the shell thickness on validation accuracy",
                )
            })?;
            let (ae, authorized) = load_blind_inputs(args)?;
            let out = generate_ellipsoidal_outliers(
                &ae,
                &authorized.iter().map(|(s, _)| *s).collect::<Vec<_>>(),
                delta,
                count,
                seed::derive(g.seed, 0x6474),
            )
            .map_err(runtime)?;
            println!(
                "round-trip fraction outside ellipsoid: {:.3}",
                out.fraction_outside
            );
            (out.samples, GeneratorInfo::Ellipsoid { delta, latent_dim: ae.latent_dim })
        }
        MethodArg::LatentOpt => {
            let (ae, authorized) = load_blind_inputs(args)?;
            let opt = OptConfig {
                inner_steps: args.inner_steps.unwrap_or(200),
                inner_lr: args.inner_lr.unwrap_or(0.05),
                outer_iters: args.outer_iters.unwrap_or(3),
                lambda: args.lambda.unwrap_or(1.0),
                init_noise_std: 0.01,
            };
            let cfg = Algorithm1Config {
                opt,
                judge: JudgeTrainConfig {
                    epochs: args.judge_epochs.unwrap_or(12),
                    ..JudgeTrainConfig::default()
                },
                retrain_epochs: 5,
                count,
                seed: seed::derive(g.seed, 0x6c6f),
            };
            let classes = args.ids.len();
            let out = run_algorithm1(&authorized, &ae, classes, &cfg).map_err(runtime)?;
            println!(
                "final judge labels {:.1}% of generated samples as outliers",
                out.self_label_fraction * 100.0
            );
            (
                out.samples,
                GeneratorInfo::LatentOpt {
                    outer_iters: opt.outer_iters,
                    inner_steps: opt.inner_steps,
                    inner_lr: opt.inner_lr,
                    lambda: opt.lambda,
                    latent_dim: ae.latent_dim,
                },
            )
        }
    };

    let corpus = outlier_corpus(samples, info, g.seed);
    save_corpus(&corpus, &path).map_err(runtime)?;
    println!("wrote {} ({} samples, tx id {})", path.display(), corpus.samples.len(), OUTLIER_TX_ID);
    Ok(())
}

/// Loads the autoencoder and the labeled authorized samples for the blind
/// methods; class index = position in `--ids`.
fn load_blind_inputs<'a>(
    args: &'a GenerateArgs,
) -> Result<(AeModel, Vec<(&'a SignalSample, usize)>), CliError> {
    let corpus_path = args
        .corpus
        .as_ref()
        .ok_or_else(|| usage("blind methods need --corpus with the authorized samples"))?;
    if args.ids.is_empty() {
        return Err(usage("blind methods need --ids with the authorized transmitters"));
    }
    let ae = AeModel::load(&args.model).map_err(|e| usage(format!("--model: {e}")))?;
    // leak the corpus so sample references can be returned alongside the model;
    // the process is short-lived and the corpus is needed until exit anyway
    let corpus: &'static Corpus = Box::leak(Box::new(load_corpus(corpus_path).map_err(runtime)?));
    let mut labeled = Vec::new();
    for (class, &id) in args.ids.iter().enumerate() {
        let samples = corpus.samples_of(id);
        if samples.is_empty() {
            return Err(usage(format!("transmitter {id} not present in corpus")));
        }
        labeled.extend(samples.into_iter().map(|s| (s, class)));
    }
    Ok((ae, labeled))
}

pub(crate) fn evaluate(g: &Globals, args: &EvaluateArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus).map_err(runtime)?;
    let spec = SplitSpec {
        authorized: args.authorized.clone(),
        known_outliers: args.known.clone(),
        test_outliers: args.test_outliers.clone(),
        seed: seed::derive(g.seed, 0x6576),
    };
    let split = make_split(&corpus, &spec).map_err(|e| usage(e.to_string()))?;

    let augmentation: Vec<SignalSample> = match &args.augment {
        Some(path) => load_corpus(path)
            .map_err(runtime)?
            .samples
            .into_iter()
            .map(|(s, _)| s)
            .collect(),
        None => Vec::new(),
    };

    let cfg = OvaTrainConfig {
        max_epochs: args.epochs.or(g.file.epochs).unwrap_or(30),
        tau: args.tau.or(g.file.tau).unwrap_or(0.5),
        seed: seed::derive(g.seed, 0x6f76),
        ..OvaTrainConfig::default()
    };
    let model = train_ova(&split.train, &split.val, args.authorized.len(), &cfg, &augmentation)
        .map_err(runtime)?;
    let accuracy = ova_evaluate(&model, &split.test).map_err(runtime)?;
    println!(
        "open-set accuracy: {accuracy:.4} ({} test samples, tau {}, {} epochs run)",
        split.test.len(),
        model.tau,
        model.epochs_run
    );

    if let Some(json_path) = &args.out_json {
        let path = resolve_out(g, json_path);
        let report = serde_json::json!({
            "accuracy": accuracy,
            "authorized": args.authorized,
            "known_outliers": args.known,
            "test_outliers": args.test_outliers,
            "augmented": args.augment.is_some(),
            "augmentation_count": augmentation.len(),
            "tau": model.tau,
            "seed": g.seed,
            "split_hash": format!("{:016x}", split.hash),
        });
        std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap())
            .map_err(runtime)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub(crate) fn sweep(g: &Globals, args: &SweepArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus).map_err(runtime)?;
    let name = args.name.clone().unwrap_or_else(|| match args.kind {
        SweepKindArg::Supervised => "supervised".to_string(),
        SweepKindArg::Blind => "blind".to_string(),
    });
    let o_size = args.o_size.unwrap_or(if g.paper_scale { 30 } else { 10 });
    let budget = args.budget.or(g.file.budget).unwrap_or(GENERATION_BUDGET);
    let latent = args.latent.or(g.file.latent).unwrap_or(DEFAULT_LATENT_DIM);
    let seeds = args.seeds.clone().or_else(|| g.file.seeds.clone()).unwrap_or(vec![0, 1, 2]);
    let train = OvaTrainConfig {
        max_epochs: args.epochs.or(g.file.epochs).unwrap_or(30),
        tau: g.file.tau.unwrap_or(0.5),
        ..OvaTrainConfig::default()
    };
    let gen = GenTrainConfig {
        epochs: args.gen_epochs.or(g.file.gen_epochs).unwrap_or(30),
        ..GenTrainConfig::default()
    };

    let output = match args.kind {
        SweepKindArg::Supervised => {
            let methods = parse_supervised_methods(args.methods.as_deref())?;
            let mut merged: Option<SweepOutput> = None;
            for method in methods {
                let cfg = SupervisedSweepConfig {
                    a_size: args.a_size.unwrap_or(10),
                    k_sizes: args.k_sizes.clone().unwrap_or(vec![5, 10, 15, 20, 25]),
                    o_size,
                    method,
                    seeds: seeds.clone(),
                    budget,
                    latent_dim: latent,
                    master_seed: g.seed,
                    train,
                    gen,
                };
                let out = run_supervised_sweep(&corpus, &cfg).map_err(sweep_err)?;
                merged = Some(match merged {
                    None => out,
                    Some(mut acc) => {
                        acc.rows.extend(out.rows);
                        acc.manifest.cells.extend(out.manifest.cells);
                        for (k, v) in out.manifest.gen_seconds_by_method {
                            *acc.manifest.gen_seconds_by_method.entry(k).or_insert(0.0) += v;
                        }
                        acc
                    }
                });
            }
            merged.ok_or_else(|| usage("no methods selected"))?
        }
        SweepKindArg::Blind => {
            let methods = parse_blind_methods(args.methods.as_deref())?;
            let cfg = BlindSweepConfig {
                a_sizes: args.a_sizes.clone().unwrap_or(vec![5, 10, 15, 20, 25]),
                o_size,
                methods,
                seeds: seeds.clone(),
                budget,
                latent_dim: latent,
                delta_grid: args
                    .delta_grid
                    .clone()
                    .or_else(|| g.file.delta_grid.clone())
                    .unwrap_or(vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6]),
                tune_a: 5,
                master_seed: g.seed,
                train,
                ae: gen,
                algo1: Algorithm1Config {
                    opt: OptConfig {
                        inner_steps: args.inner_steps.unwrap_or(200),
                        outer_iters: args.outer_iters.unwrap_or(3),
                        ..OptConfig::default()
                    },
                    ..Algorithm1Config::default()
                },
            };
            run_blind_sweep(&corpus, &cfg).map_err(sweep_err)?
        }
    };

    output.write(&g.out_dir, &name).map_err(runtime)?;
    println!("wrote {}", g.out_dir.join(format!("{name}.csv")).display());
    if let Some(ratio) = output.manifest.blind_gen_seconds_ratio {
        println!("latent-opt / ellipsoid generation wall-clock ratio: {ratio:.1}x");
    }

    for (file, svg) in plots_from_rows(&output, &name) {
        let path = g.out_dir.join(file);
        std::fs::write(&path, svg).map_err(runtime)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn sweep_err(e: openrf_core::openset::OpenSetError) -> CliError {
    use openrf_core::openset::OpenSetError::*;
    match e {
        PopulationTooSmall { .. } | InvalidSplitSpec(_) => usage(e.to_string()),
        other => runtime(other),
    }
}

fn parse_supervised_methods(arg: Option<&[String]>) -> Result<Vec<SupervisedMethod>, CliError> {
    match arg {
        None => Ok(vec![SupervisedMethod::Cvae]),
        Some(names) => names
            .iter()
            .map(|n| match n.as_str() {
                "vae" => Ok(SupervisedMethod::Vae),
                "cvae" => Ok(SupervisedMethod::Cvae),
                other => Err(usage(format!(
                    "unknown supervised method {other:?} (expected vae, cvae)"
                ))),
            })
            .collect(),
    }
}

fn parse_blind_methods(arg: Option<&[String]>) -> Result<Vec<BlindMethod>, CliError> {
    match arg {
        None => Ok(vec![BlindMethod::Ellipsoid, BlindMethod::LatentOpt]),
        Some(names) => names
            .iter()
            .map(|n| match n.as_str() {
                "ellipsoid" => Ok(BlindMethod::Ellipsoid),
                "latent-opt" | "latent_opt" => Ok(BlindMethod::LatentOpt),
                other => Err(usage(format!(
                    "unknown blind method {other:?} (expected ellipsoid, latent-opt)"
                ))),
            })
            .collect(),
    }
}

/// Aggregates rows into per-method accuracy curves and the delta-sweep plot.
fn plots_from_rows(output: &SweepOutput, name: &str) -> Vec<(String, String)> {
    let mut by_method: BTreeMap<String, Vec<&CsvRow>> = BTreeMap::new();
    for row in &output.rows {
        by_method.entry(row.method.clone()).or_default().push(row);
    }

    let mut files = Vec::new();
    for (method, rows) in &by_method {
        let supervised = rows.iter().any(|r| r.k_size > 0);
        let x_of = |r: &CsvRow| if supervised { r.k_size } else { r.a_size } as f64;
        let mut series = Vec::new();
        for (i, (arm_name, want_aug)) in [("augmented", true), ("non-augmented", false)]
            .into_iter()
            .enumerate()
        {
            // mean across seeds per x
            let mut sums: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
            for r in rows {
                let is_aug = matches!(r.arm, openrf_core::openset::sweep::Arm::Aug);
                if is_aug == want_aug {
                    let key = x_of(r) as u64;
                    let e = sums.entry(key).or_insert((0.0, 0));
                    e.0 += r.accuracy;
                    e.1 += 1;
                }
            }
            let points: Vec<(f64, f64)> = sums
                .into_iter()
                .map(|(x, (sum, n))| (x as f64, sum / n as f64))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    label: arm_name.to_string(),
                    points,
                    color: COLORS[i % COLORS.len()],
                });
            }
        }
        let x_label = if supervised { "known outliers |K|" } else { "authorized |A|" };
        let svg = line_chart(
            &format!("{method}: testing accuracy"),
            x_label,
            "accuracy",
            &series,
        );
        files.push((format!("{name}_{method}.svg"), svg));
    }

    if !output.delta_table.is_empty() {
        let points: Vec<(f64, f64)> = output
            .delta_table
            .iter()
            .map(|r| (r.delta, r.val_accuracy))
            .collect();
        let svg = line_chart(
            "shell thickness tuning",
            "delta",
            "validation accuracy",
            &[Series { label: "validation".into(), points, color: COLORS[2] }],
        );
        files.push((format!("{name}_delta_sweep.svg"), svg));
    }
    files
}

pub(crate) fn report(g: &Globals, args: &ReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.csv).map_err(runtime)?;
    let rows = parse_csv(&text)?;
    let name = args.name.clone().unwrap_or_else(|| "report".to_string());

    // summary: mean accuracy per (method, size, arm) and the augmentation gain
    let mut groups: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &rows {
        let x = if r.k_size > 0 { r.k_size } else { r.a_size };
        let e = groups.entry((r.method.clone(), x)).or_default();
        match r.arm {
            openrf_core::openset::sweep::Arm::Aug => e.0.push(r.accuracy),
            openrf_core::openset::sweep::Arm::Nonaug => e.1.push(r.accuracy),
        }
    }
    println!("{:<12} {:>5} {:>10} {:>10} {:>8}", "method", "size", "aug", "nonaug", "gain");
    for ((method, x), (aug, nonaug)) in &groups {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        println!(
            "{:<12} {:>5} {:>10.4} {:>10.4} {:>+8.4}",
            method,
            x,
            mean(aug),
            mean(nonaug),
            mean(aug) - mean(nonaug)
        );
    }

    let delta_table = match &args.delta_csv {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(runtime)?;
            parse_delta_csv(&text)?
        }
        None => Vec::new(),
    };
    let output = SweepOutput {
        rows,
        delta_table,
        manifest: openrf_core::openset::sweep::RunManifest {
            config: serde_json::Value::Null,
            tuned_delta: None,
            cells: Vec::new(),
            gen_seconds_by_method: BTreeMap::new(),
            blind_gen_seconds_ratio: None,
        },
    };
    for (file, svg) in plots_from_rows(&output, &name) {
        let path = g.out_dir.join(file);
        std::fs::write(&path, svg).map_err(runtime)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_csv(text: &str) -> Result<Vec<CsvRow>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(usage(format!("bad CSV row {}: {line}", i + 1)));
        }
        let parse_err = |what: &str| usage(format!("bad {what} in CSV row {}", i + 1));
        rows.push(CsvRow {
            method: f[0].to_string(),
            a_size: f[1].parse().map_err(|_| parse_err("A"))?,
            k_size: f[2].parse().map_err(|_| parse_err("K"))?,
            delta: if f[3].is_empty() { None } else { Some(f[3].parse().map_err(|_| parse_err("delta"))?) },
            seed: f[4].parse().map_err(|_| parse_err("seed"))?,
            arm: match f[5] {
                "aug" => openrf_core::openset::sweep::Arm::Aug,
                "nonaug" => openrf_core::openset::sweep::Arm::Nonaug,
                _ => return Err(parse_err("arm")),
            },
            accuracy: f[6].parse().map_err(|_| parse_err("accuracy"))?,
            train_seconds: f[7].parse().unwrap_or(0.0),
            gen_seconds: f[8].parse().unwrap_or(0.0),
        });
    }
    Ok(rows)
}

fn parse_delta_csv(text: &str) -> Result<Vec<openrf_core::openset::sweep::DeltaRow>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 2 {
            return Err(usage(format!("bad delta CSV row {}", i + 1)));
        }
        rows.push(openrf_core::openset::sweep::DeltaRow {
            delta: f[0].parse().map_err(|_| usage("bad delta value"))?,
            val_accuracy: f[1].parse().map_err(|_| usage("bad accuracy value"))?,
        });
    }
    Ok(rows)
}

fn resolve_out(g: &Globals, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        g.out_dir.join(path)
    }
}
