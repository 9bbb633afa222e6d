use super::*;

fn ones() -> Vec<C64> {
    vec![C64::new(1.0, 0.0); SAMPLE_LEN]
}

#[test]
fn preamble_is_periodic() {
    let v = gen_base_preamble();
    assert_eq!(v.len(), SAMPLE_LEN);
    for k in 0..SAMPLE_LEN - PREAMBLE_PERIOD {
        assert_eq!(v[k], v[k + PREAMBLE_PERIOD]);
    }
}

#[test]
fn preamble_is_deterministic_with_unit_peak() {
    let a = gen_base_preamble();
    let b = gen_base_preamble();
    assert_eq!(a, b);
    let peak = a.iter().map(|c| c.abs()).fold(0.0, f64::max);
    assert!((peak - 1.0).abs() < 1e-12);
}

#[test]
fn identity_profile_passes_waveform_through() {
    let x = gen_base_preamble();
    let mut rng = seed::root(1);
    let y = apply_impairments(&x, &TransmitterProfile::identity(0), &mut rng).unwrap();
    assert_eq!(x, y);
}

#[test]
fn quarter_cycle_cfo_rotates_second_sample_to_j() {
    let mut p = TransmitterProfile::identity(0);
    p.cfo = 0.25;
    // fits the profile invariant checks only for |cfo| < 0.01, so apply the
    // chain directly without population validation
    let mut rng = seed::root(1);
    let y = apply_impairments(&ones(), &p, &mut rng).unwrap();
    assert!((y[1].re - 0.0).abs() < 1e-12);
    assert!((y[1].im - 1.0).abs() < 1e-12);
}

#[test]
fn cubic_pa_scales_unit_amplitude() {
    let mut p = TransmitterProfile::identity(0);
    p.pa_a3 = -0.1;
    let mut rng = seed::root(1);
    let y = apply_impairments(&ones(), &p, &mut rng).unwrap();
    for v in &y {
        assert!((v.re - 0.9).abs() < 1e-12);
        assert!(v.im.abs() < 1e-12);
    }
}

#[test]
fn pathological_pa_reports_overflow() {
    let mut p = TransmitterProfile::identity(0);
    p.pa_a1 = f64::MAX;
    p.pa_a3 = f64::MAX;
    let mut rng = seed::root(1);
    match apply_impairments(&ones(), &p, &mut rng) {
        Err(SimError::ImpairmentOverflow) => {}
        other => panic!("expected impairment overflow, got {other:?}"),
    }
}

#[test]
fn noiseless_awgn_channel_is_identity() {
    let x = gen_base_preamble();
    let mut rng = seed::root(2);
    let y = apply_channel(&x, &ChannelConfig::awgn(NOISELESS_SNR_DB), &mut rng);
    assert_eq!(x, y);
}

#[test]
fn awgn_noise_power_matches_snr() {
    // unit-power input at 0 dB: empirical noise power within 5% of 1.
    let x = ones();
    let ch = ChannelConfig::awgn(0.0);
    let mut rng = seed::root(3);
    let mut total = 0.0;
    let mut n = 0usize;
    while n < 100_000 {
        let y = apply_channel(&x, &ch, &mut rng);
        for (yv, xv) in y.iter().zip(&x) {
            let d = yv.add(xv.scale(-1.0));
            total += d.abs_sq();
        }
        n += x.len();
    }
    let p_noise = total / n as f64;
    assert!((p_noise - 1.0).abs() < 0.05, "noise power {p_noise}");
}

#[test]
fn rayleigh_block_fading_is_constant_within_packet() {
    let x = gen_base_preamble();
    let ch = ChannelConfig {
        model: ChannelModel::RayleighBlock,
        snr_db: NOISELESS_SNR_DB,
        rician_k_db: 0.0,
    };
    let mut rng = seed::root(4);
    let y = apply_channel(&x, &ch, &mut rng);
    // ratio y/x identical across samples
    let h0 = y[0].mul(C64::new(x[0].re, -x[0].im)).scale(1.0 / x[0].abs_sq());
    for (yv, xv) in y.iter().zip(&x) {
        let h = yv.mul(C64::new(xv.re, -xv.im)).scale(1.0 / xv.abs_sq());
        assert!((h.re - h0.re).abs() < 1e-9 && (h.im - h0.im).abs() < 1e-9);
    }
    assert!(h0.abs() > 0.0);
}

#[test]
fn population_is_seeded_and_valid() {
    let a = synth_population(5, &mut seed::root(7)).unwrap();
    let b = synth_population(5, &mut seed::root(7)).unwrap();
    assert_eq!(a, b);

    let pop = synth_population(40, &mut seed::root(9)).unwrap();
    let ids: Vec<u16> = pop.iter().map(|p| p.tx_id).collect();
    assert_eq!(ids, (0..40).collect::<Vec<u16>>());
    for p in &pop {
        p.validate().unwrap();
    }
}

#[test]
fn empty_population_is_an_error() {
    match synth_population(0, &mut seed::root(1)) {
        Err(SimError::EmptyPopulation) => {}
        other => panic!("expected empty population, got {other:?}"),
    }
}

#[test]
fn fixed_packet_count_is_exact() {
    let profiles = synth_population(1, &mut seed::root(5)).unwrap();
    let cfg = CorpusGenConfig {
        packets_min: 10,
        packets_max: 10,
        ..CorpusGenConfig::default()
    };
    let corpus = generate_corpus(&profiles, &cfg).unwrap();
    assert_eq!(corpus.samples.len(), 10);
    assert!(corpus.samples.iter().all(|(_, id)| *id == 0));
}

#[test]
fn desk_scale_counts_are_bounded() {
    let profiles = synth_population(40, &mut seed::root(6)).unwrap();
    let cfg = CorpusGenConfig { seed: 6, ..CorpusGenConfig::default() };
    let corpus = generate_corpus(&profiles, &cfg).unwrap();
    let total = corpus.samples.len();
    assert!((4000..=12000).contains(&total), "total {total}");
    for (_, count) in &corpus.manifest.per_tx_counts {
        assert!((100..=300).contains(count));
    }
}

#[test]
fn identity_profile_noiseless_corpus_reproduces_preamble() {
    let profiles = vec![TransmitterProfile::identity(0)];
    let cfg = CorpusGenConfig {
        packets_min: 3,
        packets_max: 3,
        channel: ChannelConfig::awgn(NOISELESS_SNR_DB),
        seed: 0,
    };
    let corpus = generate_corpus(&profiles, &cfg).unwrap();
    let want = SignalSample::from_complex(&gen_base_preamble()).unwrap();
    for (s, _) in &corpus.samples {
        assert_eq!(s, &want);
    }
}

#[test]
fn corpus_generation_is_deterministic_and_parallel_safe() {
    let profiles = synth_population(6, &mut seed::root(8)).unwrap();
    let cfg = CorpusGenConfig {
        packets_min: 5,
        packets_max: 15,
        seed: 8,
        ..CorpusGenConfig::default()
    };
    let a = generate_corpus(&profiles, &cfg).unwrap();
    let b = generate_corpus(&profiles, &cfg).unwrap();
    assert_eq!(a, b);

    // single-thread pool must give the identical corpus
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| generate_corpus(&profiles, &cfg)).unwrap();
    assert_eq!(a, c);
}

#[test]
fn corpus_samples_satisfy_invariants() {
    let profiles = synth_population(4, &mut seed::root(11)).unwrap();
    let cfg = CorpusGenConfig {
        packets_min: 20,
        packets_max: 40,
        seed: 11,
        ..CorpusGenConfig::default()
    };
    let corpus = generate_corpus(&profiles, &cfg).unwrap();
    corpus.validate().unwrap();
    let entry_peak = corpus
        .samples
        .iter()
        .map(|(s, _)| s.peak_abs())
        .fold(0.0f32, f32::max);
    assert!(entry_peak <= 1.0);
    let modulus_peak = corpus
        .samples
        .iter()
        .map(|(s, _)| s.peak_modulus())
        .fold(0.0f32, f32::max);
    assert!(
        (modulus_peak - 1.0).abs() < 1e-5,
        "normalization targets unit peak amplitude, got {modulus_peak}"
    );
}

mod io {
    use super::*;
    use std::fs;

    fn small_corpus(seed_val: u64) -> Corpus {
        let profiles = synth_population(3, &mut seed::root(seed_val)).unwrap();
        let cfg = CorpusGenConfig {
            packets_min: 4,
            packets_max: 9,
            seed: seed_val,
            ..CorpusGenConfig::default()
        };
        generate_corpus(&profiles, &cfg).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.orff");
        let corpus = small_corpus(21);
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(corpus, loaded);
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.orff");
        let p2 = dir.path().join("b.orff");
        save_corpus(&small_corpus(33), &p1).unwrap();
        save_corpus(&small_corpus(33), &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(
            fs::read(super::super::corpus_io::manifest_path(&p1)).unwrap(),
            fs::read(super::super::corpus_io::manifest_path(&p2)).unwrap()
        );
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.orff");
        save_corpus(&small_corpus(5), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        match load_corpus(&path) {
            Err(SimError::CorruptCorpus { offset }) => assert!(offset > 0),
            other => panic!("expected corrupt corpus, got {other:?}"),
        }
    }

    #[test]
    fn tampered_manifest_count_is_a_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.orff");
        save_corpus(&small_corpus(5), &path).unwrap();
        let mpath = super::super::corpus_io::manifest_path(&path);
        let mut manifest: CorpusManifest =
            serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        if let Some(v) = manifest.per_tx_counts.values_mut().next() {
            *v += 1;
        }
        fs::write(&mpath, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
        match load_corpus(&path) {
            Err(SimError::ManifestMismatch(_)) => {}
            other => panic!("expected manifest mismatch, got {other:?}"),
        }
    }
}
