use super::*;
use rand::Rng;

fn fit(points: &[Vec<f64>], tol: f64) -> Ellipsoid {
    fit_mvee(points, tol).unwrap()
}

fn cross_2d(a: f64, b: f64) -> Vec<Vec<f64>> {
    vec![vec![a, 0.0], vec![-a, 0.0], vec![0.0, b], vec![0.0, -b]]
}

#[test]
fn unit_cross_gives_unit_circle() {
    let e = fit(&cross_2d(1.0, 1.0), 1e-6);
    let want_a = [1.0, 0.0, 0.0, 1.0];
    for (got, want) in e.a().iter().zip(want_a.iter()) {
        assert!((got - want).abs() < 1e-4, "A {:?}", e.a());
    }
    for v in e.b() {
        assert!(v.abs() < 1e-4);
    }
}

#[test]
fn anisotropic_cross_gives_axis_scaled_ellipse() {
    let e = fit(&cross_2d(2.0, 1.0), 1e-6);
    let want_a = [0.5, 0.0, 0.0, 1.0];
    for (got, want) in e.a().iter().zip(want_a.iter()) {
        assert!((got - want).abs() < 1e-4, "A {:?}", e.a());
    }
    for v in e.b() {
        assert!(v.abs() < 1e-4);
    }
}

fn random_cloud(n: usize, m: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    // anisotropic gaussian cloud with a random offset
    let scales: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..3.0)).collect();
    let offset: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (0..m)
        .map(|_| {
            (0..n)
                .map(|d| offset[d] + scales[d] * crate::seed::randn(rng))
                .collect()
        })
        .collect()
}

#[test]
fn containment_holds_on_random_clouds() {
    let mut rng = crate::seed::root(42);
    for case in 0..25 {
        let n = if case % 2 == 0 { 2 } else { 8 };
        let m = 40 + (case % 5) * 10;
        let points = random_cloud(n, m, &mut rng);
        let e = fit(&points, 1e-5);
        for p in &points {
            let v = e.mahalanobis_norm(p);
            assert!(v <= 1.0 + 1e-5 + 1e-9, "violation {v} in case {case}");
        }
        assert!(
            min_eigenvalue(n, e.a()) > 1e-8,
            "A must be positive definite"
        );
    }
}

#[test]
fn dual_objective_is_nondecreasing() {
    let mut rng = crate::seed::root(7);
    let points = random_cloud(4, 60, &mut rng);
    let (_, trace) = fit_mvee_traced(&points, 1e-6, DEFAULT_MAX_ITERS).unwrap();
    assert!(trace.len() > 1);
    for w in trace.windows(2) {
        assert!(
            w[1] >= w[0] - 1e-9,
            "dual objective decreased: {} -> {}",
            w[0],
            w[1]
        );
    }
}

/// Randomized containing-ellipsoid search: random shapes grown until they
/// contain every point. Any of them upper-bounds the minimum volume.
fn random_containing_logvol(
    points: &[Vec<f64>],
    candidates: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> f64 {
    let n = points[0].len();
    let m = points.len();
    let mut centroid = vec![0.0; n];
    for p in points {
        for (c, v) in centroid.iter_mut().zip(p) {
            *c += v / m as f64;
        }
    }
    let mut best = f64::INFINITY;
    for _ in 0..candidates {
        // random SPD shape M0 = G^T G + eps I from a random gaussian G
        let g: Vec<f64> = (0..n * n).map(|_| crate::seed::randn(rng)).collect();
        let mut m0 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = if i == j { 1e-3 } else { 0.0 };
                for k in 0..n {
                    acc += g[k * n + i] * g[k * n + j];
                }
                m0[i * n + j] = acc;
            }
        }
        let center: Vec<f64> = centroid
            .iter()
            .map(|c| c + 0.3 * crate::seed::randn(rng))
            .collect();
        // scale so the farthest point touches the boundary
        let mut worst = 0.0f64;
        for p in points {
            let d: Vec<f64> = p.iter().zip(&center).map(|(a, b)| a - b).collect();
            let mut q = 0.0;
            for i in 0..n {
                for j in 0..n {
                    q += d[i] * m0[i * n + j] * d[j];
                }
            }
            worst = worst.max(q);
        }
        if worst <= 0.0 {
            continue;
        }
        // volume of {x : x^T (M0/worst) x <= 1} ~ -0.5 log det(M0/worst)
        let chol = match super::linalg::cholesky(n, &m0) {
            Some(c) => c,
            None => continue,
        };
        let logdet_m0: f64 = 2.0 * (0..n).map(|i| chol[i * n + i].ln()).sum::<f64>();
        let logvol = -0.5 * (logdet_m0 - n as f64 * worst.ln());
        best = best.min(logvol);
    }
    best
}

#[test]
fn fitted_volume_beats_randomized_search() {
    let mut rng = crate::seed::root(17);
    for case in 0..50 {
        let points = random_cloud(2, 30 + case, &mut rng);
        let e = fit(&points, 1e-5);
        let fitted = e.log_volume_offset();
        let oracle = random_containing_logvol(&points, 10_000, &mut rng);
        // fitted log-volume must undercut every random containing ellipsoid,
        // up to the containment tolerance scaling
        let slack = 2.0 * (1.0f64 + 1e-5).ln() + 1e-9;
        assert!(
            fitted <= oracle + slack,
            "case {case}: fitted {fitted} oracle {oracle}"
        );
    }
}

#[test]
fn mahalanobis_center_is_zero_and_unit_ball_unit() {
    let mut rng = crate::seed::root(3);
    let points = random_cloud(3, 40, &mut rng);
    let e = fit(&points, 1e-5);
    assert!(e.mahalanobis_norm(&e.center()) < 1e-9);

    let unit = Ellipsoid::unit(2);
    assert!((unit.mahalanobis_norm(&[1.0, 0.0]) - 1.0).abs() < 1e-12);
}

#[test]
fn mahalanobis_is_invariant_under_analytic_affine_transform() {
    // recomputing the norm after transforming both the ellipsoid and the
    // probe point by a random invertible map gives the same value
    let mut rng = crate::seed::root(5);
    let points = random_cloud(3, 50, &mut rng);
    let e = fit(&points, 1e-5);
    for _ in 0..20 {
        let t: Vec<f64> = (0..9)
            .map(|i| crate::seed::randn(&mut rng) + if i % 4 == 0 { 2.0 } else { 0.0 })
            .collect();
        if mat_invert(3, &t).is_none() {
            continue;
        }
        let shift: Vec<f64> = (0..3).map(|_| crate::seed::randn(&mut rng)).collect();
        let e2 = e.affine_image(&t, &shift);
        for _ in 0..10 {
            let z: Vec<f64> = (0..3).map(|_| 2.0 * crate::seed::randn(&mut rng)).collect();
            let mut tz = shift.clone();
            for i in 0..3 {
                for j in 0..3 {
                    tz[i] += t[i * 3 + j] * z[j];
                }
            }
            let v1 = e.mahalanobis_norm(&z);
            let v2 = e2.mahalanobis_norm(&tz);
            assert!(
                (v1 - v2).abs() <= 1e-6 * v1.max(1.0),
                "affine mismatch: {v1} vs {v2}"
            );
        }
    }
}

#[test]
fn fitting_is_affine_equivariant() {
    // fit(T p + t) and the analytic image of fit(p) describe the same set
    let mut rng = crate::seed::root(9);
    let points = random_cloud(2, 40, &mut rng);
    let t = vec![1.5, 0.4, -0.3, 0.9];
    let shift = vec![2.0, -1.0];
    let mapped: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            vec![
                t[0] * p[0] + t[1] * p[1] + shift[0],
                t[2] * p[0] + t[3] * p[1] + shift[1],
            ]
        })
        .collect();
    let e_direct = fit(&mapped, 1e-7);
    let e_image = fit(&points, 1e-7).affine_image(&t, &shift);
    for _ in 0..200 {
        let z: Vec<f64> = (0..2).map(|_| 4.0 * crate::seed::randn(&mut rng)).collect();
        let (v1, v2) = (e_direct.mahalanobis_norm(&z), e_image.mahalanobis_norm(&z));
        assert!(
            (v1 - v2).abs() < 1e-3 * v1.max(1.0),
            "fit equivariance: {v1} vs {v2}"
        );
        // membership agreement away from the boundary band
        if (v1 - 1.0).abs() > 1e-3 {
            assert_eq!(v1 <= 1.0, v2 <= 1.0);
        }
    }
}

#[test]
fn degenerate_cloud_is_reported() {
    // all points on a line in 2-D
    let points: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
    match fit_mvee(&points, 1e-5) {
        Err(MveeError::DegeneratePointCloud) => {}
        other => panic!("expected degenerate point cloud, got {other:?}"),
    }
    // too few points
    match fit_mvee(&[vec![0.0, 0.0], vec![1.0, 1.0]], 1e-5) {
        Err(MveeError::DegeneratePointCloud) => {}
        other => panic!("expected degenerate point cloud, got {other:?}"),
    }
}

#[test]
fn iteration_cap_reports_nonconvergence() {
    let mut rng = crate::seed::root(13);
    let points = random_cloud(6, 200, &mut rng);
    match fit_mvee_traced(&points, 1e-6, 2) {
        Err(MveeError::NotConverged { violation, iters: 2 }) => assert!(violation > 0.0),
        other => panic!("expected not converged, got {other:?}"),
    }
}

mod shell {
    use super::*;

    #[test]
    fn samples_stay_in_the_shell() {
        let mut rng = crate::seed::root(21);
        let points = random_cloud(3, 60, &mut rng);
        let e = fit(&points, 1e-5);
        let cfg = ShellConfig { delta: 0.5, count: 10_000 };
        for z in sample_shell(&e, &cfg, &mut rng).unwrap() {
            let v = e.mahalanobis_norm(&z);
            assert!(v > 1.0 && v <= 1.5 + 1e-9, "norm {v}");
        }
    }

    #[test]
    fn radial_second_moment_matches_analytic_value() {
        // n = 2, delta = 1: E[r^2] = (int_1^2 r^3 dr) / (int_1^2 r dr) = 2.5
        let e = Ellipsoid::unit(2);
        let cfg = ShellConfig { delta: 1.0, count: 100_000 };
        let mut rng = crate::seed::root(33);
        let samples = sample_shell(&e, &cfg, &mut rng).unwrap();
        let mean_r2: f64 = samples
            .iter()
            .map(|z| z[0] * z[0] + z[1] * z[1])
            .sum::<f64>()
            / samples.len() as f64;
        assert!(
            (mean_r2 - 2.5).abs() < 0.02 * 2.5,
            "E[r^2] = {mean_r2}, expected 2.5 within 2%"
        );
    }

    #[test]
    fn zero_count_gives_empty_set() {
        let e = Ellipsoid::unit(4);
        let cfg = ShellConfig { delta: 0.3, count: 0 };
        assert!(sample_shell(&e, &cfg, &mut crate::seed::root(0)).unwrap().is_empty());
    }

    #[test]
    fn delta_bounds_are_enforced() {
        let e = Ellipsoid::unit(2);
        for delta in [0.0, -1.0, 10.5] {
            let cfg = ShellConfig { delta, count: 1 };
            assert!(sample_shell(&e, &cfg, &mut crate::seed::root(0)).is_err());
        }
    }
}

mod pipeline {
    use super::*;
    use crate::generative::{train_autoencoder, GenTrainConfig};
    use crate::sim::{self, CorpusGenConfig};

    #[test]
    fn generated_outliers_are_wellformed_and_mostly_outside() {
        let profiles = sim::synth_population(4, &mut crate::seed::root(2)).unwrap();
        let gen_cfg = CorpusGenConfig {
            packets_min: 30,
            packets_max: 30,
            seed: 2,
            ..CorpusGenConfig::default()
        };
        let corpus = sim::generate_corpus(&profiles, &gen_cfg).unwrap();
        let refs: Vec<&sim::SignalSample> = corpus.samples.iter().map(|(s, _)| s).collect();
        let ae = train_autoencoder(
            &refs,
            8,
            &GenTrainConfig { epochs: 20, seed: 2, ..GenTrainConfig::default() },
        )
        .unwrap();

        let out = generate_ellipsoidal_outliers(&ae, &refs, 0.4, 300, 7).unwrap();
        assert_eq!(out.samples.len(), 300);
        for s in &out.samples {
            assert_eq!(s.rows().len(), sim::SAMPLE_LEN);
            assert!(s.rows().iter().all(|r| r[0].is_finite() && r[1].is_finite()));
        }
        println!(
            "round-trip fraction outside ellipsoid: {:.3}",
            out.fraction_outside
        );
        assert!(
            out.fraction_outside >= 0.5,
            "only {:.1}% of decoded outliers re-encode outside",
            out.fraction_outside * 100.0
        );

        let empty = generate_ellipsoidal_outliers(&ae, &refs, 0.4, 0, 7).unwrap();
        assert!(empty.samples.is_empty());
    }
}
