//! End-to-end command tests against the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn openrf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_openrf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_small(dir: &Path, seed: &str, name: &str) {
    let out = openrf(
        dir,
        &[
            "--seed", seed, "simulate", "--tx", "6", "--packets-min", "12", "--packets-max",
            "18", "-o", name,
        ],
    );
    assert_ok(&out);
}

#[test]
fn simulate_is_deterministic_and_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "7", "a.orff");
    simulate_small(dir.path(), "7", "b.orff");
    assert_eq!(
        std::fs::read(dir.path().join("a.orff")).unwrap(),
        std::fs::read(dir.path().join("b.orff")).unwrap()
    );
    let out = openrf(dir.path(), &["--seed", "8", "simulate", "--tx", "2", "-o", "c.orff"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("tx   0:"), "{stdout}");

    // default desk packet range lands in the manifest
    let manifest = std::fs::read_to_string(dir.path().join("c.orff.manifest.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(json["generator"]["packets_min"], 100);
    assert_eq!(json["generator"]["packets_max"], 300);
}

#[test]
fn empty_population_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = openrf(dir.path(), &["simulate", "--tx", "0", "-o", "c.orff"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty population"));
}

#[test]
fn ellipsoid_generation_requires_delta() {
    let dir = tempfile::tempdir().unwrap();
    let out = openrf(
        dir.path(),
        &["generate", "--method", "ellipsoid", "--model", "m.ornn", "-o", "o.orff"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--delta"));
}

#[test]
fn cvae_generation_records_proportional_counts() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "3", "c.orff");
    let out = openrf(
        dir.path(),
        &[
            "--seed", "3", "train-gen", "--model", "cvae", "--corpus", "c.orff", "--ids",
            "0,1,2,3,4", "--latent", "4", "--epochs", "1", "-o", "cv.ornn",
        ],
    );
    assert_ok(&out);
    let out = openrf(
        dir.path(),
        &[
            "--seed", "3", "generate", "--method", "cvae", "--model", "cv.ornn", "--count",
            "7500", "-o", "gen.orff",
        ],
    );
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1500,1500,1500,1500,1500"));
    let manifest = std::fs::read_to_string(dir.path().join("gen.orff.manifest.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(json["generator"]["per_class_counts"][0], 1500);
    assert_eq!(json["per_tx_counts"]["65535"], 7500);
}

#[test]
fn latent_opt_records_outer_iterations() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "5", "c.orff");
    let out = openrf(
        dir.path(),
        &[
            "--seed", "5", "train-gen", "--model", "ae", "--corpus", "c.orff", "--ids", "0,1",
            "--latent", "4", "--epochs", "2", "-o", "ae.ornn",
        ],
    );
    assert_ok(&out);
    let out = openrf(
        dir.path(),
        &[
            "--seed", "5", "generate", "--method", "latent-opt", "--model", "ae.ornn",
            "--corpus", "c.orff", "--ids", "0,1", "--count", "8", "--outer-iters", "1",
            "--inner-steps", "2", "--judge-epochs", "1", "-o", "lo.orff",
        ],
    );
    assert_ok(&out);
    let manifest = std::fs::read_to_string(dir.path().join("lo.orff.manifest.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(json["generator"]["outer_iters"], 1);
    assert_eq!(json["per_tx_counts"]["65535"], 8);
}

#[test]
fn evaluate_prints_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "9", "c.orff");
    let out = openrf(
        dir.path(),
        &[
            "--seed", "9", "evaluate", "--corpus", "c.orff", "--authorized", "0,1", "--known",
            "2", "--test-outliers", "3,4", "--epochs", "1", "--out-json", "result.json",
        ],
    );
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("open-set accuracy"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap())
            .unwrap();
    assert!(json["accuracy"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sweep_emits_csv_plots_and_is_deterministic_outside_timings() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "11", "c.orff");
    let run = |name: &str| {
        let out = openrf(
            dir.path(),
            &[
                "--seed", "11", "sweep", "--kind", "supervised", "--corpus", "c.orff",
                "--methods", "cvae", "--a-size", "2", "--k-sizes", "2", "--o-size", "2",
                "--seeds", "0,1", "--budget", "24", "--latent", "4", "--epochs", "1",
                "--gen-epochs", "1", "--name", name,
            ],
        );
        assert_ok(&out);
    };
    run("s1");
    run("s2");

    let mask = |text: &str| -> String {
        text.lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() == 9 && f[0] != "method" {
                    format!("{},-,-", f[..7].join(","))
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let c1 = std::fs::read_to_string(dir.path().join("s1.csv")).unwrap();
    let c2 = std::fs::read_to_string(dir.path().join("s2.csv")).unwrap();
    assert_eq!(mask(&c1), mask(&c2));
    // 1 k-size x 2 seeds x 2 arms + header
    assert_eq!(c1.lines().count(), 5);
    assert!(dir.path().join("s1_cvae.svg").exists());
    assert!(dir.path().join("s1_manifest.json").exists());

    // report regenerates plots from the CSV
    let out = openrf(
        dir.path(),
        &["report", "--csv", "s1.csv", "--name", "replot"],
    );
    assert_ok(&out);
    assert!(dir.path().join("replot_cvae.svg").exists());
}
