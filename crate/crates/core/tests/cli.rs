//! End-to-end checks of the `curvnet` binary: exit codes, determinism and
//! artifact layout.

use std::path::Path;
use std::process::{Command, Output};

use curvnet::cli::Manifest;
use curvnet::dataset::{read_samples_csv, CSV_HEADER};
use curvnet::nnet::MlpModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn curvnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvnet"))
        .args(args)
        .env_remove("CURVNET_SEED")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["gen", "--rho", "64", "--repeats", "1", "--iters", "5,10", "--out", path(out)];
    args.extend_from_slice(extra);
    curvnet(&args)
}

#[test]
fn gen_writes_splits_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let result = gen_small(&out, &["--seed", "3"]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(String::from_utf8_lossy(&result.stderr).contains("wall time"));

    let manifest = Manifest::load(&out).unwrap();
    assert_eq!(manifest.spec.rho, 64);
    assert_eq!(manifest.spec.seed, 3);
    assert_eq!(manifest.spec.reinit_iterations, vec![5, 10]);
    assert_eq!(manifest.circle_count, 29);
    let parts = manifest.read_splits(&out).unwrap();
    let total = parts.train.len() + parts.validation.len() + parts.test.len();
    assert_eq!(total, manifest.total_samples);
    assert!((parts.train.len() as f64 - 0.7 * total as f64).abs() <= 1.0);
    let header = std::fs::read_to_string(out.join("train.csv")).unwrap();
    assert!(header.starts_with(&CSV_HEADER.join(",")));
    assert_eq!(read_samples_csv(&out.join("test.csv")).unwrap(), parts.test);
}

#[test]
fn gen_is_deterministic_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(gen_small(&a, &["--seed", "9"]).status.success());
    assert!(gen_small(&b, &["--seed", "9"]).status.success());
    let digest = |d: &Path| Manifest::load(d).unwrap().digest;
    assert_eq!(digest(&a), digest(&b));

    let refused = gen_small(&a, &["--seed", "9"]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(gen_small(&a, &["--seed", "10", "--force"]).status.success());
    assert_ne!(digest(&a), digest(&b));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let with_env = Command::new(env!("CARGO_BIN_EXE_curvnet"))
        .args(["gen", "--rho", "64", "--repeats", "1", "--iters", "5", "--out", path(&a)])
        .env("CURVNET_SEED", "42")
        .output()
        .unwrap();
    assert!(with_env.status.success());
    assert!(curvnet(&["gen", "--rho", "64", "--repeats", "1", "--iters", "5", "--seed", "42", "--out", path(&b)])
        .status
        .success());
    assert_eq!(Manifest::load(&a).unwrap(), Manifest::load(&b).unwrap());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let out = dir.path().join("data");
    std::fs::write(
        &config,
        format!("[gen]\nrho = 80\nseed = 4\nrepeats = 1\niters = [5]\nout = \"{}\"\n", path(&out)),
    )
    .unwrap();
    let result = curvnet(&["--config", path(&config), "gen", "--rho", "64"]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let manifest = Manifest::load(&out).unwrap();
    assert_eq!((manifest.spec.rho, manifest.spec.seed), (64, 4));
    assert_eq!(manifest.spec.reinit_iterations, vec![5]);

    std::fs::write(&config, "[gen]\nbogus = 1\n").unwrap();
    assert_eq!(curvnet(&["--config", path(&config), "gen"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(curvnet(&["gen", "--rho", "8", "--out", path(dir.path())]).status.code(), Some(2));
    assert_eq!(curvnet(&["gen", "--out", path(&dir.path().join("x"))]).status.code(), Some(2));
    assert_eq!(curvnet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        curvnet(&["eval", "--numerical-only", "--experiment", "nope", "--report", path(dir.path())]).status.code(),
        Some(2)
    );
    assert_eq!(curvnet(&["gen", "--rho", "64", "--scheme", "weno5"]).status.code(), Some(2));
}

#[test]
fn train_requires_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let result = curvnet(&["train", "--data", path(dir.path()), "--out", path(&dir.path().join("m.json"))]);
    assert_eq!(result.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&result.stderr).contains("manifest"));
}

#[test]
fn train_writes_model_and_epoch_log() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(gen_small(&data, &["--seed", "1"]).status.success());
    let model_path = dir.path().join("models").join("rho64.json");
    let args = [
        "train",
        "--data",
        path(&data),
        "--arch",
        "8x2",
        "--out",
        path(&model_path),
        "--max-epochs",
        "2",
        "--seed",
        "5",
    ];
    let result = curvnet(&args);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let model = MlpModel::load(&model_path).unwrap();
    assert_eq!(model.layer_sizes(), &[9, 8, 8, 1]);
    assert_eq!(model.rho_tag, Some(64));
    let log = std::fs::read_to_string(dir.path().join("models").join("rho64.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch,train_mse,validation_mae\n"));

    // Same flags and seed reproduce the model byte for byte.
    let first = std::fs::read(&model_path).unwrap();
    assert!(curvnet(&args).status.success());
    assert_eq!(std::fs::read(&model_path).unwrap(), first);

    let bad_arch = curvnet(&["train", "--data", path(&data), "--arch", "wide", "--out", path(&model_path)]);
    assert_eq!(bad_arch.status.code(), Some(2));
}

#[test]
fn numerical_only_eval_writes_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report");
    let result = curvnet(&["eval", "--numerical-only", "--experiment", "smooth_uniform_low", "--report", path(&report)]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let table = std::fs::read_to_string(report.join("report.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, it) in rows.iter().zip([5, 10, 20]) {
        assert!(row.starts_with(&format!("smooth_uniform_low,numerical,{it},528,")), "{row}");
    }
}

#[test]
fn full_catalog_eval_with_models_writes_48_rows() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    std::fs::create_dir_all(&models).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for rho in [256, 266, 276] {
        let mut model = MlpModel::he_uniform(&[9, 4, 1], &mut rng).unwrap();
        model.rho_tag = Some(rho);
        model.save(&models.join(format!("rho{rho}.json"))).unwrap();
    }
    let report = dir.path().join("report");
    let result = curvnet(&[
        "eval",
        "--models",
        path(&models),
        "--experiment",
        "all",
        "--report",
        path(&report),
        "--jobs",
        "2",
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let table = std::fs::read_to_string(report.join("report.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 48);
    let scatter_csvs = std::fs::read_dir(&report)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().into_string().unwrap();
            name.ends_with(".csv") && name != "report.csv"
        })
        .count();
    assert_eq!(scatter_csvs, 48);
    assert!(report.join("acute_quadtree_l7_neural_it20.svg").exists());
}

#[test]
fn eval_without_models_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = curvnet(&["eval", "--experiment", "smooth_uniform_low", "--report", path(dir.path())]);
    assert_eq!(result.status.code(), Some(2));
}
