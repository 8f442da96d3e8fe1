use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ldm_cli::RunConfig;
use ldm_dn::{save_checkpoint, Model};

fn ldmdn(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldmdn"))
        .args(args)
        .env("LDMDN_OUTPUT_ROOT", root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_synth(root: &Path) {
    let o = ldmdn(
        root,
        &["synth", "--pairs", "4", "--test", "2", "--size", "32", "--seed", "3"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_is_repeatable_and_records_default_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        let o = ldmdn(
            &tmp.path().join(run),
            &["synth", "--pairs", "16", "--seed", "7", "--size", "32"],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        manifests.push(fs::read(tmp.path().join(run).join("data/manifest.txt")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    let text = String::from_utf8(manifests[0].clone()).unwrap();
    assert!(text.lines().any(|l| l == "ratio = 0.15"), "{text}");
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ldmdn(tmp.path(), &["synth", "--pairs", "0"])), 1);
    assert_eq!(code(&ldmdn(tmp.path(), &["frobnicate"])), 1);
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[train]\nlamda = 0.2\n").unwrap();
    let o = ldmdn(tmp.path(), &["synth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));
    assert_eq!(code(&ldmdn(tmp.path(), &["train", "--mode", "gan"])), 1);
    assert_eq!(code(&ldmdn(tmp.path(), &["--help"])), 0);
}

#[test]
fn missing_dataset_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ldmdn(tmp.path(), &["train", "--data", "nowhere"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nowhere"), "{}", stderr(&o));
}

#[test]
fn lambda_without_manifold_warns() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path());
    let o = ldmdn(tmp.path(), &["train", "--mode", "sup", "--lambda", "0.6", "--s", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("ignored"), "{}", stderr(&o));
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path());
    let o = ldmdn(tmp.path(), &["train", "--epochs", "0", "--s", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = tmp.path().join("run");
    let cfg = RunConfig::load(&run.join("train.toml"))
        .unwrap()
        .train_config(32)
        .unwrap();
    let fresh = tmp.path().join("fresh");
    save_checkpoint(&Model::for_training(&cfg).unwrap(), &fresh).unwrap();
    assert_eq!(dir_files(&run.join("checkpoints/final")), dir_files(&fresh));
}

#[test]
fn ldm_run_logs_penalty_and_resolved_config_reproduces_it() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path());
    let o = ldmdn(tmp.path(), &["train", "--s", "4", "--lr", "0.0005", "--max-steps", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("run/metrics.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "ldm_penalty").unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows
        .iter()
        .all(|r| r.split(',').nth(col).unwrap().parse::<f64>().is_ok()));

    let echo = tmp.path().join("run/train.toml");
    let o = ldmdn(
        tmp.path(),
        &["train", "--config", echo.to_str().unwrap(), "--run", "again"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(csv, fs::read_to_string(tmp.path().join("again/metrics.csv")).unwrap());
}

#[test]
fn eval_reports_baseline_and_rejects_geometry_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    small_synth(tmp.path());
    let o = ldmdn(tmp.path(), &["eval", "--identity"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("run/eval.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[1], f[3]);
        assert_eq!(f[2], f[4]);
    }

    assert_eq!(code(&ldmdn(tmp.path(), &["eval"])), 2, "no checkpoint yet");
    assert_eq!(code(&ldmdn(tmp.path(), &["train", "--s", "4", "--max-steps", "1"])), 0);
    assert_eq!(
        code(&ldmdn(
            tmp.path(),
            &["synth", "--pairs", "2", "--test", "1", "--size", "16", "--data", "small"]
        )),
        0
    );
    let o = ldmdn(tmp.path(), &["eval", "--data", "small"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("geometry mismatch"), "{}", stderr(&o));
}

fn write_f32(path: &Path, h: usize, w: usize, f: impl Fn(usize, usize) -> f64) {
    let data: Vec<f64> = (0..h * w).map(|k| f(k / w, k % w)).collect();
    ldm_tensor::io::save(path, &[h, w], &data).unwrap();
}

#[test]
fn recover_edge_cases_and_repeatability() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    write_f32(&root.join("img.f32"), 16, 16, |i, j| (i * 16 + j) as f64 / 256.0);
    write_f32(&root.join("all.f32"), 16, 16, |_, _| 1.0);
    write_f32(&root.join("none.f32"), 16, 16, |_, _| 0.0);

    let o = ldmdn(
        root,
        &["recover", "--image", "img.f32", "--mask", "all.f32", "--patch", "4"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(root.join("run/recovered.f32")).unwrap(),
        fs::read(root.join("img.f32")).unwrap()
    );

    assert_eq!(
        code(&ldmdn(
            root,
            &["recover", "--image", "img.f32", "--mask", "none.f32", "--patch", "4"]
        )),
        2
    );

    let args = [
        "recover",
        "--size",
        "24",
        "--known",
        "0.3",
        "--patch",
        "4",
        "--max-iter",
        "5",
    ];
    let mut out = Vec::new();
    for run in ["r1", "r2"] {
        let mut a = args.to_vec();
        a.extend(["--run", run]);
        assert_eq!(code(&ldmdn(root, &a)), 0);
        out.push(fs::read(root.join(run).join("recovered.f32")).unwrap());
    }
    assert_eq!(out[0], out[1]);
}

#[test]
fn diag_passes_by_default_and_fails_on_asymmetric_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let quick = ["--graphs", "5", "--systems", "3", "--grad-trials", "2"];
    let mut args = vec!["diag"];
    args.extend(quick);
    let o = ldmdn(tmp.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = String::from_utf8_lossy(&o.stdout);
    for name in [
        "weights_symmetric",
        "laplacian_row_sums",
        "laplacian_psd",
        "solver_residual",
        "conv_gradient",
        "dual_bounds",
    ] {
        assert!(report.contains(name), "{report}");
    }
    assert!(report.lines().skip(1).all(|l| l.contains("<=") || l.contains(">=")));

    args.extend(["--weights-fixture", "asymmetric"]);
    let o = ldmdn(tmp.path(), &args);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("weights_symmetric"), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("run/diag.csv")).unwrap();
    assert!(
        csv.lines()
            .any(|l| l.starts_with("weights_symmetric,") && l.ends_with("FAIL")),
        "{csv}"
    );
}

#[test]
fn output_root_flag_beats_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let flag_root = tmp.path().join("flag");
    let o = ldmdn(
        &tmp.path().join("env"),
        &[
            "synth",
            "--pairs",
            "2",
            "--test",
            "1",
            "--size",
            "16",
            "--output-root",
            flag_root.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(flag_root.join("data/manifest.txt").is_file());
    assert!(!tmp.path().join("env").exists());
}
