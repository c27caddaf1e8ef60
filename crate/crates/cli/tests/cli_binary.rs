//! Spawned-binary tests: exit codes, flag overrides, and artifact
//! byte-stability as seen by a shell user.

use std::path::Path;
use std::process::{Command, Output};

fn lsgd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsgd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const QUAD: &str = r#"
[problem]
kind = "quadratic"
dim = 16
spectrum_min = 1e-2
spectrum_max = 1.0
data_seed = 21

[federation]
clients = 3
local_steps = 4
rounds = 5
learning_rate = 0.1
batch_size = 2
seed = 4
init_scale = 1.0

[diagnostics]
rounds = [1]

[residue]
rounds = [1]
local_steps = [2]
trials = 12

[output]
dir = "out"
"#;

#[test]
fn successful_train_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", QUAD);
    let out = lsgd(tmp.path(), &["train", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/metrics.csv").exists());
}

#[test]
fn unknown_key_exits_two_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        "c.toml",
        &QUAD.replace("batch_size = 2", "batch_syze = 2"),
    );
    let out = lsgd(tmp.path(), &["train", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("batch_syze"), "{stderr}");
    assert!(stderr.contains("line"), "{stderr}");
}

#[test]
fn missing_config_file_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lsgd(tmp.path(), &["train", "--config", "nope.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hessian_budget_overflow_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        "c.toml",
        &QUAD.replace("data_seed = 21", "data_seed = 21\nhessian_budget = 8"),
    );
    let train = lsgd(tmp.path(), &["train", "--config", "c.toml"]);
    assert_eq!(train.status.code(), Some(0));
    let out = lsgd(tmp.path(), &["diagnose", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("budget"), "{stderr}");
}

#[test]
fn divergent_training_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        "c.toml",
        r#"
[problem]
kind = "quadratic"
eigenvalues = [50.0]

[federation]
clients = 1
local_steps = 80
rounds = 3
learning_rate = 1.0
batch_size = 1
init_scale = 1.0
"#,
    );
    let out = lsgd(tmp.path(), &["train", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("non-finite"), "{stderr}");
}

#[test]
fn deterministic_flag_makes_svgs_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", QUAD);
    for args in [
        ["train", "--config", "c.toml", "--out", "a", "--deterministic"],
        ["train", "--config", "c.toml", "--out", "b", "--deterministic"],
    ] {
        assert_eq!(lsgd(tmp.path(), &args).status.code(), Some(0));
    }
    let a = std::fs::read(tmp.path().join("a/loss_curve.svg")).unwrap();
    let b = std::fs::read(tmp.path().join("b/loss_curve.svg")).unwrap();
    assert_eq!(a, b);
    assert!(!String::from_utf8(a).unwrap().contains("generated at"));
}

#[test]
fn without_the_flag_svgs_carry_a_timestamp_comment() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", QUAD);
    assert_eq!(
        lsgd(tmp.path(), &["train", "--config", "c.toml"]).status.code(),
        Some(0)
    );
    let svg = std::fs::read_to_string(tmp.path().join("out/loss_curve.svg")).unwrap();
    assert!(svg.contains("generated at unix time"), "{svg}");
}

#[test]
fn seed_rounds_and_trials_flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", QUAD);
    let out = lsgd(
        tmp.path(),
        &[
            "report", "--config", "c.toml", "--seed", "99", "--rounds", "0,3", "--trials", "7",
            "--deterministic",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 99);
    assert!(tmp.path().join("out/spectral_round_0.json").exists());
    assert!(tmp.path().join("out/spectral_round_3.json").exists());
    assert!(!tmp.path().join("out/spectral_round_1.json").exists());

    let residue = std::fs::read_to_string(tmp.path().join("out/residue.csv")).unwrap();
    let row = residue.lines().nth(1).unwrap();
    let trials: usize = row.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(trials, 7);
}

#[test]
fn out_of_range_rounds_flag_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.toml", QUAD);
    let out = lsgd(
        tmp.path(),
        &["diagnose", "--config", "c.toml", "--rounds", "12"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("outside the training range"), "{stderr}");
}
