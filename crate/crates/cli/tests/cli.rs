//! End-to-end checks of the binary: exit codes, file outputs, resolved
//! configs, and the scheme-defaulting rules.

use std::path::Path;
use std::process::{Command, Output};

use cdekit::neuralcde::Checkpoint;
use cdekit::verify::{OnlineClass, PathNorms, ProbeReport};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cdekit"));
    cmd.env(
        "CDEKIT_OUT_ROOT",
        std::env::temp_dir().join("cdekit-test-runs"),
    );
    cmd
}

fn write_series(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

const FULL: &str = "time,a,b\n0,1.0,2\n0.5,2,1\n1.3,0,0\n2,0.5,1\n";
const GAPPY: &str = "time,a,b\n0,1.0,2\n0.5,2,\n1.3,,0\n2,0.5,1\n";

#[test]
fn interpolate_emits_grid_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_series(dir.path(), "x.csv", GAPPY);
    let before = std::fs::read(&input).unwrap();
    let out = dir.path().join("path.csv");
    let output = run(bin()
        .args(["interpolate", "--scheme", "hermite", "--grid", "200"])
        .arg("--input")
        .arg(&input)
        .arg("--out")
        .arg(&out));
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 201);
    assert_eq!(lines[0], "s,x_time,x_a,x_b,dx_time,dx_a,dx_b");
    assert!(dir.path().join("resolved_config.json").exists());
    // Inputs are never mutated.
    assert_eq!(std::fs::read(&input).unwrap(), before);
}

#[test]
fn default_scheme_follows_missingness_and_online_flag() {
    let dir = tempfile::tempdir().unwrap();
    let full = write_series(dir.path(), "full.csv", FULL);
    let gappy = write_series(dir.path(), "gappy.csv", GAPPY);

    let case = |input: &Path, extra: &[&str], want: &str| {
        let out = tempfile::tempdir().unwrap();
        let target = out.path().join("path.csv");
        let mut cmd = bin();
        cmd.arg("interpolate")
            .arg("--input")
            .arg(input)
            .arg("--out")
            .arg(&target);
        cmd.args(extra);
        assert!(run(&mut cmd).status.success());
        let cfg: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out.path().join("resolved_config.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(cfg["scheme"], want, "{extra:?}");
    };
    case(&full, &[], "hermite_backward");
    case(&gappy, &[], "rectilinear");
    case(&full, &["--online", "continuous"], "rectilinear");
}

#[test]
fn probe_reports_round_trip_and_classify() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_series(dir.path(), "x.csv", GAPPY);
    let out = dir.path().join("report.json");
    let output = run(bin()
        .args(["probe", "--scheme", "rectilinear", "--perturb", "3"])
        .arg("--input")
        .arg(&input)
        .arg("--out")
        .arg(&out));
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let report: ProbeReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.classification, OnlineClass::ContinuouslyOnline);
    // Serialize-then-parse is the identity on the emitted document.
    assert_eq!(cdekit::report::to_json(&report).unwrap(), text);
}

#[test]
fn norms_emits_per_channel_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_series(dir.path(), "x.csv", FULL);
    let out = dir.path().join("norms.json");
    assert!(run(bin()
        .args(["norms", "--scheme", "linear"])
        .arg("--input")
        .arg(&input)
        .arg("--out")
        .arg(&out))
    .status
    .success());
    let norms: PathNorms = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(norms.sup_norm.len(), 3); // time + two channels
    assert!(norms.deriv_bv.iter().all(|x| x.is_finite()));
}

#[test]
fn bench_emits_one_row_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let output = run(bin()
        .args([
            "bench",
            "--schemes",
            "all",
            "--n-series",
            "4",
            "--length",
            "6",
        ])
        .arg("--out")
        .arg(&out));
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scheme,mean_nfe,metric");
    assert_eq!(lines.len(), 5);
}

#[test]
fn synth_then_train_produces_metrics_and_checkpoint() {
    let data = tempfile::tempdir().unwrap();
    assert!(run(bin()
        .args([
            "synth",
            "--task",
            "spiral",
            "--samples",
            "24",
            "--seed",
            "3"
        ])
        .arg("--out")
        .arg(data.path()))
    .status
    .success());
    assert!(data.path().join("manifest.json").exists());

    let train_dir = tempfile::tempdir().unwrap();
    let output = run(bin()
        .args([
            "train",
            "--max-epochs",
            "2",
            "--batch-size",
            "8",
            "--hidden-dim",
            "4",
            "--hidden-hidden-dim",
            "8",
            "--method",
            "rk4",
            "--fixed-step",
            "0.5",
        ])
        .arg("--manifest")
        .arg(data.path().join("manifest.json"))
        .arg("--out")
        .arg(train_dir.path()));
    assert!(output.status.success(), "{output:?}");
    let metrics = std::fs::read_to_string(train_dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,val_loss,metric,nfe\n"));
    assert_eq!(metrics.lines().count(), 3);
    let ckpt: Checkpoint = serde_json::from_str(
        &std::fs::read_to_string(train_dir.path().join("checkpoint.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(ckpt.hidden_dim, 4);
    assert!(train_dir.path().join("resolved_config.json").exists());
}

#[test]
fn train_without_val_split_flags_nan_metric() {
    let data = tempfile::tempdir().unwrap();
    write_series(data.path(), "s0.csv", FULL);
    write_series(data.path(), "s1.csv", FULL);
    std::fs::write(
        data.path().join("manifest.json"),
        r#"{"samples":[{"path":"s0.csv","label":0,"split":"train"},{"path":"s1.csv","label":1,"split":"train"}]}"#,
    )
    .unwrap();
    let train_dir = tempfile::tempdir().unwrap();
    let output = run(bin()
        .args([
            "train",
            "--max-epochs",
            "1",
            "--hidden-dim",
            "2",
            "--hidden-hidden-dim",
            "4",
        ])
        .arg("--manifest")
        .arg(data.path().join("manifest.json"))
        .arg("--out")
        .arg(train_dir.path()));
    assert!(output.status.success(), "{output:?}");
    let metrics = std::fs::read_to_string(train_dir.path().join("metrics.csv")).unwrap();
    assert!(
        metrics.contains("NaN"),
        "metric column holds the literal NaN"
    );
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("non-finite"),
        "diagnostic stream flags it: {stderr}"
    );
}

#[test]
fn bench_runs_are_reproducible_from_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run_once = |name: &str| -> String {
        let out = dir.path().join(name);
        assert!(run(bin()
            .args(["bench", "--seed", "11", "--n-series", "4", "--length", "6"])
            .arg("--out")
            .arg(&out))
        .status
        .success());
        std::fs::read_to_string(&out).unwrap()
    };
    assert_eq!(run_once("a.csv"), run_once("b.csv"));
}

#[test]
fn usage_errors_exit_2_and_module_errors_exit_1() {
    let out = run(bin().arg("frobnicate"));
    assert_eq!(out.status.code(), Some(2));
    let out = run(bin().args(["interpolate", "--input", "x.csv", "--no-such-flag"]));
    assert_eq!(out.status.code(), Some(2));

    let out = run(bin().args(["interpolate", "--input", "/definitely/not/here.csv"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IoError"));

    let dir = tempfile::tempdir().unwrap();
    let input = write_series(dir.path(), "x.csv", FULL);
    let out_path = dir.path().join("r.json");
    let out = run(bin()
        .args(["probe", "--perturb", "99"])
        .arg("--input")
        .arg(&input)
        .arg("--out")
        .arg(&out_path));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BadIndex"));

    // Unknown keys in the experiment config are rejected.
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, r#"{"seed": 1, "no_such_key": true}"#).unwrap();
    let out = run(bin()
        .args(["bench", "--n-series", "2", "--length", "4"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("b.csv")));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("JsonError"));
}
