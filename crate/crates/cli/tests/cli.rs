use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml")
}

fn morphgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morphgen"))
        .args(args)
        .output()
        .unwrap()
}

fn ok_json(out: Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn err_json(out: Output) -> serde_json::Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).unwrap()
}

#[test]
fn step_by_step_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let cfg = tiny_config().to_string_lossy().into_owned();

    ok_json(morphgen(&[
        "generate",
        "--config",
        &cfg,
        "--out",
        &p("data"),
    ]));
    assert!(tmp.path().join("data/manifest.json").exists());

    let partial = ok_json(morphgen(&[
        "train",
        "--config",
        &cfg,
        "--data",
        &p("data"),
        "--seed",
        "1",
        "--out",
        &p("seed1"),
        "--stop-after",
        "1",
    ]));
    assert_eq!(partial["completed"], false);
    let done = ok_json(morphgen(&[
        "train",
        "--config",
        &cfg,
        "--data",
        &p("data"),
        "--seed",
        "1",
        "--out",
        &p("seed1"),
        "--resume",
    ]));
    assert_eq!(done["completed"], true);

    let ckpt = p("seed1/swa.json");
    let eval = ok_json(morphgen(&[
        "eval",
        "--ckpt",
        &ckpt,
        "--data",
        &p("data"),
        "--domains",
        "1,2",
        "--predictions",
        &p("pred.csv"),
    ]));
    let acc = eval["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(tmp.path().join("pred.csv").exists());

    ok_json(morphgen(&[
        "corrupt-eval",
        "--ckpt",
        &ckpt,
        "--data",
        &p("data"),
        "--out",
        &p("corr.csv"),
        "--per-domain",
        "2",
        "--severities",
        "0,2",
    ]));
    let corr = std::fs::read_to_string(tmp.path().join("corr.csv")).unwrap();
    assert_eq!(corr.lines().count(), 1 + 8 * 2);

    ok_json(morphgen(&[
        "attack-eval",
        "--ckpt",
        &ckpt,
        "--data",
        &p("data"),
        "--eps",
        "0,2",
        "--out",
        &p("atk.csv"),
        "--per-domain",
        "2",
        "--steps",
        "3",
    ]));
    let atk = std::fs::read_to_string(tmp.path().join("atk.csv")).unwrap();
    assert_eq!(atk.lines().count(), 3);

    ok_json(morphgen(&[
        "attribute",
        "--ckpt",
        &ckpt,
        "--data",
        &p("data"),
        "--n",
        "2",
        "--steps",
        "16",
        "--out",
        &p("attr"),
    ]));
    assert!(tmp.path().join("attr/residuals.csv").exists());
}

#[test]
fn run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let cfg = tiny_config().to_string_lossy().into_owned();

    let summary = ok_json(morphgen(&[
        "run",
        "--config",
        &cfg,
        "--out",
        &p("run"),
        "--seed",
        "9",
    ]));
    assert_eq!(summary["ood_mean"]["n"], 1);
    let merged = ok_json(morphgen(&[
        "report",
        "--runs",
        &p("run"),
        "--out",
        &p("merged"),
    ]));
    assert_eq!(merged["accuracy_rows"], 3);
    assert!(tmp.path().join("merged/summary.json").exists());
}

#[test]
fn failures_emit_an_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml").to_string_lossy().into_owned();
    let out = tmp.path().join("x").to_string_lossy().into_owned();

    let rec = err_json(morphgen(&["generate", "--config", &missing, "--out", &out]));
    assert_eq!(rec["error"], "io");
    assert!(rec["message"].as_str().unwrap().contains("nope.toml"));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nunknown_key = 1\n").unwrap();
    let rec = err_json(morphgen(&[
        "generate",
        "--config",
        &bad.to_string_lossy(),
        "--out",
        &out,
    ]));
    assert_eq!(rec["error"], "toml");

    let rec = err_json(morphgen(&["report", "--runs", &out, "--out", &out]));
    assert_eq!(rec["error"], "io");
}
