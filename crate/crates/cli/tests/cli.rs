use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use debughd_cli::MetricsReport;

const SMALL: &str = r#"{
    "corpus_images": 240,
    "surrogate_images": 120,
    "kinds": ["gaussian_noise", "gaussian_blur", "contrast"],
    "surrogate_train": {"epochs": 10, "batch_size": 32, "learning_rate": 0.001, "lr_decay": 0.99},
    "teacher": {"epochs": 10, "batch_size": 32, "learning_rate": 0.001, "lr_decay": 0.99},
    "hyper_d": 256,
    "retrain_epochs": 3,
    "monitor_calibration_images": 300,
    "monitor_stream_images": 150,
    "sweep_dims": [64, 256],
    "ssim_samples": 10
}"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

fn debughd(args: &[&str], cfg: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_debughd"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = cfg {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str], cfg: &Path, out: &Path) {
    let o = debughd(args, Some(cfg), out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_owned).collect()
}

#[test]
fn train_then_classify_round_trip() {
    let (dir, cfg) = setup();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    ok(&["gen-data"], &cfg, &data);
    for f in ["id_train.imgset", "id_holdout.imgset", "cid.imgset"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    ok(&["train", "--method", "debughd"], &cfg, &model);
    let report: MetricsReport =
        serde_json::from_str(&fs::read_to_string(model.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report.method, "debughd");
    assert_eq!(report.labels, ["gaussian_noise", "gaussian_blur", "contrast"]);
    assert!(0.0 <= report.top1 && report.top1 <= report.top2 && report.top2 <= report.top3 && report.top3 <= 1.0);
    assert!(model.join("model.hdbg").is_file());

    let preds = dir.path().join("preds");
    let o = Command::new(env!("CARGO_BIN_EXE_debughd"))
        .arg("classify")
        .arg("--model")
        .arg(model.join("model.hdbg"))
        .arg("--images")
        .arg(data.join("cid.imgset"))
        .arg("--out")
        .arg(&preds)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&preds.join("predictions.csv"));
    assert_eq!(rows.len(), 3 * 120);
    assert!(rows.iter().all(|r| r[2].split(' ').count() == 3));
}

#[test]
fn mlp_reference_writes_no_model() {
    let (dir, cfg) = setup();
    let out = dir.path().join("mlp");
    ok(&["train", "--method", "mlp-ref"], &cfg, &out);
    assert!(out.join("metrics.json").is_file());
    assert!(!out.join("model.hdbg").exists());
}

#[test]
fn sweep_and_compare_tables() {
    let (dir, cfg) = setup();
    let out = dir.path().join("o");
    ok(&["sweep-hyperd", "--dims", "32,128,512"], &cfg, &out);
    let sweep = out.join("sweep_hyperd.csv");
    assert_eq!(header(&sweep), ["hyper_d", "top1"]);
    let dims: Vec<String> = csv_rows(&sweep).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(dims, ["32", "128", "512"]);

    ok(&["compare"], &cfg, &out);
    let rows = csv_rows(&out.join("compare.csv"));
    let methods: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["vanilla", "debughd", "retrain", "mlp-ref"]);
    for r in &rows {
        let t: Vec<f64> = r[2..].iter().map(|v| v.parse().unwrap()).collect();
        assert!(t[0] <= t[1] && t[1] <= t[2], "{r:?}");
    }
}

#[test]
fn ssim_outputs_follow_label_set() {
    let (dir, cfg) = setup();
    let out = dir.path().join("plain");
    ok(&["ssim"], &cfg, &out);
    assert_eq!(header(&out.join("ssim.csv")), ["kind", "gaussian_noise", "gaussian_blur", "contrast"]);
    assert_eq!(csv_rows(&out.join("ssim_bands.csv")).len(), 3);

    let with_id = dir.path().join("with-id");
    ok(&["ssim", "--include-id"], &cfg, &with_id);
    let rows = csv_rows(&with_id.join("ssim.csv"));
    assert_eq!(rows[0][0], "id");
    assert_eq!(rows[0][1], "1.00");
    let kept = fs::read_to_string(with_id.join("pruned_kinds.txt")).unwrap();
    assert_eq!(kept.lines().next(), Some("id"));
}

#[test]
fn monitor_trace_covers_both_phases() {
    let (dir, cfg) = setup();
    let out = dir.path().join("m");
    ok(&["monitor-sim", "--monitor-window", "50"], &cfg, &out);
    let path = out.join("monitor_trace.csv");
    assert_eq!(header(&path), ["step", "phase", "correct", "window_accuracy", "triggered"]);
    let rows = csv_rows(&path);
    assert_eq!(rows.len(), 300);
    assert!(rows[..150].iter().all(|r| r[1] == "id"));
    assert!(rows[150..].iter().all(|r| r[1] != "id"));
    // Nothing can fire before the window fills.
    assert!(rows[..49].iter().all(|r| r[4] == "0"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (dir, cfg) = setup();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["gen-data"], &cfg, out);
        ok(&["train", "--method", "retrain"], &cfg, out);
        ok(&["ssim"], &cfg, out);
    }
    for f in ["cid.imgset", "metrics.json", "model.hdbg", "test.hdcset", "ssim.csv", "pruned_kinds.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_changes_outputs() {
    let (dir, cfg) = setup();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-data", "--seed", "1"], &cfg, &a);
    ok(&["gen-data", "--seed", "2"], &cfg, &b);
    assert_ne!(fs::read(a.join("cid.imgset")).unwrap(), fs::read(b.join("cid.imgset")).unwrap());
}

#[test]
fn out_dir_from_environment() {
    let (dir, cfg) = setup();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_debughd"))
        .arg("gen-data")
        .arg("--config")
        .arg(&cfg)
        .env(debughd_cli::OUT_ENV, &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("cid.imgset").is_file());
}

#[test]
fn exit_codes() {
    let (dir, cfg) = setup();
    let out = dir.path().join("x");
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(debughd(&["train"], Some(&dir.path().join("missing.json")), &out)), 3);
    assert_eq!(code(debughd(&["train", "--hyper-d", "0"], Some(&cfg), &out)), 2);
    assert_eq!(code(debughd(&["train", "--method", "svm"], Some(&cfg), &out)), 2);
    assert_eq!(code(debughd(&["train", "--kinds", "rain"], Some(&cfg), &out)), 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"hyperd": 300}"#).unwrap();
    assert_eq!(code(debughd(&["gen-data"], Some(&bad), &out)), 2);

    let o = Command::new(env!("CARGO_BIN_EXE_debughd"))
        .args(["classify", "--model"])
        .arg(dir.path().join("none.hdbg"))
        .arg("--images")
        .arg(dir.path().join("none.imgset"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(o), 3);

    let garbage = dir.path().join("garbage.hdbg");
    fs::write(&garbage, b"not a model").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_debughd"))
        .args(["classify", "--model"])
        .arg(&garbage)
        .arg("--images")
        .arg(dir.path().join("none.imgset"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(o), 2);
}
