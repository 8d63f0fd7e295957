use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = "C(8)-MP-GAP-FC(2)";

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/TINY")
}

fn ecc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tiny_args<'a>(cmd: &'a str, dataset: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![cmd, "--dataset", dataset, "--config", CONFIG, "--folds", "3", "--epochs", "2", "--batch", "2", "--out", out]
}

#[test]
fn oracle_suites_pass() {
    let out = ecc(&["oracle-check", "all"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("grid equivalence"));
}

#[test]
fn filters_dump_writes_one_grid_per_weight() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("filters");
    let status = ecc(&["filters-dump", "--step", "0.5", "--extent", "1", "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let pgm = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm")).count();
    // The first convolution maps one input channel to sixteen.
    assert_eq!(pgm, 16);
    let csv = fs::read_to_string(out.join("filters.csv")).unwrap();
    // 5 x 5 lattice, header included.
    assert_eq!(csv.lines().count(), 26);
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let ds = tiny();
    let o = ecc(&tiny_args("train", ds.to_str().unwrap(), out.to_str().unwrap()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "model.eccp", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), "epoch,lr,train_loss,train_acc,test_acc");
    assert_eq!(metrics.lines().count(), 3);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let ckpt = out.join("model.eccp");
    let mut args = tiny_args("eval", ds.to_str().unwrap(), out.to_str().unwrap());
    args.extend(["--checkpoint", ckpt.to_str().unwrap()]);
    let o = ecc(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("test accuracy"));
}

#[test]
fn same_settings_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny();
    let hash = |name: &str| {
        let out = dir.path().join(name);
        let o = ecc(&tiny_args("train", ds.to_str().unwrap(), out.to_str().unwrap()));
        assert!(o.status.success());
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        (m["config_hash"].as_str().unwrap().to_string(), fs::read_to_string(out.join("metrics.csv")).unwrap())
    };
    let (h1, m1) = hash("a");
    let (h2, m2) = hash("a");
    assert_eq!(h1, h2);
    assert_eq!(m1, m2, "training is not deterministic");
}

#[test]
fn cross_validation_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cv");
    let o = ecc(&tiny_args("cv", tiny().to_str().unwrap(), out.to_str().unwrap()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("cv.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean accuracy"));
}

#[test]
fn bad_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny();
    let out = dir.path().join("bad");
    let mut args = tiny_args("train", ds.to_str().unwrap(), out.to_str().unwrap());
    args[4] = "C(8)-XX";
    let o = ecc(&args);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("syntax error"));
}

#[test]
fn unknown_experiment_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("exp.toml");
    fs::write(&file, format!("dataset = {:?}\nconfig = \"{CONFIG}\"\nlearning_rate = 3\n", tiny())).unwrap();
    let o = ecc(&["train", "--experiment", file.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn experiment_file_sets_training_keys() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("exp.toml");
    let out = dir.path().join("run");
    fs::write(
        &file,
        format!(
            "dataset = {:?}\nconfig = \"{CONFIG}\"\nfolds = 3\nout = {:?}\n[train]\nepochs = 3\nbatch = 2\nlr = 0.05\ndecay_epochs = [2]\n",
            tiny(),
            out
        ),
    )
    .unwrap();
    let o = ecc(&["train", "--experiment", file.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lrs: Vec<f64> = metrics.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(lrs.len(), 3);
    for (got, want) in lrs.iter().zip([0.05, 0.05, 0.005]) {
        assert!((got - want).abs() < 1e-12, "{lrs:?}");
    }
}
