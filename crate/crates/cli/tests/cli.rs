use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dcfair(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcfair"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = dcfair(out, args);
    assert!(o.status.success(), "dcfair {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn find(dir: &Path, prefix: &str, ext: &str) -> std::path::PathBuf {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            let name = p.file_name().unwrap().to_str().unwrap();
            name.starts_with(prefix) && name.ends_with(ext)
        })
        .unwrap_or_else(|| panic!("no {prefix}*{ext} in {}", dir.display()))
}

/// Small LCG so the fixture does not depend on any RNG crate.
fn random_csv(path: &Path, n: usize) {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut text = String::from("a,b,c,u\n");
    for _ in 0..n {
        let a = next();
        text.push_str(&format!("{a},{},7.5,{}\n", a * a + next(), next()));
    }
    fs::write(path, text).unwrap();
}

const SMALL: &[&str] = &["--synth-n", "400", "--epochs", "3", "--batch-size", "64", "--hidden", "16"];

#[test]
fn stat_constant_column_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    random_csv(&csv, 50);
    let out = dir.path().join("o");
    let stdout = ok(&out, &["stat", "dcov", "--input", csv.to_str().unwrap(), "--y", "a,b", "--z", "c"]);
    let v: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(v["value"].as_f64(), Some(0.0));
    assert_eq!(v["n"].as_u64(), Some(50));
    assert_eq!(read_json(&out.join("stat.json")), v);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn stat_check_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    random_csv(&csv, 60);
    let out = dir.path().join("o");
    let csv = csv.to_str().unwrap();
    ok(&out, &["stat", "dcov", "--input", csv, "--y", "a", "--z", "b", "--check"]);
    let v = read_json(&out.join("stat.json"));
    assert!(v["value"].as_f64().unwrap() > 0.0);
    assert!(v["check"]["relative_gap"].as_f64().unwrap() < 1e-10);

    ok(&out, &["stat", "cdcov", "--input", csv, "--y", "a", "--z", "b", "--u", "u", "--h", "0.7", "--check"]);
    let v = read_json(&out.join("stat.json"));
    assert_eq!(v["h"].as_f64(), Some(0.7));
    assert!(v["check"]["relative_gap"].as_f64().unwrap() < 1e-10);
}

#[test]
fn cdcov_silverman_bandwidth_lands_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    random_csv(&csv, 100);
    let out = dir.path().join("o");
    ok(&out, &["stat", "cdcov", "--input", csv.to_str().unwrap(), "--y", "a", "--z", "b", "--u", "u", "--silverman"]);
    let h = read_json(&out.join("manifest.json"))["config"]["h"].as_f64().unwrap();
    // (100 * 3 / 4)^(-1/5)
    assert!((h - 75f64.powf(-0.2)).abs() < 1e-15);
    assert!((h - 0.42172).abs() < 5e-5);
}

#[test]
fn stat_rejects_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "a,b\n1,2\nx,3\n4,5\n").unwrap();
    let o = dcfair(&dir.path().join("o"), &["stat", "dcov", "--input", csv.to_str().unwrap(), "--y", "a", "--z", "b"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = dcfair(&dir.path().join("o"), &["stat", "dcov", "--input", csv.to_str().unwrap(), "--y", "nope", "--z", "b"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
}

#[test]
fn train_writes_outputs_and_baseline_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut args = vec!["--seed", "4", "train", "--penalty", "none"];
    args.extend_from_slice(SMALL);
    ok(&out, &args);
    for f in ["model.json", "history.jsonl", "report.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report = read_json(&out.join("report.json"));
    let ddp = report["report"]["delta_dp"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ddp));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"].as_u64(), Some(4));
    assert_eq!(manifest["config"]["train"]["penalty"]["kind"], "none");
    assert_eq!(manifest["config"]["train"]["epochs"].as_u64(), Some(3));

    let history = fs::read_to_string(out.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 3);
    for line in history.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "train_loss", "penalty_mean", "lambda", "val_accuracy", "val_ddp", "val_deo"] {
            assert!(rec.get(key).is_some(), "history lacks {key}");
        }
    }

    // eval on the saved model reproduces the test report
    let eval_out = dir.path().join("e");
    let mut args = vec!["--seed", "4", "eval", "--model"];
    let model = out.join("model.json");
    args.push(model.to_str().unwrap());
    args.extend_from_slice(&["--synth-n", "400"]);
    ok(&eval_out, &args);
    assert_eq!(read_json(&eval_out.join("report.json"))["report"], report["report"]);
}

#[test]
fn dc_training_lambda_trace_is_nondecreasing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut args = vec!["train", "--penalty", "dc", "--lambda-init", "2"];
    args.extend_from_slice(SMALL);
    ok(&out, &args);
    let lambdas: Vec<f64> = fs::read_to_string(out.join("history.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["lambda"].as_f64().unwrap())
        .collect();
    assert_eq!(lambdas[0], 2.0);
    assert!(lambdas.windows(2).all(|w| w[1] >= w[0]), "{lambdas:?}");
}

#[test]
fn train_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = vec!["--seed", "9", "train", "--penalty", "cdc"];
    args.extend_from_slice(SMALL);
    ok(&a, &args);
    ok(&b, &args);
    for f in ["history.jsonl", "model.json", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let strip = |p: &Path| {
        let mut v = read_json(&p.join("manifest.json"));
        v.as_object_mut().unwrap().remove("created_unix");
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn config_file_and_flag_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.toml");
    fs::write(&cfg, "epochs = 2\nbatch_size = 50\nhidden = [8]\nlambda_init = 1.5\n[penalty]\nkind = \"dc\"\n").unwrap();
    let out = dir.path().join("o");
    ok(&out, &["train", "--config", cfg.to_str().unwrap(), "--epochs", "1", "--synth-n", "300"]);
    let train = &read_json(&out.join("manifest.json"))["config"]["train"];
    assert_eq!(train["epochs"].as_u64(), Some(1));
    assert_eq!(train["batch_size"].as_u64(), Some(50));
    assert_eq!(train["lambda_init"].as_f64(), Some(1.5));
    assert_eq!(train["penalty"]["kind"], "dc");
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = dcfair(
        &dir.path().join("o"),
        &["train", "--lr", "-1", "--momentum", "2", "--batch-size", "1", "--beta", "-3"],
    );
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["lr", "momentum", "batch_size", "beta"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
    assert!(!dir.path().join("o").join("model.json").exists());

    let o = dcfair(&dir.path().join("o"), &["train", "--data", "x.csv"]);
    assert!(!o.status.success());
}

#[test]
fn converge_default_dc_study() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&out, &["--seed", "1", "converge"]);
    let csv = fs::read_to_string(find(&out, "converge_dc_independent_seed1_grid", ".csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 100);
    let summary = read_json(&find(&out, "converge_dc_independent_seed1_grid", ".json"));
    let medians: Vec<f64> = summary.as_array().unwrap().iter().map(|r| r["median"].as_f64().unwrap()).collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");

    let again = dir.path().join("again");
    ok(&again, &["--seed", "1", "converge"]);
    assert_eq!(csv, fs::read_to_string(find(&again, "converge_dc_independent_seed1_grid", ".csv")).unwrap());
}

#[test]
fn converge_dependent_uses_reference_draw() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&out, &["converge", "--dist", "dependent", "--grid", "32,512", "--trials", "20", "--reference-n", "4096"]);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["reference"]["n"].as_u64(), Some(4096));
    let summary = read_json(&find(&out, "converge_dc_dependent", ".json"));
    let means: Vec<f64> = summary.as_array().unwrap().iter().map(|r| r["mean"].as_f64().unwrap()).collect();
    assert!(means[1] < means[0], "{means:?}");

    let o = dcfair(&out, &["converge", "--grid", "1,8"]);
    assert!(!o.status.success());
}

#[test]
fn tradeoff_shape_schema_and_cross_command_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut args = vec![
        "--seed", "20", "tradeoff", "--lambdas", "0,2,8", "--kinds", "none,dc", "--num-seeds", "10", "--synth-n", "300",
    ];
    args.extend_from_slice(&["--epochs", "2", "--batch-size", "64", "--hidden", "8"]);
    ok(&out, &args);
    let points = fs::read_to_string(find(&out, "tradeoff_points_seed20_grid", ".csv")).unwrap();
    let mut lines = points.lines();
    assert_eq!(lines.next().unwrap(), "lambda_init,kind,seed,accuracy,delta_dp,delta_eo");
    assert_eq!(lines.count(), 60);
    let cells = fs::read_to_string(find(&out, "tradeoff_cells_seed20_grid", ".csv")).unwrap();
    let header = cells.lines().next().unwrap();
    for col in ["accuracy_std", "delta_dp_std", "delta_eo_std"] {
        assert!(header.contains(col));
    }
    assert_eq!(cells.lines().count(), 1 + 6);

    // the (dc, lambda 0, seed 23) cell is the unpenalized model of `train --seed 23`
    let train_out = dir.path().join("t");
    ok(&train_out, &[
        "--seed", "23", "train", "--penalty", "none", "--synth-n", "300", "--epochs", "2", "--batch-size", "64",
        "--hidden", "8",
    ]);
    let report = read_json(&train_out.join("report.json"))["report"].clone();
    let row = points
        .lines()
        .find(|l| l.starts_with("0.0,dc,23,") || l.starts_with("0,dc,23,"))
        .expect("baseline row");
    let fields: Vec<f64> = row.split(',').skip(3).map(|f| f.parse().unwrap()).collect();
    assert_eq!(fields[0], report["accuracy"].as_f64().unwrap());
    assert_eq!(fields[1], report["delta_dp"].as_f64().unwrap());
    assert_eq!(fields[2], report["delta_eo"].as_f64().unwrap());
}

#[test]
fn train_on_csv_with_schema_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("schema.toml");
    fs::write(
        &schema,
        "label = \"income\"\nsensitive = [\"sex\"]\npositive_class = \">50K\"\n\
         [[features]]\nname = \"age\"\nkind = \"numeric\"\n\
         [[features]]\nname = \"work\"\nkind = \"categorical\"\n",
    )
    .unwrap();
    let mut csv = String::from("age,work,sex,income\n");
    for i in 0..200 {
        let work = ["private", "gov", "self", "?"][i % 4];
        let sex = ["Male", "Female"][(i / 3) % 2];
        let income = if (i * 7) % 10 < 3 + (i / 3) % 2 * 3 { ">50K" } else { "<=50K" };
        csv.push_str(&format!("{},{work},{sex},{income}\n", 20 + i % 45));
    }
    let data = dir.path().join("adult.csv");
    fs::write(&data, csv).unwrap();
    let cache = dir.path().join("cache");
    let args = [
        "train", "--data", data.to_str().unwrap(), "--schema", schema.to_str().unwrap(), "--cache-dir",
        cache.to_str().unwrap(), "--penalty", "dc", "--epochs", "2", "--batch-size", "32", "--hidden", "8",
    ];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&a, &args);
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
    ok(&b, &args);
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    let report = read_json(&a.join("report.json"));
    assert_eq!(report["n_train"].as_u64().unwrap() + report["n_val"].as_u64().unwrap() + report["n_test"].as_u64().unwrap(), 150);
}
