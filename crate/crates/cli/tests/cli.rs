use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sepsis_core::ensemble::load_ensemble;
use sepsis_core::eval::ExperimentReport;
use sepsis_core::gold::BandTables;

fn sepsis(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepsis"))
        .args(args)
        .env("SEPSIS_OUT", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_dir(o: &Output) -> PathBuf {
    assert!(o.status.success(), "{}", stderr(o));
    PathBuf::from(String::from_utf8_lossy(&o.stdout).trim())
}

const FAST_CONFIG: &str = r#"
bootstrap_resamples = 50

[models.forest]
n_trees = 30

[models.boosted]
n_rounds = 40

[models.mlp]
max_epochs = 40
"#;

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sepsis(tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_subcommand_or_flag_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(sepsis(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(sepsis(tmp.path(), &["evaluate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(sepsis(tmp.path(), &["train", "--model", "svm"]).status.code(), Some(2));
}

#[test]
fn missing_vitals_path_is_named_in_one_error_line() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent_vitals.csv");
    let o = sepsis(tmp.path(), &["featurize", "--vitals", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: io: "));
    assert!(err.contains("absent_vitals.csv"));
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none(), "no run directory on failure");
}

#[test]
fn invalid_config_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[models.forest]\nn_trees = 0\n").unwrap();
    let vitals = tmp.path().join("v.csv");
    fs::write(&vitals, "episode_id,age,unit,channel,minute,value\n").unwrap();
    let o = sepsis(
        tmp.path(),
        &["evaluate", "--config", cfg.to_str().unwrap(), "--vitals", vitals.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: config: "), "{}", stderr(&o));
}

#[test]
fn printed_bands_are_the_standard_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sepsis(tmp.path(), &["--print-bands"]);
    assert!(o.status.success());
    let parsed = BandTables::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(&parsed, BandTables::standard());
}

#[test]
fn synth_is_deterministic_and_never_overwrites() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_dir(&sepsis(tmp.path(), &["synth", "--septic", "4", "--negatives", "10", "--run", "a"]));
    let b = run_dir(&sepsis(tmp.path(), &["synth", "--septic", "4", "--negatives", "10", "--run", "b"]));
    for f in ["vitals.csv", "annotations.csv", "truth.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let again = sepsis(tmp.path(), &["synth", "--septic", "4", "--negatives", "10", "--run", "a"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--force"));
    run_dir(&sepsis(
        tmp.path(),
        &["synth", "--septic", "4", "--negatives", "10", "--run", "a", "--force"],
    ));
    let other_seed = run_dir(&sepsis(
        tmp.path(),
        &["synth", "--septic", "4", "--negatives", "10", "--run", "c", "--seed", "99"],
    ));
    assert_ne!(fs::read(a.join("vitals.csv")).unwrap(), fs::read(other_seed.join("vitals.csv")).unwrap());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(other_seed.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn synth_then_evaluate_writes_a_complete_report() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = run_dir(&sepsis(tmp.path(), &["synth", "--septic", "15", "--negatives", "60"]));
    let cfg = tmp.path().join("fast.toml");
    fs::write(&cfg, FAST_CONFIG).unwrap();
    let vitals = syn.join("vitals.csv");
    let ann = syn.join("annotations.csv");
    let inputs = [
        "--config",
        cfg.to_str().unwrap(),
        "--vitals",
        vitals.to_str().unwrap(),
        "--annotations",
        ann.to_str().unwrap(),
    ];

    let mut args = vec!["evaluate", "--jobs", "2"];
    args.extend(inputs);
    let dir = run_dir(&sepsis(tmp.path(), &args));
    let report: ExperimentReport = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.format, "sepsis-report");
    assert_eq!(report.cells.len(), 6);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_digest"], report.config_digest.as_str());
    assert!(fs::read_to_string(dir.join("report.txt")).unwrap().contains(&report.config_digest));
    let roc = fs::read_to_string(dir.join("roc_detection_sepsis_stacked.csv")).unwrap();
    assert!(roc.starts_with(&format!("# config_digest={}", report.config_digest)));
    let stacked = report.cells[0].model_auc("stacked").expect("stacked AUC");

    let mut args = vec!["train", "--task", "detection", "--category", "sepsis"];
    args.extend(inputs);
    let trained = run_dir(&sepsis(tmp.path(), &args));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(trained.join("train.json")).unwrap()).unwrap();
    assert_eq!(summary["test_auc"].as_f64().unwrap(), stacked);
    load_ensemble(&trained.join("ensemble")).unwrap();

    for cmd in ["ingest", "label", "score", "featurize"] {
        let mut args = vec![cmd];
        args.extend(inputs);
        let d = run_dir(&sepsis(tmp.path(), &args));
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("run.json")).unwrap()).unwrap();
        assert_eq!(manifest["config_digest"], report.config_digest.as_str());
        for f in manifest["files"].as_array().unwrap() {
            let f = f.as_str().unwrap();
            if f.ends_with(".csv") {
                let text = fs::read_to_string(d.join(f)).unwrap();
                assert!(text.starts_with(&format!("# config_digest={}", report.config_digest)), "{cmd}/{f}");
            }
        }
    }
}

#[test]
fn configured_output_path_is_used_when_out_is_unset() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = run_dir(&sepsis(tmp.path(), &["synth", "--septic", "2", "--negatives", "4"]));
    let root = tmp.path().join("configured");
    let cfg = tmp.path().join("out.toml");
    fs::write(&cfg, format!("[paths]\noutput = {:?}\n", root.to_str().unwrap())).unwrap();
    let vitals = syn.join("vitals.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_sepsis"))
        .args(["ingest", "--run", "r", "--config", cfg.to_str().unwrap(), "--vitals", vitals.to_str().unwrap()])
        .env_remove("SEPSIS_OUT")
        .env_remove("RUST_LOG")
        .output()
        .unwrap();
    assert_eq!(run_dir(&o), root.join("r"));
    assert!(root.join("r/run.json").is_file());
}
