use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nckernel(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nckernel"))
        .arg("--out")
        .arg(out)
        .args(["--log", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_gram_and_nc1_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(nckernel(out, &["--seed", "5", "gen", "--n", "64", "--d0", "2"]).status.success());
    assert!(out.join("data.csv").exists() && out.join("data.json").exists());

    let data = out.join("data");
    let data = data.to_str().unwrap();
    assert!(nckernel(out, &["gram", "--data", data, "--kernel", "nngp-erf"]).status.success());
    let stem = out.join("gram_nngp-erf");
    assert!(nckernel(out, &["nc1", "--gram", stem.to_str().unwrap()]).status.success());
    let from_gram = json(&out.join("nc1.json"));
    assert_eq!(from_gram["status"], "ok");

    assert!(nckernel(out, &["nc1", "--data", data, "--kernel", "nngp-erf"]).status.success());
    let direct = json(&out.join("nc1.json"));
    assert_eq!(direct["record"]["nc1"], from_gram["record"]["nc1"]);
    assert_eq!(direct["record"]["partition"], serde_json::json!([32, 32]));
    assert_eq!(direct["record"]["seed"], 5);
    assert!(direct["record"]["relative_nc1"].is_f64());
}

#[test]
fn features_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let feats = out.join("h.csv");
    fs::write(&feats, "0,1\n0.2,1\n3,0\n3.4,0.2\n").unwrap();
    let ok = nckernel(out, &["nc1", "--features", feats.to_str().unwrap(), "--partition", "2,2"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(json(&out.join("nc1.json"))["record"]["kind"], "features");
    let bad = nckernel(out, &["nc1", "--features", feats.to_str().unwrap(), "--partition", "1,2"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(json(&out.join("nc1.json"))["status"], "failed");
}

#[test]
fn degenerate_records_set_the_exit_code_unless_partial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    // identical features everywhere leave no between-class spread
    let feats = out.join("flat.csv");
    fs::write(&feats, "1,1\n1,1\n1,1\n1,1\n").unwrap();
    let args = ["nc1", "--features", feats.to_str().unwrap(), "--partition", "2,2"];
    assert_eq!(nckernel(out, &args).status.code(), Some(1));
    assert_eq!(json(&out.join("nc1.json"))["status"], "degenerate");
    let mut partial = vec!["--allow-partial"];
    partial.extend(args);
    assert!(nckernel(out, &partial).status.success());
}

#[test]
fn sweep_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let run = nckernel(
        out,
        &["--threads", "2", "sweep", "--n-grid", "16,32", "--d0-grid", "1,2,8", "--seeds", "2", "--methods", "nngp-erf,ntk-relu"],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let records = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 3 * 2 * 2);
    for m in ["nngp-erf", "ntk-relu"] {
        assert!(out.join(format!("heatmap_{m}.csv")).exists());
        assert!(out.join(format!("heatmap_{m}.svg")).exists());
    }
    assert_eq!(json(&out.join("summary.json"))["records"], 24);
}

#[test]
fn sweep_reads_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("sweep.toml");
    fs::write(&cfg, "profile = \"d2\"\nn_grid = [32]\nd0_grid = [1, 2]\nseeds = 1\nmethods = [\"linear\"]\n").unwrap();
    let run = nckernel(out, &["--config", cfg.to_str().unwrap(), "--seed", "9", "sweep", "--no-svg"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["dataset"], "d2");
    assert_eq!(summary["master_seed"], 9);
    assert!(!out.join("heatmap_linear.svg").exists());
}

#[test]
fn eos_writes_state_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let run = nckernel(out, &["eos", "--n", "32", "--d0", "2", "--target-d1", "2000", "--sigma2", "1e-3"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let c = fs::read_to_string(out.join("C.csv")).unwrap();
    assert_eq!(c.lines().count(), 2);
    assert_eq!(fs::read_to_string(out.join("Q.csv")).unwrap().lines().count(), 32);
    let log = json(&out.join("eos_log.json"));
    assert_eq!(log["factors"].as_array().unwrap().len(), 18);
    assert_eq!(json(&out.join("nc1.json"))["record"]["kind"], "eos-2000");

    let bad = nckernel(out, &["eos", "--n", "32", "--d0", "2", "--schedule", "1000,2000"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_fcn_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let run = nckernel(
        out,
        &["train-fcn", "--n", "64", "--width", "32", "--depth", "3", "--activation", "relu", "--steps", "25", "--lr", "1e-3"],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("step,loss,accuracy"));
    assert_eq!(trace.lines().count(), 26);
    assert_eq!(json(&out.join("nc1.json"))["record"]["kind"], "fcn-relu-l3-w32");
}

#[test]
fn verify_reports_and_rejects_unknown_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let run = nckernel(out, &["verify", "eos-gradient"]);
    assert!(run.status.success());
    let report = json(&out.join("verify_eos-gradient.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);

    let theorem2 = nckernel(out, &["verify", "theorem2"]);
    assert!(theorem2.status.success());
    let report = json(&out.join("verify_theorem2.json"));
    assert_eq!(report["supported_variant"], "appendix-D");
    for row in report["rows"].as_array().unwrap() {
        for key in ["predicted", "mc_mean", "mc_std_err", "z_score"] {
            assert!(row[key].is_f64(), "{key}");
        }
    }

    let unknown = nckernel(out, &["verify", "theorem9"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown verify suite"));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!nckernel(dir.path(), &["gram", "--kernel", "rbf"]).status.success());
    assert!(!nckernel(dir.path(), &["sweep", "--profile", "mnist"]).status.success());
    assert!(!nckernel(dir.path(), &["gen", "--preset", "d3"]).status.success());
}
