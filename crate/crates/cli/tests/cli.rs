use std::path::Path;
use std::process::{Command, Output};

use vexl::divergence::make_fn;
use vexl::{luxemburg_norm, NormResult, PipelineFile, ThetaConfig};

fn vexl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vexl")).current_dir(dir).args(args).output().expect("spawn vexl")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn norm_of(out: &Output) -> NormResult<f64> {
    assert_eq!(code(out), 0, "{}", stderr(out));
    serde_json::from_str(stdout(out).trim()).unwrap()
}

#[test]
fn norm_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "chi_0_quarter.json", r#"[{"left":0,"right":0.25,"value":1},{"left":0.25,"right":1,"value":0}]"#);
    write(dir.path(), "zero.json", r#"[{"left":0,"right":1,"value":0}]"#);
    let r = norm_of(&vexl(dir.path(), &["norm", "--f", "chi_0_quarter.json", "--p", "const:2"]));
    assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
    let r = norm_of(&vexl(dir.path(), &["norm", "--f", "zero.json", "--p", "const:3"]));
    assert_eq!(r.value, 0.0);
}

#[test]
fn norm_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", "[{\"left\":0}");
    write(dir.path(), "inf.json", r#"[{"left":0,"right":1,"value":"inf"}]"#);
    write(dir.path(), "one.json", r#"[{"left":0,"right":1,"value":1}]"#);
    assert_eq!(code(&vexl(dir.path(), &["norm", "--f", "bad.json", "--p", "const:2"])), 2);
    assert_eq!(code(&vexl(dir.path(), &["norm", "--f", "missing.json", "--p", "const:2"])), 2);
    assert_eq!(code(&vexl(dir.path(), &["norm", "--f", "one.json", "--p", "const:0.5"])), 2);
    assert_eq!(code(&vexl(dir.path(), &["norm", "--f", "one.json", "--p", "named:unknown"])), 2);
    assert_eq!(code(&vexl(dir.path(), &["norm", "--f", "inf.json", "--p", "const:2"])), 3);
    let r = norm_of(&vexl(dir.path(), &["norm", "--f", "one.json", "--p", "named:log_conjugate:1"]));
    assert!((r.value - 1.0).abs() < 1e-9);
}

#[test]
fn pipeline_norm_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = vexl(dir.path(), &["pipeline", "--K", "10", "--resolution", "4096", "--out", "pipeline.json"]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).lines().all(|l| !l.starts_with("FAIL")));
    assert!(stdout(&out).contains("PASS  2t_{k+1} < t_k"));

    let config = ThetaConfig::uniform(vec![0.1f64, 0.4, 0.75], 0.01).unwrap();
    let f_n = make_fn(&config).unwrap();
    std::fs::write(dir.path().join("fN.json"), serde_json::to_string(&f_n).unwrap()).unwrap();
    let cli = norm_of(&vexl(dir.path(), &["norm", "--f", "fN.json", "--p", "pipeline.json#p_bar"]));

    let text = std::fs::read_to_string(dir.path().join("pipeline.json")).unwrap();
    let file: PipelineFile<f64> = serde_json::from_str(&text).unwrap();
    let lib = luxemburg_norm(&f_n, &file.p_bar, vexl::vexl::DEFAULT_TOL).unwrap();
    assert_eq!(cli.value.to_bits(), lib.value.to_bits());
    assert_eq!(cli, lib);

    let recheck = vexl(dir.path(), &["pipeline", "--check", "pipeline.json"]);
    assert_eq!(code(&recheck), 0, "{}", stdout(&recheck));
}

#[test]
fn pipeline_rejects_zero_depth() {
    let dir = tempfile::tempdir().unwrap();
    let out = vexl(dir.path(), &["pipeline", "--K", "0"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("K >= 1 required"));
    assert!(!dir.path().join("pipeline.json").exists());
}

#[test]
fn tampered_pipeline_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vexl(dir.path(), &["pipeline", "--K", "10", "--resolution", "4096"])), 0);
    let text = std::fs::read_to_string(dir.path().join("pipeline.json")).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["t"][1] = json["t"][0].clone();
    write(dir.path(), "tampered.json", &json.to_string());
    let out = vexl(dir.path(), &["pipeline", "--check", "tampered.json"]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("FAIL  2t_{k+1} < t_k"));
    assert!(stderr(&out).contains("2t_{k+1} < t_k"));
}

#[test]
fn experiment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "exp.json", r#"{"system":"trig","N_list":[16,64,256],"rng_seed":11,"budget":4,"grid":2048}"#);
    for out_dir in ["a", "b"] {
        let out = vexl(dir.path(), &["experiment", "--config", "exp.json", "--out-dir", out_dir]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let names = ["report.json", "records.csv", "curves.csv", "lebesgue.csv", "blocks.csv", "exceedance.svg", "best_level.svg", "lebesgue.svg"];
    for name in names {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/report.json")).unwrap()).unwrap();
    assert_eq!(report["format_version"], 1);
    assert_eq!(report["config"]["rng_seed"], 11);
    assert_eq!(report["records"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("a/records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    // Nothing but the outputs is left behind by the atomic writes.
    assert_eq!(std::fs::read_dir(dir.path().join("a")).unwrap().count(), names.len());
}

#[test]
fn experiment_empty_and_missing_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "empty.json", r#"{"system":"walsh","N_list":[],"rng_seed":1}"#);
    let out = vexl(dir.path(), &["experiment", "--config", "empty.json", "--out-dir", "out"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert!(report["records"].as_array().unwrap().is_empty());
    assert!(report["aggregation"].is_null());

    write(dir.path(), "blocks.json", r#"{"system":"trig","N_list":[3],"rng_seed":1,"budget":4,"grid":1024,"blocks":[{"i":0,"N":3}]}"#);
    assert_eq!(code(&vexl(dir.path(), &["experiment", "--config", "blocks.json"])), 2);
    let out = vexl(dir.path(), &["experiment", "--config", "blocks.json", "--pipeline", "nowhere.json"]);
    assert_eq!(code(&out), 2);

    write(dir.path(), "seedless.json", r#"{"system":"trig","N_list":[4]}"#);
    assert_eq!(code(&vexl(dir.path(), &["experiment", "--config", "seedless.json"])), 2);
}

#[test]
fn aggregation_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "search.json", r#"{"system":"trig","N_list":[3],"rng_seed":7,"budget":8,"grid":1024}"#);
    assert_eq!(code(&vexl(dir.path(), &["experiment", "--config", "search.json", "--out-dir", "s"])), 0);
    let out = vexl(dir.path(), &["pipeline", "--K", "45", "--resolution", "4096", "--thetas-from", "s/report.json", "--thetas-n", "3"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    write(
        dir.path(),
        "agg.json",
        r#"{"system":"trig","N_list":[3],"rng_seed":7,"budget":8,"grid":1024,"blocks":[{"i":0,"N":3}],"pipeline_ref":"pipeline.json"}"#,
    );
    let out = vexl(dir.path(), &["experiment", "--config", "agg.json", "--out-dir", "agg"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("agg/report.json")).unwrap()).unwrap();
    let g_l1 = report["blocks"][0]["g_l1"].as_f64().unwrap();
    assert_eq!(g_l1, 1.0 / 3f64.ln().sqrt());
    assert!(report["aggregation"]["p_bar_norm"].as_f64().unwrap() > 0.0);

    // A pipeline that fails its own checks blocks the aggregation.
    let text = std::fs::read_to_string(dir.path().join("pipeline.json")).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["t"][1] = json["t"][0].clone();
    write(dir.path(), "pipeline.json", &json.to_string());
    assert_eq!(code(&vexl(dir.path(), &["experiment", "--config", "agg.json", "--out-dir", "agg2"])), 4);
}
