use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semsheaf::io::{read_matrix, read_network, write_atomic};
use semsheaf::pipeline::{DictionaryArtifact, SheafArtifact};
use semsheaf::synthetic::SyntheticSpec;
use serde_json::Value;

fn semsheaf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semsheaf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_spec(dir: &Path, spec: &SyntheticSpec) -> PathBuf {
    let path = dir.join("spec.json");
    fs::write(&path, serde_json::to_vec(spec).unwrap()).unwrap();
    path
}

fn gen(dir: &Path, spec: &SyntheticSpec) -> PathBuf {
    let bundle = dir.join("bundle");
    let out = semsheaf(&["gen", "--spec", p(&write_spec(dir, spec)), "--out", p(&bundle)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    bundle
}

fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error report is JSON")
}

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        families: vec![0, 0, 1, 1],
        dim: 8,
        samples: 60,
        support_size: 3,
        seed: 5,
        ..SyntheticSpec::default()
    }
}

#[test]
fn threshold_rule_keeps_only_edges_under_tau() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = gen(tmp.path(), &small_spec());
    let dict = tmp.path().join("dict");
    let sheaf = tmp.path().join("sheaf.json");
    let out = semsheaf(&[
        "dict-learn", "--bundle", p(&bundle), "--out", p(&dict),
        "--budget", "3", "--rho", "10", "--gamma", "0.01", "--init", "data_columns",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = semsheaf(&[
        "sheaf-learn", "--bundle", p(&bundle), "--dict", p(&dict), "--out", p(&sheaf),
        "--edge-rule", "threshold:0.8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let artifact: SheafArtifact = serde_json::from_slice(&fs::read(&sheaf).unwrap()).unwrap();
    assert_eq!(artifact.mode, "denoised");
    assert_eq!(artifact.candidates.len(), 6);
    for e in &artifact.sheaf.edges {
        assert!(e.losses.norm <= 0.8, "edge ({}, {}) has {}", e.u, e.v, e.losses.norm);
    }
    // Every candidate under the threshold was kept.
    let under = artifact.candidates.iter().filter(|c| c.norm <= 0.8).count();
    assert_eq!(under, artifact.sheaf.edges.len());
    // The dictionary stage's settings are echoed.
    assert_eq!(artifact.config.rho, 10.0);
}

#[test]
fn budget_flag_caps_nonzero_rows_at_full_width() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        families: vec![0, 1],
        dim: 384,
        samples: 48,
        support_size: 100,
        seed: 2,
        ..SyntheticSpec::default()
    };
    let bundle = gen(tmp.path(), &spec);
    let dict = tmp.path().join("dict");
    let out = semsheaf(&[
        "dict-learn", "--bundle", p(&bundle), "--out", p(&dict),
        "--budget", "70", "--max-iters", "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let artifact: DictionaryArtifact =
        serde_json::from_slice(&fs::read(dict.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(artifact.code_files.len(), 2);
    for f in &artifact.code_files {
        let codes = read_matrix(&dict.join(f)).unwrap();
        assert_eq!(codes.shape(), (384, 48));
        let nonzero = codes.row_iter().filter(|r| r.iter().any(|&x| x != 0.0)).count();
        assert!(nonzero <= 70, "{f} has {nonzero} nonzero rows");
    }
}

#[test]
fn truncated_matrix_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = gen(tmp.path(), &small_spec());
    let file = bundle.join("agent_001.semb");
    let bytes = fs::read(&file).unwrap();
    fs::write(&file, &bytes[..bytes.len() - 8]).unwrap();

    let out = semsheaf(&["dict-learn", "--bundle", p(&bundle), "--out", p(&tmp.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "FormatError");
}

#[test]
fn manifest_shape_disagreement_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = gen(tmp.path(), &small_spec());
    let manifest_path = bundle.join("manifest.json");
    let mut manifest: Value = serde_json::from_slice(&fs::read(&manifest_path).unwrap()).unwrap();
    manifest["d"] = Value::from(16);
    write_atomic(&manifest_path, &serde_json::to_vec(&manifest).unwrap()).unwrap();

    let out = semsheaf(&["sheaf-learn", "--bundle", p(&bundle), "--baseline", "--out", p(&tmp.path().join("s.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "ManifestMismatch");
}

#[test]
fn usage_errors_exit_with_one() {
    let out = semsheaf(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "UsageError");

    let out = semsheaf(&["sheaf-learn", "--bundle", "x", "--out", "y", "--edge-rule", "median"]);
    assert_eq!(out.status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let bundle = gen(tmp.path(), &small_spec());
    let out = semsheaf(&["dict-learn", "--bundle", p(&bundle), "--out", p(&tmp.path().join("d")), "--budget", "9"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "BadBudget");

    let out = semsheaf(&["sheaf-learn", "--bundle", p(&bundle), "--out", p(&tmp.path().join("s.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = gen(tmp.path(), &small_spec());
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"gamma": 0.5, "rho": 3.0, "budgets": 2, "max_iters": 4}"#).unwrap();
    let dict = tmp.path().join("d");
    let out = semsheaf(&[
        "dict-learn", "--bundle", p(&bundle), "--out", p(&dict),
        "--config", p(&config), "--rho", "7", "--budget", "2,3,2,3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let artifact: DictionaryArtifact =
        serde_json::from_slice(&fs::read(dict.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(artifact.config.gamma, 0.5);
    assert_eq!(artifact.config.rho, 7.0);
    assert_eq!(artifact.config.max_iters, 4);
    assert_eq!(artifact.config.budgets, semsheaf::Budgets::PerAgent(vec![2, 3, 2, 3]));
}

#[test]
fn pipeline_writes_every_artifact_with_one_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &small_spec());
    let out_dir = tmp.path().join("run");
    let out = semsheaf(&[
        "pipeline", "--spec", p(&spec), "--out", p(&out_dir),
        "--budget", "3", "--rho", "10", "--gamma", "0.01", "--init", "data_columns", "--seed", "11",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for f in [
        "bundle/manifest.json",
        "bundle/truth.json",
        "dictionary/dictionary.semb",
        "dictionary/convergence.json",
        "dictionary/codes/agent_000.semb",
        "dictionary/codes/agent_003.semb",
        "sheaf.json",
        "sheaf_baseline.json",
        "analysis/analysis.json",
        "analysis/edge_loss_hist.csv",
    ] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }

    let net = read_network(&out_dir.join("bundle")).unwrap();
    assert_eq!(net.embeddings.num_agents(), 4);
    let json = |f: &str| -> Value { serde_json::from_slice(&fs::read(out_dir.join(f)).unwrap()).unwrap() };
    let truth = json("bundle/truth.json");
    assert_eq!(truth["spec"]["seed"], 11);
    for f in ["dictionary/convergence.json", "sheaf.json", "sheaf_baseline.json", "analysis/analysis.json"] {
        assert_eq!(json(f)["config"]["seed"], 11, "{f}");
    }
    assert_eq!(json("analysis/analysis.json")["split_seed"], 11);
}

#[test]
fn budget_sweep_emits_tidy_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = gen(tmp.path(), &small_spec());
    let out_dir = tmp.path().join("sweep");
    let out = semsheaf(&[
        "analyze", "--bundle", p(&bundle), "--out", p(&out_dir),
        "--sweep", "budget=2,4,8", "--rho", "10", "--max-iters", "50",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "budget");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 4);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    let budgets: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(&budgets[..5], ["2", "2", "2", "2", "4"]);
}
