use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tca::config::ExperimentConfig;
use tca::io::load_predictions;

fn tca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tca")).args(args).output().expect("binary runs")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("c.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "n_train = 600\nn_test = 80\nseeds = [5]\n[encoder]\nd_emb = 64\n";

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn staged_pipeline_matches_monolithic_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, SMALL);
    let (train, test) = (d.join("train.jsonl"), d.join("test.jsonl"));
    assert!(tca(&["generate", "--config", &cfg, "--out", s(&train)]).status.success());
    assert!(tca(&["generate", "--config", &cfg, "--out", s(&test), "--split", "test"]).status.success());

    let out = d.join("run");
    let run = tca(&["run", "--config", &cfg, "--out", s(&out), "--jobs", "2", "--offline"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);

    for (i, method) in ["TCA", "TBE-S", "TBE-T"].iter().enumerate() {
        let model = d.join(format!("{method}.json"));
        let preds = d.join(format!("{method}.jsonl"));
        let fit = tca(&["fit", "--config", &cfg, "--data", s(&train), "--method", method, "--out", s(&model)]);
        assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
        assert!(tca(&["predict", "--model", s(&model), "--data", s(&test), "--out", s(&preds)]).status.success());
        let eval = tca(&["evaluate", "--predictions", s(&preds), "--data", s(&test)]);
        assert!(eval.status.success());
        let stdout = String::from_utf8(eval.stdout).unwrap();
        let pehe = stdout.lines().next().unwrap().strip_prefix("pehe\t").unwrap();
        assert_eq!(rows[i][0], *method);
        assert_eq!(rows[i][7], pehe, "{method}");
        assert_eq!(load_predictions(&preds).unwrap().len(), 80);
    }
}

#[test]
fn evaluate_rejects_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, SMALL);
    let test = d.join("test.jsonl");
    assert!(tca(&["generate", "--config", &cfg, "--out", s(&test), "--split", "test"]).status.success());
    let preds = d.join("p.jsonl");
    std::fs::write(&preds, "{\"index\":0,\"tau_hat\":0.1,\"empty_text\":false}\n").unwrap();
    let out = tca(&["evaluate", "--predictions", s(&preds), "--data", s(&test)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("length mismatch"));
}

#[test]
fn malformed_input_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, SMALL);
    let data = d.join("bad.jsonl");
    std::fs::write(&data, "{\"x\":[0.0],\"a\":0,\"y\":1.0}\n{\"x\":[0.0],\"a\":1,\"y\":}\n").unwrap();
    let out = tca(&["fit", "--config", &cfg, "--data", s(&data), "--method", "TCA", "--out", s(&d.join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:2:"), "{err}");
}

#[test]
fn smoke_config_runs_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("configs/smoke.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let run = tca(&["run", "--config", s(&cfg), "--out", s(out), "--jobs", jobs, "--offline"]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    for name in tca::runner::ARTIFACTS {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = std::fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let loaded = ExperimentConfig::load(&cfg).unwrap();
    assert_eq!(manifest["config_hash"], loaded.hash());
    assert_eq!(manifest["config"]["head"]["lambda"], 0.001);
    assert_eq!(manifest["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn failing_cell_gives_nonzero_exit_and_manifest_entry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_train = 40\nn_test = 20\nseeds = [1]\nmethods = [\"TCA\"]\n[nuisance]\nk_folds = 40\n");
    let out = dir.path().join("o");
    let run = tca(&["run", "--config", &cfg, "--out", s(&out), "--offline"]);
    assert_eq!(run.status.code(), Some(1));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failures"][0]["method"], "TCA");
}

#[test]
fn shipped_configs_parse() {
    let bench = ExperimentConfig::load(&repo_file("configs/benchmark.toml")).unwrap();
    let default = ExperimentConfig { output_dir: bench.output_dir.clone(), ..ExperimentConfig::default() };
    assert_eq!(bench, default);
    for name in ["strength_sweep", "prompt_sweep", "null_leak", "smoke"] {
        ExperimentConfig::load(&repo_file(&format!("configs/{name}.toml"))).unwrap();
    }
    let sweep = ExperimentConfig::load(&repo_file("configs/strength_sweep.toml")).unwrap();
    assert_eq!(sweep.cells().unwrap().len(), 3);
    assert_eq!(sweep.seeds.len(), 10);
}

#[test]
fn oracle_suite_passes_on_a_fresh_checkout() {
    let out = tca(&["oracle-suite"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{stdout}");
}
