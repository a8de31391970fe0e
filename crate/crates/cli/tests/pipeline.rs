//! End-to-end runs of the pipeline on the bundled fixture.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use rdclass::models::ModelFamily;
use rdclass::vectorize::SizeClass;
use rdclass_cli::artifacts::Manifest;
use rdclass_cli::config::PipelineConfig;
use rdclass_cli::stages::{self, Artifact, Workspace};
use rdclass_cli::CliError;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/datacite_1000.xml");

const TEST_CONFIG: &str = r#"
seed = 11
families = ["dct", "mlp"]
[model.mlp]
hidden = [32]
max_epochs = 15
learning_rate = 0.01
"#;

fn config(dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::parse(TEST_CONFIG).unwrap();
    cfg.paths = PipelineConfig::in_workspace(dir).paths;
    cfg
}

fn run_pipeline(dir: &Path) -> PipelineConfig {
    let cfg = config(dir);
    let mut ws = Workspace::open(&cfg).unwrap();
    stages::run_all(&mut ws, &[PathBuf::from(FIXTURE)], None).unwrap();
    cfg
}

/// One trained workspace shared by the read-only tests.
fn trained() -> &'static PipelineConfig {
    static WS: OnceLock<(tempfile::TempDir, PipelineConfig)> = OnceLock::new();
    &WS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = run_pipeline(dir.path());
        (dir, cfg)
    })
    .1
}

fn hashes(cfg: &PipelineConfig) -> Vec<(String, String)> {
    let m = Manifest::load_or_default(&cfg.manifest_path()).unwrap();
    m.artifacts.into_iter().map(|(k, e)| (k, e.sha256)).collect()
}

#[test]
fn clean_without_raw_input_is_a_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let err = stages::clean(&mut Workspace::open(&cfg).unwrap()).unwrap_err();
    assert!(matches!(err, CliError::MissingArtifact(ref p) if p == &cfg.paths.raw), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn binary_reports_missing_artifact_with_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rdclass"))
        .args(["--workspace", dir.path().to_str().unwrap(), "clean"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));
}

#[test]
fn a_second_stage_cannot_enter_a_locked_workspace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let _held = Workspace::open(&cfg).unwrap();
    assert!(matches!(Workspace::open(&cfg), Err(CliError::Locked(_))));
}

#[test]
fn two_runs_produce_identical_artifacts() {
    let first = trained();
    let dir = tempfile::tempdir().unwrap();
    let second = run_pipeline(dir.path());
    let (a, b) = (hashes(first), hashes(&second));
    assert!(a.len() >= 20, "{a:?}");
    assert_eq!(a, b);
}

#[test]
fn run_writes_expected_artifacts_and_counts() {
    let cfg = trained();
    let clean: serde_json::Value =
        serde_json::from_slice(&std::fs::read(cfg.paths.reports.join("clean_stats.json")).unwrap()).unwrap();
    assert_eq!(clean["input"], 940);
    assert_eq!(clean["output"], 750);
    for f in ["aggregate.csv", "aggregate.md", "per_label.csv", "annex.csv", "dataset_stats.csv"] {
        assert!(cfg.paths.reports.join(f).is_file(), "{f}");
    }
    let aggregate = std::fs::read_to_string(cfg.paths.reports.join("aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("model,size,f0.5_macro"));
    assert_eq!(aggregate.lines().count(), 3);
    let m = Manifest::load_or_default(&cfg.manifest_path()).unwrap();
    assert!(m.verify(&cfg.paths.workspace).is_empty());
    assert_eq!(m.artifacts["models/mlp-s.rdcm"].seed, 13);
    assert_eq!(m.artifacts["splits/train.ndjson"].seed, 12);
}

#[test]
fn predict_prints_probabilities() {
    let cfg = trained();
    let text = "Soil moisture and river discharge measurements across alpine catchments during the melt season";
    let out = Command::new(env!("CARGO_BIN_EXE_rdclass"))
        .args(["--workspace", cfg.paths.workspace.to_str().unwrap(), "--seed", "11"])
        .args(["predict", "--family", "dct", "--text", text])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let probs = v["probabilities"].as_array().unwrap();
    assert_eq!(probs.len(), 20);
    assert!(probs.iter().all(|p| (0.0..=1.0).contains(&p.as_f64().unwrap())));
    assert_eq!(v["warnings"].as_array().unwrap().len(), 0);

    let direct = Artifact::load(cfg, ModelFamily::DecisionTree, SizeClass::S).unwrap().classify(text).unwrap();
    assert_eq!(serde_json::to_value(direct).unwrap(), v);
}

#[test]
fn tampered_artifact_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let src = trained();
    let cfg = config(dir.path());
    for (from, to) in [
        (src.vectorizer_path(), cfg.vectorizer_path()),
        (src.selection_path(SizeClass::S), cfg.selection_path(SizeClass::S)),
        (
            src.model_path(ModelFamily::DecisionTree, SizeClass::S),
            cfg.model_path(ModelFamily::DecisionTree, SizeClass::S),
        ),
        (src.manifest_path(), cfg.manifest_path()),
    ] {
        std::fs::create_dir_all(to.parent().unwrap()).unwrap();
        std::fs::copy(from, to).unwrap();
    }
    assert!(Artifact::load(&cfg, ModelFamily::DecisionTree, SizeClass::S).is_ok());
    let mut bytes = std::fs::read(cfg.selection_path(SizeClass::S)).unwrap();
    bytes.push(b' ');
    std::fs::write(cfg.selection_path(SizeClass::S), bytes).unwrap();
    assert!(matches!(
        Artifact::load(&cfg, ModelFamily::DecisionTree, SizeClass::S),
        Err(CliError::HashMismatch(k)) if k == "models/selection-s.json"
    ));
}

#[test]
fn grid_search_trace_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let src = trained();
    let cfg = config(dir.path());
    for part in ["fit", "validation"] {
        for (from, to) in [
            (src.matrix_path(part, SizeClass::S), cfg.matrix_path(part, SizeClass::S)),
            (src.split_path(part), cfg.split_path(part)),
        ] {
            std::fs::create_dir_all(to.parent().unwrap()).unwrap();
            std::fs::copy(from, to).unwrap();
        }
    }
    let plan_path = dir.path().join("grid.toml");
    std::fs::write(
        &plan_path,
        r#"
beta = 1.0
[[grid]]
params = [["tree.max_depth", [2, 8]]]
[[grid]]
params = [["tree.min_samples_leaf", [1, 3]], ["threshold", [0.3, 0.5]]]
"#,
    )
    .unwrap();
    let plan = stages::GridPlan::load(&plan_path).unwrap();
    let summary =
        stages::train(&mut Workspace::open(&cfg).unwrap(), ModelFamily::DecisionTree, SizeClass::S, None, Some(&plan))
            .unwrap();
    assert_eq!(summary.grid_candidates, 6);
    let trace: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(cfg.grid_trace_path(ModelFamily::DecisionTree, SizeClass::S)).unwrap())
            .unwrap();
    assert_eq!(trace.len(), 6);
    let fixed_depth = &trace[2]["config"]["tree"]["max_depth"];
    assert!(trace[2..].iter().all(|r| &r["config"]["tree"]["max_depth"] == fixed_depth));
}
