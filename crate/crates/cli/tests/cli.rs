use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccr_cli::pipeline::StageStatus;
use ccr_cli::synthetic::{write_synthetic, SyntheticSpec};
use ccr_cli::{run_pipeline, PipelineConfig};

const STAGES: [&str; 8] = [
    "ingest",
    "train-wordvec",
    "build-pairs",
    "embed",
    "sample-triplets",
    "train-adapter",
    "score",
    "eval",
];

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        titles: 6,
        per_title: 10,
        officials: 10,
        writings: 5,
        ..SyntheticSpec::default()
    }
}

fn dataset() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic(tmp.path(), &small_spec()).unwrap();
    let cfg = tmp.path().join("ccr.toml");
    (tmp, cfg)
}

fn ccr(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccr"));
    cmd.args(args).env_remove("CCR_BACKEND");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn statuses(report: &ccr_cli::PipelineReport) -> Vec<StageStatus> {
    STAGES.iter().map(|st| report.status(st).unwrap().clone()).collect()
}

#[test]
fn rerun_skips_every_stage() {
    let (_tmp, cfg_path) = dataset();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    let first = run_pipeline(&cfg).unwrap();
    assert!(statuses(&first).iter().all(|s| *s == StageStatus::Ran));
    let second = run_pipeline(&cfg).unwrap();
    assert!(statuses(&second).iter().all(|s| *s == StageStatus::Skipped));
    assert_eq!(first.config_hash, second.config_hash);
}

#[test]
fn corrupted_artifact_reruns_its_stage_and_downstream() {
    let (_tmp, cfg_path) = dataset();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    run_pipeline(&cfg).unwrap();
    let pairs = cfg.paths.work_dir.join("pairs.jsonl");
    let mut text = std::fs::read_to_string(&pairs).unwrap();
    text.push_str("{\"i\":\"x\"}\n");
    std::fs::write(&pairs, text).unwrap();

    let again = run_pipeline(&cfg).unwrap();
    let got = statuses(&again);
    assert_eq!(got[..2], [StageStatus::Skipped, StageStatus::Skipped]);
    assert!(got[2..].iter().all(|s| *s == StageStatus::Ran));
    let reason = &again.stages[2].reason;
    assert!(reason.contains("pairs.jsonl"), "{reason}");
}

#[test]
fn changing_a_hyperparameter_invalidates_from_the_start() {
    let (_tmp, cfg_path) = dataset();
    let mut cfg = PipelineConfig::load(&cfg_path).unwrap();
    run_pipeline(&cfg).unwrap();
    cfg.train.alpha = 2.0;
    let again = run_pipeline(&cfg).unwrap();
    assert!(statuses(&again).iter().all(|s| *s == StageStatus::Ran));
}

#[test]
fn config_hash_ignores_work_dir_and_dataset_location() {
    let (_a, pa) = dataset();
    let (_b, pb) = dataset();
    let mut ca = PipelineConfig::load(&pa).unwrap();
    let cb = PipelineConfig::load(&pb).unwrap();
    assert_eq!(ca.config_hash(), cb.config_hash());
    ca.paths.work_dir = PathBuf::from("/somewhere/else");
    assert_eq!(ca.config_hash(), cb.config_hash());
    ca.seed += 1;
    assert_ne!(ca.config_hash(), cb.config_hash());
}

#[test]
fn missing_config_exits_2() {
    let out = ccr(&["run", "--config", "/nonexistent/ccr.toml"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let (tmp, cfg) = dataset();
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str("\n[bogus]\nx = 1\n");
    std::fs::write(&cfg, text).unwrap();
    let out = ccr(&["run", "--config", s(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    drop(tmp);
}

#[test]
fn malformed_corpus_exits_3() {
    let (tmp, cfg) = dataset();
    std::fs::write(tmp.path().join("raw.jsonl"), "{\"id\": 1, not json\n").unwrap();
    let out = ccr(&["run", "--config", s(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unreachable_backend_exits_4() {
    let (_tmp, cfg) = dataset();
    let out = ccr(&["run", "--config", s(&cfg), "--backend", "http://127.0.0.1:9/embed"], &[]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn backend_flag_beats_env_beats_config() {
    let (tmp, cfg) = dataset();
    let hash = |out: &Output| -> String {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v["config_hash"].as_str().unwrap().to_owned()
    };
    let work = |name: &str| tmp.path().join(name);
    let from_config = hash(&ccr(&["--json", "run", "--config", s(&cfg), "--work-dir", s(&work("a"))], &[]));
    let from_env = hash(&ccr(
        &["--json", "run", "--config", s(&cfg), "--work-dir", s(&work("b"))],
        &[("CCR_BACKEND", "mock:dim=32,seed=9")],
    ));
    let from_flag = hash(&ccr(
        &[
            "--json",
            "run",
            "--config",
            s(&cfg),
            "--work-dir",
            s(&work("c")),
            "--backend",
            "mock:dim=64,seed=0",
        ],
        &[("CCR_BACKEND", "mock:dim=32,seed=9")],
    ));
    assert_ne!(from_config, from_env);
    assert_eq!(from_config, from_flag);
}

#[test]
fn subcommands_chain_by_hand() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_synthetic(d, &small_spec()).unwrap();
    let p = |n: &str| d.join(n).to_str().unwrap().to_owned();
    let ok = |args: &[&str]| {
        let out = ccr(args, &[]);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    ok(&["ingest", "--in", &p("raw.jsonl"), "--out", &p("corpus.jsonl")]);
    ok(&[
        "build-pairs",
        "--corpus",
        &p("corpus.jsonl"),
        "--vectors",
        &p("title_vectors.txt"),
        "--split",
        "train",
        "--out",
        &p("pairs.jsonl"),
        "--valid-out",
        &p("valid_pairs.jsonl"),
    ]);
    ok(&["embed", "--corpus", &p("corpus.jsonl"), "--out", &p("emb.jsonl")]);
    for mode in ["random", "hard"] {
        ok(&[
            "sample-triplets",
            "--pairs",
            &p("pairs.jsonl"),
            "--mode",
            mode,
            "--emb",
            &p("emb.jsonl"),
            "--out",
            &p(&format!("triplets_{mode}.jsonl")),
        ]);
    }
    let q = p("questionnaires/collectivism.json");
    let table = format!("cache:{}", p("emb.jsonl"));
    ok(&[
        "train-adapter",
        "--triplets",
        &p("triplets_hard.jsonl"),
        "--backend",
        &table,
        "--valid-pairs",
        &p("valid_pairs.jsonl"),
        "--out",
        &p("adapter.json"),
    ]);
    ok(&[
        "score",
        "--corpus",
        &p("corpus.jsonl"),
        "--questionnaire",
        &q,
        "--adapter",
        &p("adapter.json"),
        "--out",
        &p("scores.jsonl"),
    ]);
    let rep = ok(&[
        "--json",
        "benchmark",
        "--officials",
        &p("officials.jsonl"),
        "--scores",
        &p("scores.jsonl"),
    ]);
    let v: serde_json::Value = serde_json::from_str(&rep).unwrap();
    assert!(v.is_object(), "{rep}");
}

#[test]
fn shipped_questionnaire_templates_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/questionnaires");
    let mut constructs = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let q = ccr_core::scoring::Questionnaire::load(&entry.unwrap().path()).unwrap();
        assert_eq!(q.items.len(), 15);
        constructs.push(q.construct);
    }
    constructs.sort();
    assert_eq!(constructs, ["collectivism", "individualism", "norm_looseness", "norm_tightness"]);
}
