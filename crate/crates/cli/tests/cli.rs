use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "seed": 3,
  "syngen": {"entity_count": 400, "planted_community_count": 8},
  "kge": {"epochs": 5, "dim": 16},
  "rgnn": {"dim": 16},
  "train": {"epochs": 3, "batch_size": 256},
  "hasp": {"partitions": 2}
}"#;

fn semgnn(args: &[&str], out: &Path, config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semgnn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--config")
        .arg(config)
        .env("SEMGNN_LOG", "error")
        .output()
        .expect("binary runs")
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr).to_string();
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines.len(), 1, "expected one stderr line, got {s:?}");
    lines[0].to_string()
}

#[test]
fn run_all_is_reproducible() {
    let (dir, cfg) = setup();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = semgnn(&["run-all", "--seed", "7"], out, &cfg);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ma = fs::read_to_string(a.join("manifest.json")).unwrap();
    let mb = fs::read_to_string(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    assert!(ma.contains("model/embeddings.bin"));
    assert!(!ma.contains("train_log"));
    let o = semgnn(&["run-all", "--seed", "8"], &dir.path().join("c"), &cfg);
    assert!(o.status.success());
    let mc = fs::read_to_string(dir.path().join("c/manifest.json")).unwrap();
    assert_ne!(ma, mc);
}

#[test]
fn train_without_pretrain_names_missing_features() {
    let (dir, cfg) = setup();
    let out = dir.path().join("o");
    assert!(semgnn(&["gen"], &out, &cfg).status.success());
    assert!(semgnn(&["partition"], &out, &cfg).status.success());
    let o = semgnn(&["train"], &out, &cfg);
    assert!(!o.status.success());
    let line = stderr_line(&o);
    assert!(line.starts_with("error kind=missing_input"), "{line}");
    assert!(line.contains("kge_embeddings.bin"), "{line}");

    let o = semgnn(&["train", "--entity-init", "random"], &out, &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("model/embeddings.bin").exists());
}

#[test]
fn inductive_eval_refuses_transductive_model() {
    let (dir, cfg) = setup();
    let out = dir.path().join("o");
    assert!(semgnn(&["run-all"], &out, &cfg).status.success());
    let o = semgnn(&["eval", "--setting", "inductive"], &out, &cfg);
    assert!(!o.status.success());
    let line = stderr_line(&o);
    assert!(line.starts_with("error kind=mismatch"), "{line}");
    assert!(line.contains("transductively"), "{line}");
}

#[test]
fn inductive_pipeline_writes_reports() {
    let (dir, cfg) = setup();
    let out = dir.path().join("o");
    let o = semgnn(&["run-all", "--setting", "inductive", "--partitions", "1"], &out, &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("eval/inductive_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);
    assert!(csv.starts_with("setting,source,K,group,map,query_count"));
    assert!(out.join("eval/inductive_baseline.json").exists());
    // A transductive eval of an inductively trained model sees a different graph.
    let o = semgnn(&["eval", "--setting", "transductive"], &out, &cfg);
    assert!(!o.status.success());
    assert!(stderr_line(&o).contains("kind=mismatch"));
}

#[test]
fn augment_and_infer_after_run_all() {
    let (dir, cfg) = setup();
    let out = dir.path().join("o");
    assert!(semgnn(&["run-all"], &out, &cfg).status.success());
    let o = semgnn(&["augment", "--top-k", "2", "--directed-augment"], &out, &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("eels_before="), "{stdout}");
    assert!(out.join("augment/report.csv").exists());
    assert!(out.join("augment/edges.tsv").exists());
    let o = semgnn(&["infer"], &out, &cfg);
    assert!(o.status.success());
    assert_eq!(
        fs::read(out.join("infer/embeddings.bin")).unwrap(),
        fs::read(out.join("model/embeddings.bin")).unwrap()
    );
}

#[test]
fn config_errors_are_one_line() {
    let (dir, _) = setup();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"seed": 1, "trainer": {}}"#).unwrap();
    let o = semgnn(&["gen"], &dir.path().join("o"), &bad);
    assert!(!o.status.success());
    let line = stderr_line(&o);
    assert!(line.starts_with("error kind=config"), "{line}");
    assert!(line.contains("trainer"), "{line}");

    let o = semgnn(&["gen"], &dir.path().join("o"), &dir.path().join("absent.json"));
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("error kind=io"));
}
