//! End-to-end runs of the `dian` binary.

use std::path::Path;
use std::process::{Command, Output, Stdio};

use std::io::Write;

const BIN: &str = env!("CARGO_BIN_EXE_dian");

const SMALL: [&str; 10] = [
    "--set",
    "gen.sessions=300",
    "--set",
    "gen.users=80",
    "--set",
    "gen.items=100",
    "--set",
    "gen.long_len_max=40",
    "--set",
    "train.batch_size=64",
];

fn dian(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn generate(dir: &Path) -> Output {
    let mut args = vec!["generate", "--out", dir.to_str().unwrap()];
    args.extend(SMALL);
    dian(&args)
}

#[test]
fn generate_is_deterministic_and_prints_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = generate(&a);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    generate(&b);
    for f in ["train.jsonl", "test.jsonl", "sidecar.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("base CTR"));
    assert!(text.contains("spearman rho"));
}

#[test]
fn invalid_configs_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dian(&["generate", "--out", tmp.path().to_str().unwrap(), "--set", "gen.sessions=0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sessions"));
    let out = dian(&["gradcheck", "--set", "gen.no_such_key=3"]);
    assert_eq!(code(&out), 2);
    let out = dian(&["gradcheck", "--set", "model.n_heads=5"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("divisible"));

    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"train": {"learning_rat": 0.1}}"#).unwrap();
    let out = dian(&["gradcheck", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn help_lists_config_keys_with_defaults() {
    let out = dian(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["gen.sessions", "gen.visit_sigma", "model.d_id", "model.hard_search_k", "train.learning_rate", "train.alpha"] {
        assert!(text.contains(key), "{key} missing from --help");
    }
    assert!(text.contains("0.01"));
}

#[test]
fn gradcheck_passes_and_a_planted_fault_is_named() {
    let out = dian(&["gradcheck"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("PASS"));

    let out = dian(&["gradcheck", "--inject-fault"]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("worst coordinates"), "{err}");
    assert!(err.lines().nth(1).is_some_and(|l| l.contains('[') && l.contains(']')), "{err}");
}

#[test]
fn train_eval_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data);
    let d = data.to_str().unwrap();
    let ckpt = tmp.path().join("m.json");
    let ck = ckpt.to_str().unwrap();

    let mut args = vec!["train", "--data", d, "--out", ck, "--set", "train.epochs=1", "--set", "train.eval_every=2"];
    args.extend(SMALL);
    let out = dian(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(format!("{ck}.metrics.jsonl")).unwrap();
    // 270 train sessions x 4 rows in 64-row batches: 17 steps
    assert_eq!(log.lines().count(), 17 / 2 + 1);

    // retraining reproduces the checkpoint byte for byte
    let ckpt2 = tmp.path().join("m2.json");
    let mut args2 = args.clone();
    args2[4] = ckpt2.to_str().unwrap();
    dian(&args2);
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(&ckpt2).unwrap());

    let out = dian(&["eval", "--checkpoint", ck, "--data", d, "--compare", "oracle"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let gap = rep["oracle_gap"].as_f64().unwrap();
    let (model_auc, oracle_auc) = (rep["ctr_auc"].as_f64().unwrap(), rep["oracle_ctr_auc"].as_f64().unwrap());
    assert!((oracle_auc - model_auc - gap).abs() < 1e-12);
    assert!(rep["intent_auc"].is_number());

    let out = dian(&["eval", "--oracle", "--data", d, "--compare", "oracle"]);
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["oracle_gap"].as_f64(), Some(0.0));
    assert!(rep.get("intent_auc").is_none());

    // predict: one line per candidate with every branch
    let session = std::fs::read_to_string(data.join("test.jsonl")).unwrap().lines().next().unwrap().to_string();
    let mut child = Command::new(BIN)
        .args(["predict", "--checkpoint", ck])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(session.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0);
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    for l in &lines {
        let (h, i, a, f) = (l["y_hat"].as_f64().unwrap(), l["y_int"].as_f64().unwrap(), l["y_tan"].as_f64().unwrap(), l["y_tfn"].as_f64().unwrap());
        assert!((h - (i * a + (1.0 - i) * f)).abs() < 1e-12);
    }

    // without the world, the oracle comparison is refused
    let mut sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.join("sidecar.json")).unwrap()).unwrap();
    sidecar.as_object_mut().unwrap().remove("world");
    std::fs::write(data.join("sidecar.json"), serde_json::to_vec(&sidecar).unwrap()).unwrap();
    let out = dian(&["eval", "--checkpoint", ck, "--data", d, "--compare", "oracle"]);
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("world"));
}

#[test]
fn tfn_only_checkpoint_has_no_trigger_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data);
    let ck = tmp.path().join("tfn.json");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--variant",
        "TFN_ONLY",
        "--out",
        ck.to_str().unwrap(),
        "--set",
        "train.max_steps=2",
    ];
    args.extend(SMALL);
    assert_eq!(code(&dian(&args)), 0);
    let c: serde_json::Value = serde_json::from_slice(&std::fs::read(&ck).unwrap()).unwrap();
    let tables: Vec<&String> = c["tables"].as_object().unwrap().keys().collect();
    assert!(!tables.is_empty());
    assert!(tables.iter().all(|t| !t.starts_with("tan.") && !t.starts_with("intent.")), "{tables:?}");
}

#[test]
fn missing_dataset_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dian(&["train", "--data", tmp.path().to_str().unwrap(), "--out", "/dev/null"]);
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sidecar"));
}
