//! End-to-end tests of the `soda` binary: exit codes, artifact layout,
//! determinism of report streams, aggregation, and manifest verification.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use soda_cli::config::{parse_config, save_config, ExperimentSpec, Method};
use soda_cli::io::run_dir;
use soda_core::pipeline::{ArchSpec, RejectionSource, TrainConfig};

fn soda_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_soda"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    soda_bin()
        .args(args)
        .current_dir(dir)
        .env_remove("SODA_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_SODA: &str = r#"{
    "method": "soda",
    "n_prompts": 120,
    "vocab_size": 6,
    "seeds": [0],
    "n_heldout": 16,
    "out_dir": "out"
}"#;

#[test]
fn distill_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        write_config(dir, "c.json", SMALL_SODA);
        let out = run_in(dir, &["distill", "--config", "c.json", "--seed", "7"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let metrics_a = std::fs::read(a.path().join("out/soda_s7/metrics.csv")).unwrap();
    let metrics_b = std::fs::read(b.path().join("out/soda_s7/metrics.csv")).unwrap();
    assert!(!metrics_a.is_empty());
    assert_eq!(metrics_a, metrics_b);

    // checkpoints and datasets reproduce bit for bit as well
    for artifact in ["q_soda.json", "teacher_data.jsonl", "pref.jsonl"] {
        let x = std::fs::read(a.path().join("out/soda_s7").join(artifact)).unwrap();
        let y = std::fs::read(b.path().join("out/soda_s7").join(artifact)).unwrap();
        assert_eq!(x, y, "{artifact} differs between identical runs");
    }
}

#[test]
fn exit_codes_and_error_json() {
    let dir = tempfile::tempdir().unwrap();

    let out = run_in(dir.path(), &["distill", "--config", "missing.json"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("CONFIG_NOT_FOUND"), "{err}");
    // machine readable
    let parsed: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(parsed["error"]["code"], "CONFIG_NOT_FOUND");

    let out = run_in(dir.path(), &["distill", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    write_config(dir.path(), "empty.json", "{}");
    let out = run_in(dir.path(), &["distill", "--config", "empty.json"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["method", "n_prompts", "vocab_size"] {
        assert!(err.contains(field), "{err}");
    }

    write_config(
        dir.path(),
        "zero_beta.json",
        r#"{"method":"soda","n_prompts":10,"vocab_size":6,"train":{"beta":0.0}}"#,
    );
    let out = run_in(dir.path(), &["distill", "--config", "zero_beta.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));

    // method mismatch between config and subcommand
    write_config(
        dir.path(),
        "mismatch.json",
        r#"{"method":"gad","n_prompts":10,"vocab_size":6}"#,
    );
    let out = run_in(dir.path(), &["distill", "--config", "mismatch.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "gen-data", "snapshot", "warmup", "distill", "seqkd", "gad", "ablate", "eval", "repr",
        "report", "verify",
    ] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn report_aggregates_one_row_per_run_and_reparses() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "soda.json",
        &SMALL_SODA.replace("\"seeds\": [0]", "\"seeds\": [0, 1]"),
    );
    write_config(
        dir.path(),
        "seqkd.json",
        &SMALL_SODA
            .replace("\"method\": \"soda\"", "\"method\": \"seqkd\"")
            .replace("\"seeds\": [0]", "\"seeds\": [0, 1]"),
    );
    assert!(run_in(dir.path(), &["distill", "--config", "soda.json"])
        .status
        .success());
    assert!(run_in(dir.path(), &["seqkd", "--config", "seqkd.json"])
        .status
        .success());

    let out = run_in(dir.path(), &["report", "--dir", "out"]);
    assert!(out.status.success());
    let csv_path = dir.path().join("out/comparison.csv");
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4, "one row per (method, seed)");

    // cost identities in the table: soda rows carry N, seqkd rows 0
    let headers = csv::Reader::from_path(&csv_path)
        .unwrap()
        .headers()
        .unwrap()
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    for row in &rows {
        let method = &row[col("method")];
        let generations: u64 = row[col("student_generations")].parse().unwrap();
        match method {
            "soda" => assert_eq!(generations, 120),
            "seqkd" => assert_eq!(generations, 0),
            other => panic!("unexpected method {other}"),
        }
        // numeric columns re-parse
        let _: f64 = row[col("kl_heldout")].parse().unwrap();
        let _: f64 = row[col("judge_score_heldout")].parse().unwrap();
        let _: f64 = row[col("wall_clock_s")].parse().unwrap();
        let _: u64 = row[col("peak_mem_bytes")].parse().unwrap();
        let _: u64 = row[col("instability_events")].parse().unwrap();
    }

    // values in the table match the underlying reports exactly
    let report: soda_core::report::RunReport = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/soda_s0/report.json")).unwrap(),
    )
    .unwrap();
    let heldout = report.eval.iter().find(|e| e.split == "heldout").unwrap();
    let soda0 = rows
        .iter()
        .find(|r| &r[col("method")] == "soda" && &r[col("seed")] == "0")
        .unwrap();
    assert_eq!(
        soda0[col("kl_heldout")].parse::<f64>().unwrap(),
        heldout.kl_to_teacher
    );
}

#[test]
fn schema_mismatch_fails_aggregation() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", SMALL_SODA);
    assert!(run_in(dir.path(), &["distill", "--config", "c.json"])
        .status
        .success());
    let report_path = dir.path().join("out/soda_s0/report.json");
    let doctored = std::fs::read_to_string(&report_path)
        .unwrap()
        .replace("\"schema_version\": 1", "\"schema_version\": 999");
    std::fs::write(&report_path, doctored).unwrap();
    let out = run_in(dir.path(), &["report", "--dir", "out"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("MIGRATION_ERROR"));
}

#[test]
fn verify_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", SMALL_SODA);
    assert!(run_in(dir.path(), &["distill", "--config", "c.json"])
        .status
        .success());
    let out = run_in(dir.path(), &["verify", "--dir", "out"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // flip a byte in a dataset
    let victim = dir.path().join("out/soda_s0/teacher_data.jsonl");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[0] ^= 1;
    std::fs::write(&victim, bytes).unwrap();
    let out = run_in(dir.path(), &["verify", "--dir", "out"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("teacher_data.jsonl"));
}

#[test]
fn eval_appends_rows() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", SMALL_SODA);
    assert!(run_in(dir.path(), &["distill", "--config", "c.json"])
        .status
        .success());
    let out = run_in(
        dir.path(),
        &["eval", "--config", "c.json", "--run-dir", "out/soda_s0"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/eval.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "run_id,method,seed,kl,judge_score,n_prompts");
    assert_eq!(lines.len(), 3, "one row per split plus header");
    assert!(lines[1].starts_with("soda_s0/in_dist,soda,0,"));

    // evaluating again appends two more rows
    assert!(run_in(
        dir.path(),
        &["eval", "--config", "c.json", "--run-dir", "out/soda_s0"],
    )
    .status
    .success());
    let csv = std::fs::read_to_string(dir.path().join("out/eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    // the manifest was refreshed, so verification still passes
    assert!(run_in(dir.path(), &["verify", "--dir", "out"]).status.success());
}

#[test]
fn out_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", SMALL_SODA);
    let out = soda_bin()
        .args(["gen-data", "--config", "c.json"])
        .current_dir(dir.path())
        .env("SODA_OUT_DIR", "elsewhere")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("elsewhere/world_s0/teacher.json").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn ablation_creates_one_run_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "ab.json",
        &SMALL_SODA.replace("\"method\": \"soda\"", "\"method\": \"ablation\""),
    );
    let out = run_in(dir.path(), &["ablate", "--config", "ab.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for method in ["soda", "soda_cross_student", "soda_corrupted"] {
        let report = run_dir(&dir.path().join("out"), method, 0).join("report.json");
        assert!(report.exists(), "missing {}", report.display());
    }
}

fn arbitrary_spec() -> impl Strategy<Value = ExperimentSpec> {
    (
        prop_oneof![
            Just(Method::Soda),
            Just(Method::Seqkd),
            Just(Method::Gad),
            Just(Method::Ablation)
        ],
        1usize..5000,
        2u32..9,
        prop::collection::vec(0u64..1000, 1..6),
        1usize..200,
        prop_oneof![
            Just(ArchSpec::Tabular),
            (2usize..32, 2usize..64).prop_map(|(d_model, mlp_dim)| ArchSpec::TinyTransformer {
                d_model,
                mlp_dim
            })
        ],
        0.01f64..10.0,
        1usize..6,
        prop_oneof![
            Just(RejectionSource::BaseStudent),
            Just(RejectionSource::CrossStudent),
            Just(RejectionSource::Corrupted)
        ],
    )
        .prop_map(
            |(method, n_prompts, vocab_size, seeds, n_heldout, architecture, beta, epochs, rejection)| {
                ExperimentSpec {
                    method,
                    n_prompts,
                    vocab_size,
                    architecture,
                    seeds,
                    n_heldout,
                    out_dir: PathBuf::from("out"),
                    train: TrainConfig {
                        beta,
                        warmup_epochs: epochs,
                        dpo_epochs: epochs,
                        gad_epochs: epochs,
                        rejection_source: rejection,
                        ..TrainConfig::default()
                    },
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn config_roundtrip(spec in arbitrary_spec()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        save_config(&spec, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(back, spec);
    }
}
