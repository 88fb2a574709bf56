use std::path::Path;

use ltkd_core::data::{generate_synthetic, GeneratorConfig};
use ltkd_core::eval::evaluate;
use ltkd_core::experiment::{self, gen_data, load_dataset_hashed, ExperimentConfig};
use ltkd_core::train::{load_run, parse_weights_csv, TrainConfig};
use ltkd_core::Error;

fn tiny() -> ExperimentConfig {
    ExperimentConfig {
        data: GeneratorConfig {
            n_classes: 6,
            head_count: 80,
            imbalance_ratio: 10.0,
            d_sig: 4,
            ..GeneratorConfig::default()
        },
        train: TrainConfig {
            epochs: 3,
            hidden_dims: vec![8],
            ..TrainConfig::default()
        },
        seed: 9,
        ..ExperimentConfig::default()
    }
}

fn run_into(dir: &Path) -> ExperimentConfig {
    let cfg = tiny();
    let data = dir.join("data.jsonl");
    gen_data(&cfg.data, 4, &data).unwrap();
    let (ds, hash) = load_dataset_hashed(&data).unwrap();
    experiment::run(&ds, &hash, &cfg, &dir.join("run")).unwrap();
    cfg
}

#[test]
fn run_directory_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    run_into(tmp.path());
    let run = tmp.path().join("run");
    for f in [
        "manifest.json",
        "student.json",
        "weights_history.csv",
        "curves.csv",
        "report.json",
        "teachers/0.json",
        "teachers/2.json",
        "erm/manifest.json",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let record = load_run(&run).unwrap();
    assert_eq!(record.teachers.len(), 3);
    assert_eq!(record.student.weight_history.len(), 3);

    // the reloaded student reproduces the stored report
    let (ds, hash) = load_dataset_hashed(&tmp.path().join("data.jsonl")).unwrap();
    let cfg = tiny();
    let prepared = experiment::prepare(&ds, &hash, &cfg).unwrap();
    let again = evaluate(
        &record.student.model,
        &prepared.split.test,
        &prepared.groups,
        prepared.provenance.clone(),
    )
    .unwrap();
    let (_, stored) = experiment::read_report(&run).unwrap();
    assert_eq!(again.to_json().unwrap(), stored.to_json().unwrap());

    let rows =
        parse_weights_csv(&std::fs::read_to_string(run.join("weights_history.csv")).unwrap())
            .unwrap();
    assert_eq!(rows.len(), 3 * 6);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.w)));
}

#[test]
fn tampered_checkpoint_is_an_integrity_error() {
    let tmp = tempfile::tempdir().unwrap();
    run_into(tmp.path());
    let path = tmp.path().join("run/teachers/1.json");
    let mut bytes = std::fs::read(&path).unwrap();
    let i = bytes.iter().position(|b| b.is_ascii_digit()).unwrap();
    bytes[i] = if bytes[i] == b'9' { b'8' } else { bytes[i] + 1 };
    std::fs::write(&path, bytes).unwrap();
    let err = load_run(&tmp.path().join("run")).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
    assert_eq!(err.exit_code(), 5);
}

#[test]
fn missing_weight_history_is_a_partial_run() {
    let tmp = tempfile::tempdir().unwrap();
    run_into(tmp.path());
    std::fs::remove_file(tmp.path().join("run/weights_history.csv")).unwrap();
    match load_run(&tmp.path().join("run")).unwrap_err() {
        Error::PartialRun(p) => assert!(p.ends_with("weights_history.csv")),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn corrupted_manifest_fails_report() {
    let tmp = tempfile::tempdir().unwrap();
    run_into(tmp.path());
    let path = tmp.path().join("run/manifest.json");
    let text = std::fs::read_to_string(&path).unwrap().replacen(
        "\"master_seed\": 9",
        "\"master_seed\": 10",
        1,
    );
    std::fs::write(&path, text).unwrap();
    let err = experiment::report(&[&tmp.path().join("run")]).unwrap_err();
    assert_eq!(err.exit_code(), 5, "{err}");
}

#[test]
fn report_rejects_mixed_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    run_into(tmp.path());
    let cfg = tiny();
    let other = tmp.path().join("other.jsonl");
    gen_data(&cfg.data, 5, &other).unwrap();
    let (ds, hash) = load_dataset_hashed(&other).unwrap();
    experiment::run(&ds, &hash, &cfg, &tmp.path().join("run2")).unwrap();
    let err = experiment::report(&[&tmp.path().join("run"), &tmp.path().join("run2")]).unwrap_err();
    assert!(matches!(err, Error::Comparison(_)), "{err}");
}

#[test]
fn report_over_erm_and_weighted_runs() {
    let tmp = tempfile::tempdir().unwrap();
    run_into(tmp.path());
    let run = tmp.path().join("run");
    let single = experiment::report(&[&run]).unwrap();
    assert_eq!(single.rows.len(), 1);
    assert!(single.rows[0]
        .per_class_delta
        .iter()
        .flatten()
        .all(|d| *d == 0.0));
    let both = experiment::report(&[&run.join("erm"), &run]).unwrap();
    assert_eq!(both.baseline, "erm");
    assert_eq!(both.rows.len(), 2);
}

#[test]
fn stage_errors_name_the_stage() {
    let cfg = tiny();
    let ds = generate_synthetic(&cfg.data, 1).unwrap();
    let bad = ExperimentConfig {
        negative_fraction: 2.0,
        ..cfg
    };
    let err = experiment::prepare(&ds, "h", &bad).unwrap_err();
    assert!(err.to_string().contains("stage config"), "{err}");
    assert_eq!(err.exit_code(), 2);
}
