use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sjscc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sjscc"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("c.json");
    fs::write(
        &path,
        format!(
            r#"{{
                "dataset": {{"type": "synthetic", "num_classes": 2, "examples_per_class": 10, "num_signals": 4,
                             "num_steps": 6, "spike_density": 0.4, "jitter": 0.05, "seed": 3}},
                "topology": {{"inputs": 4, "rate": 1.0, "decoder_hidden": 2, "outputs": 2}},
                "channel": {{"type": "gaussian_quantized", "snr_db": 0.0}},
                {extra}
                "iterations": 30,
                "eval_every": 10
            }}"#
        ),
    )
    .unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_twice_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = sjscc(&["train", "--config", s(&cfg), "--seed", "1", "--out", s(out)]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    for f in [
        "metrics.jsonl",
        "accuracy_vs_iteration.csv",
        "checkpoint.json",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let other = dir.path().join("c");
    sjscc(&[
        "train",
        "--config",
        s(&cfg),
        "--seed",
        "2",
        "--out",
        s(&other),
    ]);
    assert_ne!(
        fs::read(a.join("metrics.jsonl")).unwrap(),
        fs::read(other.join("metrics.jsonl")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"rate\": 1.0", "\"rate\": 0.0");
    fs::write(&cfg, text).unwrap();
    let r = sjscc(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("topology.rate"));

    let unknown = write_config(dir.path(), "\"learning_rate\": 0.1,");
    let r = sjscc(&[
        "train",
        "--config",
        s(&unknown),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("learning_rate"));
}

#[test]
fn divergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#""hyperparams": {"eta": 1e308},"#);
    let r = sjscc(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("iteration"));
}

#[test]
fn io_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(
        code(&sjscc(&[
            "train",
            "--config",
            s(&missing),
            "--out",
            s(dir.path())
        ])),
        4
    );

    let cfg = write_config(dir.path(), "");
    let r = sjscc(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&missing),
        "--out",
        s(&dir.path().join("e")),
    ]);
    assert_eq!(code(&r), 4);
}

#[test]
fn eval_matches_training_and_accepts_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let run = dir.path().join("run");
    assert_eq!(
        code(&sjscc(&["train", "--config", s(&cfg), "--out", s(&run)])),
        0
    );
    let ckpt = run.join("checkpoint.json");
    let ev = dir.path().join("ev");
    let r = sjscc(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ckpt),
        "--horizon",
        "6",
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        fs::read(ev.join("accuracy_vs_timestep.csv")).unwrap(),
        fs::read(run.join("accuracy_vs_timestep.csv")).unwrap()
    );
    let r = sjscc(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ckpt),
        "--test-snr",
        "-3",
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(ev.join("eval.json")).unwrap()).unwrap();
    assert_eq!(summary["snr_db"], -3.0);
}

#[test]
fn sweeps_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let per = dir.path().join("per");
    let r = sjscc(&[
        "sweep",
        "--config",
        s(&cfg),
        "--snr-list",
        "-3,inf",
        "--jobs",
        "2",
        "--out",
        s(&per),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        fs::read_to_string(per.join("accuracy_vs_snr.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    assert!(per.join("snr_-3").join("checkpoint.json").exists());
    assert!(per.join("snr_inf").join("checkpoint.json").exists());

    let mm = dir.path().join("mm");
    let r = sjscc(&[
        "sweep",
        "--config",
        s(&cfg),
        "--snr-list",
        "0,6",
        "--mode",
        "mismatch",
        "--out",
        s(&mm),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        fs::read_to_string(mm.join("mismatch_matrix.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    let r = sjscc(&[
        "sweep",
        "--config",
        s(&cfg),
        "--snr-list",
        "",
        "--out",
        s(&mm),
    ]);
    assert_eq!(code(&r), 2);
}

#[test]
fn gen_data_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"type": "synthetic", "num_classes": 2, "examples_per_class": 4, "num_signals": 3,
            "num_steps": 5, "spike_density": 0.3, "jitter": 0.1, "seed": 1}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for out in [&a, &b] {
        assert_eq!(
            code(&sjscc(&[
                "gen-data",
                "--config",
                s(&spec),
                "--seed",
                "4",
                "--out",
                s(out)
            ])),
            0
        );
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 8);

    let cfg = write_config(dir.path(), "");
    let run = dir.path().join("run");
    assert_eq!(
        code(&sjscc(&["train", "--config", s(&cfg), "--out", s(&run)])),
        0
    );
    let again = dir.path().join("again");
    let r = sjscc(&[
        "rerun",
        "--manifest",
        s(&run.join("manifest.json")),
        "--out",
        s(&again),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(!String::from_utf8_lossy(&r.stdout).contains("DIFFER"));
}

#[test]
fn missing_output_directory_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(code(&sjscc(&["train", "--config", s(&cfg)])), 2);
    assert_eq!(code(&sjscc(&["train"])), 2);
}
