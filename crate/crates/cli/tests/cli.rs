use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
    "world_height": 8, "world_width": 8, "train_worlds": 2, "val_worlds": 1, "test_worlds": 1,
    "min_len": 2, "max_len": 8, "step_limit": 8,
    "hidden": 16, "map_hidden": 16, "aux_hidden": 8,
    "workers": 1, "rollout_len": 16, "epochs": 1, "minibatches": 1, "chunk_len": 8,
    "probe_every": 1, "probe_episodes": 4, "k": 8,
    "teacher_updates": 2, "student_updates": 2,
    "stop_hidden": 8, "stop_episodes": 4, "stop_epochs": 2,
    "predictor_hidden": 8, "predictor_samples": 64, "predictor_epochs": 2,
    "eval_episodes": 6
}"#;

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oran-lab"))
        .current_dir(dir)
        .env_remove("ORAN_LAB_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny(dir: &Path) {
    fs::write(dir.join("tiny.json"), TINY).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_worlds_then_replay_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny(d);
    let o = lab(d, &["gen-worlds", "--config", "tiny.json", "--out", "w"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("oracle,")), "{csv}");
    for f in ["manifest.json", "config.json", "metrics.csv"] {
        assert!(d.join("w").join(f).is_file(), "{f}");
    }
    let o = lab(d, &["replay", "--run", "w", "--out", "w2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(d.join("w/metrics.csv")).unwrap(),
        fs::read(d.join("w2/metrics.csv")).unwrap()
    );
}

#[test]
fn refuses_to_overwrite_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny(d);
    assert!(lab(d, &["gen-worlds", "--config", "tiny.json", "--out", "w"])
        .status
        .success());
    let o = lab(d, &["gen-worlds", "--config", "tiny.json", "--out", "w"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_configuration_exits_with_one_and_names_the_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.json"), r#"{"hidden": "wide", "no_such_key": 3}"#).unwrap();
    let o = lab(d, &["gen-worlds", "--config", "bad.json", "--out", "w"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("hidden") && err.contains("no_such_key"), "{err}");
    assert!(!d.join("w").exists());

    let o = lab(d, &["gen-worlds", "--set", "gamma=1.5", "--out", "w"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = lab(d, &["gen-worlds", "--preset", "nonsense", "--out", "w"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny(d);
    let o = lab(
        d,
        &[
            "eval",
            "--config",
            "tiny.json",
            "--ckpt",
            "nowhere/student",
            "--out",
            "e",
        ],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn overrides_reach_the_saved_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny(d);
    let o = lab(
        d,
        &[
            "gen-worlds",
            "--config",
            "tiny.json",
            "--set",
            "obstacle_density=0.05",
            "--set",
            "seed=9",
            "--out",
            "w",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("w/config.json")).unwrap()).unwrap();
    assert_eq!(saved["obstacle_density"], 0.05);
    assert_eq!(saved["seed"], 9);
    assert_eq!(saved["world_height"], 8);
}

#[test]
fn short_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny(d);
    // Two updates never reach the target success rate: the run completes,
    // records the miss, and exits with 3.
    let o = lab(d, &["train-teacher", "--config", "tiny.json", "--out", "t"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("t/manifest.json")).unwrap()).unwrap();
    assert!(manifest["failure"].is_string());

    let o = lab(
        d,
        &[
            "train-student",
            "--config",
            "tiny.json",
            "--set",
            "lambda_cd=0.3",
            "--teacher",
            "t",
            "--out",
            "s",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let o = lab(
        d,
        &["eval", "--config", "tiny.json", "--ckpt", "s", "--oig", "--out", "e"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().lines().count() >= 2);

    let o = lab(
        d,
        &[
            "ensemble-eval",
            "--config",
            "tiny.json",
            "--ckpt",
            "s",
            "--ckpt",
            "s",
            "--out",
            "ens",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let o = lab(d, &["render", "--run", "e", "--episodes", "0,1", "--out", "r"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svgs = fs::read_dir(d.join("r/renders")).unwrap().count();
    assert!(svgs >= 2, "{svgs} renders");

    let o = lab(
        d,
        &[
            "sweep-k",
            "--config",
            "tiny.json",
            "--teacher",
            "t",
            "--k",
            "4,16",
            "--seeds",
            "1,2",
            "--out",
            "k",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = String::from_utf8(o.stdout).unwrap().lines().count();
    assert!(rows >= 5, "{rows} lines");

    let o = lab(d, &["replay", "--run", "s", "--out", "s2"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn every_preset_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for name in ["teacher", "baseline", "ccpd", "oig-eval", "ensemble"] {
        let out = format!("w-{name}");
        let o = lab(
            d,
            &[
                "gen-worlds",
                "--preset",
                name,
                "--set",
                "train_worlds=1",
                "--set",
                "eval_episodes=4",
                "--out",
                &out,
            ],
        );
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("w-ccpd/config.json")).unwrap()).unwrap();
    assert_eq!(saved["k"], 30);
    assert_eq!(saved["lambda_cd"], 0.3);
}
