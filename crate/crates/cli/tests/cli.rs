//! End-to-end checks of the `splatpush` binary at toy scale: output layout,
//! resumable fitting, evaluation reports and error reporting.

use std::path::Path;
use std::process::{Command, Output};

const TOY_CONFIG: &str = r#"{
  "sim": {"n_particles": 4, "n_traj": 2, "steps_per_traj": 3, "task_mix": ["collecting"],
          "rig": {"n_cameras": 2, "width": 24, "height": 24}},
  "fit": {"epochs": 10, "mpc_epochs": 5},
  "train": {"hidden": 4, "epochs": 2},
  "plan": {"horizon": 1, "samples": 2, "grad_steps": 1, "grid": [8, 8], "max_mpc_iters": 1}
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatpush"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// Writes the toy config, generates data and fits it under `root`.
fn generate_and_fit(root: &Path) -> String {
    let config = s(&root.join("config.json"));
    std::fs::write(&config, TOY_CONFIG).unwrap();
    ok(&["--config", &config, "--out", &s(&root.join("data")), "gen-data"]);
    ok(&[
        "--config",
        &config,
        "--out",
        &s(&root.join("dgs")),
        "fit",
        "--data",
        &s(&root.join("data")),
    ]);
    config
}

fn subdirs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn gen_data_writes_one_directory_per_state() {
    let tmp = tempfile::tempdir().unwrap();
    generate_and_fit(tmp.path());
    let data = tmp.path().join("data");
    assert!(data.join("manifest.json").is_file());
    assert_eq!(subdirs(&data), ["traj_0000", "traj_0001"]);
    for traj in subdirs(&data) {
        let steps = subdirs(&data.join(&traj));
        assert_eq!(steps, ["step_000", "step_001", "step_002", "step_003"]);
        assert!(data.join(&traj).join("step_000/action.json").is_file());
        assert!(!data.join(&traj).join("step_003/action.json").exists());
    }
}

#[test]
fn fit_writes_scenes_and_resumes_without_refitting() {
    let tmp = tempfile::tempdir().unwrap();
    let config = generate_and_fit(tmp.path());
    let dgs = tmp.path().join("dgs");
    let csv = std::fs::read_to_string(dgs.join("recon_loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("traj,step,initial_loss,final_loss"));
    assert_eq!(lines.count(), 8);
    let scene = dgs.join("traj_0001/step_002/scene.json");
    let before = std::fs::read(&scene).unwrap();
    let modified = std::fs::metadata(&scene).unwrap().modified().unwrap();

    ok(&[
        "--config",
        &config,
        "--out",
        &s(&dgs),
        "fit",
        "--data",
        &s(&tmp.path().join("data")),
    ]);
    assert_eq!(std::fs::read(&scene).unwrap(), before);
    assert_eq!(std::fs::metadata(&scene).unwrap().modified().unwrap(), modified);
    assert_eq!(std::fs::read_to_string(dgs.join("recon_loss.csv")).unwrap(), csv);
}

#[test]
fn eval_with_zero_trials_reports_no_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let config = generate_and_fit(tmp.path());
    let model = tmp.path().join("model");
    ok(&[
        "--config",
        &config,
        "--out",
        &s(&model),
        "train",
        "--data",
        &s(&tmp.path().join("dgs")),
    ]);
    assert!(
        std::fs::read_to_string(model.join("train_loss.csv"))
            .unwrap()
            .lines()
            .count()
            > 1
    );

    let eval = tmp.path().join("eval");
    let ckpt = s(&model.join("model.bin"));
    ok(&[
        "--config",
        &config,
        "--out",
        &s(&eval),
        "eval",
        "--task",
        "splitting",
        "--trials",
        "0",
        "--checkpoint",
        &ckpt,
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("report_splitting.json")).unwrap()).unwrap();
    assert_eq!(report["task"], "splitting");
    assert_eq!(report["n_trials"], 0);
    assert!(report["success_rate"].is_null());
    assert!(report["state_error"].is_null());
    assert_eq!(
        std::fs::read_to_string(eval.join("report.csv")).unwrap(),
        "task,success_rate,state_error,n_trials\nsplitting,,,0\n"
    );
}

#[test]
fn eval_report_has_rates_in_range() {
    let tmp = tempfile::tempdir().unwrap();
    let config = generate_and_fit(tmp.path());
    let model = tmp.path().join("model");
    ok(&[
        "--config",
        &config,
        "--out",
        &s(&model),
        "train",
        "--data",
        &s(&tmp.path().join("dgs")),
    ]);
    let eval = tmp.path().join("eval");
    let ckpt = s(&model.join("model.bin"));
    ok(&[
        "--config",
        &config,
        "--out",
        &s(&eval),
        "eval",
        "--task",
        "collecting",
        "--trials",
        "2",
        "--checkpoint",
        &ckpt,
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("report_collecting.json")).unwrap()).unwrap();
    assert_eq!(report["n_trials"], 2);
    let rate = report["success_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert!(report["state_error"].as_f64().unwrap() >= 0.0);
    let trials = std::fs::read_to_string(eval.join("collecting/trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 3);
    assert!(eval.join("collecting/trial_000/episode.csv").is_file());
}

#[test]
fn failures_print_one_line_and_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [Vec<String>; 3] = [
        vec![
            "--out".into(),
            s(&tmp.path().join("o")),
            "fit".into(),
            "--data".into(),
            s(&tmp.path().join("missing")),
        ],
        vec!["--config".into(), s(&tmp.path().join("absent.json")), "gen-data".into()],
        vec!["--sim.no_such_key=1".into(), "gen-data".into()],
    ];
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(&refs);
        assert!(!out.status.success(), "{args:?} succeeded");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(stderr.trim_end().lines().count(), 1, "{args:?}: {stderr}");
        assert!(stderr.starts_with("error: "), "{stderr}");
    }
}

#[test]
fn train_on_an_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = run(&["--out", &s(&tmp.path().join("m")), "train", "--data", &s(&empty)]);
    assert!(!out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim_end().lines().count(), 1);
}
