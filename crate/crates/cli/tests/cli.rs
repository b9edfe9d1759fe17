//! End-to-end CLI tests against the compiled binary: command surface,
//! exit-code contract, and output artifacts. Training here uses a tiny
//! linear policy so the whole file runs in seconds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_skillmem")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("skillmem-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small linear-policy experiment: trains in well under a second.
fn tiny_config(dir: &Path) -> PathBuf {
    let text = r#"{
      "seed": 7,
      "policy": {"input_dim": 4, "hidden": [], "output_dim": 2,
                 "bounds": [[-1.0, 1.0], [-1.0, 1.0]]},
      "autoencoder": {"hidden": [8], "latent_dim": 2, "lr": 0.003,
                      "max_epochs": 8000, "target_rel_error": 0.001, "seed": 17},
      "distill": {"n_rollout_states": 768, "n_grid_states": 0,
                  "noise_sigma": 0.05, "holdout_fraction": 0.1,
                  "epochs": 400, "batch_size": 64, "seed": 9},
      "eval_seeds": 10,
      "skills": {
        "nav_a": {
          "env": {"id": "point_mass_2d", "goal": [1.0, 0.0]},
          "oracle": {"type": "pd", "kp": 0.25, "kd": 0.7},
          "termination": {"tolerance": 0.05, "hold_steps": 10, "max_steps": 400}
        },
        "nav_b": {
          "env": {"id": "point_mass_2d", "goal": [0.0, 1.0]},
          "oracle": {"type": "pd", "kp": 0.25, "kd": 0.7},
          "termination": {"tolerance": 0.05, "hold_steps": 10, "max_steps": 400}
        }
      }
    }"#;
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn built_store(dir: &Path) -> PathBuf {
    let config = tiny_config(dir);
    let store = dir.join("store.json");
    for name in ["nav_a", "nav_b"] {
        let out = run(&[
            "skill",
            "train",
            "--config",
            config.to_str().unwrap(),
            "--name",
            name,
            "--store",
            store.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "train {name}: {}", stderr(&out));
    }
    let out = run(&["memory", "build", "--store", store.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    store
}

#[test]
fn env_list_names_all_environments() {
    let out = run(&["env", "list"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    for name in ["point_mass_2d", "lander_1d", "cartpole"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn train_build_verify_roundtrip() {
    let dir = workdir("roundtrip");
    let store = built_store(&dir);
    let out = run(&["memory", "verify", "--store", store.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("verify=ok"));
}

#[test]
fn verify_before_build_reports_store_not_built() {
    let dir = workdir("unbuilt");
    let config = tiny_config(&dir);
    let store = dir.join("store.json");
    let out = run(&[
        "skill",
        "train",
        "--config",
        config.to_str().unwrap(),
        "--name",
        "nav_a",
        "--store",
        store.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let out = run(&["memory", "verify", "--store", store.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(
        stderr(&out).contains("error: STORE_NOT_BUILT:"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn recall_unknown_skill_exits_one() {
    let dir = workdir("unknown");
    let store = built_store(&dir);
    let out = run(&[
        "skill",
        "recall",
        "--store",
        store.to_str().unwrap(),
        "--name",
        "absent",
        "--out",
        dir.join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(
        stderr(&out).contains("error: UNKNOWN_SKILL:"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn recall_emits_trajectory_csv() {
    let dir = workdir("recall");
    let store = built_store(&dir);
    let csv = dir.join("traj.csv");
    let out = run(&[
        "skill",
        "recall",
        "--store",
        store.to_str().unwrap(),
        "--name",
        "nav_a",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,s0,s1,s2,s3,a0,a1");
    assert!(lines.last().unwrap().starts_with("# outcome="));
}

#[test]
fn interp_reports_without_asserting() {
    let dir = workdir("interp");
    let store = built_store(&dir);
    let out = run(&[
        "skill",
        "interp",
        "--store",
        store.to_str().unwrap(),
        "--from",
        "nav_a",
        "--to",
        "nav_b",
        "--alpha",
        "0.5",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("mean_final_goal_error_from="), "{text}");
    assert!(text.contains("mean_final_goal_error_to="), "{text}");
}

#[test]
fn graph_run_completes_and_reruns_bit_identically() {
    let dir = workdir("graph");
    let store = built_store(&dir);
    let graph = dir.join("graph.json");
    std::fs::write(
        &graph,
        r#"{
          "nodes": [
            {"id": "n1", "skill": "nav_a"},
            {"id": "n2", "skill": "nav_b"}
          ],
          "edges": [["n1", "n2"]]
        }"#,
    )
    .unwrap();
    let run_once = |out_dir: &Path| {
        let out = run(&[
            "graph",
            "run",
            "--store",
            store.to_str().unwrap(),
            "--graph",
            graph.to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).contains("status=Completed"));
    };
    let r1 = dir.join("r1");
    let r2 = dir.join("r2");
    run_once(&r1);
    run_once(&r2);
    for file in ["report.json", "n1.csv", "n2.csv"] {
        let a = std::fs::read(r1.join(file)).unwrap();
        let b = std::fs::read(r2.join(file)).unwrap();
        assert_eq!(a, b, "file {file} differs between reruns");
    }
}

#[test]
fn graph_with_unknown_skill_fails_validation() {
    let dir = workdir("badgraph");
    let store = built_store(&dir);
    let graph = dir.join("graph.json");
    std::fs::write(
        &graph,
        r#"{"nodes": [{"id": "n1", "skill": "flying"}], "edges": []}"#,
    )
    .unwrap();
    let out = run(&[
        "graph",
        "run",
        "--store",
        store.to_str().unwrap(),
        "--graph",
        graph.to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        dir.join("r").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(
        stderr(&out).contains("error: INVALID_GRAPH:"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn aborted_execution_exits_two() {
    let dir = workdir("abort");
    let store = built_store(&dir);
    let graph = dir.join("graph.json");
    // Tolerance zero from an off-goal start cannot be satisfied.
    std::fs::write(
        &graph,
        r#"{
          "nodes": [{"id": "n1", "skill": "nav_a",
                     "termination": {"tolerance": 0.0, "hold_steps": 1, "max_steps": 40}}],
          "edges": []
        }"#,
    )
    .unwrap();
    let out = run(&[
        "graph",
        "run",
        "--store",
        store.to_str().unwrap(),
        "--graph",
        graph.to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        dir.join("r").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(stdout(&out).contains("status=AbortedAt"));
    assert!(
        stderr(&out).contains("EXECUTION_ABORTED"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn oracle_checks_pass() {
    let out = run(&["grad", "check"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("grad_check=ok"));
    let out = run(&["riccati", "check"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("riccati_check=ok"));
}

#[test]
fn training_twice_writes_identical_stores() {
    let dir = workdir("det");
    let config = tiny_config(&dir);
    let mut stores = Vec::new();
    for tag in ["a", "b"] {
        let store = dir.join(format!("{tag}.json"));
        let out = run(&[
            "skill",
            "train",
            "--config",
            config.to_str().unwrap(),
            "--name",
            "nav_a",
            "--store",
            store.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
        stores.push(std::fs::read(&store).unwrap());
    }
    assert_eq!(stores[0], stores[1]);
}
