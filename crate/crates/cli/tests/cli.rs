//! End-to-end runs of the `obslab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use obslab_cli::{trajectory_csv, PENDUBOT_SCENARIO};
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn obslab(args: &[&str], out: &Path) -> Run {
    let Output { status, stdout, stderr } = Command::new(env!("CARGO_BIN_EXE_obslab"))
        .args(args)
        .env("OBSLAB_OUT_DIR", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs");
    Run {
        code: status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

/// Writes the shipped scenario, shortened to `t_final` and edited by `edits`.
fn scenario(dir: &Path, t_final: f64, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = PENDUBOT_SCENARIO.replacen("t_final = 5.0", &format!("t_final = {t_final:?}"), 1);
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replacen(from, to, 1);
    }
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synthesize_with_published_lipschitz_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), 0.1, &[]);
    let run = obslab(&["synthesize", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report = json(dir.path().join("synthesis.json"));
    let theta_star = report["theta_star"].as_f64().unwrap();
    assert!((theta_star - 200.0).abs() < 0.5, "{theta_star}");
    assert!((report["s_norm"].as_f64().unwrap() - 1.81).abs() < 0.01);
    assert!(run.stdout.contains("theta*"));

    let cfg = scenario(dir.path(), 0.1, &[("gamma_target = 1.27", "gamma_target = 0.0")]);
    let run = obslab(
        &["synthesize", "--config", cfg.to_str().unwrap(), "--quiet"],
        dir.path(),
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.is_empty());
    let theta_star = json(dir.path().join("synthesis.json"))["theta_star"].as_f64().unwrap();
    assert!((195.0..=196.0).contains(&theta_star), "{theta_star}");
}

#[test]
fn synthesize_with_sampled_lipschitz_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        0.1,
        &[
            ("gamma_target = 1.27", "gamma_target = 0.0"),
            ("lipschitz_override = 54.01", ""),
        ],
    );
    let run = obslab(&["synthesize", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report = json(dir.path().join("synthesis.json"));
    let l = report["lipschitz_l"].as_f64().unwrap();
    assert!(l <= 54.01 * 1.02, "{l}");
    assert!(report["m0"].as_f64().unwrap() > 0.0 && report["b"].as_f64().unwrap() > 0.0);
    assert_eq!(report["lipschitz_source"], "sampled (coupled)");
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), 0.1, &[("alpha = 1.0", "alpha = 0.0")]);
    let run = obslab(&["synthesize", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("observer.alpha"), "{}", run.stderr);

    let run = obslab(&["simulate"], dir.path());
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("--config"));

    let run = obslab(&["simulate", "--config", "/nonexistent/scenario.toml"], dir.path());
    assert_eq!(run.code, 2);

    let cfg = scenario(dir.path(), 0.1, &[]);
    let run = obslab(&["simulate", "--config", cfg.to_str().unwrap(), "--dt=-1"], dir.path());
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("simulation.dt"), "{}", run.stderr);
}

#[test]
fn simulate_writes_lossless_trajectory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-flag");
    let cfg = scenario(dir.path(), 0.3, &[]);
    let run = obslab(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let summary = json(out.join("summary.json"));
    assert!(summary["envelope"]["gamma_hat"].as_f64().unwrap() >= 1.27);
    assert_eq!(summary["exact_tracking"], false);
    let (traj, n, m) = trajectory_csv::read_file(&out.join("trajectory.csv")).unwrap();
    assert_eq!((n, m), (2, 1));
    assert_eq!(traj.len(), summary["samples"].as_u64().unwrap() as usize);
    assert_eq!(traj.final_error().unwrap(), summary["final_error"].as_f64().unwrap());
    assert!(out.join("plot.gp").exists());
    let head = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(head.starts_with("t,q1,q2,v1,v2,qhat1,qhat2,vhat1,vhat2,u1,err_norm,scaled_err_norm,domain_flag\n"));
}

#[test]
fn simulate_identical_initial_states_reports_exact_tracking() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        0.3,
        &[("observer_v = [2.0, 2.0]", "observer_v = [0.0, 0.0]")],
    );
    let run = obslab(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(run.code, 0, "{}", run.stderr);
    let summary = json(dir.path().join("summary.json"));
    assert_eq!(summary["exact_tracking"], true);
    assert!(summary["max_error"].as_f64().unwrap() <= 1e-9);
    assert!(run.stdout.contains("exact tracking"));
}

#[test]
fn coarse_step_exits_3_with_guidance_and_partial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), 5.0, &[("record_stride = 50", "record_stride = 1")]);
    let run = obslab(
        &["simulate", "--config", cfg.to_str().unwrap(), "--dt", "3e-2"],
        dir.path(),
    );
    assert_eq!(run.code, 3, "{}", run.stderr);
    assert!(run.stderr.contains("retry with dt"), "{}", run.stderr);
    let (traj, _, _) = trajectory_csv::read_file(&dir.path().join("trajectory.csv")).unwrap();
    assert!(!traj.is_empty());
}

#[test]
fn verify_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), 0.3, &[]);
    let args = [
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "3",
        "--seed",
        "11",
    ];
    let first = obslab(&args, dir.path());
    assert_eq!(first.code, 0, "{}\n{}", first.stdout, first.stderr);
    let a = json(dir.path().join("verify.json"));
    let second = obslab(&args, dir.path());
    assert_eq!(second.code, 0);
    assert_eq!(a, json(dir.path().join("verify.json")));
    assert_eq!(a["campaign"]["trials"].as_array().unwrap().len(), 3);
    assert_eq!(a["campaign"]["fraction_satisfied"], 1.0);
    for check in a["checks"].as_array().unwrap() {
        assert_eq!(check["status"], "pass", "{check}");
    }
}

#[test]
fn verify_below_threshold_labels_not_guaranteed() {
    let dir = tempfile::tempdir().unwrap();
    // a gain below theta* with a target no run can reach: failures are
    // reported as outside the guarantee, not as violations
    let cfg = scenario(dir.path(), 0.3, &[("gamma_target = 1.27", "gamma_target = 500.0")]);
    let run = obslab(
        &[
            "verify",
            "--config",
            cfg.to_str().unwrap(),
            "--theta",
            "50",
            "--trials",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(run.code, 0, "{}\n{}", run.stdout, run.stderr);
    assert!(run.stdout.contains("not guaranteed"), "{}", run.stdout);
    let report = json(dir.path().join("verify.json"));
    assert_eq!(report["guaranteed"], false);
    let statuses: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["status"].as_str().unwrap())
        .collect();
    assert!(statuses.contains(&"not_guaranteed"), "{statuses:?}");
    assert!(!statuses.contains(&"violated"));
}

#[test]
fn verify_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // theta synthesized (so guaranteed), but a fit floor above every scaled
    // error leaves the envelope check nothing to fit
    let cfg = scenario(
        dir.path(),
        0.3,
        &[("theta = 200.0\n", ""), ("floor = 1e-10", "floor = 10.0")],
    );
    let run = obslab(
        &["verify", "--config", cfg.to_str().unwrap(), "--trials", "1"],
        dir.path(),
    );
    assert_eq!(run.code, 4, "{}\n{}", run.stdout, run.stderr);
    assert!(run.stderr.contains("envelope rate"), "{}", run.stderr);
}

#[test]
fn demo_runs_shipped_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let run = obslab(&["pendubot-demo", "--trials", "2", "--quiet"], dir.path());
    assert_eq!(run.code, 0, "{}", run.stderr);
    for file in [
        "synthesis.json",
        "summary.json",
        "verify.json",
        "trajectory.csv",
        "plot.gp",
    ] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let summary = json(dir.path().join("summary.json"));
    assert!(summary["envelope"]["gamma_hat"].as_f64().unwrap() >= 1.27);
    assert!(summary["final_error"].as_f64().unwrap() < 1e-3 * summary["initial_error"].as_f64().unwrap());
}
