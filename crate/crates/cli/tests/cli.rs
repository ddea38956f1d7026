//! End-to-end tests of the `krflow` binary.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn krflow() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_krflow"));
    cmd.env_remove("KRFLOW_OUTPUT")
        .env_remove("KRFLOW_SEED")
        .env_remove("KRFLOW_WORKERS");
    cmd
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

#[test]
fn product_run_is_deterministic_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut flows = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let out = krflow()
            .arg("run")
            .arg(configs().join("product.toml"))
            .arg("--output")
            .arg(&dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
        let m = manifest(&dir);
        assert_eq!(m["stop_reason"], "reached_margin");
        assert_eq!(m["exit_code"], 0);
        assert_eq!(m["checks"]["closed_form"]["status"], "pass");
        flows.push(std::fs::read(dir.join("flow.csv")).unwrap());
    }
    assert_eq!(flows[0], flows[1]);
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "slow.toml",
        "scenario = \"product\"\n[params]\nf0 = 3.0\nc0 = 1.0\n[checks]\nmax_wall_seconds = 0.0\n",
    );
    let dir = tmp.path().join("out");
    let out = krflow().arg("run").arg(&cfg).arg("--output").arg(&dir).output().unwrap();
    assert_eq!(code(&out), 1);
    assert_eq!(manifest(&dir)["checks"]["runtime"]["status"], "fail");
}

#[test]
fn config_errors_exit_two_with_a_suggestion() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "typo.toml",
        "scenario = \"hirzebruch\"\n[params]\ngird_points = 64\n",
    );
    let out = krflow().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid_points"), "{err}");

    let bad = write_config(tmp.path(), "syntax.toml", "scenario = \"product\"\n[params\n");
    let out = krflow().arg("run").arg(&bad).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unwritable_output_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = krflow()
        .arg("run")
        .arg(configs().join("product.toml"))
        .arg("--output")
        .arg(blocker.join("run"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn flags_override_env_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    let file_dir = tmp.path().join("from_file");
    let cfg = write_config(
        tmp.path(),
        "p.toml",
        &format!(
            "scenario = \"product\"\noutput_dir = {:?}\nseed = 1\n[params]\nf0 = 3.0\nc0 = 1.0\n",
            file_dir.to_str().unwrap()
        ),
    );
    let env_dir = tmp.path().join("from_env");
    let flag_dir = tmp.path().join("from_flag");

    let out = krflow().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(manifest(&file_dir)["config"]["seed"], 1);

    let out = krflow()
        .arg("run")
        .arg(&cfg)
        .env("KRFLOW_OUTPUT", &env_dir)
        .env("KRFLOW_SEED", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(manifest(&env_dir)["config"]["seed"], 2);

    let out = krflow()
        .arg("run")
        .arg(&cfg)
        .args(["--seed", "3", "--output"])
        .arg(&flag_dir)
        .env("KRFLOW_OUTPUT", &env_dir)
        .env("KRFLOW_SEED", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(manifest(&flag_dir)["config"]["seed"], 3);
    assert_eq!(manifest(&env_dir)["config"]["seed"], 2);
}

#[test]
fn check_reproduces_the_stored_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    for cfg in ["product.toml", "hirzebruch.toml"] {
        let dir = tmp.path().join(cfg);
        let run = krflow()
            .arg("run")
            .arg(configs().join(cfg))
            .arg("--output")
            .arg(&dir)
            .output()
            .unwrap();
        let check = krflow().arg("check").arg(&dir).output().unwrap();
        assert_eq!(code(&check), code(&run), "{cfg}");
        let text = String::from_utf8_lossy(&check.stdout);
        assert!(text.contains("matches stored manifest: true"), "{text}");
    }
    let missing = krflow().arg("check").arg(tmp.path().join("nope")).output().unwrap();
    assert_eq!(code(&missing), 3);
}

#[test]
fn sweep_measures_second_order_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_dir = tmp.path().join("cfg");
    std::fs::create_dir(&cfg_dir).unwrap();
    for n in [128, 256, 512] {
        write_config(
            &cfg_dir,
            &format!("grid_{n}.toml"),
            &format!(
                "scenario = \"hirzebruch\"\n[params]\ngrid_points = {n}\n[solver]\nprobe_time = 0.1\nend_time = 0.2\n[recording]\nstructure_checks = false\n"
            ),
        );
    }
    let out_dir = tmp.path().join("out");
    let out = krflow()
        .arg("sweep")
        .arg(format!("{}/*.toml", cfg_dir.display()))
        .arg("--output")
        .arg(&out_dir)
        .env("KRFLOW_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("sweep_summary.json")).unwrap()).unwrap();
    let order = summary["convergence_order"].as_f64().unwrap();
    assert!(order >= 1.9, "order {order}");
    assert_eq!(summary["members"].as_array().unwrap().len(), 3);
    for n in [128, 256, 512] {
        assert!(out_dir.join(format!("grid_{n}/manifest.json")).exists());
    }
}
