use std::path::PathBuf;
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mpclab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn mpclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpclab"))
        .args(args)
        .env("MPCLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn mpc_run_is_reproducible() {
    let (a, b) = (scratch("mpc-a"), scratch("mpc-b"));
    for dir in [&a, &b] {
        let out = mpclab(&[
            "mpc", "--preset", "disturbance", "--k", "6", "--noise-scale", "0.1", "--seed", "3",
            "--out", dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["trajectory.csv", "regret.json"] {
        let x = std::fs::read(a.join(file)).unwrap();
        let y = std::fs::read(b.join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between reruns");
    }
    let csv = std::fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("regret.json")).unwrap()).unwrap();
    assert!(json["config_hash"].is_string());
    assert!(json["regret"].as_f64().unwrap() >= -1e-7);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let (a, b) = (scratch("thr-a"), scratch("thr-b"));
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        let out = Command::new(env!("CARGO_BIN_EXE_mpclab"))
            .args(["sweep-horizon", "--preset", "disturbance", "--T", "30", "--k-max", "6", "--out"])
            .arg(dir)
            .env("MPCLAB_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        std::fs::read(a.join("sweep_horizon.csv")).unwrap(),
        std::fs::read(b.join("sweep_horizon.csv")).unwrap()
    );
}

#[test]
fn inventory_suite_accepts_fractions() {
    let dir = scratch("inv");
    let out = mpclab(&["inventory-suite", "--p", "4,6", "--eps", "2/35,1/20", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("inventory_suite.csv")).unwrap();
    // header comment + column names + (4 + 6) rows per ε
    assert_eq!(csv.lines().count(), 2 + 2 * 10);
}

#[test]
fn certify_decay_writes_profile() {
    let dir = scratch("decay");
    let out = mpclab(&["certify-decay", "--preset", "tracking-rand", "--out", dir.to_str().unwrap()]);
    assert!(matches!(code(&out), 0 | 4));
    let csv = std::fs::read_to_string(dir.join("profile.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("offset,max_block_norm,theory_bound"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = scratch("bad");
    let d = dir.to_str().unwrap();
    assert_eq!(code(&mpclab(&["solve", "--preset", "missing", "--out", d])), 2);
    assert_eq!(code(&mpclab(&["solve", "--out", d])), 2);
    assert_eq!(code(&mpclab(&["inventory-suite", "--p", "4", "--eps", "1/0", "--out", d])), 2);
    assert_eq!(code(&mpclab(&["mpc", "--preset", "disturbance", "--k", "0", "--out", d])), 2);
    assert_eq!(code(&mpclab(&["mpc", "--preset", "disturbance", "--k", "4", "--mode", "guess", "--out", d])), 2);
}

#[test]
fn out_of_range_eps_is_a_config_error() {
    let dir = scratch("eps");
    let out = mpclab(&["inventory-suite", "--p", "4", "--eps", "1", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn instance_files_load() {
    let dir = scratch("inst");
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("inv.toml");
    std::fs::write(
        &file,
        r#"
name = "small inventory"
horizon = 6
initial_state = [0.0]

[system]
kind = "inventory"
two_sided = true
targets = [0.4, -0.4, 0.4, -0.4, 0.4, -0.4, 0.4]
"#,
    )
    .unwrap();
    let out = mpclab(&["solve", "--instance", file.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("solution.csv").exists());
}

#[test]
fn infeasible_instances_exit_three() {
    let dir = scratch("infeasible");
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("inv.toml");
    std::fs::write(
        &file,
        "name = \"outside\"\nhorizon = 4\ninitial_state = [1.5]\n[system]\nkind = \"inventory\"\ntwo_sided = true\n",
    )
    .unwrap();
    let out = mpclab(&["solve", "--instance", file.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
