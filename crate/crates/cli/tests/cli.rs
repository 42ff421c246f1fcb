use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fucb_lab::ExperimentConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fucb-lab"));
    c.env_remove("FUCB_LAB_THREADS");
    c
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> PathBuf {
    configs_dir().join(name)
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

#[test]
fn smoke_matches_golden_at_any_parallelism() {
    let golden = include_str!("golden/smoke.csv");
    let dir = tempfile::tempdir().unwrap();
    for k in ["1", "4"] {
        let out = dir.path().join(format!("smoke{k}.csv"));
        let (code, stdout, _) =
            run(bin().arg("run").arg(config("smoke.toml")).arg("--out").arg(&out).args(["--parallel", k]));
        assert_eq!(code, 0);
        assert!(stdout.contains("rate_regret="), "{stdout}");
        assert!(stdout.contains("rate_subopt="));
        assert!(stdout.contains("rate_regret_log_corrected="));
        assert_eq!(std::fs::read_to_string(&out).unwrap(), golden);
    }
}

#[test]
fn thread_count_from_environment() {
    let (code, stdout, _) = run(bin().env("FUCB_LAB_THREADS", "3").arg("run").arg(config("smoke.toml")));
    assert_eq!(code, 0);
    assert!(stdout.starts_with(include_str!("golden/smoke.csv")));
}

#[test]
fn oracle_rows_are_zero() {
    let (code, stdout, _) = run(bin().arg("run").arg(config("oracle.toml")));
    assert_eq!(code, 0);
    let rows: Vec<&str> = stdout.lines().skip(1).take(3).collect();
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!((f[1], f[3]), ("0", "0"), "{row}");
    }
}

#[test]
fn seed_and_reps_overrides() {
    let (_, a, _) = run(bin().arg("run").arg(config("smoke.toml")).args(["--seed", "1", "--reps", "2"]));
    let (_, b, _) = run(bin().arg("run").arg(config("smoke.toml")).args(["--seed", "2", "--reps", "2"]));
    assert_ne!(a, b);
    assert!(a.lines().nth(1).unwrap().ends_with(",2"));
}

#[test]
fn duplicate_horizon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.toml");
    std::fs::write(&path, "n_grid = [10, 20, 20]\n\n[environment]\nkind = \"constant-gap\"\ngap = 0.2\n").unwrap();
    let (code, _, stderr) = run(bin().arg("run").arg(&path));
    assert_eq!(code, 2);
    assert!(stderr.contains("line 1: n_grid"), "{stderr}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, "n_grid = [10]\nreplication = 3\n[environment]\nkind = \"constant-gap\"\ngap = 0.2\n").unwrap();
    let (code, _, stderr) = run(bin().arg("run").arg(&path));
    assert_eq!(code, 2);
    assert!(stderr.contains("replication"), "{stderr}");
}

#[test]
fn missing_config_and_bad_flags_exit_2() {
    assert_eq!(run(bin().arg("run").arg("/no/such/file.toml")).0, 2);
    assert_eq!(run(bin().arg("run").arg(config("smoke.toml")).args(["--reps", "0"])).0, 2);
    assert_eq!(run(bin().arg("frobnicate")).0, 2);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let (code, _, stderr) = run(bin().arg("run").arg(config("oracle.toml")).args(["--out", "/nonexistent/dir/x.csv"]));
    assert_eq!(code, 3, "{stderr}");
}

#[test]
fn trajectory_dump_has_one_record_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    let (code, _, _) = run(bin().arg("run").arg(config("oracle.toml")).arg("--trajectory").arg(&traj));
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(text.lines().next(), Some("n,t,bin,arm,regret"));
    assert_eq!(text.lines().count(), 1 + 100 + 200 + 400);
}

#[test]
fn verify_exit_codes() {
    for name in ["margin.toml", "adversarial.toml"] {
        let (code, stdout, _) = run(bin().arg("verify").arg(config(name)));
        assert_eq!(code, 0, "{name}: {stdout}");
        assert!(stdout.contains("overall: PASS"));
    }
    let (code, stdout, _) = run(bin().arg("verify").arg(config("adversarial_underdeclared.toml")));
    assert_eq!(code, 1);
    assert!(stdout.contains("holder: FAIL max_ratio="), "{stdout}");
}

#[test]
fn demo_lb_emits_curve_column() {
    let (code, stdout, _) = run(bin().args([
        "demo-lb", "-P", "4", "--alpha", "0.5", "--sign-seed", "2", "--n-grid", "128,256", "--reps", "2",
    ]));
    assert_eq!(code, 0);
    let mut lines = stdout.lines();
    assert!(lines.next().unwrap().ends_with(",lower_bound"));
    assert_eq!(lines.count(), 2);
    let (code, _, _) = run(bin().args(["demo-lb", "-P", "4", "--alpha", "1.5", "--sign-seed", "2", "--n-grid", "128"]));
    assert_eq!(code, 2);
}

#[test]
fn example_configs_round_trip() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let parsed = ExperimentConfig::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
            let again = ExperimentConfig::parse(&parsed.to_toml()).unwrap();
            assert_eq!(parsed, again, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 8);
}
