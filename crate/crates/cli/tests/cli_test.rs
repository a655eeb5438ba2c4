//! End-to-end tests of the `brenier-verify` binary: exit codes, report
//! files, and the documented subcommand surfaces.

use std::path::PathBuf;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brenier-verify"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("brenier-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn check_good_exit_codes() {
    let dir = temp_dir("checkgood");
    let good = dir.join("trace.json");
    std::fs::write(&good, r#"{"kind": "Trace", "dim": 3}"#).unwrap();
    let out = binary().args(["check-good"]).arg(&good).args(["--trials", "200"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("convexity: PASS"));

    // The H_k variant fails goodness: exit 1.
    let hk = dir.join("hk.json");
    std::fs::write(&hk, r#"{"kind": "HkVariant", "k": 1, "dim": 2}"#).unwrap();
    let out = binary().args(["check-good"]).arg(&hk).args(["--trials", "500"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Malformed spec: exit 2.
    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"kind": "Nonsense", "dim": 2}"#).unwrap();
    let out = binary().args(["check-good"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_suite_and_exit_codes() {
    let dir = temp_dir("verify");
    let suite = dir.join("suite.toml");
    std::fs::write(
        &suite,
        r#"
            [suite]
            name = "mini"

            [[jobs]]
            problem = "gauss1d-sharp-a1-b2"
            functions = ["trace", "lambda_max"]
        "#,
    )
    .unwrap();
    let reports = dir.join("reports");
    let out = binary()
        .args(["verify"])
        .arg(&suite)
        .args(["--report-dir"])
        .arg(&reports)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Saturated"), "{stdout}");
    assert!(reports.join("summary.csv").exists());
    assert!(reports.join("gauss1d-sharp-a1-b2__trace.json").exists());

    // Malformed config: exit 2 with a diagnostic.
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "not [valid toml").unwrap();
    let out = binary()
        .args(["verify"])
        .arg(&bad)
        .args(["--report-dir"])
        .arg(&reports)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn solve_writes_fields_and_diagnostics() {
    let dir = temp_dir("solve");
    let problem = dir.join("problem.json");
    std::fs::write(&problem, r#"{"registry": "gauss1d-sharp-a1-b2"}"#).unwrap();
    let out_dir = dir.join("solution");
    let out = binary()
        .args(["solve"])
        .arg(&problem)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("map_0.bin").exists());
    assert!(out_dir.join("potential.bin").exists());
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("diagnostics.json")).unwrap())
            .unwrap();
    assert!(diag.get("marginal_error").is_some());
    assert!(diag.get("epsilon_ladder").is_some());
    assert!(diag.get("push_tol").is_some());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn conjugate_emits_binary_and_csv() {
    let dir = temp_dir("conjugate");
    let potential = dir.join("quadratic.json");
    std::fs::write(
        &potential,
        r#"{
            "form": {"type": "gaussian", "mean": [0.0], "covariance": [1.0]},
            "convex": true, "box_low": [-4.0], "box_high": [4.0]
        }"#,
    )
    .unwrap();
    let out_dir = dir.join("conj");
    let out = binary()
        .args(["conjugate"])
        .arg(&potential)
        .args(["--out"])
        .arg(&out_dir)
        .args(["--primal-n", "801", "--dual-low=-3.0", "--dual-high=3.0", "--dual-n", "241"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("conjugate.bin").exists());
    let csv = std::fs::read_to_string(out_dir.join("conjugate.csv")).unwrap();
    assert!(csv.starts_with("x,value,masked"));
    assert_eq!(csv.lines().count(), 242);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn decay_probe_emits_ladder_csv() {
    let dir = temp_dir("decay");
    let problem = dir.join("problem.json");
    std::fs::write(&problem, r#"{"registry": "gauss1d-bump"}"#).unwrap();
    let csv_path = dir.join("decay.csv");
    let out = binary()
        .args(["decay-probe"])
        .arg(&problem)
        .args(["--j", "1.0", "--radii", "1.5,2.0,2.5,3.0"])
        .args(["--out"])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("r,eps,lhs,rhs,slack"));
    assert_eq!(csv.lines().count(), 5);
    std::fs::remove_dir_all(&dir).ok();
}
