use std::path::Path;
use std::process::{Command, Output};

fn ssblow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssblow"))
        .args(args)
        .env("SSBLOW_OUT", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn verify_pairs_succeeds_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssblow(dir.path(), &["verify", "pairs"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify_pairs.json")).unwrap()).unwrap();
    assert_eq!(m["passed"], true);
    assert_eq!(m["schema_version"], 1);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ssblow(dir.path(), &["verify", "bogus"])), 2);
    assert_eq!(code(&ssblow(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&ssblow(dir.path(), &["kernel", "--alpha", "0.5", "--samples", "10"])), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[rescale]\nds = \"fast\"\n").unwrap();
    let o = ssblow(dir.path(), &["rescale", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rescale.ds"));
}

#[test]
fn output_directory_follows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssblow(dir.path(), &["profile", "--a", "-0.01", "--n", "512"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("profile_a-0.01.csv")).unwrap();
    assert!(csv.starts_with("y,F,HF,LinvF,dF"));
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("profile_a-0.01.json")).unwrap()).unwrap();
    assert!(side["gamma"].as_f64().unwrap() > 0.0);
}

#[test]
fn rescale_and_simulate_write_their_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[grid]\nn = 256\n[rescale]\ns_max = 0.6\n[physical]\nt_end = 0.3\n[outputs]\nname = \"cli\"\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&ssblow(dir.path(), &["rescale", "--config", c])), 0);
    assert_eq!(code(&ssblow(dir.path(), &["simulate", "--config", c])), 0);
    for f in ["run.csv", "summary.json", "checkpoint.json", "physical.csv", "physical_summary.json"] {
        assert!(dir.path().join("cli").join(f).exists(), "{f}");
    }
}

#[test]
fn kernel_audit_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssblow(dir.path(), &["kernel", "--alpha", "0.5", "--samples", "1000"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["bound_margin"].as_f64().unwrap() >= 0.0);
}
