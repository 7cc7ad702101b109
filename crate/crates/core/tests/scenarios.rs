use std::fs;

use ssblow_core::harness::{run_scenario, simulate_physical, simulate_rescaled, InitKind, RunConfig, SweepConfig, RUN_HEADER};

fn small(name: &str, dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.grid.n = 256;
    c.rescale.s_max = 0.6;
    c.outputs.dir = dir.to_path_buf();
    c.outputs.name = name.into();
    c
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small("det", dir.path());
    c.model.a = 0.02;
    c.init.seed = 9;
    let a = simulate_rescaled(&c, None).unwrap();
    let b = simulate_rescaled(&c, None).unwrap();
    assert_eq!(a.csv, b.csv);
}

#[test]
fn scenario_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let c = small("files", dir.path());
    std::env::remove_var("SSBLOW_OUT");
    let s = run_scenario(&c).unwrap();
    let base = dir.path().join("files");
    let csv = fs::read_to_string(base.join("run.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some(RUN_HEADER));
    assert_eq!(csv.lines().count(), 2 + 1 + s.steps);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(base.join("summary.json")).unwrap()).unwrap();
    for key in ["schema_version", "a", "delta", "T_fit", "C_fit", "trapped"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let ck: serde_json::Value = serde_json::from_str(&fs::read_to_string(base.join("checkpoint.json")).unwrap()).unwrap();
    assert!(ck.get("q").is_some());
    let back = RunConfig::load(&base.join("config.toml")).unwrap();
    assert_eq!(back, c);
}

#[test]
fn compact_initial_data_is_admissible_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small("compact", dir.path());
    c.grid.n = 1024;
    c.grid.scale = ssblow_core::profiles::PROFILE_SCALE;
    c.rescale.s_max = 0.3;
    c.init.kind = InitKind::Compact;
    c.init.radius = 5.0;
    let art = simulate_rescaled(&c, None).unwrap();
    assert!(art.summary.halted.is_none(), "{:?}", art.summary.halted);
    assert!(art.summary.max_constraint <= 1e-6);
    // ω₀ = F + q₀ vanishes beyond twice the radius
    let w0 = art.final_state.profile.f.values().iter().zip(ssblow_core::harness::initial_perturbation(&c.init, &art.final_state.profile).unwrap().values())
        .zip(art.final_state.profile.grid().nodes())
        .filter(|(_, &y)| y.abs() > 10.5)
        .map(|((f, q), _)| (f + q).abs())
        .fold(0.0f64, f64::max);
    assert!(w0 < 1e-6, "{w0}");
}

#[test]
fn physical_run_tracks_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small("phys", dir.path());
    c.physical.t_end = 0.5;
    let (s, csv) = simulate_physical(&c).unwrap();
    assert!(s.max_exact_error.unwrap() < 1e-6, "{s:?}");
    assert_eq!(csv.lines().count(), 2 + 1 + s.steps);
}

#[test]
fn sweep_runs_each_combination() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "[grid]\nn = 128\n[rescale]\ns_max = 0.3\n[outputs]\ndir = {:?}\nname = \"sw\"\n[sweep]\na = [0.0, 0.02]\n",
        dir.path()
    );
    let sweep = SweepConfig::parse(&text).unwrap();
    let out = ssblow_core::harness::run_sweep(&sweep).unwrap();
    assert_eq!(out.len(), 2);
    for s in &out {
        assert!(dir.path().join(&s.name).join("run.csv").exists());
    }
}
