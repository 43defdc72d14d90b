use std::fs;
use std::path::PathBuf;
use std::process::Command;

use cfn_cli::{run_scenario, Approach, RunOptions, Scenario};

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn small(name: &str) -> Scenario {
    Scenario { name: name.into(), vsr_sweep: vec![1, 2, 3], seeds: vec![0, 1], ..Scenario::default() }
}

#[test]
fn shipped_scenarios_load() {
    let mut names = Vec::new();
    for e in fs::read_dir(scenario_dir()).unwrap() {
        let p = e.unwrap().path();
        let s = Scenario::load(&p).unwrap();
        assert_eq!(p.file_stem().unwrap().to_str().unwrap(), s.name);
        assert_eq!(s.cdc_present, !s.name.ends_with("no-cdc"));
        names.push(s.name);
    }
    assert_eq!(names.len(), 4);
}

#[test]
fn one_point_with_cdc_gives_two_rows() {
    let s = Scenario { vsr_sweep: vec![1], seeds: vec![0], ..Scenario::default() };
    let rows = run_scenario(&s, &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].approach, Approach::Cfn);
    assert_eq!(rows[1].approach, Approach::Baseline);
    let rows = run_scenario(&s.without_cdc(), &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 1);
}

#[test]
fn rows_satisfy_closure_and_workload_conservation() {
    let rows = run_scenario(&small("closure"), &RunOptions::default()).unwrap();
    for r in rows.iter().filter(|r| r.solved()) {
        assert!((r.total_w - r.network_w - r.processing_w).abs() <= 1e-6, "{r:?}");
        let hosted = r.iot_gflops + r.af_gflops + r.mf_gflops + r.cdc_gflops;
        assert!((hosted - r.demand_gflops).abs() <= 1e-9, "{r:?}");
    }
}

#[test]
fn sweep_resumes_from_existing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), ..RunOptions::default() };
    let s = small("resume");
    let first = run_scenario(&s, &opts).unwrap();
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    // A second run recomputes nothing and leaves the file unchanged.
    let t = std::time::Instant::now();
    let second = run_scenario(&s, &opts).unwrap();
    assert!(t.elapsed().as_secs_f64() < 1.0);
    let persisted = |rows: Vec<cfn_cli::ResultRow>| -> Vec<_> {
        rows.into_iter().map(|r| cfn_cli::ResultRow { nodes: 0, wall_time_s: 0.0, ..r }).collect()
    };
    assert_eq!(persisted(first.clone()), second);
    assert_eq!(fs::read_to_string(dir.path().join("results.csv")).unwrap(), text);

    // Dropping a point's rows makes only that point run again.
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("resume,true,1,3,")).collect();
    fs::write(dir.path().join("results.csv"), kept.join("\n") + "\n").unwrap();
    let third = run_scenario(&s, &opts).unwrap();
    assert_eq!(third.len(), first.len());
    assert_eq!(fs::read_to_string(dir.path().join("results.csv")).unwrap(), text);
}

#[test]
fn scenarios_share_an_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), ..RunOptions::default() };
    let with = small("shared");
    let without = with.clone().without_cdc();
    run_scenario(&with, &opts).unwrap();
    run_scenario(&without, &opts).unwrap();
    let rows = cfn_cli::load_rows(dir.path()).unwrap();
    assert_eq!(rows.len(), 12 + 6);
    let files = cfn_cli::export_figures(&rows, dir.path()).unwrap();
    let fig6 = fs::read_to_string(files.last().unwrap()).unwrap();
    assert!(fig6.contains("shared,true,") && fig6.contains("shared-no-cdc,false,"));
}

fn cfn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfn"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |c: &mut Command| c.output().unwrap().status.code().unwrap();
    assert_eq!(code(cfn().arg("--help")), 0);
    assert_eq!(code(cfn().arg("frobnicate")), 1);
    assert_eq!(code(cfn().args(["solve", "--scenario", "/definitely/missing.toml"])), 1);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "vsr_sweep = [3, 2]\n").unwrap();
    assert_eq!(code(cfn().args(["sweep", "--out"]).arg(dir.path()).arg("--scenario").arg(&bad)), 1);

    let out = dir.path().join("solved");
    assert_eq!(code(cfn().args(["solve", "--n", "2", "--seed", "3", "--out"]).arg(&out)), 0);
    let placement = out.join("placement.toml");
    assert_eq!(code(cfn().args(["validate", "--n", "2", "--seed", "3", "--placement"]).arg(&placement)), 0);
    // The same placement misses requests of a larger instance.
    assert_eq!(code(cfn().args(["validate", "--n", "3", "--seed", "3", "--placement"]).arg(&placement)), 2);

    let vsrs = out.join("vsrs.toml");
    let lp = dir.path().join("m.lp");
    assert_eq!(code(cfn().args(["export-model", "--format", "lp", "--vsrs"]).arg(&vsrs).arg("--out").arg(&lp)), 0);
    let text = fs::read_to_string(&lp).unwrap();
    assert!(text.starts_with("\\") && text.ends_with("End\n"));
    assert_eq!(code(cfn().args(["export-model", "--format", "xml"])), 1);
}

#[test]
fn sweep_command_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    fs::write(&scenario, "name = \"cmd\"\nvsr_sweep = [1, 2]\nseeds = [5]\n").unwrap();
    let out = dir.path().join("out");
    let status = cfn().args(["sweep", "--jobs", "2", "--seeds", "5,6", "--scenario"]).arg(&scenario).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    for f in ["results.csv", "timings.csv", "summary.txt", "fig2_total_power.csv", "fig3_network_power.csv", "fig4_processing_power.csv", "fig5_workload.csv", "fig6_cdc.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let rows = cfn_cli::load_rows(&out).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.seed == 5 || r.seed == 6));
}
