//! End-to-end runs of the `datorus` binary on reduced configurations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use datorus_cli::output::csv_body;
use datorus_cli::Report;

const SMALL: &str = "\
# reduced sizes for a quick end-to-end run
property_samples = 3000
locality_samples = 3000
jacobian_samples = 100
semiconj_samples = 200
witness_probe = 401
chain_start = 2
chain_end = 3
chain_judge_from = 2
linear_chain_end = 3
edges_max_depth = 3
lyap_orbits = 2
lyap_iters = 2000
lyap_da_iters = 2000
cs_points = 8
cs_iters = 3000
srb_starts = 3
srb_iters = 20000
srb_depth = 2
basin_samples = 100
basin_iters = 500
entropy_depth = 3
";

fn datorus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datorus")).args(args).output().expect("spawn datorus")
}

fn read_report(dir: &Path) -> Report {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn unknown_flag_prints_usage() {
    let out = datorus(&["full", "--no-such-flag"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_subcommand_is_an_error() {
    let out = datorus(&[]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn eigenvalue_product_gate_exits_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("never");
    let out = datorus(&["build-verify", "--set", "mu_s=0.8", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eigenvalue_product"));
    assert!(!target.exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "delta = 0.08\ncolour = blue\n").unwrap();
    let out = datorus(&["chain", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let out = datorus(&["full", "--print-config", "--set", "delta=0.07"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut cfg = datorus_cli::RunConfig::default();
    cfg.apply_text(&text).unwrap();
    assert_eq!(cfg.delta, 0.07);
}

#[test]
fn chain_single_depth_has_no_refinement() {
    let dir = tempfile::tempdir().unwrap();
    let out = datorus(&[
        "chain",
        "--set",
        "chain_start=2",
        "--set",
        "chain_end=2",
        "--set",
        "linear_chain_end=2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = read_report(dir.path());
    let c = r.chain.expect("chain section");
    assert_eq!(c.da.len(), 1);
    assert_eq!(c.da[0].depth, 2);
    assert!(c.refinement.is_none());
    assert!(r.build.is_none() && r.semiconj.is_none() && r.ergodic.is_none());
    assert!(dir.path().join("boxes_depth2.csv").exists());
    assert!(dir.path().join("edges_depth2.bin").exists());
    let v = r.verdicts.iter().find(|v| v.id == "outer-approximation").unwrap();
    assert_eq!(v.status, datorus_cli::VerdictStatus::NotApplicable);
}

#[test]
fn disabled_surgery_build_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = datorus(&[
        "build-verify",
        "--set",
        "surgery_enabled=false",
        "--set",
        "property_samples=2000",
        "--set",
        "locality_samples=2000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = read_report(dir.path());
    let p = &r.build.unwrap().properties;
    assert_eq!(p.get("P1").unwrap().status.label(), "N/A");
    for id in ["P2", "P3", "P4", "P6", "P7", "LOCALITY", "DIFFEO"] {
        assert_eq!(p.get(id).unwrap().status.label(), "PASS", "{id}");
    }
}

#[test]
fn reduced_full_run_is_reproducible() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = cfg_dir.path().join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = datorus(&["full", "--config", cfg.to_str().unwrap(), "--threads", "2", "--out", d.path().to_str().unwrap()]);
        assert!(matches!(out.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = read_report(a.path());
    let rb = read_report(b.path());
    assert_eq!(ra.config_hash, rb.config_hash);
    assert_eq!(ra.schema_version, datorus_cli::REPORT_SCHEMA_VERSION);
    assert!(ra.verdicts.len() >= 12);
    assert_eq!(ra.verdicts, rb.verdicts);
    for name in ["boxes_depth2.csv", "boxes_depth3.csv", "orbits.csv", "birkhoff.csv"] {
        let ta = fs::read_to_string(a.path().join(name)).unwrap();
        let tb = fs::read_to_string(b.path().join(name)).unwrap();
        assert!(ta.starts_with('#'));
        assert!(!csv_body(&ta).is_empty());
        assert_eq!(csv_body(&ta), csv_body(&tb), "{name}");
    }
    for name in ["edges_depth2.bin", "edges_depth3.bin"] {
        let ea = fs::read(a.path().join(name)).unwrap();
        assert_eq!(ea, fs::read(b.path().join(name)).unwrap());
        let (h, edges) = datorus::chain::read_edges(&ea).unwrap();
        assert_eq!(h.n_edges as usize, edges.len());
    }
    // every row asserting a stated result carries a non-empty anchor quote
    for v in &ra.verdicts {
        if let Some(a) = &v.anchor {
            assert!(!a.is_empty());
        }
    }
    let with_anchor = ra.verdicts.iter().filter(|v| v.anchor.is_some()).count();
    assert!(with_anchor >= 12);
}
