//! Run directories, sweeps, the command-line front end and reproducibility.

use std::path::Path;
use std::process::Command;
use vnsim::config::{RunConfig, RunMode};
use vnsim::diagnostics::DiagnosticsRecord;
use vnsim::io::{read_metrics, Snapshot, Table, AGGREGATE_SCHEMA, METRICS_SCHEMA};
use vnsim::run::{run_particle, run_sweep, simulate_particles, subrun_dir};

fn small() -> RunConfig {
    let mut cfg = RunConfig { particles: vec![200], t_end: 0.05, dt: 0.005, snapshot_interval: 0.025, ..RunConfig::default() };
    cfg.fluid.n = 32;
    cfg.diagnostics.density_nx = 8;
    cfg.diagnostics.density_dv_over_eps = 0.5;
    cfg
}

fn sweep_cfg(particles: Vec<usize>, replicas: usize) -> RunConfig {
    let mut cfg = small();
    cfg.mode = RunMode::Sweep;
    cfg.particles = particles;
    cfg.replicas = replicas;
    cfg.diagnostics.reference = false;
    cfg
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn vnsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vnsim"))
}

#[test]
fn run_directory_layout_and_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let art = run_particle(&small(), tmp.path()).unwrap();
    for f in ["config.toml", "seeds.csv", "manifest.json", "metrics.csv", "snapshots/particles_000010.bin", "snapshots/particles_000010.bin.json"] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
    let text = std::fs::read_to_string(&art.metrics).unwrap();
    assert_eq!(text.lines().next().unwrap(), format!("# schema: {METRICS_SCHEMA}"));
    let bits = |r: &DiagnosticsRecord| r.values().map(f64::to_bits);
    let back = read_metrics(&art.metrics).unwrap();
    assert!(back.iter().zip(&art.records).all(|(a, b)| a.step == b.step && bits(a) == bits(b)));
    assert_eq!(art.records.len(), 11);
}

#[test]
fn final_snapshot_matches_final_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small();
    run_particle(&cfg, tmp.path()).unwrap();
    let out = simulate_particles(&cfg, 200, cfg.seed, |_| Ok(())).unwrap();
    let snap = Snapshot::read(&tmp.path().join("snapshots/particles_000010.bin")).unwrap();
    let (x, v) = snap.to_particles().unwrap();
    assert_eq!(x, out.ensemble.x);
    assert_eq!(v, out.ensemble.v);
    assert_eq!(snap.time, out.ensemble.time);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_particle(&small(), a.path()).unwrap();
    run_particle(&small(), b.path()).unwrap();
    assert_eq!(bytes(&a.path().join("metrics.csv")), bytes(&b.path().join("metrics.csv")));
    assert_eq!(bytes(&a.path().join("snapshots/fluid_000010.bin")), bytes(&b.path().join("snapshots/fluid_000010.bin")));
}

#[test]
fn embedded_config_reproduces_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = small();
    cfg.seed = 99;
    run_particle(&cfg, a.path()).unwrap();
    let status = vnsim()
        .args(["run-particle", "-c"])
        .arg(a.path().join("config.toml"))
        .arg("-o")
        .arg(b.path())
        .env("RUST_LOG", "error")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(bytes(&a.path().join("metrics.csv")), bytes(&b.path().join("metrics.csv")));
}

#[test]
fn single_n_sweep_matches_particle_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let report = run_sweep(&sweep_cfg(vec![200], 1), a.path()).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.aggregate.rows.len(), 1);
    run_particle(&small(), b.path()).unwrap();
    assert_eq!(bytes(&subrun_dir(a.path(), 200, 0).join("metrics.csv")), bytes(&b.path().join("metrics.csv")));
}

#[test]
fn sweep_aggregates_one_row_per_n() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_sweep(&sweep_cfg(vec![100, 1000], 2), tmp.path()).unwrap();
    let table = Table::load(&tmp.path().join("aggregate.csv"), AGGREGATE_SCHEMA).unwrap();
    assert_eq!(table, report.aggregate);
    assert_eq!(table.column("n_particles").unwrap(), vec![100.0, 1000.0]);
    let eps = table.column("epsilon").unwrap();
    assert!(eps[1] < eps[0]);
    assert_eq!(table.column("replicas").unwrap(), vec![2.0, 2.0]);
    assert_eq!(table.column("failed").unwrap(), vec![0.0, 0.0]);
    assert!(table.column("w1_to_limit_mean").unwrap().iter().all(|w| w.is_nan()));
}

#[test]
fn worker_count_does_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg_path = a.path().join("sweep.toml");
    std::fs::write(&cfg_path, sweep_cfg(vec![100, 300], 2).to_toml()).unwrap();
    for (workers, out) in [("1", a.path().join("out")), ("3", b.path().join("out"))] {
        let status = vnsim()
            .args(["--workers", workers, "sweep", "-c"])
            .arg(&cfg_path)
            .arg("-o")
            .arg(&out)
            .env("RUST_LOG", "error")
            .status()
            .unwrap();
        assert!(status.success());
    }
    for sub in ["aggregate.csv", "N300/replica1/metrics.csv", "N100/replica0/metrics.csv"] {
        assert_eq!(bytes(&a.path().join("out").join(sub)), bytes(&b.path().join("out").join(sub)), "{sub}");
    }
}

#[test]
fn metrics_command_reaggregates_and_counts_missing_subruns() {
    let tmp = tempfile::tempdir().unwrap();
    run_sweep(&sweep_cfg(vec![100], 2), tmp.path()).unwrap();
    std::fs::remove_file(subrun_dir(tmp.path(), 100, 1).join("metrics.csv")).unwrap();
    let status = vnsim().arg("metrics").arg(tmp.path()).env("RUST_LOG", "error").status().unwrap();
    assert!(status.success());
    let table = Table::load(&tmp.path().join("aggregate.csv"), AGGREGATE_SCHEMA).unwrap();
    assert_eq!(table.column("replicas").unwrap(), vec![1.0]);
    assert_eq!(table.column("failed").unwrap(), vec![1.0]);
}

#[test]
fn exit_codes_for_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "beta = 0.3\nsigma = -1.0\n").unwrap();
    let out = vnsim().args(["validate", "-c"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("beta") && err.contains("sigma"), "{err}");

    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(vnsim().args(["validate", "-c"]).arg(&bad).status().unwrap().code(), Some(1));
    assert_eq!(vnsim().args(["metrics"]).arg(tmp.path().join("missing")).status().unwrap().code(), Some(1));
    assert_eq!(vnsim().args(["validate"]).status().unwrap().code(), Some(0));
}

#[test]
fn noiseless_energy_is_nonincreasing() {
    let mut cfg = small();
    cfg.sigma = 0.0;
    cfg.particles = vec![500];
    cfg.t_end = 0.1;
    let out = simulate_particles(&cfg, 500, 3, |_| Ok(())).unwrap();
    for w in out.records.windows(2) {
        assert!(w[1].energy <= w[0].energy + 1e-12, "{} -> {}", w[0].energy, w[1].energy);
    }
}
