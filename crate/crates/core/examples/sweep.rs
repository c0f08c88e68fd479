//! A miniature N-sweep written to a temporary directory, with its aggregate table.

use vnsim::config::{RunConfig, RunMode};
use vnsim::run::run_sweep;

fn main() {
    let dir = std::env::temp_dir().join("vnsim-sweep-example");
    let mut cfg = RunConfig {
        mode: RunMode::Sweep,
        particles: vec![100, 400],
        replicas: 2,
        t_end: 0.1,
        dt: 0.005,
        snapshot_interval: 0.05,
        output_dir: dir.clone(),
        ..RunConfig::default()
    };
    cfg.fluid.n = 16;
    cfg.kinetic.nx = 16;
    cfg.kinetic.nv = 48;
    cfg.kinetic.vmax = 6.0;
    cfg.diagnostics.density_nx = 8;
    let report = run_sweep(&cfg, &dir).expect("sweep completes");
    println!("sweep written to {}", report.dir.display());
    let t = &report.aggregate;
    for name in ["n_particles", "epsilon", "w1_to_limit_mean", "weak_residual_mean", "sup_l4_density_mean"] {
        println!("{name:>22}: {:?}", t.column(name).unwrap());
    }
}
