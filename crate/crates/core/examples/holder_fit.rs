//! Hoelder-in-time exponent of the empirical measure from replicated particle runs.

use vnsim::config::RunConfig;
use vnsim::diagnostics::{holder_w1_fit, HolderOutcome};
use vnsim::run::simulate_particles;

fn main() {
    let mut cfg = RunConfig { particles: vec![200], t_end: 0.04, dt: 0.005, snapshot_interval: 0.005, ..RunConfig::default() };
    cfg.fluid.n = 16;
    cfg.diagnostics.density_nx = 4;
    cfg.diagnostics.density_dv_over_eps = 1.0;
    let mut replicas = Vec::new();
    let mut times = Vec::new();
    for r in 0..3 {
        let mut run = Vec::new();
        simulate_particles(&cfg, 200, 10 + r, |f| {
            run.push(f.ensemble.empirical_measure());
            if r == 0 {
                times.push(f.ensemble.time);
            }
            Ok(())
        })
        .unwrap();
        replicas.push(run);
    }
    for p in [1.0, 2.0] {
        let fit = holder_w1_fit(&replicas, &times, p, &[1, 2, 3, 4]).unwrap();
        match fit.outcome {
            HolderOutcome::Fit { slope, .. } => println!("p = {p}: slope {slope:.3} from {:?}", fit.points),
            HolderOutcome::Degenerate => println!("p = {p}: degenerate"),
        }
    }
}
