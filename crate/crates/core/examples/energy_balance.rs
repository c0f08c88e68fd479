//! First-order convergence of the discrete energy identity for a noiseless particle run.

use vnsim::config::RunConfig;
use vnsim::run::simulate_particles;

fn main() {
    let mut prev = None;
    for dt in [4e-3, 2e-3, 1e-3] {
        let mut cfg = RunConfig { particles: vec![1000], sigma: 0.0, t_end: 0.1, dt, snapshot_interval: 0.1, ..RunConfig::default() };
        cfg.fluid.n = 64;
        cfg.diagnostics.density_nx = 8;
        let out = simulate_particles(&cfg, 1000, 5, |_| Ok(())).unwrap();
        let r = out.records.last().unwrap().energy_residual_cum;
        match prev {
            Some(p) => println!("dt = {dt:.0e}: accumulated residual {r:.4e}, ratio {:.3}", p / r),
            None => println!("dt = {dt:.0e}: accumulated residual {r:.4e}"),
        }
        prev = Some(r);
    }
}
