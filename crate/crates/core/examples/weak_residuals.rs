//! Weak-formulation residuals of particle trajectories for growing N.

use vnsim::config::RunConfig;
use vnsim::run::simulate_particles;

fn main() {
    let mut cfg = RunConfig { t_end: 0.2, dt: 0.005, snapshot_interval: 0.2, ..RunConfig::default() };
    cfg.fluid.n = 32;
    cfg.diagnostics.density_nx = 8;
    println!("{:>7} {:>8} {:>12} {:>12} {:>12}", "N", "eps", "|Phi|", "|Psi|", "|Psi - M|");
    for n in [100, 1000, 10_000] {
        cfg.particles = vec![n];
        let out = simulate_particles(&cfg, n, 1, |_| Ok(())).expect("run completes");
        let sum = |v: Vec<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
        println!(
            "{n:>7} {:>8.4} {:>12.4e} {:>12.4e} {:>12.4e}",
            out.epsilon,
            sum(out.weak.phi_residuals()),
            sum(out.weak.psi_residuals()),
            sum(out.weak.psi_compensated())
        );
    }
}
