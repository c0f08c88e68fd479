//! The mean-field Vlasov-Fokker-Planck / Navier-Stokes system on a coarse grid.

use vnsim::config::{RunConfig, RunMode};
use vnsim::run::simulate_pde;

fn main() {
    let mut cfg = RunConfig { mode: RunMode::Pde, t_end: 0.2, ..RunConfig::default() };
    cfg.kinetic.nx = 16;
    cfg.kinetic.nv = 48;
    cfg.kinetic.vmax = 6.0;
    cfg.kinetic.dt = 0.01;
    cfg.validate().expect("valid configuration");
    let out = simulate_pde(&cfg, |step, _, _, f| {
        println!("step {step:>3}: mass {:.12}, leaked {:.2e}, min {:.2e}", f.mass(), f.leaked, f.min());
        Ok(())
    })
    .expect("run completes");
    let last = out.records.last().unwrap();
    println!(
        "t = {:.2}: energy {:.6}, |v|^3 moment {:.6}, int (F^0)^2 = {:.6} <= {:.6}",
        last.time, last.energy, last.moment3_density, last.l2_marginal, last.marginal_rhs
    );
}
