//! Energy decay of a Taylor-Green vortex against the exact rate `exp(-16 pi^2 t)`.

use std::f64::consts::PI;
use vnsim::fluid::{FluidSolver, InitialVelocity};

fn main() {
    let n = 64;
    let solver = FluidSolver::new(n, 1.0);
    let mut state = InitialVelocity::TaylorGreen { amplitude: 1.0 }.build(n);
    let e0 = solver.kinetic_energy(&state);
    let dt = 1e-4;
    for step in 1..=200 {
        solver.step(&mut state, None, dt).expect("stable step");
        if step % 50 == 0 {
            let t = state.time();
            let exact = e0 * (-16.0 * PI * PI * t).exp();
            let e = solver.kinetic_energy(&state);
            println!("t = {t:.4}  energy = {e:.10e}  exact = {exact:.10e}  rel err = {:.2e}", (e - exact).abs() / exact);
        }
    }
}
