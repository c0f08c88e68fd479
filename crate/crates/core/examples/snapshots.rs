//! Writing and reading binary snapshots with their JSON sidecars.

use vnsim::fluid::{FluidSolver, InitialVelocity};
use vnsim::io::{sidecar_path, Snapshot};
use vnsim::particles::{sample_initial, InitialDensity};

fn main() {
    let dir = std::env::temp_dir().join("vnsim-snapshot-example");
    std::fs::create_dir_all(&dir).unwrap();
    let solver = FluidSolver::new(32, 1.0);
    let state = InitialVelocity::default().build(32);
    let fluid = dir.join("fluid.bin");
    Snapshot::fluid(&state, solver.fft(), 0).write(&fluid).unwrap();
    let ens = sample_initial(&InitialDensity::default(), 1000, 5, 0.5).unwrap();
    let particles = dir.join("particles.bin");
    Snapshot::particles(&ens.x, &ens.v, 0.0, 0).write(&particles).unwrap();

    let back = Snapshot::read(&fluid).unwrap().to_fluid_state(solver.fft()).unwrap();
    println!("fluid energy before {:.12e} after {:.12e}", solver.kinetic_energy(&state), solver.kinetic_energy(&back));
    let (x, v) = Snapshot::read(&particles).unwrap().to_particles().unwrap();
    println!("particles restored: {} (first x = {:?}, v = {:?})", x.len(), x[0], v[0]);
    println!("{}", std::fs::read_to_string(sidecar_path(&particles)).unwrap());
}
