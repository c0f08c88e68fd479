//! Exact and entropic W1 between empirical measures on the torus times the plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vnsim::diagnostics::transport::{wasserstein1_entropic, wasserstein1_exact, SINKHORN_REG};
use vnsim::particles::EmpiricalMeasure;

fn main() {
    let two = |x: [f64; 2], v: [f64; 2]| EmpiricalMeasure::uniform(vec![x], vec![v]);
    let r = wasserstein1_exact(&two([0.1, 0.1], [0.0, 0.0]), &two([0.9, 0.1], [1.0, 0.0])).unwrap();
    println!("two atoms across the seam: W1 = {:.6} (expected 1.2)", r.value);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut draw = |n: usize, shift: f64| {
        let x = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let v = (0..n).map(|_| [rng.gen_range(-1.0..1.0) + shift, rng.gen_range(-1.0..1.0)]).collect();
        EmpiricalMeasure::uniform(x, v)
    };
    let (a, b) = (draw(150, 0.0), draw(150, 0.5));
    let exact = wasserstein1_exact(&a, &b).unwrap();
    let approx = wasserstein1_entropic(&a, &b, SINKHORN_REG).unwrap();
    println!("150 vs 150 atoms: exact {:.6}, entropic {:.6}", exact.value, approx.value);
    let mut out = std::io::stdout().lock();
    println!("first plan rows:");
    let head = vnsim::diagnostics::TransportPlan { entries: exact.plan.unwrap().entries.into_iter().take(5).collect() };
    head.write_csv(&mut out).unwrap();
}
