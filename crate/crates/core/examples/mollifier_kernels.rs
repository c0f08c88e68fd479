//! Kernel scales `eps_N = N^{-beta/2}` and properties of the periodized spatial kernel.

use vnsim::mollifier::{epsilon_for, eval_theta1, MollifierSpec, PeriodicKernel};

fn main() {
    let spec = MollifierSpec::new(0.2).expect("admissible beta");
    println!("{:>8} {:>10} {:>8} {:>14}", "N", "eps", "modes", "theta0(0)");
    for n in [100u64, 1_000, 10_000, 100_000] {
        let eps = epsilon_for(n, &spec).unwrap();
        let kernel = PeriodicKernel::new(eps);
        println!("{n:>8} {eps:>10.5} {:>8} {:>14.6}", kernel.mode_cutoff(), kernel.eval([0.0, 0.0]));
    }

    let eps = 0.25;
    let kernel = PeriodicKernel::new(eps);
    let m = 128;
    let h = 1.0 / m as f64;
    let mut mass = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let x = [i as f64 * h, j as f64 * h];
            let val = kernel.eval(x);
            let g = kernel.grad(x);
            mass += val * h * h;
            worst = worst.max(eps * g[0].hypot(g[1]) / val);
        }
    }
    println!("eps = {eps}: grid mass {mass:.15}, max eps |grad| / theta = {worst:.6}");

    let dv = eps / 200.0;
    let k = (eps / dv).ceil() as i64;
    let vmass: f64 = (-k..=k)
        .flat_map(|a| (-k..=k).map(move |b| [a as f64 * dv, b as f64 * dv]))
        .map(|v| eval_theta1(v, eps) * dv * dv)
        .sum();
    println!("velocity bump mass on a {}-point grid: {vmass:.12}", (2 * k + 1).pow(2));
}
