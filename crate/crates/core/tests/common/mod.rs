#![allow(dead_code)]

use rand::Rng;
use vnsim::particles::EmpiricalMeasure;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Mass of a radial function on the plane: `int_0^R 2 pi r f(r) dr`, split into unit
/// pieces so the adaptive rule sees every scale.
pub fn radial_mass(f: &dyn Fn(f64) -> f64, radius: f64, pieces: usize, tol: f64) -> f64 {
    let h = radius / pieces as f64;
    (0..pieces)
        .map(|k| adaptive_simpson(&|r| 2.0 * std::f64::consts::PI * r * f(r), k as f64 * h, (k + 1) as f64 * h, tol / pieces as f64))
        .sum()
}

/// Random measure with `atoms` atoms whose weights are integer multiples of `1/units`.
pub fn integer_measure<R: Rng>(rng: &mut R, atoms: usize, units: usize) -> (EmpiricalMeasure, Vec<usize>) {
    let mut counts = vec![1usize; atoms];
    for _ in atoms..units {
        counts[rng.gen_range(0..atoms)] += 1;
    }
    let x = (0..atoms).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let v = (0..atoms).map(|_| [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]).collect();
    let w = counts.iter().map(|&c| c as f64 / units as f64).collect();
    (EmpiricalMeasure::weighted(x, v, w), counts)
}

/// Torus-plus-velocity distance computed independently of the library.
pub fn reference_distance(x: [f64; 2], v: [f64; 2], y: [f64; 2], w: [f64; 2]) -> f64 {
    let d = |a: f64, b: f64| {
        let t = (a - b).abs() % 1.0;
        t.min(1.0 - t)
    };
    d(x[0], y[0]).hypot(d(x[1], y[1])) + (v[0] - w[0]).hypot(v[1] - w[1])
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Exact W1 between measures with integer weights over `units`, by expanding every atom
/// into unit masses and minimizing over all assignments (Birkhoff: an optimal vertex of
/// the transport polytope is a permutation).
pub fn brute_force_w1(a: &EmpiricalMeasure, ca: &[usize], b: &EmpiricalMeasure, cb: &[usize]) -> f64 {
    let expand = |m: &EmpiricalMeasure, c: &[usize]| -> Vec<([f64; 2], [f64; 2])> {
        c.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat((m.x[i], m.v[i])).take(k)).collect()
    };
    let (ua, ub) = (expand(a, ca), expand(b, cb));
    let k = ua.len();
    let cost: Vec<f64> =
        ua.iter().flat_map(|p| ub.iter().map(move |q| reference_distance(p.0, p.1, q.0, q.1))).collect();
    permutations(k)
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| cost[i * k + j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / k as f64
}
