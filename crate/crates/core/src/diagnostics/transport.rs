//! Wasserstein-1 distances between atomic measures on the torus times the plane, with the
//! product metric `d((x, v), (y, w)) = d_torus(x, y) + |v - w|`.
//!
//! Small problems (at most [`EXACT_ATOM_LIMIT`] atoms in total) are solved exactly as a
//! transportation LP by successive shortest augmenting paths with reduced costs. Larger
//! ones use debiased log-domain Sinkhorn with geometric annealing of the regularization,
//! and the result is tagged approximate.

use crate::kinetic::KineticGrid;
use crate::particles::EmpiricalMeasure;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

/// Above this many atoms in total the entropic solver is used.
pub const EXACT_ATOM_LIMIT: usize = 2000;
/// Final entropic regularization relative to the largest cost.
pub const SINKHORN_REG: f64 = 2e-3;
/// Tolerance on the unit total mass of each input measure.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("measure has total mass {0}, expected 1")]
    Unnormalized(f64),
    #[error("measure has no atoms")]
    Empty,
    #[error("negative or non-finite weight")]
    BadWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum W1Method {
    Exact,
    /// Debiased Sinkhorn divergence at the given absolute regularization.
    Entropic { reg: f64 },
}

impl W1Method {
    pub fn is_exact(&self) -> bool {
        matches!(self, W1Method::Exact)
    }
}

/// Nonzero entries `(source, target, mass)` of a transport plan.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "source,target,mass")?;
        for (i, j, m) in &self.entries {
            writeln!(w, "{i},{j},{m:.17e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct W1Result {
    pub value: f64,
    pub method: W1Method,
    /// Present for exact solves.
    pub plan: Option<TransportPlan>,
}

#[inline]
fn torus_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 1.0;
    d.min(1.0 - d)
}

/// Product metric on the torus times the plane.
#[inline]
pub fn product_distance(x: [f64; 2], v: [f64; 2], y: [f64; 2], w: [f64; 2]) -> f64 {
    torus_gap(x[0], y[0]).hypot(torus_gap(x[1], y[1])) + (v[0] - w[0]).hypot(v[1] - w[1])
}

fn check(mu: &EmpiricalMeasure) -> Result<(), TransportError> {
    if mu.is_empty() {
        return Err(TransportError::Empty);
    }
    if mu.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(TransportError::BadWeight);
    }
    let m = mu.total_mass();
    if (m - 1.0).abs() > MASS_TOL {
        return Err(TransportError::Unnormalized(m));
    }
    Ok(())
}

/// Row-major `mu.len() x nu.len()` cost matrix.
pub fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<f64> {
    let n = nu.len();
    let mut c = vec![0.0; mu.len() * n];
    c.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, r) in row.iter_mut().enumerate() {
            *r = product_distance(mu.x[i], mu.v[i], nu.x[j], nu.v[j]);
        }
    });
    c
}

pub fn wasserstein1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<W1Result, TransportError> {
    check(mu)?;
    check(nu)?;
    if mu.len() + nu.len() <= EXACT_ATOM_LIMIT {
        wasserstein1_exact(mu, nu)
    } else {
        wasserstein1_entropic(mu, nu, SINKHORN_REG)
    }
}

pub fn wasserstein1_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<W1Result, TransportError> {
    check(mu)?;
    check(nu)?;
    let cost = cost_matrix(mu, nu);
    let (value, plan) = transport_exact(&cost, &mu.weights, &nu.weights);
    Ok(W1Result { value, method: W1Method::Exact, plan: Some(plan) })
}

pub fn wasserstein1_entropic(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, rel_reg: f64) -> Result<W1Result, TransportError> {
    check(mu)?;
    check(nu)?;
    let cmu = cost_matrix(mu, mu);
    let cnu = cost_matrix(nu, nu);
    let cross = cost_matrix(mu, nu);
    let scale = cross.iter().chain(&cmu).chain(&cnu).copied().fold(0.0, f64::max).max(1e-300);
    let reg = rel_reg * scale;
    let ab = sinkhorn(&cross, &mu.weights, &nu.weights, reg, scale);
    let aa = sinkhorn(&cmu, &mu.weights, &mu.weights, reg, scale);
    let bb = sinkhorn(&cnu, &nu.weights, &nu.weights, reg, scale);
    let value = (ab - 0.5 * (aa + bb)).max(0.0);
    Ok(W1Result { value, method: W1Method::Entropic { reg }, plan: None })
}

/// Exact optimal transport cost and plan for a dense `a.len() x b.len()` cost matrix.
///
/// Successive shortest paths on the bipartite residual graph: each round runs a dense
/// Dijkstra with reduced costs from every source with remaining supply to the nearest
/// sink with remaining demand and pushes the bottleneck amount along that path.
pub fn transport_exact(cost: &[f64], a: &[f64], b: &[f64]) -> (f64, TransportPlan) {
    let (m, n) = (a.len(), b.len());
    assert_eq!(cost.len(), m * n);
    let total: f64 = a.iter().sum::<f64>().min(b.iter().sum());
    let tol = 1e-14 * total.max(1e-300);
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = vec![0.0; m * n];
    // Potentials: nodes 0..m are sources, m..m+n sinks. Reduced cost of i -> j is
    // c_ij + p_i - p_j >= 0; of the reverse arc j -> i (when flow > 0) it is
    // -c_ij + p_j - p_i >= 0.
    let mut pot = vec![0.0; m + n];
    for j in 0..n {
        pot[m + j] = (0..m).map(|i| cost[i * n + j]).fold(f64::INFINITY, f64::min);
    }
    let v = m + n;
    let mut dist = vec![f64::INFINITY; v];
    let mut prev = vec![usize::MAX; v];
    let mut done = vec![false; v];
    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= tol || demand.iter().sum::<f64>() <= tol {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..m {
            if supply[i] > tol {
                dist[i] = 0.0;
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for (k, &d) in dist.iter().enumerate() {
                if !done[k] && d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < m {
                let i = best;
                let row = &cost[i * n..(i + 1) * n];
                for j in 0..n {
                    let node = m + j;
                    if done[node] {
                        continue;
                    }
                    let nd = best_d + (row[j] + pot[i] - pot[node]).max(0.0);
                    if nd < dist[node] {
                        dist[node] = nd;
                        prev[node] = i;
                    }
                }
            } else {
                let j = best - m;
                if demand[j] > tol {
                    target = best;
                    break;
                }
                for i in 0..m {
                    if done[i] || flow[i * n + j] <= 0.0 {
                        continue;
                    }
                    let nd = best_d + (-cost[i * n + j] + pot[best] - pot[i]).max(0.0);
                    if nd < dist[i] {
                        dist[i] = nd;
                        prev[i] = best;
                    }
                }
            }
        }
        if target == usize::MAX {
            break;
        }
        let dt = dist[target];
        for k in 0..v {
            pot[k] += dist[k].min(dt);
        }
        // Bottleneck along the path back to a source whose predecessor is unset.
        let mut delta = demand[target - m];
        let mut node = target;
        loop {
            let p = prev[node];
            if p == usize::MAX {
                delta = delta.min(supply[node]);
                break;
            }
            if node < m {
                // node is a source reached backwards from sink p.
                delta = delta.min(flow[node * n + (p - m)]);
            }
            node = p;
        }
        let mut node = target;
        loop {
            let p = prev[node];
            if p == usize::MAX {
                supply[node] -= delta;
                break;
            }
            if node >= m {
                flow[p * n + (node - m)] += delta;
            } else {
                let idx = node * n + (p - m);
                flow[idx] -= delta;
                if flow[idx] < tol {
                    flow[idx] = 0.0;
                }
            }
            node = p;
        }
        demand[target - m] -= delta;
    }
    let mut value = 0.0;
    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let f = flow[i * n + j];
            if f > 0.0 {
                value += f * cost[i * n + j];
                entries.push((i, j, f));
            }
        }
    }
    (value, TransportPlan { entries })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + values.map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Entropic transport value (dual objective) by log-domain Sinkhorn, annealing the
/// regularization from `start` down to `reg`.
fn sinkhorn(cost: &[f64], a: &[f64], b: &[f64], reg: f64, start: f64) -> f64 {
    let (m, n) = (a.len(), b.len());
    let la: Vec<f64> = a.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
    let lb: Vec<f64> = b.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut eps = start.max(reg);
    loop {
        let last = eps <= reg;
        let iters = if last { 2000 } else { 50 };
        for _ in 0..iters {
            let f_new: Vec<f64> = (0..m)
                .into_par_iter()
                .map(|i| {
                    let row = &cost[i * n..(i + 1) * n];
                    -eps * log_sum_exp((0..n).map(|j| (g[j] - row[j]) / eps + lb[j]))
                })
                .collect();
            f = f_new;
            let g_new: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|j| -eps * log_sum_exp((0..m).map(|i| (f[i] - cost[i * n + j]) / eps + la[i])))
                .collect();
            // Marginal error of the row constraint after the column update.
            let err: f64 = if last {
                (0..m)
                    .map(|i| {
                        let row = &cost[i * n..(i + 1) * n];
                        let s: f64 = (0..n).map(|j| ((f[i] + g_new[j] - row[j]) / eps + la[i] + lb[j]).exp()).sum();
                        (s - a[i]).abs()
                    })
                    .sum()
            } else {
                f64::INFINITY
            };
            g = g_new;
            if err < 1e-10 {
                break;
            }
        }
        if last {
            break;
        }
        eps = (eps * 0.5).max(reg);
    }
    a.iter().zip(&f).filter(|(w, _)| **w > 0.0).map(|(w, v)| w * v).sum::<f64>()
        + b.iter().zip(&g).filter(|(w, _)| **w > 0.0).map(|(w, v)| w * v).sum::<f64>()
}

/// Coarse phase-space cells shared by gridded and particle measures: `cells_x^2` spatial
/// cells times `cells_v^2` velocity cells on `[-vmax, vmax]^2`. Velocities outside the
/// window are assigned to the nearest edge cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoarseCells {
    pub cells_x: usize,
    pub cells_v: usize,
    pub vmax: f64,
}

impl CoarseCells {
    fn x_cell(&self, x: f64) -> usize {
        ((x.rem_euclid(1.0) * self.cells_x as f64) as usize).min(self.cells_x - 1)
    }

    fn v_cell(&self, v: f64) -> usize {
        let t = (v + self.vmax) / (2.0 * self.vmax) * self.cells_v as f64;
        (t.floor().max(0.0) as usize).min(self.cells_v - 1)
    }

    fn index(&self, x: [f64; 2], v: [f64; 2]) -> usize {
        let (cx, cv) = (self.cells_x, self.cells_v);
        ((self.x_cell(x[0]) * cx + self.x_cell(x[1])) * cv + self.v_cell(v[0])) * cv + self.v_cell(v[1])
    }

    pub fn len(&self) -> usize {
        self.cells_x * self.cells_x * self.cells_v * self.cells_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_measure(&self, mass: Vec<f64>) -> EmpiricalMeasure {
        let (cx, cv) = (self.cells_x, self.cells_v);
        let hx = 1.0 / cx as f64;
        let hv = 2.0 * self.vmax / cv as f64;
        let total: f64 = mass.iter().sum();
        let mut x = Vec::new();
        let mut v = Vec::new();
        let mut w = Vec::new();
        for (idx, m) in mass.into_iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let (xa, xb, va, vb) = (idx / (cx * cv * cv), (idx / (cv * cv)) % cx, (idx / cv) % cv, idx % cv);
            x.push([(xa as f64 + 0.5) * hx, (xb as f64 + 0.5) * hx]);
            v.push([-self.vmax + (va as f64 + 0.5) * hv, -self.vmax + (vb as f64 + 0.5) * hv]);
            w.push(m / total);
        }
        EmpiricalMeasure::weighted(x, v, w)
    }

    /// Aggregates atoms into the cells; atoms sit at cell centers.
    pub fn bin_measure(&self, mu: &EmpiricalMeasure) -> EmpiricalMeasure {
        let mut mass = vec![0.0; self.len()];
        for ((x, v), w) in mu.x.iter().zip(&mu.v).zip(&mu.weights) {
            mass[self.index(*x, *v)] += w;
        }
        self.to_measure(mass)
    }

    /// Aggregates grid quadrature masses into the cells, renormalized to unit mass.
    pub fn bin_grid(&self, f: &KineticGrid) -> EmpiricalMeasure {
        let mut mass = vec![0.0; self.len()];
        let (nx, nv) = (f.nx, f.nv);
        let vol = f.cell_volume();
        for ix in 0..nx {
            for iy in 0..nx {
                let x = [ix as f64 / nx as f64, iy as f64 / nx as f64];
                for a in 0..nv {
                    for b in 0..nv {
                        let val = f.values[f.index(ix, iy, a, b)];
                        if val > 0.0 {
                            mass[self.index(x, [f.v_center(a), f.v_center(b)])] += val * vol;
                        }
                    }
                }
            }
        }
        self.to_measure(mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn atoms(points: &[([f64; 2], [f64; 2])], weights: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::weighted(points.iter().map(|p| p.0).collect(), points.iter().map(|p| p.1).collect(), weights.to_vec())
    }

    #[test]
    fn identical_measures() {
        let mu = atoms(&[([0.1, 0.2], [1.0, 0.0]), ([0.7, 0.9], [-1.0, 2.0])], &[0.25, 0.75]);
        assert!(wasserstein1(&mu, &mu).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn two_single_atoms() {
        let mu = atoms(&[([0.05, 0.5], [0.0, 0.0])], &[1.0]);
        let nu = atoms(&[([0.95, 0.5], [3.0, 4.0])], &[1.0]);
        let r = wasserstein1(&mu, &nu).unwrap();
        assert!((r.value - 5.1).abs() < 1e-14);
        assert!(r.method.is_exact());
    }

    #[test]
    fn three_versus_two() {
        // Costs are distances along one velocity axis; the optimum ships the middle atom
        // split between both targets.
        let mu = atoms(&[([0.0; 2], [0.0, 0.0]), ([0.0; 2], [1.0, 0.0]), ([0.0; 2], [2.0, 0.0])], &[0.3, 0.4, 0.3]);
        let nu = atoms(&[([0.0; 2], [0.5, 0.0]), ([0.0; 2], [1.5, 0.0])], &[0.5, 0.5]);
        let r = wasserstein1(&mu, &nu).unwrap();
        assert!((r.value - 0.5).abs() < 1e-14);
        let shipped: f64 = r.plan.unwrap().entries.iter().map(|e| e.2).sum();
        assert!((shipped - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let mu = atoms(&[([0.0; 2], [0.0; 2])], &[0.5]);
        assert!(matches!(wasserstein1(&mu, &mu), Err(TransportError::Unnormalized(_))));
        let empty = atoms(&[], &[]);
        assert_eq!(wasserstein1(&empty, &empty), Err(TransportError::Empty));
    }

    #[test]
    fn plan_csv_header() {
        let mut buf = Vec::new();
        TransportPlan { entries: vec![(0, 1, 0.5)] }.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("source,target,mass\n0,1,"));
    }

    #[test]
    fn binning_grid_and_particles_agree_on_point_masses() {
        let cells = CoarseCells { cells_x: 2, cells_v: 2, vmax: 1.0 };
        let mu = atoms(&[([0.1, 0.6], [0.5, -0.5]), ([0.9, 0.1], [-3.0, 0.2])], &[0.5, 0.5]);
        let binned = cells.bin_measure(&mu);
        assert_eq!(binned.len(), 2);
        assert!((binned.total_mass() - 1.0).abs() < 1e-15);
        assert!(binned.x.contains(&[0.25, 0.75]) && binned.v.contains(&[-0.5, 0.5]));
    }

    #[test]
    fn entropic_within_two_percent_of_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut draw = |n: usize, shift: f64| {
            let x = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let v = (0..n).map(|_| [rng.gen::<f64>() * 2.0 - 1.0 + shift, rng.gen::<f64>() * 2.0 - 1.0]).collect();
            EmpiricalMeasure::uniform(x, v)
        };
        for (n, shift) in [(120, 0.0), (150, 0.3), (200, 1.0)] {
            let (mu, nu) = (draw(n, 0.0), draw(n, shift));
            let exact = wasserstein1_exact(&mu, &nu).unwrap().value;
            let approx = wasserstein1_entropic(&mu, &nu, SINKHORN_REG).unwrap().value;
            assert!((approx - exact).abs() <= 0.02 * exact, "n={n}: exact {exact} entropic {approx}");
        }
    }

    fn random_measure(raw: &[(f64, f64, f64, f64, f64)]) -> EmpiricalMeasure {
        let total: f64 = raw.iter().map(|r| r.4).sum();
        EmpiricalMeasure::weighted(
            raw.iter().map(|r| [r.0, r.1]).collect(),
            raw.iter().map(|r| [r.2, r.3]).collect(),
            raw.iter().map(|r| r.4 / total).collect(),
        )
    }

    fn atom_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, f64, f64)>> {
        prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.05..1.0f64), 1..6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn symmetric_and_triangle(a in atom_strategy(), b in atom_strategy(), c in atom_strategy()) {
            let (a, b, c) = (random_measure(&a), random_measure(&b), random_measure(&c));
            let ab = wasserstein1(&a, &b).unwrap().value;
            let ba = wasserstein1(&b, &a).unwrap().value;
            let bc = wasserstein1(&b, &c).unwrap().value;
            let ac = wasserstein1(&a, &c).unwrap().value;
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
