//! Grid solver for the limit system: Vlasov-Fokker-Planck for `F(x, v)` coupled to
//! Navier-Stokes for `u`.
//!
//! `F` lives on `nx^2` spatial nodes `x = (i, j) / nx` times `nv^2` velocity cells of width
//! `dv = 2 vmax / nv` centered at `-vmax + (a + 1/2) dv`. Values are stored x-major,
//! v-minor: index `((ix * nx + iy) * nv + a) * nv + b`.
//!
//! One kinetic step is Strang split: half x-transport, half drift, full diffusion, half
//! drift, half x-transport. Transport shifts each velocity slice by `v tau`: the integer
//! part of the shift is an exact cyclic rotation and the remainder is a flux-limited upwind
//! step (van Leer), so it is conservative, positive and exact for grid-aligned shifts.
//! Drift is a MUSCL finite volume scheme with SSP-RK2 and outflow at `|v_i| = vmax`; the
//! outflow is accumulated in `leaked`. Diffusion is Crank-Nicolson per velocity axis with
//! zero-flux ends, sub-cycled so that each substep keeps the scheme positive.

use crate::drag::{eval_drag, DragSpec};
use crate::fluid::{FluidError, FluidSolver, FluidState, ForceField};
use crate::particles::InitialDensity;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest value a density entry may take before the step is rejected.
pub const NEGATIVITY_TOL: f64 = -1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticError {
    #[error("drift CFL violated: dt = {dt:e} exceeds {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("density became negative: min = {min:e}")]
    Negative { min: f64 },
    #[error("grid mismatch: kinetic nx = {kinetic}, fluid n = {fluid}")]
    GridMismatch { kinetic: usize, fluid: usize },
    #[error("non-finite density at t = {time}")]
    BlowUp { time: f64 },
    #[error(transparent)]
    Fluid(#[from] FluidError),
}

/// Cell-centered velocity grid on `[-vmax, vmax]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    pub nv: usize,
    pub vmax: f64,
}

impl VelocityGrid {
    pub fn new(nv: usize, vmax: f64) -> Self {
        Self { nv, vmax }
    }

    /// Smallest grid on `[-vmax, vmax]^2` with spacing at most `dv`.
    pub fn covering(vmax: f64, dv: f64) -> Self {
        Self { nv: ((2.0 * vmax / dv).ceil() as usize).max(1), vmax }
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.vmax / self.nv as f64
    }

    pub fn center(&self, a: usize) -> f64 {
        -self.vmax + (a as f64 + 0.5) * self.dv()
    }
}

/// Density samples on the phase-space tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticGrid {
    pub nx: usize,
    pub nv: usize,
    pub vmax: f64,
    pub values: Vec<f64>,
    pub time: f64,
    /// Mass that has left through `|v_i| = vmax`.
    pub leaked: f64,
}

impl KineticGrid {
    pub fn zeros(nx: usize, nv: usize, vmax: f64) -> Self {
        Self { nx, nv, vmax, values: vec![0.0; nx * nx * nv * nv], time: 0.0, leaked: 0.0 }
    }

    /// Point samples of `f0` renormalized to unit grid mass.
    pub fn from_density(nx: usize, vgrid: VelocityGrid, f0: &InitialDensity) -> Self {
        let mut grid = Self::zeros(nx, vgrid.nv, vgrid.vmax);
        let nv = vgrid.nv;
        let vdens: Vec<f64> = (0..nv * nv)
            .map(|ab| f0.velocity_density([vgrid.center(ab / nv), vgrid.center(ab % nv)]))
            .collect();
        grid.values.par_chunks_mut(nv * nv).enumerate().for_each(|(xi, slab)| {
            let x = [(xi / nx) as f64 / nx as f64, (xi % nx) as f64 / nx as f64];
            let a = f0.spatial_density(x);
            for (s, w) in slab.iter_mut().zip(&vdens) {
                *s = a * w;
            }
        });
        let m = grid.mass();
        grid.values.iter_mut().for_each(|v| *v /= m);
        grid
    }

    pub fn velocity_grid(&self) -> VelocityGrid {
        VelocityGrid::new(self.nv, self.vmax)
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.vmax / self.nv as f64
    }

    pub fn v_center(&self, a: usize) -> f64 {
        -self.vmax + (a as f64 + 0.5) * self.dv()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, a: usize, b: usize) -> usize {
        ((ix * self.nx + iy) * self.nv + a) * self.nv + b
    }

    /// Quadrature weight of one phase-space cell.
    pub fn cell_volume(&self) -> f64 {
        let dv = self.dv();
        dv * dv / (self.nx * self.nx) as f64
    }

    pub fn slab_len(&self) -> usize {
        self.nv * self.nv
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `int F(x, v) dv` at each spatial node.
    pub fn marginal(&self) -> Vec<f64> {
        let dv2 = self.dv() * self.dv();
        self.values.chunks(self.slab_len()).map(|s| s.iter().sum::<f64>() * dv2).collect()
    }

    /// `int int |v|^gamma F`.
    pub fn moment(&self, gamma: f64) -> f64 {
        let nv = self.nv;
        let weights: Vec<f64> = (0..nv * nv)
            .map(|ab| self.v_center(ab / nv).hypot(self.v_center(ab % nv)).powf(gamma))
            .collect();
        let total: f64 = self
            .values
            .chunks(self.slab_len())
            .map(|s| s.iter().zip(&weights).map(|(f, w)| f * w).sum::<f64>())
            .sum();
        total * self.cell_volume()
    }

    /// `int int v F`.
    pub fn momentum(&self) -> [f64; 2] {
        let nv = self.nv;
        let mut m = [0.0; 2];
        for slab in self.values.chunks(self.slab_len()) {
            for (ab, f) in slab.iter().enumerate() {
                m[0] += f * self.v_center(ab / nv);
                m[1] += f * self.v_center(ab % nv);
            }
        }
        [m[0] * self.cell_volume(), m[1] * self.cell_volume()]
    }

    /// `int int F^p`.
    pub fn lp_power(&self, p: i32) -> f64 {
        self.values.iter().map(|f| f.powi(p)).sum::<f64>() * self.cell_volume()
    }

    /// Per-axis velocity variance about the mean, normalized by mass.
    pub fn velocity_variance(&self) -> [f64; 2] {
        let nv = self.nv;
        let mass = self.mass();
        let mean = self.momentum();
        let mean = [mean[0] / mass, mean[1] / mass];
        let mut var = [0.0; 2];
        for slab in self.values.chunks(self.slab_len()) {
            for (ab, f) in slab.iter().enumerate() {
                var[0] += f * (self.v_center(ab / nv) - mean[0]).powi(2);
                var[1] += f * (self.v_center(ab % nv) - mean[1]).powi(2);
            }
        }
        [var[0] * self.cell_volume() / mass, var[1] * self.cell_volume() / mass]
    }
}

/// `G(x) = int g(u(x), v) F(x, v) dv`; the fluid receives `-G`.
pub fn coupling_force(f: &KineticGrid, u: &[[f64; 2]], drag: &DragSpec) -> ForceField {
    let nv = f.nv;
    let dv2 = f.dv() * f.dv();
    let centers: Vec<f64> = (0..nv).map(|a| f.v_center(a)).collect();
    let g: Vec<[f64; 2]> = f
        .values
        .par_chunks(f.slab_len())
        .zip(u.par_iter())
        .map(|(slab, &ux)| {
            let mut acc = [0.0; 2];
            for a in 0..nv {
                for b in 0..nv {
                    let w = slab[a * nv + b];
                    if w == 0.0 {
                        continue;
                    }
                    let d = eval_drag(ux, [centers[a], centers[b]], drag);
                    acc[0] += d[0] * w;
                    acc[1] += d[1] * w;
                }
            }
            [acc[0] * dv2, acc[1] * dv2]
        })
        .collect();
    ForceField { n: f.nx, gx: g.iter().map(|v| v[0]).collect(), gy: g.iter().map(|v| v[1]).collect() }
}

/// `int int g(u, v) . (u - v) F`, nonnegative for dissipative drag.
pub fn drag_dissipation(f: &KineticGrid, u: &[[f64; 2]], drag: &DragSpec) -> f64 {
    let nv = f.nv;
    let total: f64 = f
        .values
        .par_chunks(f.slab_len())
        .zip(u.par_iter())
        .map(|(slab, &ux)| {
            let mut acc = 0.0;
            for (ab, w) in slab.iter().enumerate() {
                let v = [f.v_center(ab / nv), f.v_center(ab % nv)];
                let d = eval_drag(ux, v, drag);
                acc += w * (d[0] * (ux[0] - v[0]) + d[1] * (ux[1] - v[1]));
            }
            acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total * f.cell_volume()
}

#[inline]
fn van_leer(a: f64, b: f64) -> f64 {
    if a * b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

/// Periodic shift of `line` by `s` cells in the positive direction.
fn shift_periodic(line: &mut [f64], s: f64, work: &mut Vec<f64>) {
    let n = line.len();
    let whole = s.floor();
    let frac = s - whole;
    let k = (whole as i64).rem_euclid(n as i64) as usize;
    if k != 0 {
        line.rotate_right(k);
    }
    if frac == 0.0 {
        return;
    }
    // Flux through the face i + 1/2 with Courant number `frac`.
    work.clear();
    work.resize(n, 0.0);
    for i in 0..n {
        let fm = line[(i + n - 1) % n];
        let f0 = line[i];
        let fp = line[(i + 1) % n];
        let slope = van_leer(f0 - fm, fp - f0);
        work[i] = frac * (f0 + 0.5 * (1.0 - frac) * slope);
    }
    for i in 0..n {
        line[i] += work[(i + n - 1) % n] - work[i];
    }
}

/// Tridiagonal solve with sub-, main and super-diagonals, in place on `rhs`.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let n = rhs.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

/// Crank-Nicolson for `F_t = D F_vv` with zero-flux ends, `r = D dt / dv^2 <= 1`.
#[derive(Debug, Clone)]
struct CrankNicolson {
    r: f64,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl CrankNicolson {
    fn new(n: usize, r: f64) -> Self {
        let mut lower = vec![-0.5 * r; n];
        let mut diag = vec![1.0 + r; n];
        let mut upper = vec![-0.5 * r; n];
        lower[0] = 0.0;
        upper[n - 1] = 0.0;
        diag[0] = 1.0 + 0.5 * r;
        diag[n - 1] = 1.0 + 0.5 * r;
        if n == 1 {
            diag[0] = 1.0;
        }
        Self { r, lower, diag, upper }
    }

    fn apply(&self, line: &mut [f64], rhs: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        let n = line.len();
        let h = 0.5 * self.r;
        rhs.clear();
        rhs.extend((0..n).map(|i| {
            let left = if i > 0 { line[i - 1] - line[i] } else { 0.0 };
            let right = if i + 1 < n { line[i + 1] - line[i] } else { 0.0 };
            line[i] + h * (left + right)
        }));
        thomas(&self.lower, &self.diag, &self.upper, rhs, scratch);
        line.copy_from_slice(rhs);
    }
}

/// Coefficients of the kinetic equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticParams {
    pub sigma: f64,
    pub drag: DragSpec,
}

/// Largest `dt` allowed by the drift CFL condition `(max|g_1| + max|g_2|) (dt/2) / dv <= 1/2`.
pub fn drift_cfl_limit(f: &KineticGrid, u: &[[f64; 2]], drag: &DragSpec) -> f64 {
    let umax = u.iter().map(|w| w[0].hypot(w[1])).fold(0.0, f64::max);
    let gmax = drag.bound_for_relative_speed(umax + f.vmax * std::f64::consts::SQRT_2);
    if gmax == 0.0 {
        f64::INFINITY
    } else {
        f.dv() / (2.0 * gmax)
    }
}

fn x_transport(f: &mut KineticGrid, tau: f64) {
    let (nx, nv) = (f.nx, f.nv);
    let slab = nv * nv;
    let centers: Vec<f64> = (0..nv).map(|a| f.v_center(a)).collect();
    let values = &f.values;
    let shifted: Vec<Vec<f64>> = (0..slab)
        .into_par_iter()
        .map(|ab| {
            let (a, b) = (ab / nv, ab % nv);
            let mut plane: Vec<f64> = (0..nx * nx).map(|xi| values[xi * slab + ab]).collect();
            let mut line = vec![0.0; nx];
            let mut work = Vec::with_capacity(nx);
            let sx = centers[a] * tau * nx as f64;
            let sy = centers[b] * tau * nx as f64;
            for iy in 0..nx {
                for ix in 0..nx {
                    line[ix] = plane[ix * nx + iy];
                }
                shift_periodic(&mut line, sx, &mut work);
                for ix in 0..nx {
                    plane[ix * nx + iy] = line[ix];
                }
            }
            for ix in 0..nx {
                shift_periodic(&mut plane[ix * nx..(ix + 1) * nx], sy, &mut work);
            }
            plane
        })
        .collect();
    f.values.par_chunks_mut(slab).enumerate().for_each(|(xi, out)| {
        for (ab, o) in out.iter_mut().enumerate() {
            *o = shifted[ab][xi];
        }
    });
}

/// Face velocities of the drift in one slab: `ga[f * nv + b]` on faces normal to `v_1`
/// and `gb[a * (nv + 1) + f]` on faces normal to `v_2`.
fn drift_faces(u: [f64; 2], nv: usize, vmax: f64, drag: &DragSpec) -> (Vec<f64>, Vec<f64>) {
    let dv = 2.0 * vmax / nv as f64;
    let face = |f: usize| -vmax + f as f64 * dv;
    let center = |a: usize| -vmax + (a as f64 + 0.5) * dv;
    let mut ga = vec![0.0; (nv + 1) * nv];
    let mut gb = vec![0.0; nv * (nv + 1)];
    for f in 0..=nv {
        for b in 0..nv {
            ga[f * nv + b] = eval_drag(u, [face(f), center(b)], drag)[0];
        }
    }
    for a in 0..nv {
        for f in 0..=nv {
            gb[a * (nv + 1) + f] = eval_drag(u, [center(a), face(f)], drag)[1];
        }
    }
    (ga, gb)
}

/// `-div_v(g F)` on one slab; returns the outflow rate `dv * sum(outward boundary flux)`.
fn drift_rate(s: &[f64], ga: &[f64], gb: &[f64], nv: usize, dv: f64, rate: &mut [f64]) -> f64 {
    rate.iter_mut().for_each(|r| *r = 0.0);
    let at = |a: usize, b: usize| s[a * nv + b];
    let mut outflow = 0.0;
    // Faces normal to v_1.
    for b in 0..nv {
        for f in 0..=nv {
            let g = ga[f * nv + b];
            let flux = if f == 0 {
                if g < 0.0 {
                    outflow -= g * at(0, b);
                    g * at(0, b)
                } else {
                    0.0
                }
            } else if f == nv {
                if g > 0.0 {
                    outflow += g * at(nv - 1, b);
                    g * at(nv - 1, b)
                } else {
                    0.0
                }
            } else if g > 0.0 {
                let a = f - 1;
                let slope = if a == 0 { 0.0 } else { van_leer(at(a, b) - at(a - 1, b), at(a + 1, b) - at(a, b)) };
                g * (at(a, b) + 0.5 * slope)
            } else {
                let a = f;
                let slope = if a == nv - 1 { 0.0 } else { van_leer(at(a, b) - at(a - 1, b), at(a + 1, b) - at(a, b)) };
                g * (at(a, b) - 0.5 * slope)
            };
            if f > 0 {
                rate[(f - 1) * nv + b] -= flux / dv;
            }
            if f < nv {
                rate[f * nv + b] += flux / dv;
            }
        }
    }
    // Faces normal to v_2.
    for a in 0..nv {
        for f in 0..=nv {
            let g = gb[a * (nv + 1) + f];
            let flux = if f == 0 {
                if g < 0.0 {
                    outflow -= g * at(a, 0);
                    g * at(a, 0)
                } else {
                    0.0
                }
            } else if f == nv {
                if g > 0.0 {
                    outflow += g * at(a, nv - 1);
                    g * at(a, nv - 1)
                } else {
                    0.0
                }
            } else if g > 0.0 {
                let b = f - 1;
                let slope = if b == 0 { 0.0 } else { van_leer(at(a, b) - at(a, b - 1), at(a, b + 1) - at(a, b)) };
                g * (at(a, b) + 0.5 * slope)
            } else {
                let b = f;
                let slope = if b == nv - 1 { 0.0 } else { van_leer(at(a, b) - at(a, b - 1), at(a, b + 1) - at(a, b)) };
                g * (at(a, b) - 0.5 * slope)
            };
            if f > 0 {
                rate[a * nv + f - 1] -= flux / dv;
            }
            if f < nv {
                rate[a * nv + f] += flux / dv;
            }
        }
    }
    outflow * dv
}

fn v_drift(f: &mut KineticGrid, u: &[[f64; 2]], tau: f64, drag: &DragSpec) {
    if matches!(drag, DragSpec::Off) {
        return;
    }
    let (nv, vmax, dv) = (f.nv, f.vmax, f.dv());
    let inv_cells = 1.0 / (f.nx * f.nx) as f64;
    let leaks: Vec<f64> = f
        .values
        .par_chunks_mut(nv * nv)
        .zip(u.par_iter())
        .map(|(slab, &ux)| {
            let (ga, gb) = drift_faces(ux, nv, vmax, drag);
            let mut rate = vec![0.0; nv * nv];
            let out0 = drift_rate(slab, &ga, &gb, nv, dv, &mut rate);
            let stage: Vec<f64> = slab.iter().zip(&rate).map(|(s, r)| s + tau * r).collect();
            let out1 = drift_rate(&stage, &ga, &gb, nv, dv, &mut rate);
            for ((s, st), r) in slab.iter_mut().zip(&stage).zip(&rate) {
                *s = 0.5 * *s + 0.5 * (st + tau * r);
            }
            0.5 * tau * (out0 + out1) * inv_cells
        })
        .collect();
    f.leaked += leaks.iter().sum::<f64>();
}

fn v_diffusion(f: &mut KineticGrid, tau: f64, sigma: f64) {
    if sigma == 0.0 || tau == 0.0 {
        return;
    }
    let nv = f.nv;
    let dv = f.dv();
    let r_total = 0.5 * sigma * sigma * tau / (dv * dv);
    let substeps = r_total.ceil().max(1.0) as usize;
    let cn = CrankNicolson::new(nv, r_total / substeps as f64);
    f.values.par_chunks_mut(nv * nv).for_each(|slab| {
        let mut rhs = Vec::with_capacity(nv);
        let mut scratch = Vec::with_capacity(nv);
        let mut line = vec![0.0; nv];
        for _ in 0..substeps {
            for a in 0..nv {
                cn.apply(&mut slab[a * nv..(a + 1) * nv], &mut rhs, &mut scratch);
            }
            for b in 0..nv {
                for a in 0..nv {
                    line[a] = slab[a * nv + b];
                }
                cn.apply(&mut line, &mut rhs, &mut scratch);
                for a in 0..nv {
                    slab[a * nv + b] = line[a];
                }
            }
        }
    });
}

/// One Strang-split step of the Vlasov-Fokker-Planck equation with `u` frozen at the
/// spatial nodes.
pub fn vfp_step(f: &mut KineticGrid, u: &[[f64; 2]], dt: f64, params: &KineticParams) -> Result<(), KineticError> {
    if u.len() != f.nx * f.nx {
        return Err(KineticError::GridMismatch { kinetic: f.nx, fluid: (u.len() as f64).sqrt() as usize });
    }
    let limit = drift_cfl_limit(f, u, &params.drag);
    if dt > limit {
        return Err(KineticError::Cfl { dt, limit });
    }
    x_transport(f, 0.5 * dt);
    v_drift(f, u, 0.5 * dt, &params.drag);
    v_diffusion(f, dt, params.sigma);
    v_drift(f, u, 0.5 * dt, &params.drag);
    x_transport(f, 0.5 * dt);
    f.time += dt;
    let min = f.min();
    if !min.is_finite() {
        return Err(KineticError::BlowUp { time: f.time });
    }
    if min < NEGATIVITY_TOL {
        return Err(KineticError::Negative { min });
    }
    Ok(())
}

/// Physical samples of the fluid velocity at the grid nodes.
pub fn nodal_velocity(fluid: &FluidSolver, state: &FluidState) -> Vec<[f64; 2]> {
    let (ux, uy) = fluid.velocity(state).to_physical(fluid.fft());
    ux.into_iter().zip(uy).map(|(a, b)| [a, b]).collect()
}

/// Coupled fluid-kinetic stepper.
#[derive(Debug, Clone)]
pub struct VnsSolver {
    pub fluid: FluidSolver,
    pub params: KineticParams,
}

/// Quantities evaluated at the left end of a coupled step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledStep {
    pub force: ForceField,
    pub u_nodes: Vec<[f64; 2]>,
}

impl VnsSolver {
    pub fn new(fluid: FluidSolver, params: KineticParams) -> Self {
        Self { fluid, params }
    }

    /// Lie splitting: the coupling force and the kinetic update both use the pre-step `u`.
    pub fn step(&self, state: &mut FluidState, f: &mut KineticGrid, dt: f64) -> Result<CoupledStep, KineticError> {
        if f.nx != self.fluid.n() {
            return Err(KineticError::GridMismatch { kinetic: f.nx, fluid: self.fluid.n() });
        }
        let u_nodes = nodal_velocity(&self.fluid, state);
        let force = coupling_force(f, &u_nodes, &self.params.drag);
        vfp_step(f, &u_nodes, dt, &self.params)?;
        self.fluid.step(state, Some(&force), dt)?;
        Ok(CoupledStep { force, u_nodes })
    }
}

/// Integrates the coupled system to `t_end`, calling `observe` on the initial state and
/// then after every `cadence` steps (and the last step).
pub fn solve_vns<O>(
    solver: &VnsSolver,
    state: &mut FluidState,
    f: &mut KineticGrid,
    t_end: f64,
    dt: f64,
    cadence: usize,
    mut observe: O,
) -> Result<(), KineticError>
where
    O: FnMut(usize, &FluidState, &KineticGrid),
{
    let steps = (t_end / dt).round() as usize;
    observe(0, state, f);
    for k in 1..=steps {
        solver.step(state, f, dt)?;
        if k % cadence.max(1) == 0 || k == steps {
            observe(k, state, f);
        }
    }
    Ok(())
}
