//! Residual functionals of the weak formulation, evaluated along a trajectory on a fixed
//! catalog of test functions.
//!
//! ```text
//! Phi(u, F) = <u_T, phi_T> - <u_0, phi_0>
//!           - int_0^T ( <u, d_t phi> + <u, lap phi> + <u . grad phi, u> - <F, phi . g(u, v)> ) ds
//! Psi(u, F) = <F_T, psi_T> - <F_0, psi_0>
//!           - int_0^T <F, d_t psi + v . grad_x psi + g(u, v) . grad_v psi + (sigma^2/2) lap_v psi> ds
//! ```
//!
//! The pressure term drops out because every `phi` is divergence free. Time integrals use
//! the trapezoid rule over the observation times. For particle trajectories the martingale
//! `M = (sigma/N) sum_i int grad_v psi(X_i, V_i) . dW_i` is accumulated with left-point
//! (Ito) sums so that both `Psi` and `Psi - M` can be reported.

use crate::drag::{eval_drag, DragSpec};
use crate::fluid::VelocityField;
use crate::kinetic::{coupling_force, KineticGrid};
use crate::spectral::Fft2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeakError {
    #[error("test function support reaches |v| = {reach}, beyond the recorded range {vmax}")]
    Support { reach: f64, vmax: f64 },
    #[error("observation at t = {got} precedes the previous one at t = {previous}")]
    TimeOrder { previous: f64, got: f64 },
}

/// One Fourier mode of a stream function, `amplitude sin(2 pi m.x + phase) / (2 pi |m|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMode {
    pub mode: [i64; 2],
    pub amplitude: f64,
    pub phase: f64,
}

/// `phi = cos(omega t) grad_perp s(x)` for a trigonometric stream function `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceFreeField {
    pub modes: Vec<StreamMode>,
    #[serde(default)]
    pub omega: f64,
}

impl DivergenceFreeField {
    fn time_factor(&self, t: f64) -> (f64, f64) {
        ((self.omega * t).cos(), -self.omega * (self.omega * t).sin())
    }

    /// Spatial part at `x`: value, Jacobian `J[i][k] = d_k phi_i` and Laplacian.
    fn spatial(&self, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2], [f64; 2]) {
        let mut val = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        let mut lap = [0.0; 2];
        for m in &self.modes {
            let (mx, my) = (m.mode[0] as f64, m.mode[1] as f64);
            let norm = mx.hypot(my);
            let theta = 2.0 * PI * (mx * x[0] + my * x[1]) + m.phase;
            let (s, c) = theta.sin_cos();
            let dir = [-my / norm * m.amplitude, mx / norm * m.amplitude];
            for i in 0..2 {
                val[i] += dir[i] * c;
                jac[i][0] += -2.0 * PI * mx * dir[i] * s;
                jac[i][1] += -2.0 * PI * my * dir[i] * s;
                lap[i] += -4.0 * PI * PI * norm * norm * dir[i] * c;
            }
        }
        (val, jac, lap)
    }

    /// Value, time derivative, Jacobian and Laplacian at `(t, x)`.
    pub fn eval(&self, t: f64, x: [f64; 2]) -> FieldSample {
        let (val, jac, lap) = self.spatial(x);
        let (tau, dtau) = self.time_factor(t);
        FieldSample {
            value: [tau * val[0], tau * val[1]],
            dt: [dtau * val[0], dtau * val[1]],
            jacobian: [[tau * jac[0][0], tau * jac[0][1]], [tau * jac[1][0], tau * jac[1][1]]],
            laplacian: [tau * lap[0], tau * lap[1]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: [f64; 2],
    pub dt: [f64; 2],
    pub jacobian: [[f64; 2]; 2],
    pub laplacian: [f64; 2],
}

/// `psi = (1 + rate t) (offset + amplitude cos(2 pi m.x + phase)) b(|v - v0| / radius)`
/// with the bump `b(r) = exp(-1 / (1 - r^2))` on `r < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTest {
    pub offset: f64,
    pub amplitude: f64,
    pub mode: [i64; 2],
    pub phase: f64,
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample {
    pub value: f64,
    pub dt: f64,
    pub grad_x: [f64; 2],
    pub grad_v: [f64; 2],
    pub lap_v: f64,
}

impl PhaseTest {
    /// Largest `|v|` in the support.
    pub fn reach(&self) -> f64 {
        self.center[0].hypot(self.center[1]) + self.radius
    }

    /// Bump value, gradient and Laplacian in `v`.
    fn bump(&self, v: [f64; 2]) -> (f64, [f64; 2], f64) {
        let w = [v[0] - self.center[0], v[1] - self.center[1]];
        let r2 = self.radius * self.radius;
        let q = (w[0] * w[0] + w[1] * w[1]) / r2;
        if q >= 1.0 {
            return (0.0, [0.0; 2], 0.0);
        }
        let one = 1.0 - q;
        let b = (-1.0 / one).exp();
        let db = -b / (one * one);
        let d2b = b * (2.0 * q - 1.0) / one.powi(4);
        let grad = [db * 2.0 * w[0] / r2, db * 2.0 * w[1] / r2];
        // |grad q|^2 = 4 |w|^2 / R^4 = 4 q / R^2 and lap q = 4 / R^2 in two dimensions.
        let lap = d2b * 4.0 * q / r2 + db * 4.0 / r2;
        (b, grad, lap)
    }

    /// Spatial factor and its gradient.
    fn spatial(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let (mx, my) = (self.mode[0] as f64, self.mode[1] as f64);
        let theta = 2.0 * PI * (mx * x[0] + my * x[1]) + self.phase;
        let (s, c) = theta.sin_cos();
        (self.offset + self.amplitude * c, [-2.0 * PI * mx * self.amplitude * s, -2.0 * PI * my * self.amplitude * s])
    }

    pub fn eval(&self, t: f64, x: [f64; 2], v: [f64; 2]) -> PhaseSample {
        let (b, gb, lb) = self.bump(v);
        let tau = 1.0 + self.rate * t;
        if b == 0.0 {
            return PhaseSample { value: 0.0, dt: 0.0, grad_x: [0.0; 2], grad_v: [0.0; 2], lap_v: 0.0 };
        }
        let (h, gh) = self.spatial(x);
        PhaseSample {
            value: tau * h * b,
            dt: self.rate * h * b,
            grad_x: [tau * gh[0] * b, tau * gh[1] * b],
            grad_v: [tau * h * gb[0], tau * h * gb[1]],
            lap_v: tau * h * lb,
        }
    }
}

/// A test function of the weak formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Field(DivergenceFreeField),
    Phase(PhaseTest),
}

/// The fixed catalog used by runs and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCatalog {
    pub fields: Vec<DivergenceFreeField>,
    pub phases: Vec<PhaseTest>,
}

impl Default for TestCatalog {
    fn default() -> Self {
        let single = |mode: [i64; 2], phase: f64, omega: f64| DivergenceFreeField {
            modes: vec![StreamMode { mode, amplitude: 1.0, phase }],
            omega,
        };
        Self {
            fields: vec![
                single([1, 0], 0.0, 0.0),
                single([0, 1], 0.5, 0.0),
                single([1, 1], 1.0, PI),
                DivergenceFreeField {
                    modes: vec![
                        StreamMode { mode: [1, -1], amplitude: 0.7, phase: 0.3 },
                        StreamMode { mode: [2, 1], amplitude: 0.4, phase: -1.1 },
                    ],
                    omega: 0.0,
                },
            ],
            phases: vec![
                PhaseTest { offset: 1.0, amplitude: 0.5, mode: [1, 0], phase: 0.0, center: [0.0, 0.0], radius: 2.0, rate: 0.0 },
                PhaseTest { offset: 0.5, amplitude: 1.0, mode: [0, 1], phase: 0.7, center: [0.5, 0.0], radius: 1.5, rate: 0.0 },
                PhaseTest { offset: 1.0, amplitude: 0.8, mode: [1, 1], phase: 0.0, center: [-0.5, 0.5], radius: 2.5, rate: 1.0 },
                PhaseTest { offset: 0.0, amplitude: 1.0, mode: [1, -1], phase: 0.2, center: [0.0, -0.5], radius: 1.8, rate: 0.0 },
            ],
        }
    }
}

impl TestCatalog {
    pub fn max_reach(&self) -> f64 {
        self.phases.iter().map(|p| p.reach()).fold(0.0, f64::max)
    }
}

/// Phase-space side of an observation.
pub enum PhaseFrame<'a> {
    /// Particle states with the unmollified fluid velocity at each particle.
    Particles { x: &'a [[f64; 2]], v: &'a [[f64; 2]], u: &'a [[f64; 2]] },
    /// Gridded density with the fluid velocity at its spatial nodes.
    Grid { f: &'a KineticGrid, u: &'a [[f64; 2]] },
}

#[derive(Debug, Clone, PartialEq)]
struct Running {
    start: Vec<f64>,
    current: Vec<f64>,
    integral: Vec<f64>,
    last_integrand: Vec<f64>,
}

impl Running {
    fn new(k: usize) -> Self {
        Self { start: vec![0.0; k], current: vec![0.0; k], integral: vec![0.0; k], last_integrand: vec![0.0; k] }
    }

    fn residuals(&self) -> Vec<f64> {
        (0..self.start.len()).map(|k| self.current[k] - self.start[k] - self.integral[k]).collect()
    }
}

/// Online evaluation of `Phi` and `Psi` on a catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakResidualAccumulator {
    catalog: TestCatalog,
    sigma: f64,
    drag: DragSpec,
    last_time: Option<f64>,
    phi: Running,
    psi: Running,
    martingale: Vec<f64>,
}

impl WeakResidualAccumulator {
    pub fn new(catalog: TestCatalog, sigma: f64, drag: DragSpec) -> Self {
        let (nf, np) = (catalog.fields.len(), catalog.phases.len());
        Self { catalog, sigma, drag, last_time: None, phi: Running::new(nf), psi: Running::new(np), martingale: vec![0.0; np] }
    }

    pub fn catalog(&self) -> &TestCatalog {
        &self.catalog
    }

    /// Records the state at time `t`. `u` is the full spectral velocity (mean included).
    pub fn observe(&mut self, t: f64, u: &VelocityField, fft: &Fft2, frame: PhaseFrame<'_>) -> Result<(), WeakError> {
        if let Some(prev) = self.last_time {
            if t < prev {
                return Err(WeakError::TimeOrder { previous: prev, got: t });
            }
        }
        if let PhaseFrame::Grid { f, .. } = &frame {
            let reach = self.catalog.max_reach();
            if reach > f.vmax {
                return Err(WeakError::Support { reach, vmax: f.vmax });
            }
        }
        let (phi_pair, phi_rate) = self.fluid_terms(t, u, fft, &frame);
        let (psi_pair, psi_rate) = self.phase_terms(t, &frame);
        match self.last_time {
            None => {
                self.phi.start = phi_pair.clone();
                self.psi.start = psi_pair.clone();
            }
            Some(prev) => {
                let h = t - prev;
                for k in 0..phi_rate.len() {
                    self.phi.integral[k] += 0.5 * h * (self.phi.last_integrand[k] + phi_rate[k]);
                }
                for k in 0..psi_rate.len() {
                    self.psi.integral[k] += 0.5 * h * (self.psi.last_integrand[k] + psi_rate[k]);
                }
            }
        }
        self.phi.current = phi_pair;
        self.psi.current = psi_pair;
        self.phi.last_integrand = phi_rate;
        self.psi.last_integrand = psi_rate;
        self.last_time = Some(t);
        Ok(())
    }

    /// Adds `(sigma/N) sum grad_v psi(t, X_i, V_i) . dW_i` with left-point states.
    pub fn add_noise(&mut self, t: f64, x: &[[f64; 2]], v: &[[f64; 2]], dw: &[[f64; 2]]) {
        let n = x.len() as f64;
        for (k, p) in self.catalog.phases.iter().enumerate() {
            let s: f64 = (0..x.len())
                .map(|i| {
                    let g = p.eval(t, x[i], v[i]).grad_v;
                    g[0] * dw[i][0] + g[1] * dw[i][1]
                })
                .sum();
            self.martingale[k] += self.sigma * s / n;
        }
    }

    pub fn phi_residuals(&self) -> Vec<f64> {
        self.phi.residuals()
    }

    pub fn psi_residuals(&self) -> Vec<f64> {
        self.psi.residuals()
    }

    pub fn martingale(&self) -> &[f64] {
        &self.martingale
    }

    /// `Psi - M` per phase-space test function.
    pub fn psi_compensated(&self) -> Vec<f64> {
        self.psi.residuals().iter().zip(&self.martingale).map(|(a, b)| a - b).collect()
    }

    /// `sum |Phi| + sum |Psi|` over the catalog.
    pub fn total_abs(&self) -> f64 {
        self.phi_residuals().iter().chain(self.psi_residuals().iter()).map(|r| r.abs()).sum()
    }

    fn fluid_terms(&self, t: f64, u: &VelocityField, fft: &Fft2, frame: &PhaseFrame<'_>) -> (Vec<f64>, Vec<f64>) {
        let n = fft.n();
        let (ux, uy) = u.to_physical(fft);
        let w = 1.0 / (n * n) as f64;
        let mut pairs = Vec::with_capacity(self.catalog.fields.len());
        let mut rates = Vec::with_capacity(self.catalog.fields.len());
        for field in &self.catalog.fields {
            let (mut pair, mut rate) = (0.0, 0.0);
            for idx in 0..n * n {
                let x = [(idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64];
                let s = field.eval(t, x);
                let uu = [ux[idx], uy[idx]];
                pair += uu[0] * s.value[0] + uu[1] * s.value[1];
                rate += uu[0] * (s.dt[0] + s.laplacian[0]) + uu[1] * (s.dt[1] + s.laplacian[1]);
                // (u . grad phi) . u = sum_ik u_k d_k phi_i u_i
                for i in 0..2 {
                    rate += uu[i] * (uu[0] * s.jacobian[i][0] + uu[1] * s.jacobian[i][1]);
                }
            }
            let coupling = match frame {
                PhaseFrame::Particles { x, v, u } => {
                    let total: f64 = (0..x.len())
                        .map(|i| {
                            let phi = field.eval(t, x[i]).value;
                            let g = eval_drag(u[i], v[i], &self.drag);
                            phi[0] * g[0] + phi[1] * g[1]
                        })
                        .sum();
                    total / x.len() as f64
                }
                PhaseFrame::Grid { f, u } => {
                    let g = coupling_force(f, u, &self.drag);
                    let nx = f.nx;
                    let total: f64 = (0..nx * nx)
                        .map(|idx| {
                            let x = [(idx / nx) as f64 / nx as f64, (idx % nx) as f64 / nx as f64];
                            let phi = field.eval(t, x).value;
                            phi[0] * g.gx[idx] + phi[1] * g.gy[idx]
                        })
                        .sum();
                    total / (nx * nx) as f64
                }
            };
            pairs.push(pair * w);
            rates.push(rate * w - coupling);
        }
        (pairs, rates)
    }

    fn phase_terms(&self, t: f64, frame: &PhaseFrame<'_>) -> (Vec<f64>, Vec<f64>) {
        let half_s2 = 0.5 * self.sigma * self.sigma;
        let drag = self.drag;
        self.catalog
            .phases
            .iter()
            .map(|p| match frame {
                PhaseFrame::Particles { x, v, u } => {
                    let (mut pair, mut rate) = (0.0, 0.0);
                    for i in 0..x.len() {
                        let s = p.eval(t, x[i], v[i]);
                        let g = eval_drag(u[i], v[i], &drag);
                        pair += s.value;
                        rate += s.dt
                            + v[i][0] * s.grad_x[0]
                            + v[i][1] * s.grad_x[1]
                            + g[0] * s.grad_v[0]
                            + g[1] * s.grad_v[1]
                            + half_s2 * s.lap_v;
                    }
                    let n = x.len() as f64;
                    (pair / n, rate / n)
                }
                PhaseFrame::Grid { f, u } => {
                    let (nx, nv) = (f.nx, f.nv);
                    let vol = f.cell_volume();
                    let sums: Vec<(f64, f64)> = f
                        .values
                        .par_chunks(nv * nv)
                        .enumerate()
                        .map(|(idx, slab)| {
                            let x = [(idx / nx) as f64 / nx as f64, (idx % nx) as f64 / nx as f64];
                            let (mut pair, mut rate) = (0.0, 0.0);
                            for (ab, w) in slab.iter().enumerate() {
                                if *w == 0.0 {
                                    continue;
                                }
                                let vel = [f.v_center(ab / nv), f.v_center(ab % nv)];
                                let s = p.eval(t, x, vel);
                                if s.value == 0.0 && s.lap_v == 0.0 {
                                    continue;
                                }
                                let g = eval_drag(u[idx], vel, &drag);
                                pair += w * s.value;
                                rate += w
                                    * (s.dt
                                        + vel[0] * s.grad_x[0]
                                        + vel[1] * s.grad_x[1]
                                        + g[0] * s.grad_v[0]
                                        + g[1] * s.grad_v[1]
                                        + half_s2 * s.lap_v);
                            }
                            (pair, rate)
                        })
                        .collect();
                    let pair: f64 = sums.iter().map(|s| s.0).sum();
                    let rate: f64 = sums.iter().map(|s| s.1).sum();
                    (pair * vol, rate * vol)
                }
            })
            .unzip()
    }
}
