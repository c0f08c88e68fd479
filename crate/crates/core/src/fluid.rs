//! Pseudo-spectral 2D Navier-Stokes on the unit torus in vorticity form.
//!
//! Conventions: `grad_perp = (-d_y, d_x)`, so `omega = grad_perp . u = d_x u_y - d_y u_x`
//! and the force `-G` in the momentum equation enters the vorticity equation as
//! `-grad_perp . G`. Vorticity has zero mean on the torus and cannot carry the spatially
//! constant part of `u`, so [`FluidState`] keeps that mean flow as a separate vector,
//! driven by `-mean(G)`.
//!
//! Time stepping is IMEX: the viscous term is integrated exactly with the factor
//! `exp(-nu |k|^2 dt)` and advection plus forcing go through a two-stage SSP Runge-Kutta
//! scheme; the nonlinear product is dealiased with the 2/3 rule.

use crate::mollifier::PeriodicKernel;
use crate::spectral::{index_of_mode, mode, Fft2, Wavenumbers};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("vorticity has nonzero mean {0:e}")]
    NonzeroMean(f64),
    #[error("CFL violated: dt = {dt:e} exceeds {limit:e} (max |u| = {max_speed:e})")]
    Cfl { dt: f64, limit: f64, max_speed: f64 },
    #[error("non-finite vorticity coefficients at t = {time}")]
    BlowUp { time: f64 },
    #[error("grid mismatch: expected n = {expected}, got {got}")]
    GridMismatch { expected: usize, got: usize },
}

/// Fourier coefficients of the vorticity on an `n x n` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVorticityField {
    pub n: usize,
    pub coeffs: Vec<Complex64>,
    pub time: f64,
}

impl SpectralVorticityField {
    pub fn zeros(n: usize) -> Self {
        Self { n, coeffs: vec![ZERO; n * n], time: 0.0 }
    }

    pub fn from_physical(values: &[f64], fft: &Fft2) -> Self {
        Self { n: fft.n(), coeffs: fft.forward_real(values), time: 0.0 }
    }

    pub fn to_physical(&self, fft: &Fft2) -> Vec<f64> {
        fft.inverse_real(&self.coeffs)
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Largest violation of `c_{-m} = conj(c_m)`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = self.coeffs[i * n + j];
                let b = self.coeffs[index_of_mode(-mode(i, n), n) * n + index_of_mode(-mode(j, n), n)];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }
}

/// Spectral velocity field, including the `k = 0` mean.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub n: usize,
    pub ux: Vec<Complex64>,
    pub uy: Vec<Complex64>,
}

impl VelocityField {
    pub fn zeros(n: usize) -> Self {
        Self { n, ux: vec![ZERO; n * n], uy: vec![ZERO; n * n] }
    }

    pub fn constant(n: usize, value: [f64; 2]) -> Self {
        let mut u = Self::zeros(n);
        u.ux[0] = Complex64::new(value[0], 0.0);
        u.uy[0] = Complex64::new(value[1], 0.0);
        u
    }

    pub fn from_physical(ux: &[f64], uy: &[f64], fft: &Fft2) -> Self {
        Self { n: fft.n(), ux: fft.forward_real(ux), uy: fft.forward_real(uy) }
    }

    pub fn to_physical(&self, fft: &Fft2) -> (Vec<f64>, Vec<f64>) {
        (fft.inverse_real(&self.ux), fft.inverse_real(&self.uy))
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.ux[0].re, self.uy[0].re]
    }

    /// Spectral divergence `i k . u_hat`, largest magnitude over all modes.
    pub fn max_divergence(&self, waves: &Wavenumbers) -> f64 {
        (0..self.n * self.n)
            .map(|idx| (self.ux[idx] * waves.kx[idx] + self.uy[idx] * waves.ky[idx]).norm())
            .fold(0.0, f64::max)
    }

    /// `1/2 int |u|^2 dx`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.ux.iter().chain(&self.uy).map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `int |grad u|^2 dx`.
    pub fn gradient_norm_sqr(&self, waves: &Wavenumbers) -> f64 {
        (0..self.n * self.n).map(|idx| waves.k2[idx] * (self.ux[idx].norm_sqr() + self.uy[idx].norm_sqr())).sum()
    }

    /// `int u . w dx` for real fields.
    pub fn inner(&self, other: &VelocityField) -> f64 {
        self.ux
            .iter()
            .zip(&other.ux)
            .chain(self.uy.iter().zip(&other.uy))
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }
}

/// Physical-grid samples of a vector force density.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    pub n: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl ForceField {
    pub fn zeros(n: usize) -> Self {
        Self { n, gx: vec![0.0; n * n], gy: vec![0.0; n * n] }
    }

    pub fn constant(n: usize, value: [f64; 2]) -> Self {
        Self { n, gx: vec![value[0]; n * n], gy: vec![value[1]; n * n] }
    }

    pub fn is_finite(&self) -> bool {
        self.gx.iter().chain(&self.gy).all(|v| v.is_finite())
    }

    /// Grid quadrature of each component.
    pub fn integral(&self) -> [f64; 2] {
        let w = 1.0 / (self.n * self.n) as f64;
        [self.gx.iter().sum::<f64>() * w, self.gy.iter().sum::<f64>() * w]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            gx: self.gx.iter().map(|v| v * s).collect(),
            gy: self.gy.iter().map(|v| v * s).collect(),
        }
    }
}

/// Vorticity plus the spatially constant velocity it cannot represent.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub omega: SpectralVorticityField,
    pub mean_flow: [f64; 2],
}

impl FluidState {
    pub fn new(omega: SpectralVorticityField) -> Self {
        Self { omega, mean_flow: [0.0; 2] }
    }

    pub fn n(&self) -> usize {
        self.omega.n
    }

    pub fn time(&self) -> f64 {
        self.omega.time
    }
}

/// `u_hat = i (k_y, -k_x) omega_hat / |k|^2`, `u_hat_0 = 0`.
pub fn biot_savart(omega: &SpectralVorticityField, waves: &Wavenumbers) -> Result<VelocityField, FluidError> {
    if omega.coeffs[0].norm() > 1e-12 {
        return Err(FluidError::NonzeroMean(omega.coeffs[0].norm()));
    }
    if waves.n != omega.n {
        return Err(FluidError::GridMismatch { expected: waves.n, got: omega.n });
    }
    let nn = omega.n * omega.n;
    let mut u = VelocityField::zeros(omega.n);
    let i_unit = Complex64::new(0.0, 1.0);
    for idx in 1..nn {
        let k2 = waves.k2[idx];
        let w = omega.coeffs[idx] / k2;
        u.ux[idx] = i_unit * waves.ky[idx] * w;
        u.uy[idx] = -i_unit * waves.kx[idx] * w;
    }
    Ok(u)
}

/// `-grad_perp . G = -(d_x G_y - d_y G_x)` in spectral form. The `k = 0` entry holds
/// zero; the mean of `G` is read separately by the solver.
pub fn curl_force(force: &ForceField, fft: &Fft2, waves: &Wavenumbers) -> Vec<Complex64> {
    let gx = fft.forward_real(&force.gx);
    let gy = fft.forward_real(&force.gy);
    let i_unit = Complex64::new(0.0, 1.0);
    (0..force.n * force.n)
        .map(|idx| -(i_unit * waves.kx[idx] * gy[idx] - i_unit * waves.ky[idx] * gx[idx]))
        .collect()
}

/// Convolution with the periodized spatial kernel, by spectral multiplication.
pub fn mollify_field(u: &VelocityField, kernel: &PeriodicKernel) -> VelocityField {
    let n = u.n;
    let mut out = u.clone();
    for i in 0..n {
        let mx = mode(i, n);
        for j in 0..n {
            let my = mode(j, n);
            let c = kernel.coefficient([mx, my]);
            out.ux[i * n + j] *= c;
            out.uy[i * n + j] *= c;
        }
    }
    out
}

/// Viscous Navier-Stokes stepper for a fixed grid.
#[derive(Debug, Clone)]
pub struct FluidSolver {
    n: usize,
    viscosity: f64,
    fft: Fft2,
    waves: Wavenumbers,
}

impl FluidSolver {
    pub fn new(n: usize, viscosity: f64) -> Self {
        Self { n, viscosity, fft: Fft2::new(n), waves: Wavenumbers::new(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn waves(&self) -> &Wavenumbers {
        &self.waves
    }

    /// Full velocity including the mean flow.
    pub fn velocity(&self, state: &FluidState) -> VelocityField {
        let mut u = biot_savart(&state.omega, &self.waves).expect("vorticity mean drifted from zero");
        u.ux[0] = Complex64::new(state.mean_flow[0], 0.0);
        u.uy[0] = Complex64::new(state.mean_flow[1], 0.0);
        u
    }

    pub fn max_speed(&self, state: &FluidState) -> f64 {
        let (ux, uy) = self.velocity(state).to_physical(&self.fft);
        ux.iter().zip(&uy).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max)
    }

    /// `dt <= 0.5 dx / max|u|`.
    pub fn cfl_limit(&self, state: &FluidState) -> f64 {
        let speed = self.max_speed(state);
        if speed == 0.0 {
            f64::INFINITY
        } else {
            0.5 / (self.n as f64 * speed)
        }
    }

    /// Dealiased `-(u . grad omega)` in spectral form.
    fn advection(&self, omega: &[Complex64], mean_flow: [f64; 2]) -> Vec<Complex64> {
        let n = self.n;
        let nn = n * n;
        let i_unit = Complex64::new(0.0, 1.0);
        let mut ux = vec![ZERO; nn];
        let mut uy = vec![ZERO; nn];
        let mut wx = vec![ZERO; nn];
        let mut wy = vec![ZERO; nn];
        for idx in 1..nn {
            let w = omega[idx];
            let k2 = self.waves.k2[idx];
            ux[idx] = i_unit * self.waves.ky[idx] * w / k2;
            uy[idx] = -i_unit * self.waves.kx[idx] * w / k2;
            wx[idx] = i_unit * self.waves.kx[idx] * w;
            wy[idx] = i_unit * self.waves.ky[idx] * w;
        }
        ux[0] = Complex64::new(mean_flow[0], 0.0);
        uy[0] = Complex64::new(mean_flow[1], 0.0);
        for buf in [&mut ux, &mut uy, &mut wx, &mut wy] {
            self.fft.inverse(buf);
        }
        let mut product: Vec<Complex64> =
            (0..nn).map(|idx| Complex64::new(-(ux[idx].re * wx[idx].re + uy[idx].re * wy[idx].re), 0.0)).collect();
        self.fft.forward(&mut product);
        for (p, &keep) in product.iter_mut().zip(&self.waves.dealias) {
            if !keep {
                *p = ZERO;
            }
        }
        product[0] = ZERO;
        product
    }

    /// One IMEX step. `forcing` is the field `G` that enters the momentum equation as `-G`,
    /// held fixed over the step.
    pub fn step(&self, state: &mut FluidState, forcing: Option<&ForceField>, dt: f64) -> Result<(), FluidError> {
        if state.n() != self.n {
            return Err(FluidError::GridMismatch { expected: self.n, got: state.n() });
        }
        let limit = self.cfl_limit(state);
        if dt > limit {
            return Err(FluidError::Cfl { dt, limit, max_speed: 0.5 / (self.n as f64 * limit) });
        }
        let nn = self.n * self.n;
        let (source, mean_force) = match forcing {
            Some(g) => {
                if g.n != self.n {
                    return Err(FluidError::GridMismatch { expected: self.n, got: g.n });
                }
                (curl_force(g, &self.fft, &self.waves), g.integral())
            }
            None => (vec![ZERO; nn], [0.0; 2]),
        };
        let decay: Vec<f64> = self.waves.k2.iter().map(|k2| (-self.viscosity * k2 * dt).exp()).collect();
        let w0 = &state.omega.coeffs;
        let mean0 = state.mean_flow;
        let mean1 = [mean0[0] - dt * mean_force[0], mean0[1] - dt * mean_force[1]];

        let rhs0 = self.advection(w0, mean0);
        let stage: Vec<Complex64> =
            (0..nn).map(|idx| decay[idx] * (w0[idx] + dt * (rhs0[idx] + source[idx]))).collect();
        let rhs1 = self.advection(&stage, mean1);
        let next: Vec<Complex64> = (0..nn)
            .map(|idx| 0.5 * decay[idx] * w0[idx] + 0.5 * (stage[idx] + dt * (rhs1[idx] + source[idx])))
            .collect();

        if next.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(FluidError::BlowUp { time: state.omega.time });
        }
        state.omega.coeffs = next;
        state.omega.coeffs[0] = ZERO;
        state.omega.time += dt;
        state.mean_flow = mean1;
        Ok(())
    }

    /// `||omega||^2`.
    pub fn enstrophy(&self, state: &FluidState) -> f64 {
        state.omega.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `||grad omega||^2`.
    pub fn grad_enstrophy(&self, state: &FluidState) -> f64 {
        state.omega.coeffs.iter().zip(&self.waves.k2).map(|(c, k2)| k2 * c.norm_sqr()).sum()
    }

    /// `1/2 ||u||^2`, mean flow included.
    pub fn kinetic_energy(&self, state: &FluidState) -> f64 {
        self.velocity(state).kinetic_energy()
    }

    /// `||grad u||^2`, which equals the enstrophy for divergence-free fields.
    pub fn dissipation_rate(&self, state: &FluidState) -> f64 {
        self.enstrophy(state)
    }
}

/// Initial fluid data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialVelocity {
    Zero,
    /// `omega = amplitude sin(2 pi x) sin(2 pi y)`.
    TaylorGreen { amplitude: f64 },
    /// Divergence-free field with flat energy spectrum on `kmin <= |m| <= kmax`, random
    /// phases from `seed`, scaled to the given root-mean-square speed.
    RandomBand { kmin: f64, kmax: f64, rms: f64, seed: u64 },
}

impl Default for InitialVelocity {
    fn default() -> Self {
        InitialVelocity::RandomBand { kmin: 1.0, kmax: 3.0, rms: 0.1, seed: 7 }
    }
}

impl InitialVelocity {
    pub fn build(&self, n: usize) -> FluidState {
        let fft = Fft2::new(n);
        let waves = Wavenumbers::new(n);
        match *self {
            InitialVelocity::Zero => FluidState::new(SpectralVorticityField::zeros(n)),
            InitialVelocity::TaylorGreen { amplitude } => {
                let values: Vec<f64> = (0..n * n)
                    .map(|idx| {
                        let (i, j) = (idx / n, idx % n);
                        let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                        amplitude * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()
                    })
                    .collect();
                let mut omega = SpectralVorticityField::from_physical(&values, &fft);
                omega.coeffs[0] = ZERO;
                FluidState::new(omega)
            }
            InitialVelocity::RandomBand { kmin, kmax, rms, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut omega = SpectralVorticityField::zeros(n);
                let reach = kmax.ceil() as i64;
                for mx in -reach..=reach {
                    for my in -reach..=reach {
                        // Fill one half-plane and mirror.
                        if mx < 0 || (mx == 0 && my <= 0) {
                            continue;
                        }
                        let r = ((mx * mx + my * my) as f64).sqrt();
                        if r < kmin || r > kmax || 3 * mx.unsigned_abs() >= n as u64 || 3 * my.unsigned_abs() >= n as u64 {
                            continue;
                        }
                        let phase: f64 = rng.gen::<f64>() * 2.0 * PI;
                        // Flat energy spectrum: |u_hat| = 1, so |omega_hat| = |k|.
                        let amp = 2.0 * PI * r;
                        let c = Complex64::from_polar(amp, phase);
                        omega.coeffs[index_of_mode(mx, n) * n + index_of_mode(my, n)] = c;
                        omega.coeffs[index_of_mode(-mx, n) * n + index_of_mode(-my, n)] = c.conj();
                    }
                }
                let u = biot_savart(&omega, &waves).expect("zero-mean by construction");
                let current = (2.0 * u.kinetic_energy()).sqrt();
                if current > 0.0 {
                    let s = rms / current;
                    for c in omega.coeffs.iter_mut() {
                        *c *= s;
                    }
                }
                let _ = fft;
                FluidState::new(omega)
            }
        }
    }
}
