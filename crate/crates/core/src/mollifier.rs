//! Smoothing kernels for the particle-fluid coupling.
//!
//! The phase-space mollifier is the product `theta(x, v) = theta0(x) theta1(v)` with
//!
//! * `theta0(x) = c0 exp(-sqrt(1 + |x|^2))`, which satisfies `|grad theta0| <= theta0`
//!   everywhere (its logarithm is 1-Lipschitz), and
//! * `theta1(v) = c1 exp(-1 / (1 - |v|^2))` on the open unit disk, zero outside.
//!
//! Rescaled kernels are `theta^eps(x, v) = eps^{-2d} theta(x / eps, v / eps)` and the
//! spatial factor is periodized over the unit torus. The scale is coupled to the particle
//! count through `eps_N = N^{-beta/d}` with `0 < beta < d / (3d + 2)`.
//!
//! Two exact representations of the periodized spatial kernel are available: a lattice
//! image sum and a Fourier series whose coefficients are the closed-form transform of
//! `theta0`. Both are truncated only where the dropped terms fall below `TAIL_TOL`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};
use thiserror::Error;

/// Spatial dimension of the torus and of the velocity space.
pub const DIM: usize = 2;

/// Terms smaller than this are dropped from lattice and Fourier sums.
pub const TAIL_TOL: f64 = 1e-17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MollifierError {
    #[error("beta must be in (0, {upper}) for d = {dim}, got {beta}")]
    BetaOutOfRange { beta: f64, upper: f64, dim: usize },
    #[error("particle count must be at least 1")]
    ZeroParticles,
    #[error("only d = 2 is supported, got {0}")]
    Dimension(usize),
    #[error("kernel scale must lie in (0, 1], got {0}")]
    Scale(f64),
}

/// Upper end of the admissible interval for `beta`: `d / (3d + 2)`.
pub fn beta_upper_bound(dim: usize) -> f64 {
    let d = dim as f64;
    d / (3.0 * d + 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpatialProfile {
    /// `exp(-sqrt(1 + |x|^2))`
    #[default]
    SoftExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocityProfile {
    /// `exp(-1 / (1 - |v|^2))` on the unit disk.
    #[default]
    Bump,
}

/// Validated mollifier parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    beta: f64,
    dim: usize,
    profile0: SpatialProfile,
    profile1: VelocityProfile,
}

impl MollifierSpec {
    pub fn new(beta: f64) -> Result<Self, MollifierError> {
        Self::with_profiles(beta, DIM, SpatialProfile::default(), VelocityProfile::default())
    }

    pub fn with_profiles(
        beta: f64,
        dim: usize,
        profile0: SpatialProfile,
        profile1: VelocityProfile,
    ) -> Result<Self, MollifierError> {
        if dim != DIM {
            return Err(MollifierError::Dimension(dim));
        }
        let upper = beta_upper_bound(dim);
        if !(beta > 0.0 && beta < upper) {
            return Err(MollifierError::BetaOutOfRange { beta, upper, dim });
        }
        Ok(Self { beta, dim, profile0, profile1 })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile0(&self) -> SpatialProfile {
        self.profile0
    }

    pub fn profile1(&self) -> VelocityProfile {
        self.profile1
    }

    pub fn c0(&self) -> f64 {
        spatial_normalization()
    }

    pub fn c1(&self) -> f64 {
        velocity_normalization()
    }
}

/// `eps_N = N^{-beta/d}`.
pub fn epsilon_for(n: u64, spec: &MollifierSpec) -> Result<f64, MollifierError> {
    if n == 0 {
        return Err(MollifierError::ZeroParticles);
    }
    let upper = beta_upper_bound(spec.dim);
    if !(spec.beta > 0.0 && spec.beta < upper) {
        return Err(MollifierError::BetaOutOfRange { beta: spec.beta, upper, dim: spec.dim });
    }
    Ok((n as f64).powf(-spec.beta / spec.dim as f64))
}

/// Exponential integral `E1(1)` from its convergent series.
fn exp_integral_e1_at_one() -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut sum = 0.0;
    let mut factorial = 1.0;
    for k in 1..40 {
        factorial *= k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / (k as f64 * factorial);
    }
    -EULER_GAMMA - sum
}

/// `c0` with `c0 * int exp(-sqrt(1+|x|^2)) dx = 1`; the integral is `4 pi / e`.
pub fn spatial_normalization() -> f64 {
    E / (4.0 * PI)
}

/// `c1` with `c1 * int_{|v|<1} exp(-1/(1-|v|^2)) dv = 1`; the integral is
/// `pi (e^{-1} - E1(1))`.
pub fn velocity_normalization() -> f64 {
    1.0 / (PI * ((-1.0f64).exp() - exp_integral_e1_at_one()))
}

/// Unscaled spatial profile `theta0(x)`.
pub fn theta0(x: [f64; 2]) -> f64 {
    spatial_normalization() * (-(1.0 + x[0] * x[0] + x[1] * x[1]).sqrt()).exp()
}

/// Gradient of the unscaled spatial profile.
pub fn grad_theta0(x: [f64; 2]) -> [f64; 2] {
    let root = (1.0 + x[0] * x[0] + x[1] * x[1]).sqrt();
    let value = spatial_normalization() * (-root).exp();
    [-value * x[0] / root, -value * x[1] / root]
}

/// Unscaled velocity profile `theta1(v)`; exactly zero for `|v| >= 1`.
pub fn theta1(v: [f64; 2]) -> f64 {
    let r2 = v[0] * v[0] + v[1] * v[1];
    if r2 >= 1.0 {
        0.0
    } else {
        velocity_normalization() * (-1.0 / (1.0 - r2)).exp()
    }
}

/// Fourier transform `int theta0(x) exp(-2 pi i xi.x) dx` as a function of `|xi|`.
pub fn theta0_hat(xi_norm: f64) -> f64 {
    let s = (1.0 + 4.0 * PI * PI * xi_norm * xi_norm).sqrt();
    0.5 * (1.0 - s).exp() * (1.0 + s) / (s * s * s)
}

/// Rescaled velocity kernel `eps^{-2} theta1(v / eps)`.
pub fn eval_theta1(v: [f64; 2], eps: f64) -> f64 {
    theta1([v[0] / eps, v[1] / eps]) / (eps * eps)
}

/// Rescaled periodized spatial kernel at a point of the torus.
pub fn eval_theta0(x: [f64; 2], eps: f64) -> f64 {
    PeriodicKernel::new(eps).eval(x)
}

/// Which exact series is summed when evaluating the periodized kernel pointwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelRoute {
    Lattice,
    Fourier,
}

/// `theta^{0,eps}` periodized over the unit torus.
#[derive(Debug, Clone)]
pub struct PeriodicKernel {
    eps: f64,
    mode_cutoff: i64,
    image_cutoff: i64,
    route: KernelRoute,
}

impl PeriodicKernel {
    /// Panics if `eps` is outside `(0, 1]`; use [`PeriodicKernel::try_new`] to check.
    pub fn new(eps: f64) -> Self {
        Self::try_new(eps).expect("kernel scale out of range")
    }

    pub fn try_new(eps: f64) -> Result<Self, MollifierError> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(MollifierError::Scale(eps));
        }
        let mode_cutoff = fourier_cutoff(eps);
        let image_cutoff = lattice_cutoff(eps);
        let fourier_cost = (2 * mode_cutoff + 1).pow(2);
        let lattice_cost = (2 * image_cutoff + 1).pow(2);
        let route = if fourier_cost <= lattice_cost { KernelRoute::Fourier } else { KernelRoute::Lattice };
        Ok(Self { eps, mode_cutoff, image_cutoff, route })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Largest `|k|_inf` whose Fourier coefficient can exceed [`TAIL_TOL`].
    pub fn mode_cutoff(&self) -> i64 {
        self.mode_cutoff
    }

    pub fn route(&self) -> KernelRoute {
        self.route
    }

    /// Fourier coefficient of the periodized kernel for the integer wavevector `k`.
    pub fn coefficient(&self, k: [i64; 2]) -> f64 {
        let kk = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
        theta0_hat(self.eps * kk)
    }

    pub fn coefficient_radial(&self, k_norm: f64) -> f64 {
        theta0_hat(self.eps * k_norm)
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self.route {
            KernelRoute::Fourier => self.eval_fourier(x),
            KernelRoute::Lattice => self.eval_lattice(x),
        }
    }

    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        match self.route {
            KernelRoute::Fourier => self.grad_fourier(x),
            KernelRoute::Lattice => self.grad_lattice(x),
        }
    }

    /// Sum over lattice images `eps^{-2} theta0((x + l) / eps)`.
    pub fn eval_lattice(&self, x: [f64; 2]) -> f64 {
        let x = wrap_centered(x);
        let inv = 1.0 / self.eps;
        let scale = inv * inv;
        let mut sum = 0.0;
        let l = self.image_cutoff;
        for i in -l..=l {
            for j in -l..=l {
                let p = [(x[0] + i as f64) * inv, (x[1] + j as f64) * inv];
                sum += scale * theta0(p);
            }
        }
        sum
    }

    fn grad_lattice(&self, x: [f64; 2]) -> [f64; 2] {
        let x = wrap_centered(x);
        let inv = 1.0 / self.eps;
        let scale = inv * inv * inv;
        let mut g = [0.0; 2];
        let l = self.image_cutoff;
        for i in -l..=l {
            for j in -l..=l {
                let p = [(x[0] + i as f64) * inv, (x[1] + j as f64) * inv];
                let d = grad_theta0(p);
                g[0] += scale * d[0];
                g[1] += scale * d[1];
            }
        }
        g
    }

    /// Fourier series `sum_k theta0_hat(eps |k|) exp(2 pi i k.x)`.
    pub fn eval_fourier(&self, x: [f64; 2]) -> f64 {
        let k = self.mode_cutoff;
        let cx = cos_table(x[0], k);
        let cy = cos_table(x[1], k);
        let sx = sin_table(x[0], k);
        let sy = sin_table(x[1], k);
        // Even kernel: only cos(2 pi k.x) survives; expand it into the separable tables.
        let mut sum = 0.0;
        for i in -k..=k {
            let ia = i.unsigned_abs() as usize;
            let (ci, si) = (cx[ia], sx[ia] * i.signum() as f64);
            for j in -k..=k {
                let c = self.coefficient([i, j]);
                if c < TAIL_TOL {
                    continue;
                }
                let ja = j.unsigned_abs() as usize;
                let (cj, sj) = (cy[ja], sy[ja] * j.signum() as f64);
                sum += c * (ci * cj - si * sj);
            }
        }
        sum
    }

    fn grad_fourier(&self, x: [f64; 2]) -> [f64; 2] {
        let k = self.mode_cutoff;
        let cx = cos_table(x[0], k);
        let cy = cos_table(x[1], k);
        let sx = sin_table(x[0], k);
        let sy = sin_table(x[1], k);
        let mut g = [0.0; 2];
        for i in -k..=k {
            let ia = i.unsigned_abs() as usize;
            let (ci, si) = (cx[ia], sx[ia] * i.signum() as f64);
            for j in -k..=k {
                let c = self.coefficient([i, j]);
                if c < TAIL_TOL {
                    continue;
                }
                let ja = j.unsigned_abs() as usize;
                let (cj, sj) = (cy[ja], sy[ja] * j.signum() as f64);
                // d/dx cos(2 pi k.x) = -2 pi k sin(2 pi k.x)
                let s = si * cj + ci * sj;
                g[0] -= 2.0 * PI * i as f64 * c * s;
                g[1] -= 2.0 * PI * j as f64 * c * s;
            }
        }
        g
    }
}

/// Smallest `K` with `theta0_hat(eps K) < TAIL_TOL`.
fn fourier_cutoff(eps: f64) -> i64 {
    let mut k = 0i64;
    while theta0_hat(eps * k as f64) >= TAIL_TOL {
        k += 1;
    }
    k
}

/// Number of lattice shells needed so the nearest dropped image is below `TAIL_TOL`.
fn lattice_cutoff(eps: f64) -> i64 {
    // Dropped images sit at distance >= L - 1/2 from any point of the centered cell.
    let peak = spatial_normalization() / (eps * eps);
    let mut l = 1i64;
    loop {
        let r = (l as f64 - 0.5) / eps;
        if peak * (-(1.0 + r * r).sqrt()).exp() < TAIL_TOL * 1e-3 {
            return l;
        }
        l += 1;
    }
}

fn wrap_centered(x: [f64; 2]) -> [f64; 2] {
    [x[0] - x[0].round(), x[1] - x[1].round()]
}

fn cos_table(x: f64, k: i64) -> Vec<f64> {
    (0..=k).map(|m| (2.0 * PI * m as f64 * x).cos()).collect()
}

fn sin_table(x: f64, k: i64) -> Vec<f64> {
    (0..=k).map(|m| (2.0 * PI * m as f64 * x).sin()).collect()
}
