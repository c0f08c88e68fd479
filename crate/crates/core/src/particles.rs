//! The N-particle system: positions on the unit torus, planar velocities, Euler-Maruyama
//! stepping, force deposition onto the fluid grid and the mollified empirical density.
//!
//! Noise protocol: particle `i` at step `k` draws its Gaussian pair from a ChaCha8 stream
//! keyed by `(master seed, NOISE_DOMAIN)`, stream id `i`, word position `8k`. Initial
//! states use the same construction under `INIT_DOMAIN` starting at word 0. Every draw
//! is therefore a function of (seed, particle, step) only, independent of scheduling.

use crate::drag::{eval_drag, DragSpec};
use crate::fluid::{ForceField, VelocityField};
use crate::kinetic::{KineticGrid, VelocityGrid};
use crate::mollifier::{eval_theta1, PeriodicKernel};
use crate::spectral::{index_of_mode, mode, Fft2};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const NOISE_DOMAIN: u64 = 0x6e6f_6973_6500_0001;
const INIT_DOMAIN: u64 = 0x696e_6974_0000_0002;
/// Particles per parallel work unit; fixed so partial sums are combined in the same order
/// for every worker count.
pub const CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    #[error("velocity mixture weights sum to {0}, expected 1")]
    Unnormalized(f64),
    #[error("invalid initial density: {0}")]
    InvalidDensity(String),
    #[error("non-finite particle state at step {step}")]
    BlowUp { step: u64 },
    #[error("input length {got} does not match particle count {expected}")]
    Length { expected: usize, got: usize },
}

/// Spatial factor of the initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialLaw {
    #[default]
    Uniform,
    /// `1 + amplitude cos(2 pi mode . x)`, `|amplitude| < 1`.
    Cosine { amplitude: f64, mode: [i64; 2] },
}

impl SpatialLaw {
    pub fn density(&self, x: [f64; 2]) -> f64 {
        match *self {
            SpatialLaw::Uniform => 1.0,
            SpatialLaw::Cosine { amplitude, mode } => {
                1.0 + amplitude * (2.0 * PI * (mode[0] as f64 * x[0] + mode[1] as f64 * x[1])).cos()
            }
        }
    }
}

/// Isotropic Gaussian component of the velocity mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub std: f64,
}

/// Product-form initial density `F0(x, v) = a(x) b(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDensity {
    #[serde(default)]
    pub spatial: SpatialLaw,
    pub velocity: Vec<GaussianComponent>,
}

impl Default for InitialDensity {
    fn default() -> Self {
        Self {
            spatial: SpatialLaw::Uniform,
            velocity: vec![GaussianComponent { weight: 1.0, mean: [0.0, 0.0], std: 1.0 }],
        }
    }
}

impl InitialDensity {
    pub fn validate(&self) -> Result<(), ParticleError> {
        if self.velocity.is_empty() {
            return Err(ParticleError::InvalidDensity("empty velocity mixture".into()));
        }
        for c in &self.velocity {
            if !(c.std > 0.0 && c.std.is_finite()) || !(c.weight >= 0.0) || !c.mean.iter().all(|m| m.is_finite()) {
                return Err(ParticleError::InvalidDensity(format!("bad component {c:?}")));
            }
        }
        let total: f64 = self.velocity.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ParticleError::Unnormalized(total));
        }
        if let SpatialLaw::Cosine { amplitude, .. } = self.spatial {
            if !(amplitude.abs() < 1.0) {
                return Err(ParticleError::InvalidDensity(format!("cosine amplitude {amplitude} must satisfy |a| < 1")));
            }
        }
        Ok(())
    }

    pub fn spatial_density(&self, x: [f64; 2]) -> f64 {
        self.spatial.density(x)
    }

    pub fn velocity_density(&self, v: [f64; 2]) -> f64 {
        self.velocity
            .iter()
            .map(|c| {
                let r2 = (v[0] - c.mean[0]).powi(2) + (v[1] - c.mean[1]).powi(2);
                c.weight * (-0.5 * r2 / (c.std * c.std)).exp() / (2.0 * PI * c.std * c.std)
            })
            .sum()
    }

    pub fn density(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.spatial_density(x) * self.velocity_density(v)
    }

    /// `max_c (|mean_c| + std_c)`, the scale used to size truncated velocity domains.
    pub fn velocity_spread(&self) -> f64 {
        self.velocity.iter().map(|c| c.mean[0].hypot(c.mean[1]) + c.std).fold(0.0, f64::max)
    }

    /// Largest `|mean_c|`.
    pub fn max_mean_speed(&self) -> f64 {
        self.velocity.iter().map(|c| c.mean[0].hypot(c.mean[1])).fold(0.0, f64::max)
    }

    /// Largest component standard deviation.
    pub fn max_std(&self) -> f64 {
        self.velocity.iter().map(|c| c.std).fold(0.0, f64::max)
    }
}

fn stream_key(seed: u64, domain: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key
}

#[inline]
fn unit_open(bits: u64) -> f64 {
    // (0, 1]: never zero, so the logarithm below is finite.
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let u1 = unit_open(rng.next_u64());
    let u2 = unit_open(rng.next_u64());
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    [r * c, r * s]
}

/// Per-particle counter-based Gaussian streams realizing the Brownian motions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStreams {
    pub seed: u64,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Standard Gaussian pair for `particle` at `step`.
    pub fn normal_pair(&self, particle: u64, step: u64) -> [f64; 2] {
        let mut rng = ChaCha8Rng::from_seed(stream_key(self.seed, NOISE_DOMAIN));
        rng.set_stream(particle);
        rng.set_word_pos(8 * step as u128);
        box_muller(&mut rng)
    }

    fn initial_rng(&self, particle: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(stream_key(self.seed, INIT_DOMAIN));
        rng.set_stream(particle);
        rng
    }
}

/// Uniformly weighted or weighted atoms in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub x: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn uniform(x: Vec<[f64; 2]>, v: Vec<[f64; 2]>) -> Self {
        let w = 1.0 / x.len().max(1) as f64;
        let weights = vec![w; x.len()];
        Self { x, v, weights }
    }

    pub fn weighted(x: Vec<[f64; 2]>, v: Vec<[f64; 2]>, weights: Vec<f64>) -> Self {
        Self { x, v, weights }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Positions, velocities and noise streams of the particle system.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub x: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
    pub sigma: f64,
    pub streams: NoiseStreams,
    pub time: f64,
    pub step: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(1/2N) sum |V_i|^2`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.v.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>() / self.len() as f64
    }

    /// `(1/N) sum |V_i|^gamma`.
    pub fn velocity_moment(&self, gamma: f64) -> f64 {
        self.v.iter().map(|v| v[0].hypot(v[1]).powf(gamma)).sum::<f64>() / self.len() as f64
    }

    pub fn mean_velocity(&self) -> [f64; 2] {
        let n = self.len() as f64;
        let s = self.v.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
        [s[0] / n, s[1] / n]
    }

    pub fn max_speed(&self) -> f64 {
        self.v.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
    }

    pub fn empirical_measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(self.x.clone(), self.v.clone())
    }
}

#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0.
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// `n` i.i.d. draws from `f0`, reproducible from `seed`.
pub fn sample_initial(f0: &InitialDensity, n: usize, seed: u64, sigma: f64) -> Result<ParticleEnsemble, ParticleError> {
    f0.validate()?;
    let streams = NoiseStreams::new(seed);
    let states: Vec<([f64; 2], [f64; 2])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.initial_rng(i as u64);
            let x = match f0.spatial {
                SpatialLaw::Uniform => [unit_open(rng.next_u64()) % 1.0, unit_open(rng.next_u64()) % 1.0],
                SpatialLaw::Cosine { amplitude, .. } => loop {
                    let x = [unit_open(rng.next_u64()) % 1.0, unit_open(rng.next_u64()) % 1.0];
                    let accept = unit_open(rng.next_u64()) * (1.0 + amplitude.abs());
                    if accept <= f0.spatial.density(x) {
                        break x;
                    }
                },
            };
            let pick = unit_open(rng.next_u64());
            let mut acc = 0.0;
            let mut comp = &f0.velocity[f0.velocity.len() - 1];
            for c in &f0.velocity {
                acc += c.weight;
                if pick <= acc {
                    comp = c;
                    break;
                }
            }
            let z = box_muller(&mut rng);
            (x, [comp.mean[0] + comp.std * z[0], comp.mean[1] + comp.std * z[1]])
        })
        .collect();
    let (x, v) = states.into_iter().unzip();
    Ok(ParticleEnsemble { x, v, sigma, streams, time: 0.0, step: 0 })
}

/// `g(u_eps(X_i), V_i)` for every particle.
pub fn drag_forces(ens: &ParticleEnsemble, u_samples: &[[f64; 2]], drag: &DragSpec) -> Vec<[f64; 2]> {
    ens.v.iter().zip(u_samples).map(|(v, u)| eval_drag(*u, *v, drag)).collect()
}

/// One Euler-Maruyama step. Returns the realized Brownian increments `dW_i`.
pub fn em_step(
    ens: &mut ParticleEnsemble,
    u_samples: &[[f64; 2]],
    dt: f64,
    drag: &DragSpec,
) -> Result<Vec<[f64; 2]>, ParticleError> {
    if u_samples.len() != ens.len() {
        return Err(ParticleError::Length { expected: ens.len(), got: u_samples.len() });
    }
    let sigma = ens.sigma;
    let streams = ens.streams;
    let step = ens.step;
    let sqrt_dt = dt.sqrt();
    let dw: Vec<[f64; 2]> = ens
        .x
        .par_iter_mut()
        .zip(ens.v.par_iter_mut())
        .zip(u_samples.par_iter())
        .enumerate()
        .with_min_len(CHUNK)
        .map(|(i, ((x, v), u))| {
            let g = eval_drag(*u, *v, drag);
            let dw = if sigma != 0.0 {
                let z = streams.normal_pair(i as u64, step);
                [sqrt_dt * z[0], sqrt_dt * z[1]]
            } else {
                [0.0, 0.0]
            };
            x[0] = wrap_unit(x[0] + v[0] * dt);
            x[1] = wrap_unit(x[1] + v[1] * dt);
            v[0] += g[0] * dt + sigma * dw[0];
            v[1] += g[1] * dt + sigma * dw[1];
            dw
        })
        .collect();
    if ens.v.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(ParticleError::BlowUp { step });
    }
    ens.step += 1;
    ens.time += dt;
    Ok(dw)
}

/// Point evaluation of a (possibly mollified) spectral velocity field.
///
/// Grids with `n <= 64` are summed directly over their Fourier modes; finer grids use
/// bicubic Hermite interpolation with spectrally exact nodal derivatives, whose error is
/// `O(dx^4 ||u||_{C^4})`.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    route: SamplerRoute,
}

#[derive(Debug, Clone)]
enum SamplerRoute {
    Direct { modes_x: Vec<i64>, modes_y: Vec<i64>, cx: Vec<Complex64>, cy: Vec<Complex64> },
    Bicubic { x: BicubicGrid, y: BicubicGrid },
}

/// Grid size above which [`FieldSampler`] interpolates instead of summing.
pub const DIRECT_SUM_MAX_N: usize = 64;

impl FieldSampler {
    /// `kernel = None` samples `u` itself.
    pub fn new(u: &VelocityField, kernel: Option<&PeriodicKernel>) -> Self {
        Self::with_route(u, kernel, u.n > DIRECT_SUM_MAX_N)
    }

    pub fn with_route(u: &VelocityField, kernel: Option<&PeriodicKernel>, interpolate: bool) -> Self {
        let n = u.n;
        let cutoff = kernel.map_or(i64::MAX, |k| k.mode_cutoff());
        let keep: Vec<usize> = (0..n).filter(|&i| mode(i, n).abs() <= cutoff).collect();
        let weight = |i: usize, j: usize| kernel.map_or(1.0, |k| k.coefficient([mode(i, n), mode(j, n)]));
        if interpolate {
            let mut cx = vec![Complex64::new(0.0, 0.0); n * n];
            let mut cy = cx.clone();
            for &i in &keep {
                for &j in &keep {
                    let w = weight(i, j);
                    cx[i * n + j] = u.ux[i * n + j] * w;
                    cy[i * n + j] = u.uy[i * n + j] * w;
                }
            }
            let fft = Fft2::new(n);
            return Self { route: SamplerRoute::Bicubic { x: BicubicGrid::new(&cx, &fft), y: BicubicGrid::new(&cy, &fft) } };
        }
        let modes: Vec<i64> = keep.iter().map(|&i| mode(i, n)).collect();
        let m = keep.len();
        let mut cx = vec![Complex64::new(0.0, 0.0); m * m];
        let mut cy = cx.clone();
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                let w = weight(i, j);
                cx[a * m + b] = u.ux[i * n + j] * w;
                cy[a * m + b] = u.uy[i * n + j] * w;
            }
        }
        Self { route: SamplerRoute::Direct { modes_x: modes.clone(), modes_y: modes, cx, cy } }
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        match &self.route {
            SamplerRoute::Direct { modes_x, modes_y, cx, cy } => {
                let ex: Vec<Complex64> = modes_x.iter().map(|&m| Complex64::cis(2.0 * PI * m as f64 * p[0])).collect();
                let ey: Vec<Complex64> = modes_y.iter().map(|&m| Complex64::cis(2.0 * PI * m as f64 * p[1])).collect();
                let my = ey.len();
                let mut sx = Complex64::new(0.0, 0.0);
                let mut sy = Complex64::new(0.0, 0.0);
                for (a, ea) in ex.iter().enumerate() {
                    let row_x = &cx[a * my..(a + 1) * my];
                    let row_y = &cy[a * my..(a + 1) * my];
                    let mut ix = Complex64::new(0.0, 0.0);
                    let mut iy = Complex64::new(0.0, 0.0);
                    for b in 0..my {
                        ix += row_x[b] * ey[b];
                        iy += row_y[b] * ey[b];
                    }
                    sx += ea * ix;
                    sy += ea * iy;
                }
                [sx.re, sy.re]
            }
            SamplerRoute::Bicubic { x, y } => [x.eval(p), y.eval(p)],
        }
    }

    pub fn eval_many(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points.par_iter().with_min_len(CHUNK).map(|&p| self.eval(p)).collect()
    }
}

/// `u_eps(X_i)` (or `u(X_i)` when `kernel` is `None`).
pub fn eval_u_at_particles(u: &VelocityField, kernel: Option<&PeriodicKernel>, x: &[[f64; 2]]) -> Vec<[f64; 2]> {
    FieldSampler::new(u, kernel).eval_many(x)
}

/// Nodal values and spectral derivatives for bicubic Hermite interpolation.
#[derive(Debug, Clone)]
struct BicubicGrid {
    n: usize,
    f: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fxy: Vec<f64>,
}

impl BicubicGrid {
    fn new(coeffs: &[Complex64], fft: &Fft2) -> Self {
        let n = fft.n();
        let i_unit = Complex64::new(0.0, 1.0);
        let nyq = |i: usize| n % 2 == 0 && i == n / 2;
        let deriv = |dx: bool, dy: bool| {
            let c: Vec<Complex64> = (0..n * n)
                .map(|idx| {
                    let (i, j) = (idx / n, idx % n);
                    let mut v = coeffs[idx];
                    if dx {
                        v *= if nyq(i) { Complex64::new(0.0, 0.0) } else { i_unit * 2.0 * PI * mode(i, n) as f64 };
                    }
                    if dy {
                        v *= if nyq(j) { Complex64::new(0.0, 0.0) } else { i_unit * 2.0 * PI * mode(j, n) as f64 };
                    }
                    v
                })
                .collect();
            fft.inverse_real(&c)
        };
        Self { n, f: deriv(false, false), fx: deriv(true, false), fy: deriv(false, true), fxy: deriv(true, true) }
    }

    fn eval(&self, p: [f64; 2]) -> f64 {
        let n = self.n;
        let h = 1.0 / n as f64;
        let sx = wrap_unit(p[0]) * n as f64;
        let sy = wrap_unit(p[1]) * n as f64;
        let i0 = (sx.floor() as usize).min(n - 1);
        let j0 = (sy.floor() as usize).min(n - 1);
        let (tx, ty) = (sx - i0 as f64, sy - j0 as f64);
        let i1 = (i0 + 1) % n;
        let j1 = (j0 + 1) % n;
        let hx = hermite_basis(tx);
        let hy = hermite_basis(ty);
        let mut total = 0.0;
        for (a, &i) in [i0, i1].iter().enumerate() {
            for (b, &j) in [j0, j1].iter().enumerate() {
                let idx = i * n + j;
                total += hx[a] * hy[b] * self.f[idx]
                    + hx[2 + a] * h * hy[b] * self.fx[idx]
                    + hx[a] * hy[2 + b] * h * self.fy[idx]
                    + hx[2 + a] * hy[2 + b] * h * h * self.fxy[idx];
            }
        }
        total
    }
}

/// Cubic Hermite basis on [0, 1]: values at 0 and 1, then slopes at 0 and 1.
#[inline]
fn hermite_basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2, t3 - 2.0 * t2 + t, t3 - t2]
}

/// Phases `exp(-2 pi i m x)` for `m = -k..=k`.
fn phase_table(x: f64, k: i64) -> Vec<Complex64> {
    let base = Complex64::cis(-2.0 * PI * x);
    let mut out = vec![Complex64::new(0.0, 0.0); (2 * k + 1) as usize];
    out[k as usize] = Complex64::new(1.0, 0.0);
    for m in 1..=k as usize {
        out[k as usize + m] = out[k as usize + m - 1] * base;
        out[k as usize - m] = out[k as usize + m].conj();
    }
    out
}

/// Fourier coefficients of the periodized kernel on `[-k, k]^2`, row-major.
fn kernel_table(kernel: &PeriodicKernel, k: i64) -> Vec<f64> {
    let w = (2 * k + 1) as usize;
    let mut t = vec![0.0; w * w];
    for a in -k..=k {
        for b in -k..=k {
            t[(a + k) as usize * w + (b + k) as usize] = kernel.coefficient([a, b]);
        }
    }
    t
}

/// Grid samples of `sum_i values_i theta^{0,eps}(x - X_i) / N`, exact up to the kernel's
/// Fourier tail: the spectral sum is folded onto the grid before the inverse transform.
pub fn deposit(x: &[[f64; 2]], values: &[[f64; 2]], kernel: &PeriodicKernel, n: usize) -> ForceField {
    let k = kernel.mode_cutoff();
    let w = (2 * k + 1) as usize;
    let table = kernel_table(kernel, k);
    let inv_n = 1.0 / x.len().max(1) as f64;
    let zero = Complex64::new(0.0, 0.0);
    let partials: Vec<(Vec<Complex64>, Vec<Complex64>)> = x
        .par_chunks(CHUNK)
        .zip(values.par_chunks(CHUNK))
        .map(|(xs, gs)| {
            let mut ax = vec![zero; w * w];
            let mut ay = vec![zero; w * w];
            for (p, g) in xs.iter().zip(gs) {
                let ex = phase_table(p[0], k);
                let ey = phase_table(p[1], k);
                for a in 0..w {
                    let gxa = ex[a] * g[0];
                    let gya = ex[a] * g[1];
                    let rx = &mut ax[a * w..(a + 1) * w];
                    let ry = &mut ay[a * w..(a + 1) * w];
                    for b in 0..w {
                        rx[b] += gxa * ey[b];
                        ry[b] += gya * ey[b];
                    }
                }
            }
            (ax, ay)
        })
        .collect();
    let mut ax = vec![zero; w * w];
    let mut ay = vec![zero; w * w];
    for (px, py) in &partials {
        for idx in 0..w * w {
            ax[idx] += px[idx];
            ay[idx] += py[idx];
        }
    }
    let mut fx = vec![zero; n * n];
    let mut fy = vec![zero; n * n];
    for a in -k..=k {
        for b in -k..=k {
            let src = (a + k) as usize * w + (b + k) as usize;
            let c = table[src] * inv_n;
            if c == 0.0 {
                continue;
            }
            let dst = index_of_mode(a, n) * n + index_of_mode(b, n);
            fx[dst] += ax[src] * c;
            fy[dst] += ay[src] * c;
        }
    }
    let fft = Fft2::new(n);
    ForceField { n, gx: fft.inverse_real(&fx), gy: fft.inverse_real(&fy) }
}

/// `G(x) = (1/N) sum_i g(u_eps(X_i), V_i) theta^{0,eps}(x - X_i)` on the `n x n` grid.
pub fn deposit_force(
    ens: &ParticleEnsemble,
    u_samples: &[[f64; 2]],
    kernel: &PeriodicKernel,
    drag: &DragSpec,
    n: usize,
) -> ForceField {
    deposit(&ens.x, &drag_forces(ens, u_samples, drag), kernel, n)
}

/// Samples of the periodized kernel centered at `center` on an `n x n` grid.
pub fn kernel_on_grid(center: [f64; 2], kernel: &PeriodicKernel, n: usize) -> Vec<f64> {
    let k = kernel.mode_cutoff();
    let ex = phase_table(center[0], k);
    let ey = phase_table(center[1], k);
    let mut c = vec![Complex64::new(0.0, 0.0); n * n];
    for a in -k..=k {
        for b in -k..=k {
            let coef = kernel.coefficient([a, b]);
            if coef == 0.0 {
                continue;
            }
            let (ia, ib) = ((a + k) as usize, (b + k) as usize);
            c[index_of_mode(a, n) * n + index_of_mode(b, n)] += ex[ia] * ey[ib] * coef;
        }
    }
    Fft2::new(n).inverse_real(&c)
}

/// Velocity weights of one particle on a [`VelocityGrid`]: the rescaled bump sampled at
/// cell centers and normalized so its grid quadrature is exactly 1.
#[derive(Debug, Clone)]
struct VelocityPatch {
    a0: usize,
    b0: usize,
    width: usize,
    weights: Vec<f64>,
}

fn velocity_patch(v: [f64; 2], eps: f64, grid: &VelocityGrid) -> Option<VelocityPatch> {
    let dv = grid.dv();
    let lo = |c: f64| ((c - eps + grid.vmax) / dv - 0.5).floor().max(0.0) as usize;
    let hi = |c: f64| (((c + eps + grid.vmax) / dv - 0.5).ceil().max(0.0) as usize).min(grid.nv - 1);
    let (a0, a1, b0, b1) = (lo(v[0]), hi(v[0]), lo(v[1]), hi(v[1]));
    if a1 < a0 || b1 < b0 {
        return None;
    }
    let width = (a1 - a0 + 1).max(b1 - b0 + 1);
    let mut weights = vec![0.0; width * width];
    let mut total = 0.0;
    for da in 0..width {
        for db in 0..width {
            let (a, b) = (a0 + da, b0 + db);
            if a >= grid.nv || b >= grid.nv {
                continue;
            }
            let w = eval_theta1([grid.center(a) - v[0], grid.center(b) - v[1]], eps);
            weights[da * width + db] = w;
            total += w;
        }
    }
    if total <= 0.0 {
        return None;
    }
    let scale = 1.0 / (total * dv * dv);
    weights.iter_mut().for_each(|w| *w *= scale);
    Some(VelocityPatch { a0, b0, width, weights })
}

/// The mollified empirical density `F^N = theta^eps * S^N` on an `nx^2 x nv^2` grid.
///
/// The spatial factor is sampled exactly; the velocity bump of each particle is
/// renormalized on the grid so total mass is 1 to rounding. Particles whose bump does not
/// fit in the velocity window are counted in the returned leak fraction.
pub fn empirical_density(
    ens: &ParticleEnsemble,
    kernel: &PeriodicKernel,
    vgrid: &VelocityGrid,
    nx: usize,
) -> (KineticGrid, f64) {
    let eps = kernel.eps();
    let n_part = ens.len();
    let inv_n = 1.0 / n_part as f64;
    let xk: Vec<Vec<f64>> = ens.x.par_iter().map(|&p| kernel_on_grid(p, kernel, nx)).collect();
    let mut leaked = 0usize;
    let patches: Vec<Option<VelocityPatch>> = ens
        .v
        .iter()
        .map(|&v| {
            let inside = v[0].abs() + eps <= vgrid.vmax && v[1].abs() + eps <= vgrid.vmax;
            if !inside {
                leaked += 1;
                return None;
            }
            velocity_patch(v, eps, vgrid)
        })
        .collect();
    if leaked > 0 {
        log::warn!("{leaked} particle velocities outside the velocity grid margin");
    }
    let mut grid = KineticGrid::zeros(nx, vgrid.nv, vgrid.vmax);
    let nv = vgrid.nv;
    let slab = nv * nv;
    grid.values.par_chunks_mut(slab).enumerate().for_each(|(xi, out)| {
        for (i, patch) in patches.iter().enumerate() {
            let Some(patch) = patch else { continue };
            let wx = xk[i][xi] * inv_n;
            for da in 0..patch.width {
                let a = patch.a0 + da;
                if a >= nv {
                    break;
                }
                let row = &mut out[a * nv..(a + 1) * nv];
                let src = &patch.weights[da * patch.width..(da + 1) * patch.width];
                for (db, w) in src.iter().enumerate() {
                    let b = patch.b0 + db;
                    if b < nv {
                        row[b] += wx * w;
                    }
                }
            }
        }
    });
    grid.time = ens.time;
    (grid, leaked as f64 * inv_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::InitialVelocity;
    use crate::spectral::Wavenumbers;

    fn gaussian_ensemble(n: usize, seed: u64, sigma: f64) -> ParticleEnsemble {
        sample_initial(&InitialDensity::default(), n, seed, sigma).unwrap()
    }

    #[test]
    fn initial_sample_means() {
        let n = 20_000;
        let ens = gaussian_ensemble(n, 1, 0.0);
        let tol = 4.0 / (n as f64).sqrt();
        let mx = ens.x.iter().map(|x| x[0]).sum::<f64>() / n as f64;
        let my = ens.x.iter().map(|x| x[1]).sum::<f64>() / n as f64;
        let mv = ens.mean_velocity();
        assert!((mx - 0.5).abs() < tol && (my - 0.5).abs() < tol);
        assert!(mv[0].abs() < tol && mv[1].abs() < tol);
        assert!(ens.x.iter().all(|x| (0.0..1.0).contains(&x[0]) && (0.0..1.0).contains(&x[1])));
    }

    #[test]
    fn initial_sample_reproducible() {
        let a = gaussian_ensemble(500, 42, 0.3);
        let b = gaussian_ensemble(500, 42, 0.3);
        let c = gaussian_ensemble(500, 43, 0.3);
        assert_eq!(a, b);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn second_moment_of_unit_gaussian() {
        let ens = gaussian_ensemble(100_000, 9, 0.0);
        // Per-component second moment: E|V|^2 / 2.
        let m2 = ens.velocity_moment(2.0) / 2.0;
        assert!((m2 - 1.0).abs() < 0.02, "{m2}");
    }

    #[test]
    fn unnormalized_mixture_rejected() {
        let f0 = InitialDensity {
            spatial: SpatialLaw::Uniform,
            velocity: vec![GaussianComponent { weight: 0.7, mean: [0.0; 2], std: 1.0 }],
        };
        assert!(matches!(sample_initial(&f0, 10, 0, 0.0), Err(ParticleError::Unnormalized(_))));
    }

    #[test]
    fn noise_depends_only_on_particle_and_step() {
        let s = NoiseStreams::new(5);
        assert_eq!(s.normal_pair(3, 7), s.normal_pair(3, 7));
        assert_ne!(s.normal_pair(3, 7), s.normal_pair(3, 8));
        assert_ne!(s.normal_pair(3, 7), s.normal_pair(4, 7));
    }

    #[test]
    fn matched_velocities_feel_no_drag() {
        let mut ens = gaussian_ensemble(50, 2, 0.0);
        let v0 = [0.4, -0.25];
        ens.v.iter_mut().for_each(|v| *v = v0);
        let x0 = ens.x.clone();
        let u = vec![v0; ens.len()];
        em_step(&mut ens, &u, 0.01, &DragSpec::saturated(10.0)).unwrap();
        for (x, p) in ens.x.iter().zip(&x0) {
            assert!((x[0] - wrap_unit(p[0] + v0[0] * 0.01)).abs() < 1e-15);
            assert!((x[1] - wrap_unit(p[1] + v0[1] * 0.01)).abs() < 1e-15);
        }
        assert!(ens.v.iter().all(|v| *v == v0));
    }

    #[test]
    fn drag_relaxation_matches_ode() {
        // dV/dt = -V / sqrt(1 + |V|^2/kappa^2) along a ray: integrate the speed with RK4.
        let kappa = 2.0;
        let mut ens = gaussian_ensemble(1, 3, 0.0);
        ens.v[0] = [3.0, 0.0];
        let dt = 1e-4;
        let steps = 5000;
        for _ in 0..steps {
            em_step(&mut ens, &[[0.0, 0.0]], dt, &DragSpec::saturated(kappa)).unwrap();
        }
        let f = |s: f64| -s / (1.0 + s * s / (kappa * kappa)).sqrt();
        let mut s = 3.0;
        let h = 1e-5;
        for _ in 0..(steps as f64 * dt / h).round() as usize {
            let k1 = f(s);
            let k2 = f(s + 0.5 * h * k1);
            let k3 = f(s + 0.5 * h * k2);
            let k4 = f(s + h * k3);
            s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((ens.v[0][0] - s).abs() < 1e-3, "{} vs {s}", ens.v[0][0]);
    }

    #[test]
    fn constant_field_sampled_exactly() {
        let u = VelocityField::constant(16, [0.7, -0.2]);
        let kernel = PeriodicKernel::new(0.3);
        let ens = gaussian_ensemble(40, 4, 0.0);
        for route in [false, true] {
            let s = FieldSampler::with_route(&u, Some(&kernel), route);
            for p in &ens.x {
                let w = s.eval(*p);
                assert!((w[0] - 0.7).abs() < 1e-14 && (w[1] + 0.2).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn direct_sum_exact_on_nodes() {
        let n = 16;
        let fft = Fft2::new(n);
        let state = InitialVelocity::RandomBand { kmin: 1.0, kmax: 4.0, rms: 1.0, seed: 2 }.build(n);
        let u = crate::fluid::biot_savart(&state.omega, &Wavenumbers::new(n)).unwrap();
        let kernel = PeriodicKernel::new(0.2);
        let (gx, gy) = crate::fluid::mollify_field(&u, &kernel).to_physical(&fft);
        let s = FieldSampler::new(&u, Some(&kernel));
        for idx in 0..n * n {
            let p = [(idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64];
            let w = s.eval(p);
            assert!((w[0] - gx[idx]).abs() < 1e-13 && (w[1] - gy[idx]).abs() < 1e-13);
        }
    }

    #[test]
    fn deposit_single_particle_mass() {
        let kernel = PeriodicKernel::new(0.25);
        let g = [0.3, -0.8];
        let f = deposit(&[[0.37, 0.81]], &[g], &kernel, 32);
        let total = f.integral();
        assert!((total[0] - g[0]).abs() < 1e-12 && (total[1] - g[1]).abs() < 1e-12);
    }

    #[test]
    fn deposit_matches_direct_kernel_sum() {
        let kernel = PeriodicKernel::new(0.2);
        let xs = [[0.1, 0.9], [0.55, 0.4], [0.98, 0.02]];
        let gs = [[1.0, 0.0], [-0.5, 0.25], [0.2, 0.7]];
        let n = 16;
        let f = deposit(&xs, &gs, &kernel, n);
        for idx in 0..n * n {
            let p = [(idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64];
            let mut want = [0.0; 2];
            for (x, g) in xs.iter().zip(&gs) {
                let k = kernel.eval_lattice([p[0] - x[0], p[1] - x[1]]);
                want[0] += g[0] * k / 3.0;
                want[1] += g[1] * k / 3.0;
            }
            assert!((f.gx[idx] - want[0]).abs() < 1e-11 && (f.gy[idx] - want[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn deposition_independent_of_chunking_order() {
        let ens = gaussian_ensemble(3 * CHUNK + 17, 8, 0.0);
        let kernel = PeriodicKernel::new(0.3);
        let u = vec![[0.1, 0.2]; ens.len()];
        let a = deposit_force(&ens, &u, &kernel, &DragSpec::default(), 16);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| deposit_force(&ens, &u, &kernel, &DragSpec::default(), 16));
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_density_unit_mass_and_marginal() {
        let ens = gaussian_ensemble(60, 12, 0.0);
        let kernel = PeriodicKernel::new(0.4);
        let vgrid = VelocityGrid::covering(ens.max_speed() + 0.5, kernel.eps() / 4.0);
        let (grid, leaked) = empirical_density(&ens, &kernel, &vgrid, 16);
        assert_eq!(leaked, 0.0);
        assert!((grid.mass() - 1.0).abs() < 1e-12);
        let marginal = grid.marginal();
        for idx in 0..16 * 16 {
            let p = [(idx / 16) as f64 / 16.0, (idx % 16) as f64 / 16.0];
            let want: f64 = ens.x.iter().map(|x| kernel.eval([p[0] - x[0], p[1] - x[1]])).sum::<f64>() / 60.0;
            assert!((marginal[idx] - want).abs() < 1e-10 * want.max(1.0));
        }
    }
}
