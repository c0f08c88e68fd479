//! Square periodic grids on the unit torus and their 2D FFTs.
//!
//! Physical samples live at `x_i = i / n` in row-major order (`i` along x, `j` along y).
//! Spectral arrays hold the coefficients `c_m` of `f(x) = sum_m c_m exp(2 pi i m.x)`, so
//! the forward transform divides by `n^2`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        plan.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                column[i] = data[i * n + j];
            }
            plan.process(&mut column);
            for i in 0..n {
                data[i * n + j] = column[i];
            }
        }
    }

    /// Physical samples to Fourier coefficients.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
        let scale = 1.0 / (self.n * self.n) as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }

    /// Fourier coefficients to physical samples.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.inverse(&mut data);
        data.into_iter().map(|c| c.re).collect()
    }
}

/// Signed mode number of FFT index `i` on an `n`-point axis.
#[inline]
pub fn mode(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// FFT index holding signed mode `m`.
#[inline]
pub fn index_of_mode(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

/// Precomputed wavenumber tables for an `n x n` grid.
#[derive(Debug, Clone)]
pub struct Wavenumbers {
    pub n: usize,
    /// `2 pi m_x` per coefficient, zero on the Nyquist line (first derivatives only).
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    /// `|2 pi m|^2` including the Nyquist lines.
    pub k2: Vec<f64>,
    /// 2/3-rule mask.
    pub dealias: Vec<bool>,
}

impl Wavenumbers {
    pub fn new(n: usize) -> Self {
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        let mut dealias = vec![false; n * n];
        let even_nyquist = |i: usize| n % 2 == 0 && i == n / 2;
        for i in 0..n {
            let mx = mode(i, n);
            for j in 0..n {
                let my = mode(j, n);
                let idx = i * n + j;
                let fx = 2.0 * PI * mx as f64;
                let fy = 2.0 * PI * my as f64;
                kx[idx] = if even_nyquist(i) { 0.0 } else { fx };
                ky[idx] = if even_nyquist(j) { 0.0 } else { fy };
                k2[idx] = fx * fx + fy * fy;
                dealias[idx] = 3 * mx.unsigned_abs() < n as u64 && 3 * my.unsigned_abs() < n as u64;
            }
        }
        Self { n, kx, ky, k2, dealias }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_coefficients() {
        let n = 16;
        let fft = Fft2::new(n);
        let values: Vec<f64> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                (2.0 * PI * (2.0 * i as f64 + 3.0 * j as f64) / n as f64).cos()
            })
            .collect();
        let c = fft.forward_real(&values);
        let a = c[index_of_mode(2, n) * n + index_of_mode(3, n)];
        let b = c[index_of_mode(-2, n) * n + index_of_mode(-3, n)];
        assert!((a.re - 0.5).abs() < 1e-14 && a.im.abs() < 1e-14);
        assert!((b.re - 0.5).abs() < 1e-14);
        let back = fft.inverse_real(&c);
        for (x, y) in back.iter().zip(&values) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn mode_index_roundtrip() {
        for n in [7usize, 8, 32] {
            for i in 0..n {
                assert_eq!(index_of_mode(mode(i, n), n), i);
            }
        }
    }
}
