//! Marginals and the quantities bounded uniformly in N: `||F||_4^4`, velocity moments and
//! `||F^0||_2^2`, plus the marginal inequality
//!
//! ```text
//! int F0(x)^2 dx <= K int int |v|^3 F + K' int int F^4        (d = 2)
//! ```
//!
//! Constants: split `F0(x)` at `|v| = r(x)`, bound the inner part by Hoelder with the ball
//! volume `|B_r|^{3/4} = pi^{3/4} r^{3/2}` and the outer part by `r^{-3} M(x)`, where
//! `M(x) = int |v|^3 F(x, v) dv`. Choosing `r = M^{1/6}` gives
//! `F0 <= pi^{3/4} L^{1/4} M^{1/4} + M^{1/2}` with `L(x) = int F^4 dv`. Squaring,
//! `(a + b)^2 <= 2a^2 + 2b^2` and `2 sqrt(LM) <= L + M` yield
//! `K = pi^{3/2} + 2` and `K' = pi^{3/2}`.

use crate::kinetic::KineticGrid;
use std::f64::consts::PI;

/// Moment constant of the marginal inequality.
pub fn marginal_constant_k() -> f64 {
    PI.powf(1.5) + 2.0
}

/// `L^4` constant of the marginal inequality.
pub fn marginal_constant_k_prime() -> f64 {
    PI.powf(1.5)
}

/// Spatial marginal `F0(x) = int F(x, v) dv` at every spatial node.
pub fn marginal(f: &KineticGrid) -> Vec<f64> {
    f.marginal()
}

/// `int F0(x)^2 dx`.
pub fn l2_marginal(f: &KineticGrid) -> f64 {
    let m = f.marginal();
    m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64
}

/// The three sides of the marginal inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalReport {
    pub lhs: f64,
    pub term_moment: f64,
    pub term_l4: f64,
}

impl MarginalReport {
    pub fn rhs(&self) -> f64 {
        marginal_constant_k() * self.term_moment + marginal_constant_k_prime() * self.term_l4
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs()
    }
}

pub fn marginal_inequality_report(f: &KineticGrid) -> MarginalReport {
    MarginalReport { lhs: l2_marginal(f), term_moment: f.moment(3.0), term_l4: f.lp_power(4) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::VelocityGrid;
    use crate::particles::{GaussianComponent, InitialDensity, SpatialLaw};

    #[test]
    fn constants() {
        assert!((marginal_constant_k() - 7.568_327_996_831_708).abs() < 1e-12);
        assert!((marginal_constant_k_prime() - 5.568_327_996_831_708).abs() < 1e-12);
    }

    #[test]
    fn zero_density() {
        let r = marginal_inequality_report(&KineticGrid::zeros(4, 6, 2.0));
        assert_eq!((r.lhs, r.term_moment, r.term_l4), (0.0, 0.0, 0.0));
        assert!(r.holds());
    }

    #[test]
    fn product_marginal_is_spatial_factor() {
        let f0 = InitialDensity {
            spatial: SpatialLaw::Cosine { amplitude: 0.5, mode: [1, 2] },
            velocity: vec![GaussianComponent { weight: 1.0, mean: [0.0; 2], std: 0.7 }],
        };
        let nx = 8;
        let f = KineticGrid::from_density(nx, VelocityGrid::new(40, 5.0), &f0);
        let m = marginal(&f);
        for (idx, v) in m.iter().enumerate() {
            let x = [(idx / nx) as f64 / nx as f64, (idx % nx) as f64 / nx as f64];
            assert!((v - f0.spatial_density(x)).abs() < 1e-10);
        }
        assert!((m.iter().sum::<f64>() / m.len() as f64 - f.mass()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_inequality_holds() {
        for std in [0.05, 0.3, 1.0, 3.0] {
            let f0 = InitialDensity {
                spatial: SpatialLaw::Uniform,
                velocity: vec![GaussianComponent { weight: 1.0, mean: [0.0; 2], std }],
            };
            let vmax = 7.0 * std;
            let f = KineticGrid::from_density(2, VelocityGrid::new(70, vmax), &f0);
            let r = marginal_inequality_report(&f);
            assert!(r.holds(), "{r:?}");
            // Closed forms for the unit-mass isotropic Gaussian.
            let m3 = 3.0 * (PI / 2.0).sqrt() * std.powi(3);
            let l4 = 1.0 / (4.0 * (2.0 * PI).powi(3) * std.powi(6));
            assert!((r.term_moment - m3).abs() < 1e-3 * m3);
            assert!((r.term_l4 - l4).abs() < 1e-3 * l4);
        }
    }
}
