//! Saturated drag between fluid and particle velocities.
//!
//! `g(u, v) = r / sqrt(1 + |r|^2 / kappa^2)` with `r = u - v`. The force points along the
//! relative velocity, is bounded by `kappa`, vanishes at `u = v` and reduces to Stokes
//! drag `u - v` when `|u - v| << kappa`. It is the gradient (in `u`) of a convex potential,
//! so its Jacobian is symmetric with eigenvalues in `(0, 1]`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum DragSpec {
    Saturated { kappa: f64 },
    /// `g = 0`; used to isolate transport and diffusion.
    Off,
}

impl Default for DragSpec {
    fn default() -> Self {
        DragSpec::Saturated { kappa: 10.0 }
    }
}

impl DragSpec {
    pub fn saturated(kappa: f64) -> Self {
        DragSpec::Saturated { kappa }
    }

    /// `sup |g|`.
    pub fn bound(&self) -> f64 {
        match *self {
            DragSpec::Saturated { kappa } => kappa,
            DragSpec::Off => 0.0,
        }
    }

    /// Largest `|g(u, v)|` with `|u - v| <= rel`.
    pub fn bound_for_relative_speed(&self, rel: f64) -> f64 {
        match *self {
            DragSpec::Saturated { kappa } => rel / (1.0 + rel * rel / (kappa * kappa)).sqrt(),
            DragSpec::Off => 0.0,
        }
    }
}

#[inline]
pub fn eval_drag(u_local: [f64; 2], v: [f64; 2], spec: &DragSpec) -> [f64; 2] {
    match *spec {
        DragSpec::Saturated { kappa } => {
            let r = [u_local[0] - v[0], u_local[1] - v[1]];
            let damp = (1.0 + (r[0] * r[0] + r[1] * r[1]) / (kappa * kappa)).sqrt().recip();
            [r[0] * damp, r[1] * damp]
        }
        DragSpec::Off => [0.0, 0.0],
    }
}

/// `d g / d u` at `(u_local, v)`, row-major.
pub fn drag_jacobian(u_local: [f64; 2], v: [f64; 2], spec: &DragSpec) -> [[f64; 2]; 2] {
    match *spec {
        DragSpec::Saturated { kappa } => {
            let r = [u_local[0] - v[0], u_local[1] - v[1]];
            let k2 = kappa * kappa;
            let q = 1.0 + (r[0] * r[0] + r[1] * r[1]) / k2;
            let a = q.sqrt().recip();
            let b = a / (q * k2);
            [
                [a - b * r[0] * r[0], -b * r[0] * r[1]],
                [-b * r[1] * r[0], a - b * r[1] * r[1]],
            ]
        }
        DragSpec::Off => [[0.0; 2]; 2],
    }
}

/// Largest singular value of a 2x2 matrix.
pub fn operator_norm(m: [[f64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = m;
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s + disc)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_relative_velocity() {
        let spec = DragSpec::saturated(2.0);
        assert_eq!(eval_drag([0.3, -1.2], [0.3, -1.2], &spec), [0.0, 0.0]);
    }

    #[test]
    fn three_four_five() {
        let spec = DragSpec::saturated(5.0);
        let g = eval_drag([3.0, 4.0], [0.0, 0.0], &spec);
        assert!((g[0] - 2.121_320_343_559_642_4).abs() < 1e-14);
        assert!((g[1] - 2.828_427_124_746_190_3).abs() < 1e-14);
    }

    #[test]
    fn jacobian_identity_at_rest() {
        let spec = DragSpec::saturated(3.0);
        let j = drag_jacobian([1.0, 1.0], [1.0, 1.0], &spec);
        assert_eq!(j, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn saturation_limit() {
        let kappa = 4.0;
        let spec = DragSpec::saturated(kappa);
        let g = eval_drag([10.0 * kappa, 0.0], [0.0, 0.0], &spec);
        assert!(g[0].hypot(g[1]) >= 0.99 * kappa);
        assert!(g[0].hypot(g[1]) < kappa);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let spec = DragSpec::saturated(1.7);
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 8.0 - 4.0
        };
        for _ in 0..20 {
            let u = [next(), next()];
            let v = [next(), next()];
            let j = drag_jacobian(u, v, &spec);
            let h = 1e-5;
            for col in 0..2 {
                let mut up = u;
                let mut um = u;
                up[col] += h;
                um[col] -= h;
                let gp = eval_drag(up, v, &spec);
                let gm = eval_drag(um, v, &spec);
                for row in 0..2 {
                    let fd = (gp[row] - gm[row]) / (2.0 * h);
                    let scale = j[row][col].abs().max(1e-3);
                    assert!((fd - j[row][col]).abs() / scale < 1e-6, "{fd} vs {}", j[row][col]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn bounded_and_dissipative(
            ux in -50.0..50.0f64, uy in -50.0..50.0f64,
            vx in -50.0..50.0f64, vy in -50.0..50.0f64,
            kappa in 0.1..20.0f64,
        ) {
            let spec = DragSpec::saturated(kappa);
            let g = eval_drag([ux, uy], [vx, vy], &spec);
            prop_assert!(g[0].hypot(g[1]) <= kappa);
            prop_assert!(g[0] * (ux - vx) + g[1] * (uy - vy) >= 0.0);
        }

        #[test]
        fn jacobian_norm_at_most_one(
            ux in -30.0..30.0f64, uy in -30.0..30.0f64,
            vx in -30.0..30.0f64, vy in -30.0..30.0f64,
            kappa in 0.1..20.0f64,
        ) {
            let spec = DragSpec::saturated(kappa);
            let n = operator_norm(drag_jacobian([ux, uy], [vx, vy], &spec));
            prop_assert!(n <= 1.0 + 1e-12);
        }

        #[test]
        fn lipschitz_in_fluid_velocity(
            ux in -10.0..10.0f64, uy in -10.0..10.0f64,
            wx in -10.0..10.0f64, wy in -10.0..10.0f64,
            vx in -10.0..10.0f64, vy in -10.0..10.0f64,
        ) {
            let spec = DragSpec::saturated(2.5);
            let a = eval_drag([ux, uy], [vx, vy], &spec);
            let b = eval_drag([wx, wy], [vx, vy], &spec);
            let lhs = (a[0] - b[0]).hypot(a[1] - b[1]);
            prop_assert!(lhs <= (ux - wx).hypot(uy - wy) * (1.0 + 1e-12) + 1e-14);
        }
    }
}
