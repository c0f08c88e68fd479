//! Independent numerical oracles for closed-form constants used by the library.

mod common;

use std::f64::consts::{E, PI};
use vnsim::config::RunConfig;
use vnsim::diagnostics::{marginal_constant_k, marginal_constant_k_prime};
use vnsim::mollifier::{epsilon_for, spatial_normalization, theta0_hat, velocity_normalization, MollifierSpec, PeriodicKernel};

#[test]
fn spatial_constant_matches_quadrature() {
    let mass = common::radial_mass(&|r| (-(1.0 + r * r).sqrt()).exp(), 60.0, 120, 1e-14);
    assert!((mass - 4.0 * PI / E).abs() < 1e-11, "{mass}");
    assert!((spatial_normalization() * mass - 1.0).abs() < 1e-11);
    assert!((spatial_normalization() - 0.216_313_994_858_066_27).abs() < 1e-15);
}

#[test]
fn velocity_constant_matches_quadrature() {
    let mass = common::radial_mass(&|r| if r < 1.0 { (-1.0 / (1.0 - r * r)).exp() } else { 0.0 }, 1.0, 16, 1e-15);
    assert!((velocity_normalization() * mass - 1.0).abs() < 1e-10, "{}", velocity_normalization() * mass);
}

#[test]
fn fourier_transform_matches_hankel_quadrature() {
    // J0(z) = (1/pi) int_0^pi cos(z sin t) dt
    let j0 = |z: f64| common::adaptive_simpson(&|t| (z * t.sin()).cos(), 0.0, PI, 1e-13) / PI;
    for xi in [0.0, 0.3, 1.0] {
        let hankel = spatial_normalization()
            * common::radial_mass(&|r| (-(1.0 + r * r).sqrt()).exp() * j0(2.0 * PI * xi * r), 40.0, 80, 1e-11);
        assert!((hankel - theta0_hat(xi)).abs() < 1e-8, "xi {xi}: {hankel} vs {}", theta0_hat(xi));
    }
    assert_eq!(theta0_hat(0.0), 1.0);
}

#[test]
fn periodized_kernel_has_unit_mass_on_the_torus() {
    for eps in [0.05, 0.2, 0.7, 1.0] {
        let k = PeriodicKernel::new(eps);
        let m = 96;
        let h = 1.0 / m as f64;
        let mass: f64 = (0..m * m).map(|i| k.eval([(i / m) as f64 * h, (i % m) as f64 * h])).sum::<f64>() * h * h;
        assert!((mass - 1.0).abs() < 1e-9, "eps {eps}: {mass}");
    }
}

#[test]
fn kernel_scale_frozen_values() {
    let spec = MollifierSpec::new(0.2).unwrap();
    assert!((epsilon_for(10_000, &spec).unwrap() - 0.398_107_170_553_497_25).abs() < 1e-15);
    assert!((epsilon_for(100, &spec).unwrap() - 0.630_957_344_480_193_2).abs() < 1e-15);
    assert!((RunConfig::default().epsilon(1000).unwrap() - 1000f64.powf(-0.1)).abs() < 1e-15);
}

#[test]
fn marginal_constants_frozen() {
    assert!((marginal_constant_k() - 7.568_327_996_831_708).abs() < 1e-14);
    assert!((marginal_constant_k_prime() - 5.568_327_996_831_708).abs() < 1e-14);
}
