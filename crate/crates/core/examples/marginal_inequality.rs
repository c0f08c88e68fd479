//! The marginal inequality `int (F^0)^2 <= K int |v|^3 F + K' ||F||_4^4` on sample densities.

use vnsim::diagnostics::{marginal_constant_k, marginal_constant_k_prime, marginal_inequality_report};
use vnsim::kinetic::{KineticGrid, VelocityGrid};
use vnsim::particles::{GaussianComponent, InitialDensity, SpatialLaw};

fn main() {
    println!("K = {:.15}, K' = {:.15}", marginal_constant_k(), marginal_constant_k_prime());
    for (std, amplitude) in [(1.0, 0.0), (0.3, 0.5), (0.1, 0.9)] {
        let f0 = InitialDensity {
            spatial: SpatialLaw::Cosine { amplitude, mode: [1, 0] },
            velocity: vec![GaussianComponent { weight: 1.0, mean: [0.0, 0.0], std }],
        };
        let f = KineticGrid::from_density(16, VelocityGrid::new(64, 8.0 * std), &f0);
        let r = marginal_inequality_report(&f);
        println!(
            "std {std:<4} amplitude {amplitude:<4}: lhs {:.6}  K m3 {:.6}  K' L4 {:.6}  holds {}",
            r.lhs,
            marginal_constant_k() * r.term_moment,
            marginal_constant_k_prime() * r.term_l4,
            r.holds()
        );
    }
}
