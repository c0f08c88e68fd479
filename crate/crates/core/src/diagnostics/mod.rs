//! Observables recorded along particle and mean-field trajectories.

pub mod bounds;
pub mod energy;
pub mod holder;
pub mod transport;
pub mod weak;

pub use bounds::{l2_marginal, marginal_constant_k, marginal_constant_k_prime, marginal_inequality_report, MarginalReport};
pub use energy::{energy_balance_residual, EnergyError, EnergyLedger, EnergyStep};
pub use holder::{holder_w1_fit, HolderError, HolderFit, HolderOutcome};
pub use transport::{wasserstein1, CoarseCells, TransportError, TransportPlan, W1Method, W1Result};
pub use weak::{PhaseFrame, TestCatalog, TestFunction, WeakError, WeakResidualAccumulator};

/// One row of the metrics table. Quantities not computed at a row are `NaN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    /// `1/2 ||u||^2 + 1/2 int |v|^2 F`.
    pub energy: f64,
    pub fluid_energy: f64,
    pub enstrophy: f64,
    pub grad_enstrophy: f64,
    /// Drag dissipation `int g(u, v) . (u - v) F`.
    pub dissipation: f64,
    pub energy_residual: f64,
    pub energy_residual_cum: f64,
    /// Velocity moments of the empirical measure (particles) or of the grid (PDE).
    pub moment1: f64,
    pub moment2: f64,
    pub moment3: f64,
    /// `||F||_4^4` of the mollified density or the grid density.
    pub l4_density: f64,
    pub moment3_density: f64,
    pub l2_marginal: f64,
    pub marginal_rhs: f64,
    pub leaked: f64,
    pub phi_residual: f64,
    pub psi_residual: f64,
    pub psi_compensated: f64,
    pub w1_to_limit: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 21] = [
        "step",
        "time",
        "energy",
        "fluid_energy",
        "enstrophy",
        "grad_enstrophy",
        "dissipation",
        "energy_residual",
        "energy_residual_cum",
        "moment1",
        "moment2",
        "moment3",
        "l4_density",
        "moment3_density",
        "l2_marginal",
        "marginal_rhs",
        "leaked",
        "phi_residual",
        "psi_residual",
        "psi_compensated",
        "w1_to_limit",
    ];

    pub fn empty(step: usize, time: f64) -> Self {
        let nan = f64::NAN;
        Self {
            step,
            time,
            energy: nan,
            fluid_energy: nan,
            enstrophy: nan,
            grad_enstrophy: nan,
            dissipation: nan,
            energy_residual: nan,
            energy_residual_cum: nan,
            moment1: nan,
            moment2: nan,
            moment3: nan,
            l4_density: nan,
            moment3_density: nan,
            l2_marginal: nan,
            marginal_rhs: nan,
            leaked: nan,
            phi_residual: nan,
            psi_residual: nan,
            psi_compensated: nan,
            w1_to_limit: nan,
        }
    }

    /// Floating-point columns in `COLUMNS` order, after `step`.
    pub fn values(&self) -> [f64; 20] {
        [
            self.time,
            self.energy,
            self.fluid_energy,
            self.enstrophy,
            self.grad_enstrophy,
            self.dissipation,
            self.energy_residual,
            self.energy_residual_cum,
            self.moment1,
            self.moment2,
            self.moment3,
            self.l4_density,
            self.moment3_density,
            self.l2_marginal,
            self.marginal_rhs,
            self.leaked,
            self.phi_residual,
            self.psi_residual,
            self.psi_compensated,
            self.w1_to_limit,
        ]
    }

    pub fn from_values(step: usize, v: [f64; 20]) -> Self {
        Self {
            step,
            time: v[0],
            energy: v[1],
            fluid_energy: v[2],
            enstrophy: v[3],
            grad_enstrophy: v[4],
            dissipation: v[5],
            energy_residual: v[6],
            energy_residual_cum: v[7],
            moment1: v[8],
            moment2: v[9],
            moment3: v[10],
            l4_density: v[11],
            moment3_density: v[12],
            l2_marginal: v[13],
            marginal_rhs: v[14],
            leaked: v[15],
            phi_residual: v[16],
            psi_residual: v[17],
            psi_compensated: v[18],
            w1_to_limit: v[19],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_roundtrip() {
        let mut r = DiagnosticsRecord::empty(7, 0.25);
        r.energy = 1.5;
        r.w1_to_limit = 0.01;
        let back = DiagnosticsRecord::from_values(7, r.values());
        assert_eq!(back.energy, 1.5);
        assert_eq!(back.w1_to_limit, 0.01);
        assert!(back.l4_density.is_nan());
        assert_eq!(DiagnosticsRecord::COLUMNS.len(), r.values().len() + 1);
    }
}
