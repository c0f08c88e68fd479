//! Discrete accounting of the energy identity
//!
//! ```text
//! dE + ((1/N) sum g(u_eps(X_i), V_i) . (u_eps(X_i) - V_i) + ||grad u||^2) dt
//!     = (d sigma^2 / 2) dt + (sigma / N) sum V_i . dW_i
//! ```
//!
//! with `E = 1/2 ||u||^2 + (1/2N) sum |V_i|^2`. Every rate is taken at the left end of a
//! step together with the realized Brownian increments of that step.

use crate::mollifier::DIM;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("step {0} has sigma > 0 but no recorded noise increments")]
    MissingNoise(usize),
}

/// Left-point data for one step of the energy balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStep {
    pub dt: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// `(1/N) sum g . (u_eps - V)` at the start of the step.
    pub dissipation: f64,
    /// `||grad u||^2` at the start of the step.
    pub grad_norm_sqr: f64,
    pub sigma: f64,
    /// `(1/N) sum V_i . dW_i`, required when `sigma > 0`.
    pub noise_work: Option<f64>,
}

impl EnergyStep {
    pub fn residual(&self) -> Result<f64, EnergyError> {
        let noise = match self.noise_work {
            Some(w) => self.sigma * w,
            None if self.sigma == 0.0 => 0.0,
            None => return Err(EnergyError::MissingNoise(0)),
        };
        Ok(self.energy_after - self.energy_before + (self.dissipation + self.grad_norm_sqr) * self.dt
            - 0.5 * DIM as f64 * self.sigma * self.sigma * self.dt
            - noise)
    }
}

/// Accumulated `sum |r_k|` over a window of steps.
pub fn energy_balance_residual(window: &[EnergyStep]) -> Result<f64, EnergyError> {
    window.iter().enumerate().try_fold(0.0, |acc, (k, s)| {
        s.residual().map(|r| acc + r.abs()).map_err(|_| EnergyError::MissingNoise(k))
    })
}

/// Running totals kept by a simulation loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub accumulated: f64,
    pub last: f64,
    pub steps: usize,
}

impl EnergyLedger {
    pub fn push(&mut self, step: &EnergyStep) -> Result<f64, EnergyError> {
        let r = step.residual().map_err(|_| EnergyError::MissingNoise(self.steps))?;
        self.accumulated += r.abs();
        self.last = r;
        self.steps += 1;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_window_is_zero() {
        assert_eq!(energy_balance_residual(&[]).unwrap(), 0.0);
    }

    #[test]
    fn exact_balance_has_zero_residual() {
        let s = EnergyStep {
            dt: 0.1,
            energy_before: 2.0,
            energy_after: 2.0 - 0.1 * 3.0 + 0.5 * 2.0 * 0.25 * 0.1 + 0.5 * 0.4,
            dissipation: 1.0,
            grad_norm_sqr: 2.0,
            sigma: 0.5,
            noise_work: Some(0.4),
        };
        assert!(s.residual().unwrap().abs() < 1e-15);
    }

    #[test]
    fn missing_noise_rejected() {
        let s = EnergyStep {
            dt: 0.1,
            energy_before: 1.0,
            energy_after: 1.0,
            dissipation: 0.0,
            grad_norm_sqr: 0.0,
            sigma: 1.0,
            noise_work: None,
        };
        assert_eq!(energy_balance_residual(&[s, s]), Err(EnergyError::MissingNoise(0)));
    }
}
