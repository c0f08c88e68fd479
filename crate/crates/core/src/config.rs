//! Run configuration: a single versioned TOML file with documented defaults.

use crate::diagnostics::{CoarseCells, TestCatalog};
use crate::drag::DragSpec;
use crate::fluid::{FluidSolver, InitialVelocity};
use crate::kinetic::{drift_cfl_limit, nodal_velocity, KineticGrid, VelocityGrid};
use crate::mollifier::{beta_upper_bound, epsilon_for, MollifierSpec, DIM};
use crate::particles::InitialDensity;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_SCHEMA: &str = "vnsim-config v1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Particle,
    Pde,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidConfig {
    /// Grid points per side.
    pub n: usize,
    pub viscosity: f64,
    pub initial: InitialVelocity,
}

impl Default for FluidConfig {
    fn default() -> Self {
        Self { n: 128, viscosity: 1.0, initial: InitialVelocity::default() }
    }
}

/// Grid and step of the mean-field solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticConfig {
    pub nx: usize,
    pub nv: usize,
    pub vmax: f64,
    pub dt: f64,
}

impl Default for KineticConfig {
    fn default() -> Self {
        Self { nx: 64, nv: 64, vmax: 8.0, dt: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Spatial resolution of the mollified empirical density.
    pub density_nx: usize,
    /// Velocity cell width of the mollified empirical density, in units of `eps_N`.
    pub density_dv_over_eps: f64,
    /// Velocity half-width of the mollified empirical density.
    pub density_vmax: f64,
    /// Coarse cells used for `w1_to_limit`.
    pub w1_cells_x: usize,
    pub w1_cells_v: usize,
    pub w1_vmax: f64,
    /// Run the mean-field reference in sweeps and report `w1_to_limit`.
    pub reference: bool,
    pub catalog: TestCatalog,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            density_nx: 32,
            density_dv_over_eps: 0.25,
            density_vmax: 6.0,
            w1_cells_x: 4,
            w1_cells_v: 7,
            w1_vmax: 3.5,
            reference: true,
            catalog: TestCatalog::default(),
        }
    }
}

impl DiagnosticsConfig {
    pub fn coarse_cells(&self) -> CoarseCells {
        CoarseCells { cells_x: self.w1_cells_x, cells_v: self.w1_cells_v, vmax: self.w1_vmax }
    }

    pub fn density_velocity_grid(&self, eps: f64) -> VelocityGrid {
        VelocityGrid::covering(self.density_vmax, self.density_dv_over_eps * eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub mode: RunMode,
    /// Particle counts; a single entry for `particle` runs, ascending for sweeps.
    pub particles: Vec<usize>,
    pub beta: f64,
    pub sigma: f64,
    pub drag: DragSpec,
    pub t_end: f64,
    /// Particle and fluid time step.
    pub dt: f64,
    pub seed: u64,
    pub replicas: usize,
    /// Simulated time between field snapshots.
    pub snapshot_interval: f64,
    pub output_dir: PathBuf,
    pub fluid: FluidConfig,
    pub kinetic: KineticConfig,
    pub initial_density: InitialDensity,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA.to_string(),
            mode: RunMode::Particle,
            particles: vec![1000],
            beta: 0.2,
            sigma: 0.5,
            drag: DragSpec::default(),
            t_end: 0.5,
            dt: 0.005,
            seed: 1,
            replicas: 1,
            snapshot_interval: 0.1,
            output_dir: PathBuf::from("runs/default"),
            fluid: FluidConfig::default(),
            kinetic: KineticConfig::default(),
            initial_density: InitialDensity::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

fn steps_for(t_end: f64, dt: f64) -> Option<usize> {
    let steps = (t_end / dt).round();
    ((steps * dt - t_end).abs() <= 1e-9 * t_end.max(dt)).then_some(steps as usize)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always serializable")
    }

    pub fn mollifier(&self) -> Result<MollifierSpec, ConfigError> {
        MollifierSpec::new(self.beta).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))
    }

    pub fn epsilon(&self, n_particles: usize) -> Result<f64, ConfigError> {
        epsilon_for(n_particles as u64, &self.mollifier()?).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))
    }

    /// Number of particle/fluid steps.
    pub fn steps(&self) -> usize {
        steps_for(self.t_end, self.dt).unwrap_or(0)
    }

    pub fn kinetic_steps(&self) -> usize {
        steps_for(self.t_end, self.kinetic.dt).unwrap_or(0)
    }

    /// Steps between snapshots for a step of size `dt`.
    pub fn cadence(&self, dt: f64) -> usize {
        ((self.snapshot_interval / dt).round() as usize).max(1)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.schema != CONFIG_SCHEMA {
            errs.push(format!("schema must be \"{CONFIG_SCHEMA}\", got \"{}\"", self.schema));
        }
        let upper = beta_upper_bound(DIM);
        if !(self.beta > 0.0 && self.beta < upper) {
            errs.push(format!("beta must be < {upper} (d/(3d+2) with d = {DIM}) and > 0, got {}", self.beta));
        }
        if self.particles.is_empty() {
            errs.push("particles must list at least one particle count".into());
        }
        if self.particles.iter().any(|&n| n == 0) {
            errs.push("particle counts must be >= 1".into());
        }
        if self.particles.windows(2).any(|w| w[0] >= w[1]) {
            errs.push(format!("particle counts must be strictly ascending, got {:?}", self.particles));
        }
        if self.mode == RunMode::Particle && self.particles.len() > 1 {
            errs.push("particle mode takes a single particle count; use mode = \"sweep\"".into());
        }
        if self.seed > i64::MAX as u64 {
            errs.push(format!("seed must be <= {}, got {}", i64::MAX, self.seed));
        }
        if let InitialVelocity::RandomBand { seed, .. } = self.fluid.initial {
            if seed > i64::MAX as u64 {
                errs.push(format!("fluid.initial.seed must be <= {}, got {seed}", i64::MAX));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            errs.push(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if let DragSpec::Saturated { kappa } = self.drag {
            if !(kappa > 0.0 && kappa.is_finite()) {
                errs.push(format!("kappa must be finite and > 0, got {kappa}"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            errs.push(format!("t_end must be finite and >= 0, got {}", self.t_end));
        }
        if !(self.dt > 0.0) {
            errs.push(format!("dt must be > 0, got {}", self.dt));
        } else if steps_for(self.t_end, self.dt).is_none() {
            errs.push(format!("t_end = {} must be an integer multiple of dt = {}", self.t_end, self.dt));
        }
        if self.replicas == 0 {
            errs.push("replicas must be >= 1".into());
        }
        if !(self.snapshot_interval > 0.0) {
            errs.push(format!("snapshot_interval must be > 0, got {}", self.snapshot_interval));
        }
        if let Err(e) = self.initial_density.validate() {
            errs.push(format!("initial_density: {e}"));
        }
        let fluid_ok = self.fluid.n >= 4 && self.fluid.n % 2 == 0;
        if !fluid_ok {
            errs.push(format!("fluid.n must be even and >= 4, got {}", self.fluid.n));
        }
        if !(self.fluid.viscosity > 0.0) {
            errs.push(format!("fluid.viscosity must be > 0, got {}", self.fluid.viscosity));
        }
        let runs_particles = self.mode != RunMode::Pde;
        let runs_kinetic = self.mode == RunMode::Pde || (self.mode == RunMode::Sweep && self.diagnostics.reference);
        if runs_particles && fluid_ok && self.beta > 0.0 && self.beta < upper {
            if let Some(&n_max) = self.particles.iter().max() {
                let eps = (n_max as f64).powf(-self.beta / DIM as f64);
                let dx = 1.0 / self.fluid.n as f64;
                if dx > 0.5 * eps {
                    errs.push(format!(
                        "fluid grid too coarse: dx = {dx} > eps_N / 2 = {} for N = {n_max}; need fluid.n >= {}",
                        0.5 * eps,
                        (2.0 / eps).ceil()
                    ));
                }
            }
            if self.dt > 0.0 {
                let solver = FluidSolver::new(self.fluid.n, self.fluid.viscosity);
                let limit = solver.cfl_limit(&self.fluid.initial.build(self.fluid.n));
                if self.dt > limit {
                    errs.push(format!("dt = {} exceeds the fluid CFL bound {limit} at t = 0", self.dt));
                }
            }
        }
        let d = &self.diagnostics;
        if d.density_nx < 4 || !(d.density_dv_over_eps > 0.0) || !(d.density_vmax > 0.0) {
            errs.push("diagnostics: density grid needs density_nx >= 4, density_dv_over_eps > 0, density_vmax > 0".into());
        }
        if d.w1_cells_x == 0 || d.w1_cells_v == 0 || !(d.w1_vmax > 0.0) {
            errs.push("diagnostics: w1 cells must be positive with w1_vmax > 0".into());
        }
        if runs_kinetic {
            let k = &self.kinetic;
            let kin_ok = k.nx >= 4 && k.nx % 2 == 0 && k.nv >= 4 && k.vmax > 0.0 && k.dt > 0.0;
            if !kin_ok {
                errs.push(format!("kinetic grid invalid: nx = {} (even, >= 4), nv = {} (>= 4), vmax = {}, dt = {}", k.nx, k.nv, k.vmax, k.dt));
            } else {
                if steps_for(self.t_end, k.dt).is_none() {
                    errs.push(format!("t_end = {} must be an integer multiple of kinetic.dt = {}", self.t_end, k.dt));
                }
                let reach = d.catalog.max_reach();
                if reach > k.vmax {
                    errs.push(format!("test functions reach |v| = {reach} beyond kinetic.vmax = {}", k.vmax));
                }
                let solver = FluidSolver::new(k.nx, self.fluid.viscosity);
                let state = self.fluid.initial.build(k.nx);
                let fluid_limit = solver.cfl_limit(&state);
                if k.dt > fluid_limit {
                    errs.push(format!("kinetic.dt = {} exceeds the fluid CFL bound {fluid_limit} on the kinetic grid", k.dt));
                }
                if self.initial_density.validate().is_ok() {
                    let f = KineticGrid::zeros(k.nx, k.nv, k.vmax);
                    let limit = drift_cfl_limit(&f, &nodal_velocity(&solver, &state), &self.drag);
                    if k.dt > limit {
                        errs.push(format!("kinetic.dt = {} exceeds the velocity drift CFL bound {limit}", k.dt));
                    }
                    let needed = self.initial_density.max_mean_speed() + 6.0 * self.initial_density.max_std();
                    if needed > k.vmax {
                        errs.push(format!("kinetic.vmax = {} truncates the initial density; need >= {needed}", k.vmax));
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn messages(cfg: &RunConfig) -> Vec<String> {
        match cfg.validate() {
            Err(ConfigError::Invalid(m)) => m,
            other => panic!("expected invalid, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_valid_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn beta_above_bound_rejected() {
        let cfg = RunConfig { beta: 0.3, ..RunConfig::default() };
        assert!(messages(&cfg).iter().any(|m| m.contains("beta must be < 0.25")));
    }

    #[test]
    fn coarse_grid_rejected() {
        // eps = 1e6^{-0.1} = 0.2512, so dx must be <= 0.1256.
        let mut cfg = RunConfig { particles: vec![1_000_000], ..RunConfig::default() };
        cfg.fluid.n = 4;
        assert!(messages(&cfg).iter().any(|m| m.contains("fluid grid too coarse") && m.contains("need fluid.n >= 8")));
        cfg.fluid.n = 8;
        cfg.validate().unwrap();
    }

    #[test]
    fn errors_are_aggregated() {
        let cfg = RunConfig { beta: 0.3, sigma: -1.0, replicas: 0, particles: vec![100, 10], ..RunConfig::default() };
        assert_eq!(messages(&cfg).len(), 5);
    }

    #[test]
    fn step_grid_must_divide_horizon() {
        let cfg = RunConfig { t_end: 0.5, dt: 0.003, ..RunConfig::default() };
        assert!(messages(&cfg).iter().any(|m| m.contains("integer multiple")));
        assert_eq!(RunConfig::default().steps(), 100);
    }

    #[test]
    fn kinetic_checks_only_when_needed() {
        let mut cfg = RunConfig::default();
        cfg.kinetic.vmax = 1.0;
        cfg.validate().unwrap();
        cfg.mode = RunMode::Pde;
        let m = messages(&cfg);
        assert!(m.iter().any(|s| s.contains("beyond kinetic.vmax")));
        assert!(m.iter().any(|s| s.contains("truncates the initial density")));
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = RunConfig { mode: RunMode::Sweep, particles: vec![100, 1000], ..RunConfig::default() };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("betta = 0.1"), Err(ConfigError::Parse(_))));
    }
}
