//! Particle and mean-field simulation of a saturated-drag Vlasov-Navier-Stokes system on
//! the two-dimensional unit torus.

pub mod config;
pub mod diagnostics;
pub mod drag;
pub mod fluid;
pub mod io;
pub mod kinetic;
pub mod mollifier;
pub mod particles;
pub mod run;
pub mod spectral;
