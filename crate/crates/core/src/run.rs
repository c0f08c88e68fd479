//! Particle runs, mean-field runs and N-sweeps, in memory and on disk.
//!
//! A run directory contains `config.toml` (the effective configuration, enough to
//! reproduce the run), `seeds.csv`, `manifest.json`, `metrics.csv` and `snapshots/`.
//! A sweep directory contains its own `config.toml`, an optional `reference/` mean-field
//! run, one subrun per `(N, replica)` under `N<count>/replica<r>/`, `failures.csv` and
//! `aggregate.csv`.

use crate::config::{ConfigError, RunConfig, RunMode};
use crate::diagnostics::{
    marginal_inequality_report, wasserstein1, DiagnosticsRecord, EnergyError, EnergyLedger, EnergyStep, PhaseFrame,
    TransportError, WeakError, WeakResidualAccumulator,
};
use crate::fluid::{FluidError, FluidSolver, FluidState, InitialVelocity};
use crate::io::{read_metrics, save_metrics, IoError, Snapshot, Table, AGGREGATE_SCHEMA};
use crate::kinetic::{
    drag_dissipation, nodal_velocity, KineticError, KineticGrid, KineticParams, VelocityGrid, VnsSolver,
};
use crate::mollifier::{MollifierError, PeriodicKernel};
use crate::particles::{
    deposit_force, drag_forces, em_step, empirical_density, eval_u_at_particles, sample_initial, EmpiricalMeasure,
    ParticleEnsemble, ParticleError,
};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Mollifier(#[from] MollifierError),
    #[error("particle solver: {0}")]
    Particle(#[from] ParticleError),
    #[error("fluid solver at step {step}: {source}")]
    Fluid { step: usize, source: FluidError },
    #[error("kinetic solver at step {step}: {source}")]
    Kinetic { step: usize, source: KineticError },
    #[error(transparent)]
    Weak(#[from] WeakError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("wrong mode: {0}")]
    Mode(String),
}

impl RunError {
    /// Whether the error comes from the dynamics rather than configuration or I/O.
    pub fn is_blow_up(&self) -> bool {
        matches!(
            self,
            RunError::Particle(ParticleError::BlowUp { .. }) | RunError::Fluid { .. } | RunError::Kinetic { .. }
        )
    }
}

/// Seed of replica `r`; replica 0 uses the master seed itself. Derived seeds keep 63 bits
/// so they fit a TOML integer.
pub fn replica_seed(master: u64, replica: usize) -> u64 {
    if replica == 0 {
        return master;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(replica as u64);
    rng.next_u64() >> 1
}

/// State handed to snapshot observers of a particle run.
pub struct ParticleFrame<'a> {
    pub step: usize,
    pub ensemble: &'a ParticleEnsemble,
    pub fluid: &'a FluidState,
    pub solver: &'a FluidSolver,
    /// Mollified empirical density `F^N`.
    pub density: &'a KineticGrid,
}

#[derive(Debug, Clone)]
pub struct ParticleOutcome {
    pub epsilon: f64,
    pub records: Vec<DiagnosticsRecord>,
    pub ensemble: ParticleEnsemble,
    pub fluid: FluidState,
    pub weak: WeakResidualAccumulator,
}

fn fill_weak(rec: &mut DiagnosticsRecord, weak: &WeakResidualAccumulator) {
    let sum = |v: Vec<f64>| v.iter().map(|r| r.abs()).sum::<f64>();
    rec.phi_residual = sum(weak.phi_residuals());
    rec.psi_residual = sum(weak.psi_residuals());
    rec.psi_compensated = sum(weak.psi_compensated());
}

fn fill_density(rec: &mut DiagnosticsRecord, f: &KineticGrid) {
    let report = marginal_inequality_report(f);
    rec.l4_density = report.term_l4;
    rec.moment3_density = report.term_moment;
    rec.l2_marginal = report.lhs;
    rec.marginal_rhs = report.rhs();
}

fn is_snapshot(step: usize, cadence: usize, last: usize) -> bool {
    step % cadence == 0 || step == last
}

/// Integrates the particle system with `n_particles` particles from `seed`. Metrics are
/// recorded every step; `observe` sees every snapshot.
pub fn simulate_particles<O>(
    cfg: &RunConfig,
    n_particles: usize,
    seed: u64,
    mut observe: O,
) -> Result<ParticleOutcome, RunError>
where
    O: FnMut(&ParticleFrame<'_>) -> Result<(), RunError>,
{
    let eps = cfg.epsilon(n_particles)?;
    let kernel = PeriodicKernel::try_new(eps)?;
    let n = cfg.fluid.n;
    let solver = FluidSolver::new(n, cfg.fluid.viscosity);
    let mut state = cfg.fluid.initial.build(n);
    let mut ens = sample_initial(&cfg.initial_density, n_particles, seed, cfg.sigma)?;
    let vgrid = cfg.diagnostics.density_velocity_grid(eps);
    let drag = cfg.drag;
    let mut weak = WeakResidualAccumulator::new(cfg.diagnostics.catalog.clone(), cfg.sigma, drag);
    let mut ledger = EnergyLedger::default();
    let steps = cfg.steps();
    let cadence = cfg.cadence(cfg.dt);
    let mut records = Vec::with_capacity(steps + 1);
    let mut pending: Option<EnergyStep> = None;
    let inv_n = 1.0 / n_particles as f64;

    for k in 0..=steps {
        let t = ens.time;
        let u = solver.velocity(&state);
        let u_eps = eval_u_at_particles(&u, Some(&kernel), &ens.x);
        let u_raw = eval_u_at_particles(&u, None, &ens.x);
        weak.observe(t, &u, solver.fft(), PhaseFrame::Particles { x: &ens.x, v: &ens.v, u: &u_raw })?;

        let fluid_energy = u.kinetic_energy();
        let energy = fluid_energy + ens.kinetic_energy();
        let grad_norm_sqr = solver.dissipation_rate(&state);
        let g = drag_forces(&ens, &u_eps, &drag);
        let dissipation = g
            .iter()
            .zip(&u_eps)
            .zip(&ens.v)
            .map(|((g, u), v)| g[0] * (u[0] - v[0]) + g[1] * (u[1] - v[1]))
            .sum::<f64>()
            * inv_n;

        let mut rec = DiagnosticsRecord::empty(k, t);
        rec.energy = energy;
        rec.fluid_energy = fluid_energy;
        rec.enstrophy = solver.enstrophy(&state);
        rec.grad_enstrophy = solver.grad_enstrophy(&state);
        rec.dissipation = dissipation;
        rec.moment1 = ens.velocity_moment(1.0);
        rec.moment2 = ens.velocity_moment(2.0);
        rec.moment3 = ens.velocity_moment(3.0);
        if let Some(mut step) = pending.take() {
            step.energy_after = energy;
            rec.energy_residual = ledger.push(&step)?;
        } else {
            rec.energy_residual = 0.0;
        }
        rec.energy_residual_cum = ledger.accumulated;
        fill_weak(&mut rec, &weak);
        if is_snapshot(k, cadence, steps) {
            let (density, leaked) = empirical_density(&ens, &kernel, &vgrid, cfg.diagnostics.density_nx);
            fill_density(&mut rec, &density);
            rec.leaked = leaked;
            observe(&ParticleFrame { step: k, ensemble: &ens, fluid: &state, solver: &solver, density: &density })?;
        }
        records.push(rec);
        if k == steps {
            break;
        }

        let force = deposit_force(&ens, &u_eps, &kernel, &drag, n);
        let (x0, v0) = (ens.x.clone(), ens.v.clone());
        solver.step(&mut state, Some(&force), cfg.dt).map_err(|source| RunError::Fluid { step: k, source })?;
        let dw = em_step(&mut ens, &u_eps, cfg.dt, &drag)?;
        weak.add_noise(t, &x0, &v0, &dw);
        let noise_work = v0.iter().zip(&dw).map(|(v, w)| v[0] * w[0] + v[1] * w[1]).sum::<f64>() * inv_n;
        pending = Some(EnergyStep {
            dt: cfg.dt,
            energy_before: energy,
            energy_after: f64::NAN,
            dissipation,
            grad_norm_sqr,
            sigma: cfg.sigma,
            noise_work: Some(noise_work),
        });
    }
    Ok(ParticleOutcome { epsilon: eps, records, ensemble: ens, fluid: state, weak })
}

#[derive(Debug, Clone)]
pub struct PdeOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub fluid: FluidState,
    pub density: KineticGrid,
    pub weak: WeakResidualAccumulator,
}

/// Integrates the mean-field system on the kinetic grid; `observe` sees every snapshot.
pub fn simulate_pde<O>(cfg: &RunConfig, mut observe: O) -> Result<PdeOutcome, RunError>
where
    O: FnMut(usize, &FluidState, &FluidSolver, &KineticGrid) -> Result<(), RunError>,
{
    let k = &cfg.kinetic;
    let solver = VnsSolver::new(
        FluidSolver::new(k.nx, cfg.fluid.viscosity),
        KineticParams { sigma: cfg.sigma, drag: cfg.drag },
    );
    let mut state = cfg.fluid.initial.build(k.nx);
    let mut f = KineticGrid::from_density(k.nx, VelocityGrid::new(k.nv, k.vmax), &cfg.initial_density);
    let mut weak = WeakResidualAccumulator::new(cfg.diagnostics.catalog.clone(), cfg.sigma, cfg.drag);
    let mut ledger = EnergyLedger::default();
    let steps = cfg.kinetic_steps();
    let cadence = cfg.cadence(k.dt);
    let mut records = Vec::with_capacity(steps + 1);
    let mut pending: Option<EnergyStep> = None;

    for step in 0..=steps {
        let t = f.time;
        let u = solver.fluid.velocity(&state);
        let u_nodes = nodal_velocity(&solver.fluid, &state);
        weak.observe(t, &u, solver.fluid.fft(), PhaseFrame::Grid { f: &f, u: &u_nodes })?;
        let fluid_energy = u.kinetic_energy();
        let energy = fluid_energy + 0.5 * f.moment(2.0);
        let dissipation = drag_dissipation(&f, &u_nodes, &cfg.drag);
        let grad_norm_sqr = solver.fluid.dissipation_rate(&state);

        let mut rec = DiagnosticsRecord::empty(step, t);
        rec.energy = energy;
        rec.fluid_energy = fluid_energy;
        rec.enstrophy = solver.fluid.enstrophy(&state);
        rec.grad_enstrophy = solver.fluid.grad_enstrophy(&state);
        rec.dissipation = dissipation;
        rec.moment1 = f.moment(1.0);
        rec.moment2 = f.moment(2.0);
        rec.moment3 = f.moment(3.0);
        rec.leaked = f.leaked;
        if let Some(mut s) = pending.take() {
            s.energy_after = energy;
            rec.energy_residual = ledger.push(&s)?;
        } else {
            rec.energy_residual = 0.0;
        }
        rec.energy_residual_cum = ledger.accumulated;
        fill_weak(&mut rec, &weak);
        if is_snapshot(step, cadence, steps) {
            fill_density(&mut rec, &f);
            observe(step, &state, &solver.fluid, &f)?;
        }
        records.push(rec);
        if step == steps {
            break;
        }
        solver.step(&mut state, &mut f, k.dt).map_err(|source| match source {
            KineticError::Fluid(source) => RunError::Fluid { step, source },
            source => RunError::Kinetic { step, source },
        })?;
        pending = Some(EnergyStep {
            dt: k.dt,
            energy_before: energy,
            energy_after: f64::NAN,
            dissipation,
            grad_norm_sqr,
            sigma: cfg.sigma,
            noise_work: Some(0.0),
        });
    }
    Ok(PdeOutcome { records, fluid: state, density: f, weak })
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub n_particles: Option<usize>,
    pub epsilon: Option<f64>,
    pub replica: Option<usize>,
    pub seed: u64,
    pub steps: usize,
    pub snapshots: Vec<String>,
}

fn create_dir(path: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(path)
        .map_err(|source| RunError::Io(IoError::Io { path: path.to_path_buf(), source }))
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|source| RunError::Io(IoError::Io { path: path.to_path_buf(), source }))
}

fn write_seed_ledger(dir: &Path, cfg: &RunConfig, rows: &[(String, String)]) -> Result<(), RunError> {
    let mut text = String::from("role,seed,note\n");
    for (role, seed) in rows {
        text.push_str(&format!("{role},{seed},\n"));
    }
    if let InitialVelocity::RandomBand { seed, .. } = cfg.fluid.initial {
        text.push_str(&format!("fluid_initial,{seed},shared by all runs\n"));
    }
    write_text(&dir.join("seeds.csv"), &text)
}

/// Paths of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub records: Vec<DiagnosticsRecord>,
}

fn particle_run_into(
    cfg: &RunConfig,
    dir: &Path,
    replica: Option<usize>,
    reference: Option<&EmpiricalMeasure>,
) -> Result<(RunArtifacts, ParticleOutcome), RunError> {
    let n_particles = cfg.particles[0];
    let snaps = dir.join("snapshots");
    create_dir(&snaps)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    let particle_seed = cfg.seed;
    write_seed_ledger(
        dir,
        cfg,
        &[
            ("initial_particles".into(), particle_seed.to_string()),
            ("noise".into(), format!("{particle_seed}")),
        ],
    )?;
    let mut names = Vec::new();
    let mut outcome = simulate_particles(cfg, n_particles, particle_seed, |frame| {
        let s = frame.step as u64;
        let fluid_name = format!("fluid_{:06}.bin", frame.step);
        Snapshot::fluid(frame.fluid, frame.solver.fft(), s).write(&snaps.join(&fluid_name))?;
        let part_name = format!("particles_{:06}.bin", frame.step);
        Snapshot::particles(&frame.ensemble.x, &frame.ensemble.v, frame.ensemble.time, s).write(&snaps.join(&part_name))?;
        names.push(fluid_name);
        names.push(part_name);
        Ok(())
    })?;
    if let Some(reference) = reference {
        let cells = cfg.diagnostics.coarse_cells();
        let binned = cells.bin_measure(&outcome.ensemble.empirical_measure());
        let w1 = wasserstein1(&binned, reference)?;
        if let Some(last) = outcome.records.last_mut() {
            last.w1_to_limit = w1.value;
        }
    }
    let metrics = dir.join("metrics.csv");
    let manifest = Manifest {
        kind: "particle".into(),
        n_particles: Some(n_particles),
        epsilon: Some(outcome.epsilon),
        replica,
        seed: particle_seed,
        steps: cfg.steps(),
        snapshots: names,
    };
    write_text(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).map_err(IoError::from)? + "\n"))?;
    save_metrics(&metrics, &outcome.records)?;
    let records = std::mem::take(&mut outcome.records);
    Ok((RunArtifacts { dir: dir.to_path_buf(), metrics, records: records.clone() }, ParticleOutcome { records, ..outcome }))
}

fn require_valid(cfg: &RunConfig, mode: RunMode) -> Result<(), RunError> {
    if cfg.mode != mode {
        return Err(RunError::Mode(format!("expected mode {mode:?}, configuration has {:?}", cfg.mode)));
    }
    cfg.validate()?;
    Ok(())
}

/// Runs a single particle simulation into `dir`.
pub fn run_particle(cfg: &RunConfig, dir: &Path) -> Result<RunArtifacts, RunError> {
    require_valid(cfg, RunMode::Particle)?;
    particle_run_into(cfg, dir, None, None).map(|(a, _)| a)
}

fn pde_run_into(cfg: &RunConfig, dir: &Path, keep_all: bool) -> Result<(RunArtifacts, PdeOutcome), RunError> {
    let snaps = dir.join("snapshots");
    create_dir(&snaps)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    write_seed_ledger(dir, cfg, &[])?;
    let last = cfg.kinetic_steps();
    let mut names = Vec::new();
    let outcome = simulate_pde(cfg, |step, state, solver, f| {
        let fluid_name = format!("fluid_{step:06}.bin");
        Snapshot::fluid(state, solver.fft(), step as u64).write(&snaps.join(&fluid_name))?;
        names.push(fluid_name);
        if keep_all || step == last {
            let kin_name = format!("kinetic_{step:06}.bin");
            Snapshot::kinetic(f, step as u64).write(&snaps.join(&kin_name))?;
            names.push(kin_name);
        }
        Ok(())
    })?;
    let metrics = dir.join("metrics.csv");
    let manifest = Manifest {
        kind: "pde".into(),
        n_particles: None,
        epsilon: None,
        replica: None,
        seed: cfg.seed,
        steps: last,
        snapshots: names,
    };
    write_text(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).map_err(IoError::from)? + "\n"))?;
    save_metrics(&metrics, &outcome.records)?;
    Ok((RunArtifacts { dir: dir.to_path_buf(), metrics, records: outcome.records.clone() }, outcome))
}

/// Runs the mean-field solver into `dir`, storing kinetic snapshots at every cadence.
pub fn run_pde(cfg: &RunConfig, dir: &Path) -> Result<RunArtifacts, RunError> {
    require_valid(cfg, RunMode::Pde)?;
    pde_run_into(cfg, dir, true).map(|(a, _)| a)
}

/// A subrun that did not complete.
#[derive(Debug, Clone, PartialEq)]
pub struct SubrunFailure {
    pub label: String,
    pub message: String,
    pub blow_up: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub dir: PathBuf,
    pub aggregate: Table,
    pub failures: Vec<SubrunFailure>,
}

/// Configuration of subrun `(n, replica)` of a sweep: a self-contained particle config.
pub fn subrun_config(cfg: &RunConfig, n_particles: usize, replica: usize, dir: &Path) -> RunConfig {
    let mut sub = cfg.clone();
    sub.mode = RunMode::Particle;
    sub.particles = vec![n_particles];
    sub.replicas = 1;
    sub.seed = replica_seed(cfg.seed, replica);
    sub.output_dir = dir.to_path_buf();
    sub.diagnostics.reference = false;
    sub
}

pub fn subrun_dir(root: &Path, n_particles: usize, replica: usize) -> PathBuf {
    root.join(format!("N{n_particles}")).join(format!("replica{replica}"))
}

/// Runs every `(N, replica)` subrun (in parallel on the current rayon pool), the optional
/// mean-field reference, and writes the aggregate table. Failed subruns are recorded and
/// skipped.
pub fn run_sweep(cfg: &RunConfig, dir: &Path) -> Result<SweepReport, RunError> {
    require_valid(cfg, RunMode::Sweep)?;
    create_dir(dir)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    let mut failures = Vec::new();
    let reference = if cfg.diagnostics.reference {
        let mut ref_cfg = cfg.clone();
        ref_cfg.mode = RunMode::Pde;
        ref_cfg.output_dir = dir.join("reference");
        match pde_run_into(&ref_cfg, &dir.join("reference"), false) {
            Ok((_, out)) => Some(cfg.diagnostics.coarse_cells().bin_grid(&out.density)),
            Err(e) => {
                log::error!("reference run failed: {e}");
                failures.push(SubrunFailure { label: "reference".into(), message: e.to_string(), blow_up: e.is_blow_up() });
                None
            }
        }
    } else {
        None
    };
    let jobs: Vec<(usize, usize)> =
        cfg.particles.iter().flat_map(|&n| (0..cfg.replicas).map(move |r| (n, r))).collect();
    let results: Vec<Option<SubrunFailure>> = jobs
        .par_iter()
        .with_max_len(1)
        .map(|&(n, r)| {
            let sub_dir = subrun_dir(dir, n, r);
            let sub = subrun_config(cfg, n, r, &sub_dir);
            match particle_run_into(&sub, &sub_dir, Some(r), reference.as_ref()) {
                Ok(_) => None,
                Err(e) => {
                    log::error!("subrun N = {n}, replica {r} failed: {e}");
                    Some(SubrunFailure { label: format!("N{n}/replica{r}"), message: e.to_string(), blow_up: e.is_blow_up() })
                }
            }
        })
        .collect();
    failures.extend(results.into_iter().flatten());
    let mut text = String::from("subrun,blow_up,message\n");
    for f in &failures {
        text.push_str(&format!("{},{},\"{}\"\n", f.label, f.blow_up, f.message.replace('"', "'").replace('\n', " ")));
    }
    write_text(&dir.join("failures.csv"), &text)?;
    let aggregate = aggregate_sweep(dir)?;
    aggregate.save(&dir.join("aggregate.csv"), AGGREGATE_SCHEMA)?;
    Ok(SweepReport { dir: dir.to_path_buf(), aggregate, failures })
}

/// Per-replica summary statistics folded into the aggregate table.
pub const AGGREGATE_STATISTICS: [&str; 11] = [
    "sup_l4_density",
    "sup_moment3_density",
    "sup_l2_marginal",
    "marginal_violations",
    "min_dissipation",
    "energy_residual_cum",
    "weak_residual",
    "phi_residual",
    "psi_residual",
    "psi_compensated",
    "w1_to_limit",
];

fn nan_max(values: impl Iterator<Item = f64>) -> f64 {
    values.filter(|v| !v.is_nan()).fold(f64::NAN, |a, b| if a.is_nan() { b } else { a.max(b) })
}

fn nan_min(values: impl Iterator<Item = f64>) -> f64 {
    values.filter(|v| !v.is_nan()).fold(f64::NAN, |a, b| if a.is_nan() { b } else { a.min(b) })
}

/// Summary statistics of one metrics table, in `AGGREGATE_STATISTICS` order.
pub fn summarize(records: &[DiagnosticsRecord]) -> [f64; 11] {
    let last = records.last().copied().unwrap_or_else(|| DiagnosticsRecord::empty(0, 0.0));
    let violations = records
        .iter()
        .filter(|r| !r.l2_marginal.is_nan() && !r.marginal_rhs.is_nan() && r.l2_marginal > r.marginal_rhs)
        .count();
    [
        nan_max(records.iter().map(|r| r.l4_density)),
        nan_max(records.iter().map(|r| r.moment3_density)),
        nan_max(records.iter().map(|r| r.l2_marginal)),
        violations as f64,
        nan_min(records.iter().map(|r| r.dissipation)),
        last.energy_residual_cum,
        last.phi_residual + last.psi_residual,
        last.phi_residual,
        last.psi_residual,
        last.psi_compensated,
        last.w1_to_limit,
    ]
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sorted_numbered_dirs(root: &Path, prefix: &str) -> Result<Vec<(usize, PathBuf)>, RunError> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|source| RunError::Io(IoError::Io { path: root.to_path_buf(), source }))?;
    for e in entries.flatten() {
        let name = e.file_name().to_string_lossy().into_owned();
        if let Some(num) = name.strip_prefix(prefix).and_then(|s| s.parse::<usize>().ok()) {
            if e.path().is_dir() {
                out.push((num, e.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Rebuilds the aggregate table of a sweep directory from its subrun metrics tables.
/// Subruns without a metrics table count as failed.
pub fn aggregate_sweep(dir: &Path) -> Result<Table, RunError> {
    let mut header = vec!["n_particles".to_string(), "epsilon".into(), "replicas".into(), "failed".into()];
    for s in AGGREGATE_STATISTICS {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_stderr"));
    }
    let mut rows = Vec::new();
    for (n, n_dir) in sorted_numbered_dirs(dir, "N")? {
        let mut summaries = Vec::new();
        let mut failed = 0usize;
        let mut eps = f64::NAN;
        for (_, rep_dir) in sorted_numbered_dirs(&n_dir, "replica")? {
            let metrics = rep_dir.join("metrics.csv");
            if !metrics.exists() {
                failed += 1;
                continue;
            }
            let cfg = RunConfig::load(&rep_dir.join("config.toml"))?;
            eps = cfg.epsilon(n)?;
            summaries.push(summarize(&read_metrics(&metrics)?));
        }
        let mut row = vec![n.to_string(), crate::io::format_float(eps), summaries.len().to_string(), failed.to_string()];
        for k in 0..AGGREGATE_STATISTICS.len() {
            let column: Vec<f64> = summaries.iter().map(|s| s[k]).collect();
            let (m, se) = mean_stderr(&column);
            row.push(crate::io::format_float(m));
            row.push(crate::io::format_float(se));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut cfg = RunConfig { particles: vec![50], t_end: 0.02, dt: 0.01, snapshot_interval: 0.01, ..RunConfig::default() };
        cfg.fluid.n = 16;
        cfg.diagnostics.density_nx = 8;
        cfg.diagnostics.density_dv_over_eps = 0.5;
        cfg
    }

    #[test]
    fn replica_zero_uses_master_seed() {
        assert_eq!(replica_seed(99, 0), 99);
        assert_ne!(replica_seed(99, 1), replica_seed(99, 2));
        assert_eq!(replica_seed(99, 3), replica_seed(99, 3));
    }

    #[test]
    fn particle_records_every_step() {
        let cfg = small();
        let mut snaps = Vec::new();
        let out = simulate_particles(&cfg, 50, 3, |f| {
            snaps.push(f.step);
            Ok(())
        })
        .unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(snaps, vec![0, 1, 2]);
        assert!(out.records.iter().all(|r| !r.l4_density.is_nan() && r.dissipation >= 0.0));
        assert_eq!(out.records[0].energy_residual, 0.0);
    }

    #[test]
    fn zero_duration_run_has_one_row() {
        let cfg = RunConfig { t_end: 0.0, ..small() };
        let dir = tempfile::tempdir().unwrap();
        let art = run_particle(&cfg, dir.path()).unwrap();
        assert_eq!(art.records.len(), 1);
        let mut files: Vec<String> = std::fs::read_dir(dir.path().join("snapshots"))
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        files.sort();
        assert_eq!(files, ["fluid_000000.bin", "fluid_000000.bin.json", "particles_000000.bin", "particles_000000.bin.json"]);
    }

    #[test]
    fn summary_counts_violations_and_ignores_nan() {
        let mut a = DiagnosticsRecord::empty(0, 0.0);
        a.l2_marginal = 2.0;
        a.marginal_rhs = 1.0;
        a.dissipation = 0.5;
        let mut b = DiagnosticsRecord::empty(1, 0.1);
        b.l2_marginal = 1.0;
        b.marginal_rhs = 3.0;
        b.dissipation = 0.25;
        b.phi_residual = 0.1;
        b.psi_residual = 0.2;
        let s = summarize(&[a, b]);
        assert_eq!(s[2], 2.0);
        assert_eq!(s[3], 1.0);
        assert_eq!(s[4], 0.25);
        assert!((s[6] - 0.3).abs() < 1e-15);
        assert!(s[0].is_nan());
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, f64::NAN]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
