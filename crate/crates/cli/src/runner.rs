//! Verb implementations: each builds the configured system, does its work,
//! and returns a [`ReportBundle`] whose checks decide the exit code.
//!
//! Check failures are not errors: the bundle is still written and the CLI
//! exits 1. Errors (bad config, unreadable artifacts, solver breakdown) are
//! surfaced as [`RunnerError`] and exit 2.

use std::path::{Path, PathBuf};

use envar_core::bn::{
    bn_energy, hom_convexity_probe, hom_convexity_threshold, weak_strong_monitor, BnSystem,
    SmoothCurve,
};
use envar_core::defect::{
    integral_of_energy, reconstruct_min_defect, select_min_functional, turbulence_functional,
};
use envar_core::ek::{ek_convexity_probe, mass, EkSystem, Grid1D, ProbeWeight};
use envar_core::framework::{Modulation, System, TestPath, Trajectory};
use envar_core::saddle::SolverConfig;
use envar_core::stepper::run;
use envar_core::verifier::{apriori_check, default_pairs, verify, ResidualQuadrature};

use crate::artifact::{load_trajectory, save_trajectory, ArtifactError};
use crate::config::{ConfigError, RunConfig, SystemKind};
use crate::report::{CheckOutcome, ProbeRecord, ReportBundle};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("{0}")]
    Failed(String),
}

fn io_err(e: std::io::Error, what: &str) -> RunnerError {
    RunnerError::Failed(format!("{what}: {e}"))
}

/// The configured system together with its initial state and test family.
pub enum SystemHandle {
    Ek(EkSystem<f64>),
    Bn(BnSystem<f64>),
}

impl SystemHandle {
    pub fn build(cfg: &RunConfig) -> SystemHandle {
        match cfg.system {
            SystemKind::EulerKorteweg1d => {
                let grid = Grid1D::new(cfg.ek.length, cfg.ek.n_nodes);
                SystemHandle::Ek(EkSystem::new(grid, cfg.ek.gamma, cfg.ek.rho_bar))
            }
            SystemKind::Binormal => SystemHandle::Bn(BnSystem::new(cfg.polygon.n_vertices)),
        }
    }

    pub fn system(&self) -> &dyn System<f64> {
        match self {
            SystemHandle::Ek(s) => s,
            SystemHandle::Bn(s) => s,
        }
    }

    pub fn initial_state(&self, cfg: &RunConfig) -> Vec<f64> {
        match self {
            SystemHandle::Ek(sys) => {
                let two_pi = 2.0 * std::f64::consts::PI;
                let rho: Vec<f64> = sys
                    .grid
                    .nodes()
                    .iter()
                    .map(|&x| cfg.ek.rho_bar + cfg.ek.rho_amplitude * (two_pi * x / cfg.ek.length).cos())
                    .collect();
                let m = vec![0.0; cfg.ek.n_nodes];
                sys.pack(&rho, &m)
            }
            SystemHandle::Bn(sys) => {
                let mu = envar_core::bn::CurveMeasure::regular_ngon(
                    cfg.polygon.n_vertices,
                    cfg.polygon.radius,
                    [0.0; 3],
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                );
                sys.state_from_measure(&mu)
            }
        }
    }

    /// Deterministic verification family of the configured size: coefficient
    /// unit vectors cycled over the test basis (normalized to the certified
    /// unit sup bound for the binormal family), alternating constant and
    /// cosine time modulation.
    pub fn family(&self, cfg: &RunConfig) -> Vec<TestPath<f64>> {
        let sys = self.system();
        let dim = sys.test_dim();
        let mut out = Vec::with_capacity(cfg.family_size);
        for k in 0..cfg.family_size {
            let j = k % dim;
            let mut coeffs = vec![0.0; dim];
            coeffs[j] = 1.0;
            if matches!(self, SystemHandle::Bn(_)) {
                let b = sys.test_norm(&coeffs);
                coeffs[j] = if b > 0.0 { 0.9 / b } else { 0.0 };
            }
            let modulation = if k % 4 == 3 {
                Modulation::Cosine { omega: 2.0 + 0.5 * (k / 4) as f64 }
            } else {
                Modulation::Constant
            };
            out.push(TestPath { id: format!("path{k:02}-basis{j}"), coeffs, modulation });
        }
        out
    }

    /// Conserved bulk quantity for plots: density integral (EK) or
    /// theta-weighted curve length (binormal).
    pub fn mass_or_length(&self, state: &[f64]) -> f64 {
        match self {
            SystemHandle::Ek(sys) => mass(&sys.grid, &sys.state(state)),
            SystemHandle::Bn(sys) => bn_energy(&sys.measure_from_state(state)),
        }
    }
}

fn solver_config(cfg: &RunConfig) -> SolverConfig<f64> {
    SolverConfig {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        n_samples: cfg.solver.n_samples,
        seed: cfg.solver.seed,
    }
}

pub fn trajectory_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("trajectory.json")
}

pub fn bundle_path(cfg: &RunConfig, verb: &str) -> PathBuf {
    cfg.output_dir.join(format!("{verb}.bundle.json"))
}

fn ensure_output_dir(cfg: &RunConfig) -> Result<(), RunnerError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(e, "creating output dir"))
}

/// Run the minimizing-movements stepper and persist the trajectory.
pub fn simulate(cfg: &RunConfig) -> Result<ReportBundle, RunnerError> {
    ensure_output_dir(cfg)?;
    let handle = SystemHandle::build(cfg);
    let u0 = handle.initial_state(cfg);
    let scfg = solver_config(cfg);
    let mut traj = match &handle {
        SystemHandle::Ek(sys) => run(sys, &u0, cfg.horizon, cfg.n_steps, &cfg.restart_times, &scfg),
        SystemHandle::Bn(sys) => run(sys, &u0, cfg.horizon, cfg.n_steps, &cfg.restart_times, &scfg),
    }
    .map_err(|e| RunnerError::Failed(format!("stepper: {e}")))?;
    let hash = cfg.hash();
    traj.provenance.config_hash = hash.clone();

    let mut bundle = ReportBundle::new("simulate", &hash, cfg.solver.seed);
    let max_gap = traj
        .certificates
        .iter()
        .map(|c| c.gap_estimate)
        .fold(f64::NEG_INFINITY, f64::max);
    bundle.checks.push(CheckOutcome::le("max_step_gap", max_gap, cfg.solver.tol));
    bundle
        .checks
        .push(CheckOutcome::flag("all_steps_converged", traj.certificates.iter().all(|c| c.converged)));
    // Energy monotonicity: exact for EK; the binormal chart is length
    // preserving only to first order, so its increase is bounded by the
    // certified per-step gap.
    let sys = handle.system();
    let energies: Vec<f64> = traj.states.iter().map(|s| sys.energy(s)).collect();
    let mut worst_increase = f64::NEG_INFINITY;
    for n in 1..energies.len() {
        let slack = match handle {
            SystemHandle::Ek(_) => 0.0,
            SystemHandle::Bn(_) => traj.certificates[n - 1].gap_estimate,
        };
        worst_increase = worst_increase.max(energies[n] - energies[n - 1] - slack);
    }
    bundle.checks.push(CheckOutcome::le("max_energy_increase", worst_increase, 1e-8));
    let drift = match &handle {
        SystemHandle::Ek(_) => {
            let m0 = handle.mass_or_length(&traj.states[0]);
            traj.states
                .iter()
                .map(|s| (handle.mass_or_length(s) - m0).abs())
                .fold(0.0, f64::max)
        }
        SystemHandle::Bn(sys) => {
            // The structurally conserved quantity is the weighted vector area.
            let w0 = sys.measure_from_state(&traj.states[0]).weighted_vector_area();
            traj.states
                .iter()
                .map(|s| {
                    let w = sys.measure_from_state(s).weighted_vector_area();
                    (0..3).map(|i| (w[i] - w0[i]).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        }
    };
    bundle.checks.push(CheckOutcome::le("conserved_quantity_drift", drift, 1e-9));

    save_trajectory(&trajectory_path(cfg), &traj, &hash)?;
    Ok(bundle)
}

/// Verify the energy-variational inequality on a stored trajectory.
pub fn verify_trajectory(
    cfg: &RunConfig,
    traj_path: &Path,
    force: bool,
) -> Result<ReportBundle, RunnerError> {
    ensure_output_dir(cfg)?;
    let hash = cfg.hash();
    let traj = load_trajectory(traj_path, &hash, force)?;
    let handle = SystemHandle::build(cfg);
    let family = handle.family(cfg);
    let pairs = default_pairs(traj.times.len(), cfg.pair_cap, cfg.solver.seed);
    let report = verify(
        handle.system(),
        &traj,
        &family,
        &pairs,
        cfg.verify_tol,
        ResidualQuadrature::default(),
    )
    .map_err(|e| RunnerError::Failed(format!("verify: {e}")))?;
    let mut bundle = ReportBundle::new("verify", &hash, cfg.solver.seed);
    bundle.checks.push(CheckOutcome::le("max_residual", report.max_residual, cfg.verify_tol));
    // The a-priori monotonicity holds exactly for EK; the binormal chart
    // lets the energy rise by the certified per-step gap, so its bounds are
    // asserted at simulate time instead.
    if matches!(handle, SystemHandle::Ek(_)) {
        let apriori = apriori_check(handle.system(), &traj, traj.aux_energy[0]);
        bundle.checks.push(CheckOutcome::flag("apriori_bounds", apriori.pass));
        bundle.apriori = Some(apriori);
    }
    bundle.residual = Some(report);
    Ok(bundle)
}

/// Reconstruct the minimal admissible energy curve for stored states.
pub fn reconstruct_defect(
    cfg: &RunConfig,
    traj_path: &Path,
    force: bool,
) -> Result<ReportBundle, RunnerError> {
    ensure_output_dir(cfg)?;
    let hash = cfg.hash();
    let traj = load_trajectory(traj_path, &hash, force)?;
    let handle = SystemHandle::build(cfg);
    let family = handle.family(cfg);
    let pairs = default_pairs(traj.times.len(), cfg.pair_cap, cfg.solver.seed);
    let curve = reconstruct_min_defect(
        handle.system(),
        &traj,
        &family,
        &pairs,
        cfg.verify_tol,
        ResidualQuadrature::default(),
    )
    .map_err(|e| RunnerError::Failed(format!("defect LP: {e}")))?;
    let mut bundle = ReportBundle::new("reconstruct-defect", &hash, cfg.solver.seed);
    bundle.checks.push(CheckOutcome::flag("lp_feasible", curve.feasible));
    let max_defect = curve.defect().iter().fold(0.0_f64, |a, &d| a.max(d));
    // Recorded, not asserted: a genuine defect is legitimate output (the
    // tolerance is the JSON-representable stand-in for "unbounded").
    bundle
        .checks
        .push(CheckOutcome { name: "max_defect".into(), value: max_defect, tolerance: f64::MAX, pass: true });
    write_series_csv(&cfg.output_dir.join("defect.csv"), &handle, &traj, Some(&curve))?;
    bundle.defect = Some(curve);
    Ok(bundle)
}

/// Select among stored candidate trajectories by the configured functional.
pub fn select(cfg: &RunConfig, candidate_paths: &[PathBuf], force: bool) -> Result<ReportBundle, RunnerError> {
    ensure_output_dir(cfg)?;
    let hash = cfg.hash();
    let handle = SystemHandle::build(cfg);
    let mut candidates = Vec::new();
    for p in candidate_paths {
        candidates.push(load_trajectory(p, &hash, force)?);
    }
    let sys = handle.system();
    let functional = |t: &Trajectory<f64>| match cfg.selection_functional.as_str() {
        "integral-energy" => integral_of_energy(t),
        "initial-energy" => t.aux_energy[0],
        // Maximal turbulence: most negative integral of energy(U) - E first.
        "turbulence" => -turbulence_functional(sys, t),
        other => unreachable!("validated functional id {other}"),
    };
    let selection = select_min_functional(&candidates, functional)
        .map_err(|e| RunnerError::Failed(format!("selection: {e}")))?;
    let values: Vec<f64> = candidates.iter().map(functional).collect();
    let minimal = values.iter().all(|&v| selection.value <= v);
    let mut bundle = ReportBundle::new("select", &hash, cfg.solver.seed);
    bundle.checks.push(CheckOutcome::flag("selected_is_minimal", minimal));
    bundle.selection_candidates = candidate_paths.iter().map(|p| p.display().to_string()).collect();
    bundle.selection_values = values;
    bundle.selection = Some(selection);
    Ok(bundle)
}

/// Convexity probes: the system-specific lemma probe, plus (for binormal)
/// the 1-homogeneous threshold verdict for a caller-supplied matrix.
pub fn probe_convexity(
    cfg: &RunConfig,
    matrix: Option<[f64; 6]>,
    hom_gamma: Option<f64>,
) -> Result<ReportBundle, RunnerError> {
    ensure_output_dir(cfg)?;
    let hash = cfg.hash();
    let mut bundle = ReportBundle::new("probe-convexity", &hash, cfg.solver.seed);
    let handle = SystemHandle::build(cfg);
    match &handle {
        SystemHandle::Ek(sys) => {
            // A mixed shipped test function exercising both psi and phi parts.
            let dim = System::test_dim(sys);
            let mut coeffs = vec![0.0; dim];
            coeffs[1] = 0.4;
            coeffs[9] = 0.8;
            let testfn = sys.family.function(&sys.grid, &coeffs);
            let with_tilde = ek_convexity_probe(
                &sys.grid,
                &testfn,
                cfg.ek.gamma,
                cfg.ek.rho_bar,
                1000,
                cfg.solver.seed,
                ProbeWeight::Convexity,
            );
            bundle.checks.push(CheckOutcome::le(
                "midpoint_violation_with_ktilde",
                with_tilde.worst_violation,
                1e-9,
            ));
            bundle.probes.push(ProbeRecord {
                name: "ek-ktilde".into(),
                worst_violation: with_tilde.worst_violation,
                verdict_convex: with_tilde.worst_violation <= 1e-9,
                witness: None,
            });
            // The smaller lsc weight is expected to break convexity; the
            // witness is recorded, not asserted.
            let with_k = ek_convexity_probe(
                &sys.grid,
                &testfn,
                cfg.ek.gamma,
                cfg.ek.rho_bar,
                1000,
                cfg.solver.seed,
                ProbeWeight::Lsc,
            );
            bundle.probes.push(ProbeRecord {
                name: "ek-k-lsc".into(),
                worst_violation: with_k.worst_violation,
                verdict_convex: with_k.worst_violation <= 1e-9,
                witness: with_k
                    .witness
                    .as_ref()
                    .map(|w| serde_json::json!({ "violation": w.violation })),
            });
        }
        SystemHandle::Bn(_) => {
            let m6 = matrix.unwrap_or([1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
            let m = [
                [m6[0], m6[3], m6[4]],
                [m6[3], m6[1], m6[5]],
                [m6[4], m6[5], m6[2]],
            ];
            let threshold = hom_convexity_threshold(&m);
            let gamma = hom_gamma.unwrap_or(threshold + 0.05);
            let probe = hom_convexity_probe(&m, gamma, 10_000, cfg.solver.seed);
            let analytic_convex = gamma >= threshold;
            bundle
                .checks
                .push(CheckOutcome::flag("verdict_matches_threshold", probe.is_convex_empirically == analytic_convex));
            bundle.probes.push(ProbeRecord {
                name: format!("hom-threshold-{threshold:.6}"),
                worst_violation: probe.worst_violation,
                verdict_convex: probe.is_convex_empirically,
                witness: probe
                    .witness
                    .as_ref()
                    .map(|w| serde_json::to_value(w).expect("witness serializes")),
            });
        }
    }
    Ok(bundle)
}

/// Weak-strong monitor against the exact translating circle (binormal only).
pub fn weak_strong(cfg: &RunConfig, traj_path: &Path, force: bool) -> Result<ReportBundle, RunnerError> {
    let sys = match SystemHandle::build(cfg) {
        SystemHandle::Bn(sys) => sys,
        SystemHandle::Ek(_) => {
            return Err(RunnerError::Config(ConfigError {
                key: "system".into(),
                message: "weak-strong requires the binormal system".into(),
            }))
        }
    };
    ensure_output_dir(cfg)?;
    let hash = cfg.hash();
    let traj = load_trajectory(traj_path, &hash, force)?;
    let measures: Vec<_> = traj.states.iter().map(|s| sys.measure_from_state(s)).collect();
    let curve = SmoothCurve::translating_circle(
        cfg.polygon.radius,
        [0.0; 3],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
    );
    let n = cfg.polygon.n_vertices as f64;
    let allowance = 5.0 / (n * n);
    let report = weak_strong_monitor(&traj.times, &measures, &traj.aux_energy, &curve, allowance)
        .map_err(RunnerError::Failed)?;
    let mut bundle = ReportBundle::new("weak-strong", &hash, cfg.solver.seed);
    bundle.checks.push(CheckOutcome::flag("relative_energy_within_envelope", report.pass));
    bundle.weak_strong = Some(report);
    Ok(bundle)
}

/// Collate: one JSON summary over all bundles in the output directory plus
/// the plot-ready CSV (t, E, energy_of_U, defect, mass_or_length).
pub fn report(cfg: &RunConfig, force: bool) -> Result<ReportBundle, RunnerError> {
    ensure_output_dir(cfg)?;
    let hash = cfg.hash();
    let traj = load_trajectory(&trajectory_path(cfg), &hash, force)?;
    let handle = SystemHandle::build(cfg);
    let mut bundle = ReportBundle::new("report", &hash, cfg.solver.seed);
    // Fold in the pass state of every sibling bundle already on disk.
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(&cfg.output_dir).map_err(|e| io_err(e, "reading output dir"))? {
        let path = entry.map_err(|e| io_err(e, "reading output dir"))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        if name.ends_with(".bundle.json") && name != "report.bundle.json" {
            names.push(name);
        }
    }
    names.sort();
    let mut defect = None;
    for name in names {
        let sub = ReportBundle::read(&cfg.output_dir.join(&name)).map_err(RunnerError::Failed)?;
        bundle
            .checks
            .push(CheckOutcome::flag(&format!("bundle_pass:{name}"), sub.all_pass()));
        if sub.defect.is_some() {
            defect = sub.defect;
        }
    }
    write_series_csv(&cfg.output_dir.join("report.csv"), &handle, &traj, defect.as_ref())?;
    bundle.defect = defect;
    Ok(bundle)
}

/// Plot-ready node series. Values print in shortest round-trip decimal.
fn write_series_csv(
    path: &Path,
    handle: &SystemHandle,
    traj: &Trajectory<f64>,
    defect: Option<&envar_core::defect::DefectCurve<f64>>,
) -> Result<(), RunnerError> {
    let sys = handle.system();
    let mut text = String::from("t,E,energy_of_U,defect,mass_or_length\n");
    for n in 0..traj.times.len() {
        let e_of_u = sys.energy(&traj.states[n]);
        let (e, d) = match defect {
            Some(curve) => (curve.values[n], curve.values[n] - curve.energy[n]),
            None => (traj.aux_energy[n], traj.aux_energy[n] - e_of_u),
        };
        let ml = handle.mass_or_length(&traj.states[n]);
        text.push_str(&format!("{},{},{},{},{}\n", traj.times[n], e, e_of_u, d, ml));
    }
    std::fs::write(path, text).map_err(|e| io_err(e, "writing csv"))
}
