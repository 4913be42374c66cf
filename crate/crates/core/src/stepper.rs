//! Minimizing-movements time discretization: builds the per-step functional
//! F^n from the previous iterate, delegates the min-sup solve to the
//! system's step solver, and assembles the trajectory (whose states and
//! energies are the piecewise-constant prolongation data).

use crate::framework::{ContractError, Provenance, StepCertificate, System, Trajectory};
use crate::saddle::{SaddleResult, SolverConfig, SolverError};
use crate::scalar::{c, Scalar};

/// The per-step convex-concave objective
/// F^n(U|Phi) = E(U) + tau Psi^n(U) - E(U^{n-1}) - <U - U^{n-1}, Phi> - tau <A^n(U), Phi>.
pub struct StepFunctional<'a, S> {
    pub system: &'a dyn System<S>,
    pub prev_state: Vec<S>,
    pub prev_energy: S,
    pub tau: S,
    pub t_lo: S,
    pub t_hi: S,
}

/// Time average by 3-point Gauss quadrature (exact for the autonomous
/// shipped systems and for polynomial time dependence up to degree 5).
pub fn average_in_time<S: Scalar, F: Fn(S) -> S>(t_lo: S, t_hi: S, f: F) -> S {
    assert!(t_hi > t_lo, "average_in_time needs t_lo < t_hi");
    let half = c::<S>(0.5);
    let mid = half * (t_lo + t_hi);
    let hw = half * (t_hi - t_lo);
    let r = c::<S>((3.0f64 / 5.0).sqrt());
    let w_mid = c::<S>(8.0 / 18.0);
    let w_out = c::<S>(5.0 / 18.0);
    // Weights sum to 1: this is the average, not the integral.
    w_out * f(mid - r * hw) + w_mid * f(mid) + w_out * f(mid + r * hw)
}

impl<'a, S: Scalar> StepFunctional<'a, S> {
    pub fn new(system: &'a dyn System<S>, prev_state: Vec<S>, t_lo: S, tau: S) -> Self {
        let prev_energy = system.energy(&prev_state);
        StepFunctional { system, prev_state, prev_energy, tau, t_lo, t_hi: t_lo + tau }
    }

    /// <A^n(U), Phi> = (1/tau) integral over the step of <A(t,U), Phi>.
    pub fn averaged_operator(&self, state: &[S], test: &[S]) -> S {
        average_in_time(self.t_lo, self.t_hi, |t| self.system.operator(t, state, test))
    }

    /// Psi^n(U) = (1/tau) integral over the step of Psi(t, U).
    pub fn averaged_dissipation(&self, state: &[S]) -> S {
        average_in_time(self.t_lo, self.t_hi, |t| self.system.dissipation(t, state))
    }

    /// F^n(U|Phi); +inf off dom E.
    pub fn eval(&self, state: &[S], test: &[S]) -> S {
        let e = self.system.energy(state);
        if !e.is_finite() {
            return S::infinity();
        }
        // Pairing difference rather than pairing of a coordinate difference:
        // the dual pairing is linear in the represented state (a measure for
        // binormal flow), not necessarily in the chart coordinates.
        let pair_diff = self.system.pairing(state, test) - self.system.pairing(&self.prev_state, test);
        e + self.tau * self.averaged_dissipation(state) - self.prev_energy
            - pair_diff
            - self.tau * self.averaged_operator(state, test)
    }
}

/// A system that knows how to solve its own per-step saddle problem.
pub trait Steppable<S: Scalar>: System<S> {
    /// Solve min over U of sup over the discrete Y_tau of F^n(U|Phi); the
    /// returned primal is the full state vector U^n.
    fn solve_step(&self, step: &StepFunctional<S>, cfg: &SolverConfig<S>) -> Result<SaddleResult<S>, SolverError>;
}

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("step {index} failed: {source}")]
    Solver {
        index: usize,
        #[source]
        source: SolverError,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// One certified step from `prev` over [t_lo, t_lo + tau].
pub fn advance<S: Scalar, Sys: Steppable<S>>(
    system: &Sys,
    prev: &[S],
    t_lo: S,
    tau: S,
    cfg: &SolverConfig<S>,
) -> Result<(Vec<S>, StepCertificate<S>), StepError> {
    system.check_state_dim(prev)?;
    if !system.energy(prev).is_finite() {
        return Err(StepError::Precondition("previous state has infinite energy".into()));
    }
    let ktilde0 = system.reg_weight_aux(&vec![S::zero(); system.test_dim()]);
    if !(tau * ktilde0 < S::one()) {
        return Err(StepError::Precondition(format!("tau * Ktilde(0) = {} must be < 1", tau * ktilde0)));
    }
    let step = StepFunctional::new(system, prev.to_vec(), t_lo, tau);
    let result = system
        .solve_step(&step, cfg)
        .map_err(|source| StepError::Solver { index: 0, source })?;
    let certificate = StepCertificate {
        gap_estimate: result.gap_estimate,
        certifying_dual: result.certifying_dual,
        iterations: result.iterations,
        converged: result.converged,
    };
    Ok((result.primal, certificate))
}

/// Run the scheme on the equidistant grid t^n = n T / N, recording per-step
/// certificates. Restart times are recorded in the provenance (at the
/// discrete level every node already has zero defect; restarts matter to the
/// verifier-selector, which operates on reconstructed E curves).
pub fn run<S: Scalar, Sys: Steppable<S>>(
    system: &Sys,
    u0: &[S],
    horizon: S,
    n_steps: usize,
    restart_times: &[S],
    cfg: &SolverConfig<S>,
) -> Result<Trajectory<S>, StepError> {
    system.check_state_dim(u0)?;
    if !system.energy(u0).is_finite() {
        return Err(StepError::Precondition("initial state has infinite energy".into()));
    }
    if n_steps == 0 {
        return Err(StepError::Precondition("n_steps must be positive".into()));
    }
    let ktilde0 = system.reg_weight_aux(&vec![S::zero(); system.test_dim()]);
    if !(c::<S>(n_steps as f64) > ktilde0 * horizon) {
        return Err(StepError::Precondition(format!(
            "need N > Ktilde(0) * T, got N = {n_steps}, Ktilde(0) * T = {}",
            ktilde0 * horizon
        )));
    }
    let tau = horizon / c::<S>(n_steps as f64);
    let mut times = vec![S::zero()];
    let mut states = vec![u0.to_vec()];
    let mut aux_energy = vec![system.energy(u0)];
    let mut certificates = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let t_lo = tau * c::<S>(n as f64);
        let (next, cert) = advance(system, &states[n], t_lo, tau, cfg).map_err(|e| match e {
            StepError::Solver { source, .. } => StepError::Solver { index: n, source },
            other => other,
        })?;
        aux_energy.push(system.energy(&next));
        states.push(next);
        times.push(tau * c::<S>((n + 1) as f64));
        certificates.push(cert);
    }
    Ok(Trajectory {
        times,
        states,
        aux_energy,
        provenance: Provenance {
            system: system.name().to_string(),
            tau: tau.to_f64().unwrap_or(f64::NAN),
            restart_times: restart_times.iter().map(|t| t.to_f64().unwrap_or(f64::NAN)).collect(),
            seed: cfg.seed,
            config_hash: String::new(),
        },
        certificates,
    })
}
