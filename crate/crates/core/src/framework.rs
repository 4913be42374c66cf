//! Abstract system contract and the shared trajectory data model.
//!
//! A `System` bundles the energy, dissipation potential, operator, the two
//! regularity weights, and the coercivity/lower-bound constants of one PDE
//! instantiation over fixed finite discretizations of the state space and
//! the test-function family. States and test functions are plain coefficient
//! vectors; their interpretation is owned by the concrete system.

use serde::{Deserialize, Serialize};

use crate::scalar::{c, Scalar};

/// Errors raised by contract-checked operations.
#[derive(Debug, thiserror::Error)]
pub enum ContractError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("inadmissible test function: {0}")]
    InadmissibleTest(String),
    #[error("contract violation: {0}")]
    Violation(String),
}

/// One PDE instantiation: the discrete stand-ins for the state space, the
/// test family, and the functionals of assumptions (A1)-(A5).
pub trait System<S: Scalar> {
    /// Stable identifier used in provenance records.
    fn name(&self) -> &'static str;

    /// Dimension of the discretized state space.
    fn state_dim(&self) -> usize;

    /// Dimension of the parametric test-function family; test vectors are
    /// coefficient vectors over this basis.
    fn test_dim(&self) -> usize;

    /// Energy functional; nonnegative, `+inf` (`S::infinity()`) off the
    /// domain. Infinite values poison downstream sums by IEEE arithmetic.
    fn energy(&self, state: &[S]) -> S;

    /// Dissipation potential (identically zero for both shipped systems).
    fn dissipation(&self, t: S, state: &[S]) -> S;

    /// The operator pairing <A(t, U), Phi>.
    fn operator(&self, t: S, state: &[S], test: &[S]) -> S;

    /// The duality pairing <U, Phi>.
    fn pairing(&self, state: &[S], test: &[S]) -> S;

    /// Discrete norm on states (the norm appearing in the coercivity bound).
    fn state_norm(&self, state: &[S]) -> S;

    /// Discrete norm on test functions (the norm metering the radius in the
    /// lower-bound constant).
    fn test_norm(&self, test: &[S]) -> S;

    /// Regularity weight K (multiplies the defect in the inequality).
    fn reg_weight(&self, test: &[S]) -> S;

    /// Auxiliary regularity weight K-tilde (defines the dual ball).
    fn reg_weight_aux(&self, test: &[S]) -> S;

    /// Coercivity constants (alpha, beta): E(U) >= alpha * ||U|| - beta.
    fn coercivity(&self) -> (S, S);

    /// The lower-bound constant c(R): for ||Phi|| <= R,
    /// Psi(t,U) - <A(t,U),Phi> + Ktilde(Phi) E(U) >= -c(R) (E(U) + 1).
    fn lower_bound_const(&self, radius: S) -> S;

    /// Basis coefficient vectors of test directions with K-tilde = 0
    /// (the unbounded dual directions the saddle step must annihilate).
    fn null_directions(&self) -> Vec<Vec<S>>;

    /// System-specific admissibility gate for verifier test functions.
    fn check_test_admissible(&self, test: &[S]) -> Result<(), ContractError>;

    fn check_state_dim(&self, state: &[S]) -> Result<(), ContractError> {
        if state.len() != self.state_dim() {
            return Err(ContractError::DimensionMismatch { expected: self.state_dim(), got: state.len() });
        }
        Ok(())
    }
}

/// Time modulation of a test path's coefficient vector: Phi(t) = a(t) * coeffs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum Modulation<S> {
    Constant,
    /// a(t) = cos(omega t)
    Cosine { omega: S },
    /// a(t) = 1 + rate * t
    Linear { rate: S },
}

impl<S: Scalar> Modulation<S> {
    pub fn factor(&self, t: S) -> S {
        match self {
            Modulation::Constant => S::one(),
            Modulation::Cosine { omega } => (*omega * t).cos(),
            Modulation::Linear { rate } => S::one() + *rate * t,
        }
    }

    pub fn factor_dt(&self, t: S) -> S {
        match self {
            Modulation::Constant => S::zero(),
            Modulation::Cosine { omega } => -*omega * (*omega * t).sin(),
            Modulation::Linear { rate } => *rate,
        }
    }
}

/// A piecewise-C1-in-time member of the test family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestPath<S> {
    pub id: String,
    pub coeffs: Vec<S>,
    pub modulation: Modulation<S>,
}

impl<S: Scalar> TestPath<S> {
    pub fn constant(id: impl Into<String>, coeffs: Vec<S>) -> Self {
        TestPath { id: id.into(), coeffs, modulation: Modulation::Constant }
    }

    /// Phi(t) as a coefficient vector.
    pub fn eval(&self, t: S) -> Vec<S> {
        let a = self.modulation.factor(t);
        self.coeffs.iter().map(|&v| a * v).collect()
    }

    /// dPhi/dt(t) as a coefficient vector.
    pub fn eval_dt(&self, t: S) -> Vec<S> {
        let a = self.modulation.factor_dt(t);
        self.coeffs.iter().map(|&v| a * v).collect()
    }
}

/// Provenance record attached to a trajectory.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub system: String,
    pub tau: f64,
    pub restart_times: Vec<f64>,
    pub seed: u64,
    pub config_hash: String,
}

/// Per-step solver certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepCertificate<S> {
    pub gap_estimate: S,
    pub certifying_dual: Vec<S>,
    pub iterations: usize,
    pub converged: bool,
}

/// Time-indexed states with the auxiliary energy curve E(t).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub times: Vec<S>,
    pub states: Vec<Vec<S>>,
    pub aux_energy: Vec<S>,
    pub provenance: Provenance,
    /// One certificate per step for stepper output; empty for synthetic data.
    pub certificates: Vec<StepCertificate<S>>,
}

impl<S: Scalar> Trajectory<S> {
    /// Structural well-formedness plus the defect-nonnegativity invariant
    /// aux_energy[n] >= E(states[n]).
    pub fn validate(&self, system: &dyn System<S>) -> Result<(), ContractError> {
        if self.times.len() != self.states.len() || self.times.len() != self.aux_energy.len() {
            return Err(ContractError::Violation("times/states/aux_energy length mismatch".into()));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(ContractError::Violation("times not strictly increasing".into()));
            }
        }
        for (n, state) in self.states.iter().enumerate() {
            system.check_state_dim(state)?;
            if state.iter().any(|v| !v.is_finite()) {
                return Err(ContractError::Violation(format!("non-finite state at index {n}")));
            }
            let e = system.energy(state);
            if self.aux_energy[n] < e {
                return Err(ContractError::Violation(format!(
                    "aux_energy[{n}] = {} below energy {}",
                    self.aux_energy[n], e
                )));
            }
        }
        Ok(())
    }

    /// Index of a grid time, or an error for off-grid queries (no
    /// interpolation is offered).
    pub fn grid_index(&self, t: S) -> Result<usize, ContractError> {
        let tol = c::<S>(1e-12) * (S::one() + t.abs());
        self.times
            .iter()
            .position(|&ti| (ti - t).abs() <= tol)
            .ok_or_else(|| ContractError::Domain(format!("time {t} is not on the trajectory grid")))
    }

    /// Restriction to the sub-grid [i, j] (inclusive).
    pub fn restrict(&self, i: usize, j: usize) -> Trajectory<S> {
        assert!(i <= j && j < self.times.len());
        Trajectory {
            times: self.times[i..=j].to_vec(),
            states: self.states[i..=j].to_vec(),
            aux_energy: self.aux_energy[i..=j].to_vec(),
            provenance: self.provenance.clone(),
            certificates: if self.certificates.len() == self.times.len().saturating_sub(1) {
                self.certificates[i..j.max(i)].to_vec()
            } else {
                Vec::new()
            },
        }
    }
}

/// Result of a sampled contract check: worst violation and pass flag.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleCheck<S> {
    pub worst_violation: S,
    pub pass: bool,
    pub samples: usize,
}

/// Sampled Fenchel-Young test of the conjugate bound: for ||dual|| <= alpha,
/// sup_U <U, dual> - E(U) <= beta. Returns the worst gap over the samples.
pub fn fenchel_sample_check<S: Scalar>(
    system: &dyn System<S>,
    dual: &[S],
    samples: &[Vec<S>],
    slack: S,
) -> Result<SampleCheck<S>, ContractError> {
    let (alpha, beta) = system.coercivity();
    let dual_norm = system.test_norm(dual);
    if dual_norm > alpha + c::<S>(1e-12) {
        return Err(ContractError::InadmissibleTest(format!(
            "dual norm {dual_norm} exceeds coercivity constant alpha = {alpha}"
        )));
    }
    let mut worst = S::neg_infinity();
    for state in samples {
        system.check_state_dim(state)?;
        let e = system.energy(state);
        if !e.is_finite() {
            continue;
        }
        let gap = system.pairing(state, dual) - e - beta;
        if gap > worst {
            worst = gap;
        }
    }
    Ok(SampleCheck { worst_violation: worst, pass: worst <= slack, samples: samples.len() })
}

/// Sampled midpoint-convexity check of the energy.
pub fn energy_convexity_check<S: Scalar>(
    system: &dyn System<S>,
    pairs: &[(Vec<S>, Vec<S>)],
    slack: S,
) -> SampleCheck<S> {
    let half = c::<S>(0.5);
    let mut worst = S::neg_infinity();
    for (u, v) in pairs {
        let eu = system.energy(u);
        let ev = system.energy(v);
        if !eu.is_finite() || !ev.is_finite() {
            continue;
        }
        let mid: Vec<S> = u.iter().zip(v).map(|(&a, &b)| half * (a + b)).collect();
        let violation = system.energy(&mid) - half * (eu + ev);
        if violation > worst {
            worst = violation;
        }
    }
    SampleCheck { worst_violation: worst, pass: worst <= slack, samples: pairs.len() }
}

/// Sampled coercivity check: E(U) >= alpha ||U|| - beta.
pub fn coercivity_check<S: Scalar>(system: &dyn System<S>, samples: &[Vec<S>], slack: S) -> SampleCheck<S> {
    let (alpha, beta) = system.coercivity();
    let mut worst = S::neg_infinity();
    for state in samples {
        let e = system.energy(state);
        if !e.is_finite() {
            continue;
        }
        let violation = alpha * system.state_norm(state) - beta - e;
        if violation > worst {
            worst = violation;
        }
    }
    SampleCheck { worst_violation: worst, pass: worst <= slack, samples: samples.len() }
}

/// Sampled (A5) lower-bound check:
/// Psi(t,U) - <A(t,U),Phi> + Ktilde(Phi) E(U) + c(R)(E(U) + 1) >= 0
/// for all sampled U and Phi with ||Phi|| <= R.
pub fn lower_bound_check<S: Scalar>(
    system: &dyn System<S>,
    triples: &[(S, Vec<S>, Vec<S>)],
    radius: S,
    slack: S,
) -> SampleCheck<S> {
    let cr = system.lower_bound_const(radius);
    let mut worst = S::neg_infinity();
    let mut used = 0usize;
    for (t, state, test) in triples {
        let e = system.energy(state);
        if !e.is_finite() {
            continue;
        }
        if system.test_norm(test) > radius * (S::one() + c::<S>(1e-12)) {
            continue;
        }
        used += 1;
        let lhs = system.dissipation(*t, state) - system.operator(*t, state, test)
            + system.reg_weight_aux(test) * e
            + cr * (e + S::one());
        let violation = -lhs;
        if violation > worst {
            worst = violation;
        }
    }
    SampleCheck { worst_violation: worst, pass: worst <= slack, samples: used }
}
