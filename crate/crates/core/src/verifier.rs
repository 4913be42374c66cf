//! Certification of the energy-variational inequality on trajectories.
//!
//! The residual of a triple (test path, s, t) is the left-hand side of the
//! inequality
//!   [E - <U, Phi>]|_s^t
//!     + int_s^t <U, dPhi/dt> - <A(tau, U), Phi> + Psi(tau, U)
//!                + K(Phi) [E(U) - E] dtau  <=  0,
//! discretized on the trajectory grid. Three time-quadrature rules are
//! provided. The default is the prolongation-consistent rule: state factors
//! are taken at the right node of each subinterval and test-function factors
//! at the left node, which makes the residual of stepper output telescope
//! exactly into the sum of the certified per-step functionals (so a run with
//! per-step gaps below g passes at tolerance N*g for every in-ball path).
//! Plain trapezoid and left-endpoint rules are also available; they carry an
//! O(tau) quadrature offset relative to the telescoping identity.
//!
//! All rules are affine in the auxiliary energy values E_n, which is what
//! the minimal-defect reconstruction LP builds on.

use serde::{Deserialize, Serialize};

use crate::framework::{ContractError, System, TestPath, Trajectory};
use crate::scalar::{c, Scalar};

/// Time-quadrature rule for the residual integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ResidualQuadrature {
    /// State at the right node, test function at the left node of each
    /// subinterval; telescopes against the minimizing-movements functionals.
    #[default]
    ProlongationConsistent,
    Trapezoid,
    LeftEndpoint,
}

/// One entry of a residual report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualEntry<S> {
    pub path_id: String,
    pub s: S,
    pub t: S,
    pub value: S,
}

/// Report over a family x pair cross product.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport<S> {
    pub entries: Vec<ResidualEntry<S>>,
    pub max_residual: S,
    pub pass: bool,
    pub tolerance: S,
}

/// Precomputed per-path tables over a trajectory grid; residual evaluation
/// for any (s, t) is then O(number of grid nodes between them).
pub struct PathTables<S> {
    /// <U^n, Phi_base>.
    pub pair: Vec<S>,
    /// <A(t^n, U^n), Phi_base>.
    pub op: Vec<S>,
    /// Psi(t^n, U^n).
    pub dissipation: Vec<S>,
    /// E(U^n) (recomputed from the states, not aux_energy).
    pub energy: Vec<S>,
    /// K(+Phi_base) and K(-Phi_base): K is 1-homogeneous only for positive
    /// scalars, so a sign-changing modulation needs both.
    pub k_plus: S,
    pub k_minus: S,
}

impl<S: Scalar> PathTables<S> {
    pub fn build(system: &dyn System<S>, traj: &Trajectory<S>, path: &TestPath<S>) -> Self {
        let n = traj.times.len();
        let mut pair = Vec::with_capacity(n);
        let mut op = Vec::with_capacity(n);
        let mut dissipation = Vec::with_capacity(n);
        let mut energy = Vec::with_capacity(n);
        for (i, state) in traj.states.iter().enumerate() {
            let t = traj.times[i];
            pair.push(system.pairing(state, &path.coeffs));
            op.push(system.operator(t, state, &path.coeffs));
            dissipation.push(system.dissipation(t, state));
            energy.push(system.energy(state));
        }
        let neg: Vec<S> = path.coeffs.iter().map(|&v| -v).collect();
        PathTables {
            pair,
            op,
            dissipation,
            energy,
            k_plus: system.reg_weight(&path.coeffs),
            k_minus: system.reg_weight(&neg),
        }
    }

    /// K(a * Phi_base) for a scalar modulation factor a.
    pub fn k_of(&self, a: S) -> S {
        if a >= S::zero() {
            a * self.k_plus
        } else {
            -a * self.k_minus
        }
    }
}

/// Residual from precomputed tables over grid indices i < j.
pub fn residual_from_tables<S: Scalar>(
    tables: &PathTables<S>,
    traj: &Trajectory<S>,
    path: &TestPath<S>,
    i: usize,
    j: usize,
    quad: ResidualQuadrature,
) -> S {
    assert!(i < j && j < traj.times.len());
    let a = |n: usize| path.modulation.factor(traj.times[n]);
    let adot = |n: usize| path.modulation.factor_dt(traj.times[n]);
    let e_aux = &traj.aux_energy;
    // Boundary term [E - <U, Phi>]|_s^t.
    let boundary = (e_aux[j] - a(j) * tables.pair[j]) - (e_aux[i] - a(i) * tables.pair[i]);
    // Integrand at a node, all factors evaluated there (trapezoid / left).
    let f = |n: usize| {
        adot(n) * tables.pair[n] - a(n) * tables.op[n]
            + tables.dissipation[n]
            + tables.k_of(a(n)) * (tables.energy[n] - e_aux[n])
    };
    let mut acc = boundary;
    match quad {
        ResidualQuadrature::Trapezoid => {
            let half = c::<S>(0.5);
            for n in i + 1..=j {
                let dt = traj.times[n] - traj.times[n - 1];
                acc = acc + dt * half * (f(n - 1) + f(n));
            }
        }
        ResidualQuadrature::LeftEndpoint => {
            for n in i + 1..=j {
                let dt = traj.times[n] - traj.times[n - 1];
                acc = acc + dt * f(n - 1);
            }
        }
        ResidualQuadrature::ProlongationConsistent => {
            for n in i + 1..=j {
                let dt = traj.times[n] - traj.times[n - 1];
                // <U^n, Phi(t^n) - Phi(t^{n-1})> replaces dt * <U, dPhi/dt>.
                acc = acc + (a(n) - a(n - 1)) * tables.pair[n];
                acc = acc - dt * a(n - 1) * tables.op[n];
                acc = acc + dt * tables.dissipation[n];
                acc = acc + dt * tables.k_of(a(n - 1)) * (tables.energy[n] - e_aux[n]);
            }
        }
    }
    acc
}

/// Residual of a single triple (recomputes tables; use `verify` for batches).
pub fn residual<S: Scalar>(
    system: &dyn System<S>,
    traj: &Trajectory<S>,
    path: &TestPath<S>,
    s: S,
    t: S,
    quad: ResidualQuadrature,
) -> Result<S, ContractError> {
    if !(s < t) {
        return Err(ContractError::Domain(format!("need s < t, got s = {s}, t = {t}")));
    }
    let i = traj.grid_index(s)?;
    let j = traj.grid_index(t)?;
    system.check_test_admissible(&path.coeffs)?;
    let tables = PathTables::build(system, traj, path);
    Ok(residual_from_tables(&tables, traj, path, i, j, quad))
}

/// Deterministic pair subsample: all (i, j) with i < j when that count is
/// within the cap, otherwise a stratified fixed-seed subsample.
pub fn default_pairs(n_times: usize, cap: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n_times * (n_times - 1) / 2;
    if total <= cap {
        let mut out = Vec::with_capacity(total);
        for i in 0..n_times {
            for j in i + 1..n_times {
                out.push((i, j));
            }
        }
        return out;
    }
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // Stratify over the left index so every start time is represented.
    let per_left = cap / n_times.saturating_sub(1).max(1) + 1;
    let mut out = Vec::with_capacity(cap);
    'outer: for i in 0..n_times - 1 {
        for _ in 0..per_left {
            let j = rng.gen_range(i + 1..n_times);
            out.push((i, j));
            if out.len() == cap {
                break 'outer;
            }
        }
    }
    out
}

/// Verify the inequality over a family x pair cross product.
pub fn verify<S: Scalar>(
    system: &dyn System<S>,
    traj: &Trajectory<S>,
    family: &[TestPath<S>],
    pairs: &[(usize, usize)],
    tol: S,
    quad: ResidualQuadrature,
) -> Result<ResidualReport<S>, ContractError> {
    traj.validate(system)?;
    let mut entries = Vec::with_capacity(family.len() * pairs.len());
    let mut max_residual = S::neg_infinity();
    for path in family {
        system.check_test_admissible(&path.coeffs)?;
        let tables = PathTables::build(system, traj, path);
        for &(i, j) in pairs {
            let value = residual_from_tables(&tables, traj, path, i, j, quad);
            if value > max_residual {
                max_residual = value;
            }
            entries.push(ResidualEntry { path_id: path.id.clone(), s: traj.times[i], t: traj.times[j], value });
        }
    }
    Ok(ResidualReport { entries, max_residual, pass: max_residual <= tol, tolerance: tol })
}

/// A-priori bound report (rate-R Gronwall traced constants).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AprioriReport<S> {
    pub sup_e: S,
    pub tv_e: S,
    pub dual_increment_total: S,
    pub dissipation_integral: S,
    pub gronwall_rate: S,
    pub bound_e: S,
    pub bound_tv: S,
    pub bound_increments: S,
    pub bound_dissipation: S,
    pub monotone: bool,
    pub pass: bool,
    pub margin: S,
}

/// Check the a-priori bounds of the auxiliary energy, its variation, the
/// dual-norm increments, and the dissipation integral against the
/// constructive constant: with rate R = K(0) + c(0) + Ktilde(0), Gronwall
/// gives E(t) + 1 <= (M + 1) e^{R T}; the other three bounds are traced from
/// the inequality with Phi = 0 and the (A5) operator bound at radius 1.
pub fn apriori_check<S: Scalar>(system: &dyn System<S>, traj: &Trajectory<S>, m_bound: S) -> AprioriReport<S> {
    let zero_test = vec![S::zero(); system.test_dim()];
    let rate = system.reg_weight(&zero_test)
        + system.reg_weight_aux(&zero_test)
        + system.lower_bound_const(S::zero());
    let horizon = *traj.times.last().unwrap() - traj.times[0];
    let grow = (rate * horizon).exp();
    let bound_e = (m_bound + S::one()) * grow - S::one();

    let sup_e = traj.aux_energy.iter().fold(S::neg_infinity(), |a, &v| a.max(v));
    let mut tv_e = S::zero();
    let mut monotone = true;
    for w in traj.aux_energy.windows(2) {
        tv_e = tv_e + (w[1] - w[0]).abs();
        if w[1] > w[0] + c::<S>(1e-12) {
            monotone = false;
        }
    }
    // TV of a curve bounded by bound_e and dropping at most to 0, plus its
    // possible Gronwall growth.
    let bound_tv = c::<S>(2.0) * (bound_e + S::one());

    // Dual-norm increments against the unit-sup-norm normalized family.
    let mut kt_max = S::zero();
    let mut basis_norm = Vec::new();
    for k in 0..system.test_dim() {
        let mut dir = vec![S::zero(); system.test_dim()];
        dir[k] = S::one();
        let norm = system.test_norm(&dir);
        if norm > S::zero() {
            let scaled: Vec<S> = dir.iter().map(|&v| v / norm).collect();
            let neg: Vec<S> = scaled.iter().map(|&v| -v).collect();
            kt_max = kt_max
                .max(system.reg_weight_aux(&scaled))
                .max(system.reg_weight_aux(&neg));
            basis_norm.push((dir, norm));
        }
    }
    let mut incr = S::zero();
    for w in traj.states.windows(2) {
        let mut worst = S::zero();
        for (dir, norm) in &basis_norm {
            // Difference of pairings, not pairing of the coordinate
            // difference: states may be nonlinear charts of the measure.
            let v = (system.pairing(&w[1], dir) - system.pairing(&w[0], dir)).abs() / *norm;
            if v > worst {
                worst = v;
            }
        }
        incr = incr + worst;
    }
    // Per step: |<dU, Phi>| <= |dE| + tau (c(1) + Ktilde_max)(E + 1) + gap;
    // summed: TV + T (c(1) + Ktmax)(sup E + 1) + slack.
    let c1 = system.lower_bound_const(S::one());
    let bound_increments =
        bound_tv + horizon * (c1 + kt_max) * (bound_e + S::one()) + c::<S>(1e-6);

    let mut diss = S::zero();
    for n in 1..traj.times.len() {
        let dt = traj.times[n] - traj.times[n - 1];
        diss = diss + dt * system.dissipation(traj.times[n], &traj.states[n]).abs();
    }
    let bound_dissipation = bound_tv + horizon * rate * (bound_e + S::one()) + c::<S>(1e-6);

    let checks = [
        bound_e - sup_e,
        bound_tv - tv_e,
        bound_increments - incr,
        bound_dissipation - diss,
    ];
    let margin = checks.iter().fold(S::infinity(), |a, &v| a.min(v));
    AprioriReport {
        sup_e,
        tv_e,
        dual_increment_total: incr,
        dissipation_integral: diss,
        gronwall_rate: rate,
        bound_e,
        bound_tv,
        bound_increments,
        bound_dissipation,
        monotone,
        pass: margin >= S::zero() && monotone,
        margin,
    }
}

/// Concatenate two trajectories at a junction time (semiflow property).
pub fn concatenate<S: Scalar>(
    system: &dyn System<S>,
    a: &Trajectory<S>,
    b: &Trajectory<S>,
    t0: S,
) -> Result<Trajectory<S>, ContractError> {
    let ia = a.grid_index(t0)?;
    if ia != a.times.len() - 1 {
        return Err(ContractError::Domain("first trajectory must end at the junction time".into()));
    }
    let ib = b.grid_index(t0)?;
    if ib != 0 {
        return Err(ContractError::Domain("second trajectory must start at the junction time".into()));
    }
    // Junction states must agree in the dual-pairing sense.
    let ua = &a.states[ia];
    let ub = &b.states[0];
    for k in 0..system.test_dim() {
        let mut dir = vec![S::zero(); system.test_dim()];
        dir[k] = S::one();
        let v = system.pairing(ua, &dir) - system.pairing(ub, &dir);
        if v.abs() > c::<S>(1e-10) {
            return Err(ContractError::Violation(format!(
                "junction states disagree in pairing against basis direction {k}: {v}"
            )));
        }
    }
    if b.aux_energy[0] > a.aux_energy[ia] + c::<S>(1e-12) {
        return Err(ContractError::Violation(format!(
            "junction energy increases: E_b(t0+) = {} > E_a(t0-) = {}",
            b.aux_energy[0], a.aux_energy[ia]
        )));
    }
    let mut times = a.times.clone();
    times.extend_from_slice(&b.times[1..]);
    let mut states = a.states.clone();
    states.extend_from_slice(&b.states[1..]);
    let mut aux_energy = a.aux_energy.clone();
    aux_energy.extend_from_slice(&b.aux_energy[1..]);
    let mut certificates = a.certificates.clone();
    certificates.extend_from_slice(&b.certificates);
    let mut provenance = a.provenance.clone();
    provenance.restart_times.push(t0.to_f64().unwrap_or(f64::NAN));
    Ok(Trajectory { times, states, aux_energy, provenance, certificates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ek::{EkSystem, Grid1D};
    use crate::framework::Modulation;
    use crate::saddle::SolverConfig;
    use crate::stepper::run;

    fn small_run() -> (EkSystem<f64>, Trajectory<f64>) {
        let sys = EkSystem::new(Grid1D::new(1.0, 24), 2.0, 1.0);
        let rho: Vec<f64> = sys
            .grid
            .nodes()
            .iter()
            .map(|&x| 1.0 + 0.1 * (2.0 * std::f64::consts::PI * x).cos())
            .collect();
        let u0 = sys.pack(&rho, &vec![0.0; 24]);
        let traj = run(&sys, &u0, 0.05, 8, &[], &SolverConfig::default()).unwrap();
        (sys, traj)
    }

    fn small_family(_sys: &EkSystem<f64>) -> Vec<TestPath<f64>> {
        let dim = 24;
        let mut family = Vec::new();
        for j in 0..4 {
            let mut coeffs = vec![0.0; dim];
            coeffs[8 + j] = 1.0;
            family.push(TestPath::constant(format!("phi{j}"), coeffs));
        }
        let mut mixed = vec![0.0; dim];
        mixed[0] = 0.5;
        mixed[9] = 0.7;
        family.push(TestPath {
            id: "mixed-cos".into(),
            coeffs: mixed,
            modulation: Modulation::Cosine { omega: 3.0 },
        });
        family
    }

    #[test]
    fn stepper_output_passes_default_quadrature() {
        let (sys, traj) = small_run();
        let family = small_family(&sys);
        let pairs = default_pairs(traj.times.len(), 10_000, 0);
        let report = verify(&sys, &traj, &family, &pairs, 1e-6, ResidualQuadrature::default()).unwrap();
        assert!(report.pass, "max residual {}", report.max_residual);
    }

    #[test]
    fn phi_zero_residual_is_energy_difference() {
        let (sys, traj) = small_run();
        let zero = TestPath::constant("zero", vec![0.0; 24]);
        let r = residual(&sys, &traj, &zero, traj.times[0], traj.times[6], ResidualQuadrature::default()).unwrap();
        let expected = traj.aux_energy[6] - traj.aux_energy[0];
        assert!((r - expected).abs() < 1e-13);
        assert!(r <= 1e-8);
    }

    #[test]
    fn stationary_trajectory_residual_vanishes() {
        let sys = EkSystem::new(Grid1D::new(1.0, 24), 2.0, 1.0);
        let u = sys.pack(&vec![1.0; 24], &vec![0.0; 24]);
        let e = crate::framework::System::energy(&sys, &u);
        let traj = Trajectory {
            times: (0..5).map(|i| i as f64 * 0.1).collect(),
            states: vec![u.clone(); 5],
            aux_energy: vec![e; 5],
            provenance: Default::default(),
            certificates: Vec::new(),
        };
        for path in small_family(&sys) {
            for quad in [
                ResidualQuadrature::ProlongationConsistent,
                ResidualQuadrature::Trapezoid,
                ResidualQuadrature::LeftEndpoint,
            ] {
                let r = residual(&sys, &traj, &path, 0.0, 0.4, quad).unwrap();
                assert!(r.abs() < 1e-10, "{:?}: {r}", quad);
            }
        }
    }

    #[test]
    fn inflated_e_decreases_residual_linearly() {
        let (sys, traj) = small_run();
        let path = &small_family(&sys)[1];
        let tables = PathTables::build(&sys, &traj, path);
        let k = tables.k_plus;
        assert!(k > 0.0);
        let r0 = residual_from_tables(&tables, &traj, path, 0, 8, ResidualQuadrature::Trapezoid);
        let mut inflated = traj.clone();
        let cshift = 0.37;
        for v in inflated.aux_energy.iter_mut() {
            *v += cshift;
        }
        let r1 = residual_from_tables(&tables, &inflated, path, 0, 8, ResidualQuadrature::Trapezoid);
        // Boundary terms cancel; the K-term decreases by (t-s) K c.
        let expected = r0 - (inflated.times[8] - inflated.times[0]) * k * cshift;
        assert!((r1 - expected).abs() < 1e-12, "{r1} vs {expected}");
    }

    #[test]
    fn garbage_state_fails_verification() {
        let (sys, mut traj) = small_run();
        for v in traj.states[4].iter_mut() {
            *v = 0.2 * (*v + 1.0);
        }
        // Keep aux_energy admissible so validate() still passes.
        traj.aux_energy[4] = crate::framework::System::energy(&sys, &traj.states[4]).max(traj.aux_energy[4]);
        let family = small_family(&sys);
        let pairs = default_pairs(traj.times.len(), 10_000, 0);
        let report = verify(&sys, &traj, &family, &pairs, 1e-6, ResidualQuadrature::default()).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn empty_family_is_vacuous_pass() {
        let (sys, traj) = small_run();
        let report = verify(&sys, &traj, &[], &[(0, 1)], 1e-6, ResidualQuadrature::default()).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_residual, f64::NEG_INFINITY);
    }

    #[test]
    fn restriction_of_passing_trajectory_passes() {
        let (sys, traj) = small_run();
        let family = small_family(&sys);
        let sub = traj.restrict(2, 6);
        let pairs = default_pairs(sub.times.len(), 10_000, 0);
        let report = verify(&sys, &sub, &family, &pairs, 1e-6, ResidualQuadrature::default()).unwrap();
        assert!(report.pass, "max residual {}", report.max_residual);
    }

    #[test]
    fn off_grid_time_is_refused() {
        let (sys, traj) = small_run();
        let path = TestPath::constant("zero", vec![0.0; 24]);
        assert!(residual(&sys, &traj, &path, 0.0, 0.0123, ResidualQuadrature::default()).is_err());
    }

    #[test]
    fn apriori_bounds_hold_on_stepper_output() {
        let (sys, traj) = small_run();
        let report = apriori_check(&sys, &traj, traj.aux_energy[0]);
        assert!(report.pass, "{report:?}");
        // Rate-zero Gronwall: the energy bound is E(t) <= E(0) exactly, so
        // the worst margin is attained (at zero) by the initial node.
        assert!(report.margin >= 0.0);
        assert!(report.gronwall_rate == 0.0);
        assert!(report.sup_e <= report.bound_e);
        assert!(report.monotone);
    }

    #[test]
    fn apriori_flags_energy_jump() {
        let (sys, mut traj) = small_run();
        traj.aux_energy[5] = traj.aux_energy[4] + 0.1;
        let report = apriori_check(&sys, &traj, traj.aux_energy[0]);
        assert!(!report.monotone);
    }

    #[test]
    fn split_and_reconcatenate_is_identity() {
        let (sys, traj) = small_run();
        let mid = 4;
        let a = traj.restrict(0, mid);
        let b = traj.restrict(mid, traj.times.len() - 1);
        let glued = concatenate(&sys, &a, &b, traj.times[mid]).unwrap();
        assert_eq!(glued.times.len(), traj.times.len());
        for (x, y) in glued.times.iter().zip(&traj.times) {
            assert_eq!(x, y);
        }
        for (su, sv) in glued.states.iter().zip(&traj.states) {
            for (x, y) in su.iter().zip(sv) {
                assert_eq!(x, y);
            }
        }
        let family = small_family(&sys);
        let pairs = default_pairs(glued.times.len(), 10_000, 0);
        let report = verify(&sys, &glued, &family, &pairs, 1e-6, ResidualQuadrature::default()).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn junction_energy_increase_is_refused() {
        let (sys, traj) = small_run();
        let mid = 4;
        let a = traj.restrict(0, mid);
        let mut b = traj.restrict(mid, traj.times.len() - 1);
        b.aux_energy[0] = a.aux_energy[mid] + 1.0;
        assert!(concatenate(&sys, &a, &b, traj.times[mid]).is_err());
    }

    #[test]
    fn pair_subsample_is_deterministic_and_capped() {
        let p1 = default_pairs(200, 1000, 42);
        let p2 = default_pairs(200, 1000, 42);
        assert_eq!(p1, p2);
        assert_eq!(p1.len(), 1000);
        assert!(p1.iter().all(|&(i, j)| i < j && j < 200));
        let small = default_pairs(10, 1000, 42);
        assert_eq!(small.len(), 45);
    }
}
