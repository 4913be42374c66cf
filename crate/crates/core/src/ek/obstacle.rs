//! Obstacle problem characterizing the dual subdifferential of the
//! Euler-Korteweg energy, and the energy-balance identity built on it.
//!
//! The constrained semilinear Neumann problem
//!   - rho'' + gamma/(gamma-1) rho^{gamma-1} + lambda = g,
//!   lambda in the subdifferential of the indicator of [0, inf) at rho,
//! is solved through its Yosida regularization f_eps, whose derivative is
//! f_eps'(rho) = rho / eps for rho < 0 and 0 otherwise. A damped Newton
//! iteration (step halving whenever the residual increases) is warm-started
//! along the decreasing schedule eps in {1e-2, 1e-4, ..., 1e-10}; the
//! multiplier is read off as lambda = f_eps'(rho) at the final eps.
//!
//! The dual subdifferential at a test pair (xi, zeta) solves this problem
//! with right-hand side xi + zeta^2/2 plus an additive constant tuned so the
//! density mean matches the prescribed rho_bar, and sets m = rho zeta
//! nodewise. Evaluating the operator A at such a state must vanish in the
//! limit of refinement (energy balance).

use crate::ek::grid::Grid1D;
use crate::ek::state::{ek_operator, EKState};
use crate::ek::testfn::EKTestFunction;
use crate::framework::ContractError;
use crate::linalg::solve_tridiagonal;
use crate::scalar::{c, Scalar};

/// Output of the obstacle solve: density, multiplier, and diagnostics.
#[derive(Clone, Debug)]
pub struct ObstacleSolution<S> {
    /// Nodal density, nonnegative up to the solve tolerance.
    pub rho: Vec<S>,
    /// Nodal multiplier lambda = f_eps'(rho) at the final regularization.
    pub lambda: Vec<S>,
    /// Final Yosida parameter.
    pub epsilon_final: S,
    /// Sup norm of the nodal Galerkin residual at the final parameter.
    pub residual_norm: S,
}

/// Discrete L^p norm with trapezoid weights.
pub fn lp_norm<S: Scalar>(grid: &Grid1D<S>, v: &[S], p: S) -> S {
    let mut acc = S::zero();
    for (w, x) in grid.node_weights().iter().zip(v) {
        acc = acc + *w * x.abs().powf(p);
    }
    acc.powf(S::one() / p)
}

/// gamma/(gamma-1) |rho|^{gamma-2} rho (sign-aware pressure term).
fn pressure<S: Scalar>(gamma: S, rho: S) -> S {
    gamma / (gamma - S::one()) * rho.abs().powf(gamma - c::<S>(2.0)) * rho
}

fn pressure_slope<S: Scalar>(gamma: S, rho: S) -> S {
    gamma * rho.abs().powf(gamma - c::<S>(2.0))
}

/// Nodal residual of the regularized problem: stiffness part plus lumped
/// reaction terms minus the data.
fn residual_vec<S: Scalar>(grid: &Grid1D<S>, rho: &[S], g: &[S], gamma: S, eps: S) -> Vec<S> {
    let n = grid.n_nodes;
    let d = grid.spacing;
    let w = grid.node_weights();
    let mut out = vec![S::zero(); n];
    // Stiffness G^T W_s G: tridiagonal with 1/d couplings.
    for i in 0..n {
        let mut v = S::zero();
        if i > 0 {
            v = v + (rho[i] - rho[i - 1]) / d;
        }
        if i + 1 < n {
            v = v + (rho[i] - rho[i + 1]) / d;
        }
        let yosida = if rho[i] < S::zero() { rho[i] / eps } else { S::zero() };
        out[i] = v + w[i] * (pressure(gamma, rho[i]) + yosida - g[i]);
    }
    out
}

fn sup_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |a, &x| a.max(x.abs()))
}

/// Solve the regularized obstacle problem along the Yosida schedule.
pub fn solve_obstacle<S: Scalar>(
    grid: &Grid1D<S>,
    g: &[S],
    gamma: S,
    tol: S,
) -> Result<ObstacleSolution<S>, ContractError> {
    assert_eq!(g.len(), grid.n_nodes);
    if !(gamma > S::one()) {
        return Err(ContractError::Domain(format!("need gamma > 1, got {gamma}")));
    }
    let n = grid.n_nodes;
    let d = grid.spacing;
    let w = grid.node_weights().to_vec();
    // Initial guess: nodewise algebraic balance for the positive part of g.
    let expo = S::one() / (gamma - S::one());
    let mut rho: Vec<S> = g
        .iter()
        .map(|&gi| ((gamma - S::one()) / gamma * gi.max(S::zero())).powf(expo) + c::<S>(1e-3))
        .collect();

    let schedule = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10];
    let inner_tol = c::<S>(1e-13) * (S::one() + sup_norm(g));
    let mut eps = c::<S>(schedule[schedule.len() - 1]);
    for &e in &schedule {
        eps = c::<S>(e);
        let mut res = residual_vec(grid, &rho, g, gamma, eps);
        let mut res_norm = sup_norm(&res);
        let mut iter = 0usize;
        while res_norm > inner_tol {
            iter += 1;
            if iter > 200 {
                return Err(ContractError::Violation(format!(
                    "obstacle Newton stagnation at eps = {eps}: residual {res_norm}"
                )));
            }
            // Tridiagonal Jacobian bands (Thomas layout: n-1, n, n-1).
            let lower = vec![-S::one() / d; n - 1];
            let upper = vec![-S::one() / d; n - 1];
            let mut diag = vec![S::zero(); n];
            for i in 0..n {
                let mut dv = S::zero();
                if i > 0 {
                    dv = dv + S::one() / d;
                }
                if i + 1 < n {
                    dv = dv + S::one() / d;
                }
                let yos = if rho[i] < S::zero() { S::one() / eps } else { S::zero() };
                diag[i] = dv + w[i] * (pressure_slope(gamma, rho[i]) + yos);
            }
            let step = solve_tridiagonal(&lower, &diag, &upper, &res)
                .ok_or_else(|| ContractError::Violation("singular obstacle Jacobian".into()))?;
            // Damped update: halve on residual increase.
            let mut t = S::one();
            loop {
                let trial: Vec<S> = rho.iter().zip(&step).map(|(&r, &s)| r - t * s).collect();
                let trial_res = residual_vec(grid, &trial, g, gamma, eps);
                let trial_norm = sup_norm(&trial_res);
                if trial_norm < res_norm || t < c::<S>(1e-14) {
                    rho = trial;
                    res = trial_res;
                    res_norm = trial_norm;
                    break;
                }
                t = t * c::<S>(0.5);
            }
        }
    }
    let lambda: Vec<S> = rho
        .iter()
        .map(|&r| if r < S::zero() { r / eps } else { S::zero() })
        .collect();
    let res_final = sup_norm(&residual_vec(grid, &rho, g, gamma, eps));
    let min_rho = rho.iter().fold(S::infinity(), |a, &x| a.min(x));
    if min_rho < -tol {
        return Err(ContractError::Violation(format!(
            "final density dips below the obstacle tolerance: min rho = {min_rho}"
        )));
    }
    Ok(ObstacleSolution { rho, lambda, epsilon_final: eps, residual_norm: res_final })
}

/// Element of the dual subdifferential of the energy at a test pair
/// (xi, zeta) = (psi, phi): density from the obstacle problem with data
/// xi + zeta^2/2 shifted by the mean-consistency constant, momentum
/// m = rho zeta nodewise.
pub fn dual_subdifferential<S: Scalar>(
    grid: &Grid1D<S>,
    testfn: &EKTestFunction<S>,
    gamma: S,
    rho_bar: S,
) -> Result<EKState<S>, ContractError> {
    assert!(rho_bar > S::zero());
    let base: Vec<S> = testfn
        .psi
        .iter()
        .zip(&testfn.phi)
        .map(|(&xi, &zeta)| xi + zeta * zeta * c::<S>(0.5))
        .collect();
    let solve = |cc: S| -> Result<Vec<S>, ContractError> {
        let g: Vec<S> = base.iter().map(|&b| b + cc).collect();
        Ok(solve_obstacle(grid, &g, gamma, c::<S>(1e-9))?.rho)
    };
    // Bracket the additive constant so the density mean straddles rho_bar
    // (the mean is monotone increasing in the constant).
    let mut c_lo = gamma / (gamma - S::one()) * rho_bar.powf(gamma - S::one()) - grid.mean(&base);
    let mut c_hi = c_lo;
    let width = S::one() + sup_norm(&base);
    while grid.mean(&solve(c_lo)?) > rho_bar {
        c_lo = c_lo - width;
    }
    while grid.mean(&solve(c_hi)?) < rho_bar {
        c_hi = c_hi + width;
    }
    let mut rho = solve(c_lo)?;
    for _ in 0..200 {
        let mid = (c_lo + c_hi) * c::<S>(0.5);
        rho = solve(mid)?;
        let mean = grid.mean(&rho);
        if (mean - rho_bar).abs() <= c::<S>(1e-12) * rho_bar {
            break;
        }
        if mean < rho_bar {
            c_lo = mid;
        } else {
            c_hi = mid;
        }
        if c_hi - c_lo < c::<S>(1e-15) * (S::one() + c_hi.abs()) {
            break;
        }
    }
    let m: Vec<S> = rho.iter().zip(&testfn.phi).map(|(&r, &z)| r * z).collect();
    Ok(EKState { rho, m, gamma, rho_bar })
}

/// Evaluate <A(h, m), (psi, phi)> at the dual-subdifferential state of the
/// test pair; vanishes in the continuum (energy balance), so the returned
/// magnitude is pure discretization error and must shrink under refinement.
pub fn energy_balance_check<S: Scalar>(
    grid: &Grid1D<S>,
    testfn: &EKTestFunction<S>,
    gamma: S,
    rho_bar: S,
) -> Result<S, ContractError> {
    let state = dual_subdifferential(grid, testfn, gamma, rho_bar)?;
    Ok(ek_operator(grid, &state, testfn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ek::testfn::TrigModes;
    use rand::Rng;
    use rand::SeedableRng;

    fn grid(n: usize) -> Grid1D<f64> {
        Grid1D::new(1.0, n)
    }

    #[test]
    fn constant_positive_data_gives_algebraic_density() {
        let g = grid(64);
        let sol = solve_obstacle(&g, &vec![2.0; 64], 2.0, 1e-9).unwrap();
        for &r in &sol.rho {
            assert!((r - 1.0).abs() < 1e-11, "rho = {r}");
        }
        assert!(sol.lambda.iter().all(|&l| l == 0.0));
        assert!(sol.residual_norm < 1e-12);
    }

    #[test]
    fn negative_constant_data_activates_multiplier() {
        let g = grid(64);
        let sol = solve_obstacle(&g, &vec![-1.0; 64], 2.0, 1e-9).unwrap();
        for (&r, &l) in sol.rho.iter().zip(&sol.lambda) {
            assert!(r >= -1e-9 && r.abs() < 1e-9);
            assert!((l + 1.0).abs() < 1e-8, "lambda = {l}");
        }
    }

    #[test]
    fn sign_changing_data_satisfies_kkt() {
        let g = grid(96);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let data: Vec<f64> = g
                .nodes()
                .iter()
                .map(|&x| {
                    // Keep |g| < 1: at the final eps = 1e-10 the dead-zone
                    // density sits at eps * g, which must clear the -1e-10
                    // obstacle floor.
                    let a: f64 = rng.gen_range(0.2..0.45);
                    let b: f64 = rng.gen_range(0.2..0.45);
                    a * (2.0 * std::f64::consts::PI * x).cos() - b * (3.0 * std::f64::consts::PI * x).sin()
                })
                .collect();
            let sol = solve_obstacle(&g, &data, 2.0, 1e-9).unwrap();
            let min_rho = sol.rho.iter().cloned().fold(f64::INFINITY, f64::min);
            let max_l = sol.lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let comp = sol
                .rho
                .iter()
                .zip(&sol.lambda)
                .map(|(r, l)| (r * l).abs())
                .fold(0.0, f64::max);
            assert!(min_rho >= -1e-10);
            assert!(max_l <= 1e-10);
            assert!(comp <= 1e-8);
            assert!(sol.residual_norm <= 1e-10);
            for p in [2.0, 4.0] {
                assert!(lp_norm(&g, &sol.lambda, p) <= lp_norm(&g, &data, p) + 1e-8);
            }
        }
    }

    #[test]
    fn zero_test_pair_gives_constant_density() {
        let g = grid(48);
        let tf = EKTestFunction::from_nodal(&g, vec![0.0; 48], vec![0.0; 48]);
        let state = dual_subdifferential(&g, &tf, 2.0, 1.3).unwrap();
        for &r in &state.rho {
            assert!((r - 1.3).abs() < 1e-9);
        }
        assert!(state.m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_psi_gives_positive_perturbation_with_small_residual() {
        let g = grid(64);
        let modes = TrigModes { length: 1.0, psi_cos: vec![0.05], phi_sin: vec![] };
        let tf = EKTestFunction::from_modes(&g, modes);
        let state = dual_subdifferential(&g, &tf, 2.0, 1.0).unwrap();
        assert!((g.mean(&state.rho) - 1.0).abs() < 1e-10);
        assert!(state.rho.iter().all(|&r| r > 0.0));
        assert!(state.m.iter().all(|&v| v == 0.0));
        // The recovered density solves the semilinear problem for some
        // constant shift of the data; eliminate the shift with the mean
        // residual before checking it.
        let gdata: Vec<f64> = tf.psi.clone();
        let raw = residual_vec(&g, &state.rho, &gdata, 2.0, 1e-10);
        let scaled: Vec<f64> = raw.iter().zip(g.node_weights()).map(|(r, w)| r / w).collect();
        let shift = g.mean(&scaled);
        let rem = scaled.iter().map(|r| (r - shift).abs()).fold(0.0, f64::max);
        assert!(rem < 1e-9, "residual after shift: {rem}");
    }

    #[test]
    fn momentum_is_density_times_zeta_nodewise() {
        let g = grid(48);
        let modes = TrigModes { length: 1.0, psi_cos: vec![0.02], phi_sin: vec![0.1, 0.05] };
        let tf = EKTestFunction::from_modes(&g, modes);
        let state = dual_subdifferential(&g, &tf, 2.0, 1.0).unwrap();
        for ((&m, &r), &z) in state.m.iter().zip(&state.rho).zip(&tf.phi) {
            assert_eq!(m, r * z);
        }
    }

    #[test]
    fn energy_balance_shrinks_under_refinement() {
        let modes = TrigModes { length: 1.0, psi_cos: vec![0.05, 0.02], phi_sin: vec![0.1] };
        let mut values = Vec::new();
        for n in [64usize, 128, 256] {
            let g = grid(n);
            let tf = EKTestFunction::from_modes(&g, modes.clone());
            let v = energy_balance_check(&g, &tf, 2.0, 1.0).unwrap().abs();
            values.push(v);
        }
        assert!(values[0] / values[1] >= 1.8, "{values:?}");
        assert!(values[1] / values[2] >= 1.8, "{values:?}");
    }

    #[test]
    fn zero_test_pair_energy_balance_is_exact() {
        let g = grid(48);
        let modes = TrigModes { length: 1.0, psi_cos: vec![], phi_sin: vec![] };
        let tf = EKTestFunction::from_modes(&g, modes);
        let v = energy_balance_check(&g, &tf, 2.0, 1.0).unwrap();
        assert_eq!(v, 0.0);
    }
}
