//! Euler-Korteweg states and the pointwise/integral functionals.
//!
//! Formula sheet (1-D specialization; primes are spatial derivatives,
//! discrete for states and analytic for test-family members):
//!   eta(rho, m)   = m^2 / (2 rho) + rho^gamma / (gamma - 1),  0 at (0,0), +inf else
//!   E(rho, m)     = int eta(rho, m) + (rho')^2 / 2
//!   <A(rho,m), (psi,phi)> = - int m psi' - int (m^2/rho + rho^gamma) phi'
//!                           - int rho rho' phi'' - (3/2) int (rho')^2 phi'
//! State-only integrands are integrated by the nodal trapezoid rule;
//! gradient-bearing integrands by the segment midpoint rule, with rho on a
//! segment taken as the average of its endpoint values.

use crate::ek::grid::Grid1D;
use crate::ek::testfn::EKTestFunction;
use crate::scalar::{c, Scalar};

/// Nodal Euler-Korteweg state.
#[derive(Clone, Debug)]
pub struct EKState<S> {
    /// Nodal density, nonnegative.
    pub rho: Vec<S>,
    /// Nodal momentum, exactly zero at the endpoints (m . n = 0).
    pub m: Vec<S>,
    /// Adiabatic exponent, > 1.
    pub gamma: S,
    /// Mean of the initial density; conserved by the evolution.
    pub rho_bar: S,
}

impl<S: Scalar> EKState<S> {
    /// Mean-free density part h = rho - rho_bar.
    pub fn h(&self) -> Vec<S> {
        self.rho.iter().map(|&r| r - self.rho_bar).collect()
    }

    /// Flat coefficient vector [h_0.. h_{n-1}, m_0.. m_{n-1}].
    pub fn to_flat(&self) -> Vec<S> {
        let mut out = self.h();
        out.extend_from_slice(&self.m);
        out
    }

    /// Rebuild from a flat coefficient vector.
    pub fn from_flat(flat: &[S], gamma: S, rho_bar: S) -> Self {
        assert!(flat.len() % 2 == 0, "flat EK state must have even length");
        let n = flat.len() / 2;
        let rho = flat[..n].iter().map(|&h| rho_bar + h).collect();
        let m = flat[n..].to_vec();
        EKState { rho, m, gamma, rho_bar }
    }

    /// Invariants: mean-free h, nonnegative rho, endpoint momentum zero.
    pub fn check(&self, grid: &Grid1D<S>) -> Result<(), String> {
        if self.rho.len() != grid.n_nodes || self.m.len() != grid.n_nodes {
            return Err("state size does not match grid".into());
        }
        let mean_h = grid.mean(&self.h());
        if mean_h.abs() > c::<S>(1e-12) {
            return Err(format!("h mean {} exceeds 1e-12", mean_h));
        }
        if self.rho.iter().any(|&r| r < S::zero()) {
            return Err("negative density node".into());
        }
        let last = self.m.len() - 1;
        if self.m[0] != S::zero() || self.m[last] != S::zero() {
            return Err("endpoint momentum must be exactly zero".into());
        }
        Ok(())
    }
}

/// Pointwise energy density: three-case eta.
pub fn ek_eta<S: Scalar>(rho_val: S, m_val: S, gamma: S) -> S {
    if rho_val > S::zero() {
        m_val * m_val / (c::<S>(2.0) * rho_val) + rho_val.powf(gamma) / (gamma - S::one())
    } else if rho_val == S::zero() && m_val == S::zero() {
        S::zero()
    } else {
        S::infinity()
    }
}

/// Total energy: trapezoid quadrature of eta plus the midpoint-rule
/// quadrature of (rho')^2 / 2 with the discrete gradient.
pub fn ek_energy<S: Scalar>(grid: &Grid1D<S>, state: &EKState<S>) -> S {
    let mut e = S::zero();
    for ((&r, &m), &w) in state.rho.iter().zip(&state.m).zip(grid.node_weights()) {
        let eta = ek_eta(r, m, state.gamma);
        if !eta.is_finite() {
            return S::infinity();
        }
        e = e + w * eta;
    }
    let g = grid.gradient(&state.rho);
    let half = c::<S>(0.5);
    e + grid.integral_segments(&g.iter().map(|&gs| half * gs * gs).collect::<Vec<_>>())
}

/// Trapezoid integral of the density (the conserved mass).
pub fn mass<S: Scalar>(grid: &Grid1D<S>, state: &EKState<S>) -> S {
    grid.integral_nodal(&state.rho)
}

/// The operator pairing <A(rho, m), (psi, phi)>.
///
/// The psi part uses the discrete gradient of the nodal psi samples, which
/// makes it the exact negative adjoint of the discrete divergence (see
/// `Grid1D::divergence`); the phi parts use the analytic derivative handles
/// of the test family at nodes and segment midpoints.
pub fn ek_operator<S: Scalar>(grid: &Grid1D<S>, state: &EKState<S>, testfn: &EKTestFunction<S>) -> S {
    let n = grid.n_nodes;
    assert_eq!(state.rho.len(), n);
    assert_eq!(testfn.psi.len(), n);
    let gamma = state.gamma;
    let mut acc = S::zero();

    // - int m psi' : segment rule with averaged m and discrete psi gradient.
    let m_mid = grid.midpoint_avg(&state.m);
    let dpsi = grid.gradient(&testfn.psi);
    for (v, gp) in m_mid.iter().zip(&dpsi) {
        acc = acc - grid.spacing * *v * *gp;
    }

    let modes = testfn
        .modes
        .as_ref()
        .expect("ek_operator requires analytic derivative handles for phi");

    // - int (m^2/rho + rho^gamma) phi' : nodal trapezoid rule.
    for i in 0..n {
        let r = state.rho[i];
        let mv = state.m[i];
        let kinetic = if r > S::zero() {
            mv * mv / r
        } else if mv == S::zero() {
            S::zero()
        } else {
            panic!("m^2/rho undefined: nonzero momentum at a vacuum node");
        };
        let flux = kinetic + r.powf(gamma);
        acc = acc - grid.node_weights()[i] * flux * modes.dphi_at(grid.node(i));
    }

    // - int rho rho' phi'' - (3/2) int (rho')^2 phi' : segment midpoint rule.
    let g = grid.gradient(&state.rho);
    let rho_mid = grid.midpoint_avg(&state.rho);
    let three_half = c::<S>(1.5);
    for s in 0..grid.n_segments() {
        let x = grid.midpoint(s);
        acc = acc - grid.spacing * rho_mid[s] * g[s] * modes.d2phi_at(x);
        acc = acc - grid.spacing * three_half * g[s] * g[s] * modes.dphi_at(x);
    }
    acc
}

/// Kinetic coercivity constant: the largest c with
/// m^2/(2 rho) + rho^gamma / (2 (gamma - 1)) >= c |m|^p pointwise,
/// p = 2 gamma / (gamma + 1) (minimize the left side over rho > 0).
pub fn kinetic_coercivity_constant<S: Scalar>(gamma: S) -> S {
    let k1 = c::<S>(0.5);
    let k2 = S::one() / (c::<S>(2.0) * (gamma - S::one()));
    // With m fixed, the minimizer is rho* = (k1 m^2 / (gamma k2))^{1/(gamma+1)}
    // = a |m|^{2/(gamma+1)}; the minimum value is (k1/a + k2 a^gamma) |m|^p.
    let a = (k1 / (gamma * k2)).powf(S::one() / (gamma + S::one()));
    k1 / a + k2 * a.powf(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ek::testfn::{EkTestFamily, TrigModes};

    fn grid(n: usize) -> Grid1D<f64> {
        Grid1D::new(1.0, n)
    }

    fn cosine_state(grid: &Grid1D<f64>, amp: f64, mode: f64, gamma: f64) -> EKState<f64> {
        let rho: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&x| 1.0 + amp * (mode * std::f64::consts::PI * x).cos())
            .collect();
        let n = grid.n_nodes;
        EKState { rho, m: vec![0.0; n], gamma, rho_bar: 1.0 }
    }

    #[test]
    fn eta_three_cases() {
        assert_eq!(ek_eta(1.0, 0.0, 2.0), 1.0);
        assert_eq!(ek_eta(0.0, 0.0, 2.0), 0.0);
        assert_eq!(ek_eta(0.0, 1.0, 2.0), f64::INFINITY);
        assert_eq!(ek_eta(-0.5, 0.0, 2.0), f64::INFINITY);
    }

    #[test]
    fn energy_of_constant_state() {
        let grid = grid(64);
        let st = EKState { rho: vec![1.0; 64], m: vec![0.0; 64], gamma: 2.0, rho_bar: 1.0 };
        assert!((ek_energy(&grid, &st) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn energy_of_cosine_density_converges_at_rate_two() {
        // rho = 1 + 0.5 cos(pi x), gamma = 2, L = 1:
        // int rho^2 = 1 + 1/8, int (rho')^2 / 2 = pi^2 / 16,
        // so E -> 9/8 + pi^2/16.
        let exact = 9.0 / 8.0 + std::f64::consts::PI.powi(2) / 16.0;
        let mut errs = Vec::new();
        for n in [33usize, 65, 129] {
            let g = grid(n);
            let e = ek_energy(&g, &cosine_state(&g, 0.5, 1.0, 2.0));
            errs.push((e - exact).abs());
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
        assert!(errs[1] / errs[2] > 3.5, "{errs:?}");
        assert!(errs[2] < 1e-3);
    }

    #[test]
    fn energy_infinite_with_negative_node() {
        let grid = grid(16);
        let mut st = EKState { rho: vec![1.0; 16], m: vec![0.0; 16], gamma: 2.0, rho_bar: 1.0 };
        st.rho[7] = -0.1;
        assert_eq!(ek_energy(&grid, &st), f64::INFINITY);
    }

    #[test]
    fn operator_vanishes_on_constant_state() {
        let grid = grid(64);
        let fam = EkTestFamily::new(&grid, 2.0, 8, 16);
        let st = EKState { rho: vec![1.3; 64], m: vec![0.0; 64], gamma: 2.0, rho_bar: 1.3 };
        let test: Vec<f64> = (0..fam.dim()).map(|i| 0.1 * ((i + 1) as f64)).collect();
        let f = fam.function(&grid, &test);
        // Constant rho: gradient terms vanish exactly; the pressure term is a
        // constant times the quadrature of phi', small but not exactly zero.
        assert!(ek_operator(&grid, &st, &f).abs() < 1e-12);
    }

    #[test]
    fn operator_matches_fine_quadrature_oracle() {
        // Manufactured smooth fields; oracle = same formula evaluated by
        // dense quadrature with analytic derivatives of rho and m.
        let gamma = 2.0;
        let rho_f = |x: f64| 1.0 + 0.3 * (std::f64::consts::PI * x).cos();
        let drho_f = |x: f64| -0.3 * std::f64::consts::PI * (std::f64::consts::PI * x).sin();
        let m_f = |x: f64| 0.2 * (std::f64::consts::PI * x).sin().powi(2);
        let psi_modes = TrigModes { length: 1.0, psi_cos: vec![0.4, -0.2], phi_sin: vec![] };
        let phi_modes = TrigModes { length: 1.0, psi_cos: vec![], phi_sin: vec![0.3, 0.0, -0.1] };
        // Dense reference by midpoint rule with 1e5 cells.
        let nq = 100_000;
        let dq = 1.0 / nq as f64;
        let mut oracle = 0.0;
        for q in 0..nq {
            let x = (q as f64 + 0.5) * dq;
            let (r, dr, mv) = (rho_f(x), drho_f(x), m_f(x));
            oracle -= dq * mv * psi_modes.dpsi_at(x);
            oracle -= dq * (mv * mv / r + r.powf(gamma)) * phi_modes.dphi_at(x);
            oracle -= dq * r * dr * phi_modes.d2phi_at(x);
            oracle -= dq * 1.5 * dr * dr * phi_modes.dphi_at(x);
        }
        let mut prev_err = f64::INFINITY;
        for n in [65usize, 129, 257] {
            let g = grid(n);
            let rho: Vec<f64> = g.nodes().iter().map(|&x| rho_f(x)).collect();
            let m: Vec<f64> = g.nodes().iter().map(|&x| m_f(x)).collect();
            let st = EKState { rho, m, gamma, rho_bar: 1.0 };
            let psi: Vec<f64> = g.nodes().iter().map(|&x| psi_modes.psi_at(x)).collect();
            let phi: Vec<f64> = g.nodes().iter().map(|&x| phi_modes.phi_at(x)).collect();
            let f = EKTestFunction { psi, phi, modes: Some(phi_modes.clone()) };
            let err = (ek_operator(&g, &st, &f) - oracle).abs();
            assert!(err < prev_err / 3.0 || err < 1e-10, "n={n}: {err} vs {prev_err}");
            prev_err = err;
        }
        assert!(prev_err < 1e-4);
    }

    #[test]
    fn psi_part_vanishes_for_zero_momentum() {
        let grid = grid(48);
        let st = cosine_state(&grid, 0.4, 2.0, 2.0);
        let psi_modes = TrigModes { length: 1.0, psi_cos: vec![1.0, 0.5, -0.25], phi_sin: vec![] };
        let psi: Vec<f64> = grid.nodes().iter().map(|&x| psi_modes.psi_at(x)).collect();
        let zero_phi = TrigModes { length: 1.0, psi_cos: vec![], phi_sin: vec![] };
        let f = EKTestFunction { psi, phi: vec![0.0; 48], modes: Some(zero_phi) };
        assert_eq!(ek_operator(&grid, &st, &f), 0.0);
    }

    #[test]
    fn mass_of_perturbed_state() {
        let grid = grid(64);
        let st = cosine_state(&grid, 0.1, 2.0, 2.0);
        assert!((mass(&grid, &st) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coercivity_with_traced_constant() {
        use rand::{Rng, SeedableRng};
        // E >= c (||m||_p^p + ||rho||_gamma^gamma + ||rho'||_2^2) with
        // c = min(kinetic constant, 1/(2(gamma-1)), 1/2), from splitting the
        // pressure in half and minimizing the kinetic+half-pressure density.
        let grid = grid(48);
        let gamma = 2.0;
        let cg = kinetic_coercivity_constant::<f64>(gamma)
            .min(1.0 / (2.0 * (gamma - 1.0)))
            .min(0.5);
        let p = 2.0 * gamma / (gamma + 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let rho: Vec<f64> = (0..48).map(|_| rng.gen_range(0.01..3.0)).collect();
            let mut m: Vec<f64> = (0..48).map(|_| rng.gen_range(-2.0..2.0)).collect();
            m[0] = 0.0;
            m[47] = 0.0;
            let st = EKState { rho: rho.clone(), m: m.clone(), gamma, rho_bar: 1.0 };
            let e = ek_energy(&grid, &st);
            let mp: f64 = m
                .iter()
                .zip(grid.node_weights())
                .map(|(&mv, &w)| w * mv.abs().powf(p))
                .sum();
            let rg: f64 = rho
                .iter()
                .zip(grid.node_weights())
                .map(|(&r, &w)| w * r.powf(gamma))
                .sum();
            let dr: f64 = grid.gradient(&rho).iter().map(|&g| g * g).sum::<f64>() * grid.spacing;
            assert!(e >= cg * (mp + rg + dr) - 1e-12, "{e} vs {}", cg * (mp + rg + dr));
        }
    }

    #[test]
    fn flat_roundtrip() {
        let grid = grid(16);
        let st = cosine_state(&grid, 0.2, 2.0, 2.0);
        let flat = st.to_flat();
        let back = EKState::from_flat(&flat, 2.0, 1.0);
        for (a, b) in st.rho.iter().zip(&back.rho) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(st.check(&grid).is_ok());
    }
}
