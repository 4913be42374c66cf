//! Euler-Korteweg test functions and regularity weights.
//!
//! The shipped parametric family is trigonometric: cosine modes for the
//! density test component psi (Neumann-compatible, mean-free) and sine modes
//! for the momentum test component phi (vanishing at the endpoints, encoding
//! phi . n = 0). Members carry analytic derivative handles up to second
//! order; the sup-norms entering the regularity weights K and K-tilde are
//! taken over an 8x oversampling of the grid, which contains all nodes and
//! segment midpoints used by the quadrature.

use crate::ek::grid::Grid1D;
use crate::scalar::{c, Scalar};

/// Oversampling factor for certified sup-norms.
pub const OVERSAMPLE: usize = 8;

/// Analytic trigonometric representation of a family member:
/// psi(x) = sum_k a_k cos(k pi x / L), phi(x) = sum_j b_j sin(j pi x / L)
/// (coefficients indexed from mode 1; scale factors already folded in).
#[derive(Clone, Debug)]
pub struct TrigModes<S> {
    pub length: S,
    pub psi_cos: Vec<S>,
    pub phi_sin: Vec<S>,
}

impl<S: Scalar> TrigModes<S> {
    fn omega(&self, mode: usize) -> S {
        c::<S>(std::f64::consts::PI) * c::<S>((mode + 1) as f64) / self.length
    }

    pub fn psi_at(&self, x: S) -> S {
        let mut v = S::zero();
        for (k, &a) in self.psi_cos.iter().enumerate() {
            v = v + a * (self.omega(k) * x).cos();
        }
        v
    }

    pub fn dpsi_at(&self, x: S) -> S {
        let mut v = S::zero();
        for (k, &a) in self.psi_cos.iter().enumerate() {
            let w = self.omega(k);
            v = v - a * w * (w * x).sin();
        }
        v
    }

    pub fn phi_at(&self, x: S) -> S {
        let mut v = S::zero();
        for (j, &b) in self.phi_sin.iter().enumerate() {
            v = v + b * (self.omega(j) * x).sin();
        }
        v
    }

    pub fn dphi_at(&self, x: S) -> S {
        let mut v = S::zero();
        for (j, &b) in self.phi_sin.iter().enumerate() {
            let w = self.omega(j);
            v = v + b * w * (w * x).cos();
        }
        v
    }

    pub fn d2phi_at(&self, x: S) -> S {
        let mut v = S::zero();
        for (j, &b) in self.phi_sin.iter().enumerate() {
            let w = self.omega(j);
            v = v - b * w * w * (w * x).sin();
        }
        v
    }
}

/// One test function: nodal values plus (for family members) the analytic
/// derivative handles required by the operator quadrature and sup-norms.
#[derive(Clone, Debug)]
pub struct EKTestFunction<S> {
    /// Nodal psi values, trapezoid-mean-free.
    pub psi: Vec<S>,
    /// Nodal phi values, exactly zero at the endpoints.
    pub phi: Vec<S>,
    /// Analytic representation; `None` for purely nodal data (e.g. the dual
    /// arguments (xi, zeta) of the subdifferential solve).
    pub modes: Option<TrigModes<S>>,
}

impl<S: Scalar> EKTestFunction<S> {
    /// Purely nodal test data; psi is recentred to zero trapezoid mean and
    /// phi must vanish at the endpoints.
    pub fn from_nodal(grid: &Grid1D<S>, mut psi: Vec<S>, phi: Vec<S>) -> Self {
        assert_eq!(psi.len(), grid.n_nodes);
        assert_eq!(phi.len(), grid.n_nodes);
        assert!(
            phi[0] == S::zero() && phi[grid.n_nodes - 1] == S::zero(),
            "phi must vanish at the endpoints"
        );
        let mean = grid.mean(&psi);
        for v in psi.iter_mut() {
            *v = *v - mean;
        }
        EKTestFunction { psi, phi, modes: None }
    }

    /// Family member from analytic modes, sampled on the grid.
    pub fn from_modes(grid: &Grid1D<S>, modes: TrigModes<S>) -> Self {
        let mut psi: Vec<S> = grid.nodes().iter().map(|&x| modes.psi_at(x)).collect();
        let mean = grid.mean(&psi);
        for v in psi.iter_mut() {
            *v = *v - mean;
        }
        let mut phi: Vec<S> = grid.nodes().iter().map(|&x| modes.phi_at(x)).collect();
        phi[0] = S::zero();
        let last = phi.len() - 1;
        phi[last] = S::zero();
        EKTestFunction { psi, phi, modes: Some(modes) }
    }

    fn modes_ref(&self) -> &TrigModes<S> {
        self.modes
            .as_ref()
            .expect("operation requires analytic derivative handles (family member)")
    }

    /// Sup of the negative part of phi' over the oversampled interval.
    pub fn sup_dphi_neg(&self, grid: &Grid1D<S>) -> S {
        let modes = self.modes_ref();
        let mut sup = S::zero();
        for x in grid.oversample_points(OVERSAMPLE) {
            let neg = -modes.dphi_at(x);
            if neg > sup {
                sup = neg;
            }
        }
        sup
    }

    /// Sup of |phi''| over the oversampled interval.
    pub fn sup_d2phi(&self, grid: &Grid1D<S>) -> S {
        let modes = self.modes_ref();
        let mut sup = S::zero();
        for x in grid.oversample_points(OVERSAMPLE) {
            let a = modes.d2phi_at(x).abs();
            if a > sup {
                sup = a;
            }
        }
        sup
    }

    /// Max over the oversampled interval of |psi|, |phi|, |phi'|, |phi''|
    /// (the radius norm of the lower-bound assumption).
    pub fn sup_norm(&self, grid: &Grid1D<S>) -> S {
        let modes = self.modes_ref();
        let mut sup = S::zero();
        for x in grid.oversample_points(OVERSAMPLE) {
            for v in [modes.psi_at(x), modes.phi_at(x), modes.dphi_at(x), modes.d2phi_at(x)] {
                if v.abs() > sup {
                    sup = v.abs();
                }
            }
        }
        sup
    }
}

/// Regularity weight: K = (2 + max(gamma - 1, 1)) ||(phi')_-||_inf.
pub fn ek_k<S: Scalar>(grid: &Grid1D<S>, testfn: &EKTestFunction<S>, gamma: S) -> S {
    let coef = c::<S>(2.0) + (gamma - S::one()).max(S::one());
    coef * testfn.sup_dphi_neg(grid)
}

/// Auxiliary regularity weight with a known Poincare constant:
/// K-tilde = (2 + max(gamma - 1, 3)) ||(phi')_-||_inf + 2 c_P ||phi''||_inf.
pub fn ek_ktilde_with_cp<S: Scalar>(grid: &Grid1D<S>, testfn: &EKTestFunction<S>, gamma: S, c_p: S) -> S {
    let coef = c::<S>(2.0) + (gamma - S::one()).max(c::<S>(3.0));
    coef * testfn.sup_dphi_neg(grid) + c::<S>(2.0) * c_p * testfn.sup_d2phi(grid)
}

/// Auxiliary regularity weight (computes the grid's Poincare constant).
pub fn ek_ktilde<S: Scalar>(grid: &Grid1D<S>, testfn: &EKTestFunction<S>, gamma: S) -> S {
    ek_ktilde_with_cp(grid, testfn, gamma, crate::ek::grid::poincare_constant(grid))
}

/// The shipped parametric test family: `n_psi` cosine modes followed by
/// `n_phi` sine modes, the latter scaled so each basis member has
/// K-tilde = 1 (so ball coefficients are roughly on a common scale).
#[derive(Clone, Debug)]
pub struct EkTestFamily<S> {
    pub length: S,
    pub n_psi: usize,
    pub n_phi: usize,
    pub gamma: S,
    pub c_p: S,
    pub phi_scales: Vec<S>,
}

impl<S: Scalar> EkTestFamily<S> {
    pub fn new(grid: &Grid1D<S>, gamma: S, n_psi: usize, n_phi: usize) -> Self {
        let c_p = crate::ek::grid::poincare_constant(grid);
        let coef = c::<S>(2.0) + (gamma - S::one()).max(c::<S>(3.0));
        let pi = c::<S>(std::f64::consts::PI);
        let phi_scales = (0..n_phi)
            .map(|j| {
                let w = pi * c::<S>((j + 1) as f64) / grid.length;
                S::one() / (coef * w + c::<S>(2.0) * c_p * w * w)
            })
            .collect();
        EkTestFamily { length: grid.length, n_psi, n_phi, gamma, c_p, phi_scales }
    }

    pub fn dim(&self) -> usize {
        self.n_psi + self.n_phi
    }

    /// Analytic modes of a coefficient vector over the family basis.
    pub fn modes(&self, test: &[S]) -> TrigModes<S> {
        assert_eq!(test.len(), self.dim());
        let psi_cos = test[..self.n_psi].to_vec();
        let phi_sin = test[self.n_psi..]
            .iter()
            .zip(&self.phi_scales)
            .map(|(&b, &s)| b * s)
            .collect();
        TrigModes { length: self.length, psi_cos, phi_sin }
    }

    pub fn function(&self, grid: &Grid1D<S>, test: &[S]) -> EKTestFunction<S> {
        EKTestFunction::from_modes(grid, self.modes(test))
    }

    /// K of a coefficient vector.
    pub fn k_weight(&self, grid: &Grid1D<S>, test: &[S]) -> S {
        ek_k(grid, &self.function(grid, test), self.gamma)
    }

    /// K-tilde of a coefficient vector (cached Poincare constant).
    pub fn ktilde_weight(&self, grid: &Grid1D<S>, test: &[S]) -> S {
        ek_ktilde_with_cp(grid, &self.function(grid, test), self.gamma, self.c_p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1D<f64> {
        Grid1D::new(1.0, 64)
    }

    #[test]
    fn zero_test_function_has_zero_weights() {
        let grid = grid();
        let fam = EkTestFamily::new(&grid, 2.0, 8, 16);
        let zero = vec![0.0; fam.dim()];
        assert_eq!(fam.k_weight(&grid, &zero), 0.0);
        assert_eq!(fam.ktilde_weight(&grid, &zero), 0.0);
    }

    #[test]
    fn monotone_phi_has_zero_k() {
        // phi' >= 0 everywhere: half a sine period, phi = sin(pi x / L) on
        // [0, L/2] extended... simplest family member with phi' >= 0 does not
        // exist among full sine modes, so check via nodal-free analytics:
        // mode 1 on [0,1] has phi' = cos(pi x) changing sign; instead verify
        // the negative-part logic directly with a synthetic mode on [0, 2]
        // restricted to [0, 1]: phi(x) = sin(pi x / 2), phi' >= 0 on [0, 1].
        let grid = Grid1D::<f64>::new(1.0, 64);
        let modes = TrigModes { length: 2.0, psi_cos: vec![], phi_sin: vec![1.0] };
        let f = EKTestFunction {
            psi: vec![0.0; 64],
            phi: grid.nodes().iter().map(|&x| modes.phi_at(x)).collect(),
            modes: Some(modes),
        };
        assert_eq!(ek_k(&grid, &f, 2.0), 0.0);
        let cp = crate::ek::grid::poincare_constant(&grid);
        let expected = 2.0 * cp * f.sup_d2phi(&grid);
        assert!((ek_ktilde_with_cp(&grid, &f, 2.0, cp) - expected).abs() < 1e-14);
    }

    #[test]
    fn sine_mode_weights_match_closed_form() {
        // phi(x) = s sin(2 pi x / L) on [0,1], gamma = 2:
        // K = (2 + 1) * 2 pi s, K-tilde = (2 + 3) * 2 pi s + 2 c_P (2 pi)^2 s.
        let grid = grid();
        let s = 0.37;
        let modes = TrigModes { length: 1.0, psi_cos: vec![], phi_sin: vec![0.0, s] };
        let f = EKTestFunction::from_modes(&grid, modes);
        let two_pi = 2.0 * std::f64::consts::PI;
        let k = ek_k(&grid, &f, 2.0);
        assert!((k - 3.0 * two_pi * s).abs() / (3.0 * two_pi * s) < 1e-3, "{k}");
        let cp = crate::ek::grid::poincare_constant(&grid);
        let kt = ek_ktilde_with_cp(&grid, &f, 2.0, cp);
        let expected = 5.0 * two_pi * s + 2.0 * cp * two_pi * two_pi * s;
        assert!((kt - expected).abs() / expected < 1e-3, "{kt} vs {expected}");
    }

    #[test]
    fn family_basis_members_have_unit_ktilde() {
        let grid = grid();
        let fam = EkTestFamily::new(&grid, 2.0, 8, 16);
        for j in 0..fam.n_phi {
            let mut test = vec![0.0; fam.dim()];
            test[fam.n_psi + j] = 1.0;
            let kt = fam.ktilde_weight(&grid, &test);
            // Oversampling may just miss the exact extrema: <= 1 and close.
            assert!(kt <= 1.0 + 1e-12, "mode {j}: {kt}");
            assert!(kt > 0.995, "mode {j}: {kt}");
        }
        // psi members carry no weight at all.
        for k in 0..fam.n_psi {
            let mut test = vec![0.0; fam.dim()];
            test[k] = 1.0;
            assert_eq!(fam.ktilde_weight(&grid, &test), 0.0);
        }
    }

    #[test]
    fn k_below_ktilde_on_random_family_members() {
        use rand::{Rng, SeedableRng};
        let grid = grid();
        let fam = EkTestFamily::new(&grid, 2.0, 8, 16);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let test: Vec<f64> = (0..fam.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(fam.k_weight(&grid, &test) <= fam.ktilde_weight(&grid, &test) + 1e-14);
        }
    }

    #[test]
    fn nodal_invariants() {
        let grid = grid();
        let fam = EkTestFamily::new(&grid, 2.0, 8, 16);
        let test: Vec<f64> = (0..fam.dim()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let f = fam.function(&grid, &test);
        assert!(grid.mean(&f.psi).abs() < 1e-12);
        assert_eq!(f.phi[0], 0.0);
        assert_eq!(f.phi[63], 0.0);
    }
}
