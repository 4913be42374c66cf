//! Uniform 1-D grid with Neumann conventions.
//!
//! Discrete calculus used throughout the Euler-Korteweg discretization:
//! - nodal quadrature: trapezoid weights w = (d/2, d, ..., d, d/2);
//! - discrete gradient: forward differences living on the n-1 segment
//!   midpoints (kernel = constants exactly, no spurious checkerboard mode);
//! - gradient-bearing integrals use the segment midpoint rule, state-only
//!   integrands the nodal trapezoid rule (both second order);
//! - discrete divergence D = the negative adjoint of the gradient pairing,
//!   so that <h-update, psi> + tau <A_psi(m), psi> = 0 holds exactly for
//!   every nodal psi (null-direction elimination);
//! - the discrete Poincare constant is the optimal constant between exactly
//!   these two discrete norms, so the two-weights convexity argument is
//!   discretely exact.

use crate::linalg::{max_generalized_rayleigh, Mat};
use crate::scalar::{c, Scalar};

#[derive(Clone, Debug)]
pub struct Grid1D<S> {
    pub length: S,
    pub n_nodes: usize,
    pub spacing: S,
    node_weights: Vec<S>,
}

impl<S: Scalar> Grid1D<S> {
    pub fn new(length: S, n_nodes: usize) -> Self {
        assert!(n_nodes >= 8, "grid needs at least 8 nodes");
        assert!(length > S::zero(), "interval length must be positive");
        let spacing = length / c::<S>((n_nodes - 1) as f64);
        let mut node_weights = vec![spacing; n_nodes];
        node_weights[0] = spacing * c::<S>(0.5);
        node_weights[n_nodes - 1] = spacing * c::<S>(0.5);
        Grid1D { length, n_nodes, spacing, node_weights }
    }

    pub fn n_segments(&self) -> usize {
        self.n_nodes - 1
    }

    pub fn node(&self, i: usize) -> S {
        self.spacing * c::<S>(i as f64)
    }

    pub fn nodes(&self) -> Vec<S> {
        (0..self.n_nodes).map(|i| self.node(i)).collect()
    }

    pub fn midpoint(&self, s: usize) -> S {
        self.spacing * c::<S>(s as f64 + 0.5)
    }

    pub fn node_weights(&self) -> &[S] {
        &self.node_weights
    }

    /// Trapezoid quadrature of nodal values.
    pub fn integral_nodal(&self, values: &[S]) -> S {
        values.iter().zip(&self.node_weights).fold(S::zero(), |acc, (&v, &w)| acc + v * w)
    }

    /// Midpoint-rule quadrature of per-segment values.
    pub fn integral_segments(&self, values: &[S]) -> S {
        values.iter().fold(S::zero(), |acc, &v| acc + v) * self.spacing
    }

    /// Forward-difference gradient on segments; exact zero for constants.
    pub fn gradient(&self, u: &[S]) -> Vec<S> {
        assert_eq!(u.len(), self.n_nodes);
        u.windows(2).map(|w| (w[1] - w[0]) / self.spacing).collect()
    }

    /// Node-to-midpoint averaging.
    pub fn midpoint_avg(&self, u: &[S]) -> Vec<S> {
        assert_eq!(u.len(), self.n_nodes);
        let half = c::<S>(0.5);
        u.windows(2).map(|w| half * (w[0] + w[1])).collect()
    }

    /// Trapezoid mean value (1/L) * integral.
    pub fn mean(&self, u: &[S]) -> S {
        self.integral_nodal(u) / self.length
    }

    /// Discrete divergence: the unique nodal field with
    /// sum_i w_i (D m)_i psi_i = - sum_s d * avg(m)_s * (grad psi)_s for all
    /// nodal psi (discrete integration by parts with no boundary term); the
    /// continuity update h^n = h^{n-1} - tau * D m then annihilates every
    /// psi-direction linear form exactly.
    pub fn divergence(&self, m: &[S]) -> Vec<S> {
        assert_eq!(m.len(), self.n_nodes);
        let v = self.midpoint_avg(m);
        let mut out = vec![S::zero(); self.n_nodes];
        for i in 0..self.n_nodes {
            let right = if i < v.len() { v[i] } else { S::zero() };
            let left = if i > 0 { v[i - 1] } else { S::zero() };
            out[i] = (right - left) / self.node_weights[i];
        }
        out
    }

    /// Adjoint of `divergence` with respect to the plain Euclidean pairing:
    /// (D^T y)_i = d/dm_i sum_j y_j (D m)_j.
    pub fn divergence_transpose(&self, y: &[S]) -> Vec<S> {
        assert_eq!(y.len(), self.n_nodes);
        let n = self.n_nodes;
        let half = c::<S>(0.5);
        let z: Vec<S> = y.iter().zip(&self.node_weights).map(|(&yi, &wi)| yi / wi).collect();
        let mut out = vec![S::zero(); n];
        for i in 0..n {
            let mut acc = S::zero();
            if i <= n - 2 {
                acc = acc + z[i] - z[i + 1];
            }
            if i >= 1 {
                acc = acc + z[i - 1] - z[i];
            }
            out[i] = half * acc;
        }
        out
    }

    /// Stiffness matrix G^T W_s G of the segment gradient (the discrete
    /// Neumann Laplacian bilinear form).
    pub fn stiffness(&self) -> Mat<S> {
        let n = self.n_nodes;
        let mut a = Mat::zeros(n, n);
        let inv_d = S::one() / self.spacing;
        for s in 0..self.n_segments() {
            // local contribution d * (grad)^2 with grad coefficients -+1/d
            a[(s, s)] = a[(s, s)] + inv_d;
            a[(s + 1, s + 1)] = a[(s + 1, s + 1)] + inv_d;
            a[(s, s + 1)] = a[(s, s + 1)] - inv_d;
            a[(s + 1, s)] = a[(s + 1, s)] - inv_d;
        }
        a
    }

    /// Midpoint mass matrix M^T W_s M of the node-to-midpoint averaging.
    pub fn midpoint_mass(&self) -> Mat<S> {
        let n = self.n_nodes;
        let mut b = Mat::zeros(n, n);
        let quarter_d = self.spacing * c::<S>(0.25);
        for s in 0..self.n_segments() {
            b[(s, s)] = b[(s, s)] + quarter_d;
            b[(s + 1, s + 1)] = b[(s + 1, s + 1)] + quarter_d;
            b[(s, s + 1)] = b[(s, s + 1)] + quarter_d;
            b[(s + 1, s)] = b[(s + 1, s)] + quarter_d;
        }
        b
    }

    /// Oversampled evaluation points (factor points per segment, plus the
    /// right endpoint) for certified sup-norms of the analytic test family.
    pub fn oversample_points(&self, factor: usize) -> Vec<S> {
        let m = self.n_segments() * factor;
        (0..=m).map(|q| self.length * c::<S>(q as f64) / c::<S>(m as f64)).collect()
    }
}

/// Optimal discrete Poincare constant: the smallest c_P with
/// ||avg(h)||_{L2,segments} <= c_P ||grad h||_{L2,segments} over
/// trapezoid-mean-free nodal h, i.e. the inverse square root of the smallest
/// nonzero generalized eigenvalue of the discrete Neumann Laplacian.
pub fn poincare_constant<S: Scalar>(grid: &Grid1D<S>) -> S {
    let a = grid.stiffness();
    let b = grid.midpoint_mass();
    let lambda = max_generalized_rayleigh(&a, &b, grid.node_weights(), 120);
    lambda.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_of_one_is_length() {
        let grid = Grid1D::<f64>::new(1.0, 64);
        let one = vec![1.0; 64];
        assert!((grid.integral_nodal(&one) - 1.0).abs() < 1e-14);
        assert!(grid.gradient(&one).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn divergence_is_adjoint_to_gradient_pairing() {
        let grid = Grid1D::<f64>::new(1.5, 16);
        let m: Vec<f64> = (0..16).map(|i| ((i as f64) * 0.37).sin()).collect();
        let psi: Vec<f64> = (0..16).map(|i| ((i as f64) * 0.71).cos()).collect();
        let lhs: f64 = grid
            .divergence(&m)
            .iter()
            .zip(grid.node_weights())
            .zip(&psi)
            .map(|((&d, &w), &p)| d * w * p)
            .sum();
        let rhs: f64 = grid
            .midpoint_avg(&m)
            .iter()
            .zip(grid.gradient(&psi))
            .map(|(&v, g)| v * g)
            .sum::<f64>()
            * grid.spacing;
        assert!((lhs + rhs).abs() < 1e-13);
    }

    #[test]
    fn divergence_conserves_mass() {
        let grid = Grid1D::<f64>::new(1.0, 32);
        let m: Vec<f64> = (0..32).map(|i| ((i as f64) * 0.23).sin() + 0.4).collect();
        let total: f64 = grid.integral_nodal(&grid.divergence(&m));
        assert!(total.abs() < 1e-14);
    }

    #[test]
    fn divergence_transpose_is_adjoint() {
        let grid = Grid1D::<f64>::new(1.0, 12);
        let m: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.9).cos()).collect();
        let y: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.4).sin()).collect();
        let dm = grid.divergence(&m);
        let dty = grid.divergence_transpose(&y);
        let lhs: f64 = dm.iter().zip(&y).map(|(&a, &b)| a * b).sum();
        let rhs: f64 = dty.iter().zip(&m).map(|(&a, &b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn poincare_constant_approaches_continuum() {
        // Continuum optimal constant on (0, L) for mean-free H1 is L / pi.
        let c128 = poincare_constant(&Grid1D::<f64>::new(1.0, 128));
        assert!((c128 - 1.0 / std::f64::consts::PI).abs() / (1.0 / std::f64::consts::PI) < 0.01, "{c128}");
        let c_l2 = poincare_constant(&Grid1D::<f64>::new(2.0, 128));
        assert!((c_l2 - 2.0 / std::f64::consts::PI).abs() / (2.0 / std::f64::consts::PI) < 0.01);
    }

    #[test]
    fn poincare_inequality_certified_on_random_mean_free_fields() {
        use rand::{Rng, SeedableRng};
        let grid = Grid1D::<f64>::new(1.0, 48);
        let cp = poincare_constant(&grid);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mut h: Vec<f64> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = grid.mean(&h);
            for v in h.iter_mut() {
                *v -= mean;
            }
            let num: f64 = grid
                .midpoint_avg(&h)
                .iter()
                .map(|&v| v * v)
                .sum::<f64>()
                .sqrt();
            let den: f64 = grid.gradient(&h).iter().map(|&g| g * g).sum::<f64>().sqrt();
            assert!(num <= cp * den * (1.0 + 1e-9));
        }
    }
}
