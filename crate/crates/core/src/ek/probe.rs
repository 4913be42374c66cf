//! Convexity probe for the regularized dual pairing.
//!
//! For a fixed test function Phi = (psi, phi), the map
//!   U = (rho, m)  |->  -<A(U), Phi> + W(phi) E(U)
//! must be convex when W is the larger regularity weight K-tilde: each
//! concave contribution of the operator (kinetic flux against (phi')_-, the
//! pressure flux, the capillary terms) is absorbed by the matching share of
//! K-tilde times the energy, with the h h' phi'' cross term handled through
//! the Poincare inequality. With the smaller lsc weight K the phi'' term has
//! no budget, and a violating direction exists for test functions whose
//! second derivative dominates the first; the probe finds and stores such a
//! witness by recovering the Hessian of the (exactly quadratic at gamma = 2,
//! m = 0) restriction and following its most negative eigenvector.

use rand::Rng;
use rand::SeedableRng;

use crate::ek::grid::Grid1D;
use crate::ek::state::{ek_energy, ek_operator, EKState};
use crate::ek::testfn::{ek_k, ek_ktilde, EKTestFunction};
use crate::linalg::{sym_min_eig, Mat};
use crate::scalar::{c, Scalar};

/// Which regularity weight multiplies the energy in the probed functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeWeight {
    /// K: lower-semicontinuity weight (no second-derivative budget).
    Lsc,
    /// K-tilde: convexity weight.
    Convexity,
}

/// Witness pair for a midpoint-convexity violation.
#[derive(Clone, Debug)]
pub struct ConvexityWitness<S> {
    pub u1: EKState<S>,
    pub u2: EKState<S>,
    pub violation: S,
}

/// Probe outcome: worst sampled violation (positive = convexity broken) and
/// the targeted witness if one was found.
#[derive(Clone, Debug)]
pub struct ConvexityProbe<S> {
    pub worst_violation: S,
    pub witness: Option<ConvexityWitness<S>>,
    pub samples: usize,
}

fn probe_value<S: Scalar>(
    grid: &Grid1D<S>,
    testfn: &EKTestFunction<S>,
    weight: S,
    state: &EKState<S>,
) -> S {
    let e = ek_energy(grid, state);
    if !e.is_finite() {
        return S::infinity();
    }
    -ek_operator(grid, state, testfn) + weight * e
}

fn midpoint<S: Scalar>(a: &EKState<S>, b: &EKState<S>) -> EKState<S> {
    let half = c::<S>(0.5);
    EKState {
        rho: a.rho.iter().zip(&b.rho).map(|(&x, &y)| half * (x + y)).collect(),
        m: a.m.iter().zip(&b.m).map(|(&x, &y)| half * (x + y)).collect(),
        gamma: a.gamma,
        rho_bar: a.rho_bar,
    }
}

fn random_state<S: Scalar>(
    grid: &Grid1D<S>,
    gamma: S,
    rho_bar: S,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> EKState<S> {
    let n = grid.n_nodes;
    let pi = std::f64::consts::PI;
    let length = grid.length.to_f64().unwrap();
    let n_modes = 4usize;
    let amp_r: Vec<f64> = (0..n_modes).map(|_| rng.gen_range(-0.15..0.15)).collect();
    let amp_m: Vec<f64> = (0..n_modes).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let mut rho = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.node(i).to_f64().unwrap();
        let mut r = 1.0;
        let mut mv = 0.0;
        for (k, (&ar, &am)) in amp_r.iter().zip(&amp_m).enumerate() {
            let w = (k + 1) as f64 * pi / length;
            r += ar * (w * x).cos();
            mv += am * (w * x).sin();
        }
        rho.push(rho_bar * c::<S>(r.max(0.05)));
        m.push(c::<S>(mv));
    }
    m[0] = S::zero();
    m[n - 1] = S::zero();
    EKState { rho, m, gamma, rho_bar }
}

/// Sample midpoint convexity of the probed functional and run the targeted
/// Hessian-eigenvector witness search.
pub fn ek_convexity_probe<S: Scalar>(
    grid: &Grid1D<S>,
    testfn: &EKTestFunction<S>,
    gamma: S,
    rho_bar: S,
    n_samples: usize,
    seed: u64,
    weight_rule: ProbeWeight,
) -> ConvexityProbe<S> {
    let weight = match weight_rule {
        ProbeWeight::Lsc => ek_k(grid, testfn, gamma),
        ProbeWeight::Convexity => ek_ktilde(grid, testfn, gamma),
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let half = c::<S>(0.5);
    let mut worst = S::neg_infinity();
    for _ in 0..n_samples {
        let u1 = random_state(grid, gamma, rho_bar, &mut rng);
        let u2 = random_state(grid, gamma, rho_bar, &mut rng);
        let g1 = probe_value(grid, testfn, weight, &u1);
        let g2 = probe_value(grid, testfn, weight, &u2);
        let gm = probe_value(grid, testfn, weight, &midpoint(&u1, &u2));
        let v = gm - half * (g1 + g2);
        if v > worst {
            worst = v;
        }
    }

    // Targeted search: at m = 0 the density restriction is quadratic for
    // gamma = 2 (and its Hessian at rho_bar otherwise); recover H from
    // second differences of the probe value and follow the most negative
    // eigendirection.
    let n = grid.n_nodes;
    let base = EKState {
        rho: vec![rho_bar; n],
        m: vec![S::zero(); n],
        gamma,
        rho_bar,
    };
    let delta = c::<S>(0.05) * rho_bar;
    let perturbed = |dirs: &[usize]| {
        let mut s = base.clone();
        for &i in dirs {
            s.rho[i] = s.rho[i] + delta;
        }
        probe_value(grid, testfn, weight, &s)
    };
    let g0 = probe_value(grid, testfn, weight, &base);
    let singles: Vec<S> = (0..n).map(|i| perturbed(&[i])).collect();
    let mut h = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let gij = if i == j {
                let mut s = base.clone();
                s.rho[i] = s.rho[i] + delta + delta;
                probe_value(grid, testfn, weight, &s)
            } else {
                perturbed(&[i, j])
            };
            let v = (gij - singles[i] - singles[j] + g0) / (delta * delta);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let (lambda_min, dir) = sym_min_eig(&h, 600);
    let mut witness = None;
    if lambda_min < S::zero() {
        let sup = dir.iter().fold(S::zero(), |a, &v| a.max(v.abs()));
        let scale = half * rho_bar / sup;
        let mut u1 = base.clone();
        let mut u2 = base.clone();
        for i in 0..n {
            u1.rho[i] = u1.rho[i] + scale * dir[i];
            u2.rho[i] = u2.rho[i] - scale * dir[i];
        }
        let g1 = probe_value(grid, testfn, weight, &u1);
        let g2 = probe_value(grid, testfn, weight, &u2);
        let v = g0 - half * (g1 + g2);
        if v > worst {
            worst = v;
        }
        if v > S::zero() {
            witness = Some(ConvexityWitness { u1, u2, violation: v });
        }
    }
    ConvexityProbe { worst_violation: worst, witness, samples: n_samples }
}
