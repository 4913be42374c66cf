//! 1-homogeneous convexity criterion for the binormal integrand.
//!
//! For a symmetric matrix M, the positively 1-homogeneous function
//!   f(xi) = gamma |xi| + M xi . xi / |xi|,   f(0) = 0,
//! is convex if and only if gamma >= lambda_max(M) - 2 lambda_min(M). The
//! threshold comes from the Hessian of f on the unit sphere; the probe
//! checks midpoint convexity empirically on both sides of the threshold and
//! produces an explicit violating pair below it, seeded along the critical
//! direction (top eigenvector base point, bottom eigenvector perturbation).

use rand::Rng;
use rand::SeedableRng;

use crate::bn::measure::{v3_add, v3_norm, v3_scale, Vec3};
use crate::bn::field::{m3_quad, m3_sym, Mat3};
use crate::linalg::{sym3_eigenvalues, sym3_eigenvector};
use crate::scalar::{c, Scalar};

/// The convexity threshold lambda_max - 2 lambda_min (input symmetrized).
pub fn hom_convexity_threshold<S: Scalar>(m: &Mat3<S>) -> S {
    let ev = sym3_eigenvalues(&m3_sym(m));
    ev[2] - c::<S>(2.0) * ev[0]
}

fn f_value<S: Scalar>(m: &Mat3<S>, gamma: S, xi: Vec3<S>) -> S {
    let r = v3_norm(xi);
    if r == S::zero() {
        return S::zero();
    }
    gamma * r + m3_quad(m, xi) / r
}

/// Outcome of the sampling probe: empirical convexity flag, worst midpoint
/// violation (positive = broken), and a witness pair if one was found.
#[derive(Clone, Debug)]
pub struct HomProbe<S> {
    pub is_convex_empirically: bool,
    pub worst_violation: S,
    pub witness: Option<(Vec3<S>, Vec3<S>)>,
}

/// Midpoint-convexity sampling of f over random pairs (pairs with 0
/// included), plus the targeted search along the critical direction.
pub fn hom_convexity_probe<S: Scalar>(
    m: &Mat3<S>,
    hom_gamma: S,
    n_samples: usize,
    seed: u64,
) -> HomProbe<S> {
    let msym = m3_sym(m);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let half = c::<S>(0.5);
    let mut worst = S::neg_infinity();
    let mut witness = None;
    let consider = |x1: Vec3<S>, x2: Vec3<S>, worst: &mut S, witness: &mut Option<(Vec3<S>, Vec3<S>)>| {
        let v = f_value(&msym, hom_gamma, v3_scale(half, v3_add(x1, x2)))
            - half * (f_value(&msym, hom_gamma, x1) + f_value(&msym, hom_gamma, x2));
        if v > *worst {
            *worst = v;
            if v > S::zero() {
                *witness = Some((x1, x2));
            }
        }
    };
    for i in 0..n_samples {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec3<S> {
            [
                c::<S>(rng.gen_range(-1.0..1.0)),
                c::<S>(rng.gen_range(-1.0..1.0)),
                c::<S>(rng.gen_range(-1.0..1.0)),
            ]
        };
        let x1 = draw(&mut rng);
        let x2 = if i % 8 == 7 { [S::zero(); 3] } else { draw(&mut rng) };
        consider(x1, x2, &mut worst, &mut witness);
    }
    // Targeted pairs: base at the top eigenvector, symmetric perturbation
    // along the bottom eigenvector (the direction in which the spherical
    // Hessian saturates the threshold).
    let ev = sym3_eigenvalues(&msym);
    let e_top = sym3_eigenvector(&msym, ev[2]);
    let e_bot = sym3_eigenvector(&msym, ev[0]);
    for i in 1..=16 {
        let t = c::<S>(i as f64 / 16.0);
        let x1 = v3_add(e_top, v3_scale(t, e_bot));
        let x2 = v3_add(e_top, v3_scale(-t, e_bot));
        consider(x1, x2, &mut worst, &mut witness);
    }
    HomProbe {
        is_convex_empirically: worst <= c::<S>(1e-10),
        worst_violation: worst,
        witness,
    }
}
