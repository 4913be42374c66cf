//! Per-step convex-concave saddle solver.
//!
//! Each time step solves  min over U of sup over Phi in the dual ball of
//! F^n(U|Phi).  F^n is linear in Phi, the ball weight is positively
//! 1-homogeneous (so projection onto the ball is exact radial scaling), and
//! dual directions with zero weight ("null directions") make the sup +inf
//! unless the corresponding linear forms vanish -- those are eliminated as
//! hard equality constraints by the concrete problems, never penalized.
//!
//! The iteration is a monotone projected dual ascent: the concave dual
//! function d(c) = min_U F(U|c) is maximized over the ball coefficients with
//! radial projection and backtracking; the inner minimization is exact
//! (problem-supplied Newton, or the default Barzilai-Borwein descent).  The
//! reported gap is F(U|0) plus the maximum of the linear dual part over the
//! ball, evaluated exactly when the problem supplies a ball-LP oracle and by
//! boundary sampling otherwise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, norm2};
use crate::scalar::{c, Scalar};

/// The restricted dual ball Y_tau over a finite basis.
pub struct DualBall<S> {
    /// Basis coefficient vectors in the system's test space.
    pub basis: Vec<Vec<S>>,
    /// Ball limit (1/tau).
    pub limit: S,
    /// Which basis members have zero weight (unbounded directions).
    pub null_mask: Vec<bool>,
    /// The 1-homogeneous ball weight K-tilde evaluated on a combined test vector.
    weight: std::sync::Arc<dyn Fn(&[S]) -> S + Send + Sync>,
}

impl<S: Scalar> DualBall<S> {
    pub fn new(
        basis: Vec<Vec<S>>,
        limit: S,
        null_mask: Vec<bool>,
        weight: std::sync::Arc<dyn Fn(&[S]) -> S + Send + Sync>,
    ) -> Self {
        assert_eq!(basis.len(), null_mask.len());
        DualBall { basis, limit, null_mask, weight }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Linear combination of the basis by ball coefficients.
    pub fn combine(&self, coeffs: &[S]) -> Vec<S> {
        assert_eq!(coeffs.len(), self.basis.len());
        let test_dim = self.basis[0].len();
        let mut out = vec![S::zero(); test_dim];
        for (ck, bk) in coeffs.iter().zip(&self.basis) {
            if *ck != S::zero() {
                for (o, b) in out.iter_mut().zip(bk) {
                    *o = *o + *ck * *b;
                }
            }
        }
        out
    }

    /// K-tilde of the combination.
    pub fn weight_of(&self, coeffs: &[S]) -> S {
        (self.weight)(&self.combine(coeffs))
    }

    /// Members of the basis flagged as null directions.
    pub fn null_directions(&self) -> Vec<Vec<S>> {
        self.basis
            .iter()
            .zip(&self.null_mask)
            .filter(|(_, &m)| m)
            .map(|(b, _)| b.clone())
            .collect()
    }
}

/// Exact radial projection onto the ball: coefficients are scaled by
/// limit / K-tilde when outside; null-direction components are never scaled
/// (they carry no weight).
pub fn project_dual<S: Scalar>(coeffs: &[S], ball: &DualBall<S>) -> Vec<S> {
    let w = ball.weight_of(coeffs);
    assert!(w >= S::zero(), "ball weight evaluated negative: contract violation");
    if w <= ball.limit {
        return coeffs.to_vec();
    }
    let s = ball.limit / w;
    coeffs
        .iter()
        .zip(&ball.null_mask)
        .map(|(&ck, &null)| if null { ck } else { s * ck })
        .collect()
}

/// Solver configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig<S> {
    /// Gap tolerance for convergence.
    pub tol: S,
    /// Iteration cap for the outer dual ascent.
    pub max_iter: usize,
    /// Boundary samples for the sampled sup estimate.
    pub n_samples: usize,
    /// RNG seed for boundary sampling (recorded for reproducibility).
    pub seed: u64,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        SolverConfig { tol: c(1e-8), max_iter: 100_000, n_samples: 64, seed: 0 }
    }
}

/// Result of one saddle solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaddleResult<S> {
    pub primal: Vec<S>,
    pub gap_estimate: S,
    pub iterations: usize,
    pub converged: bool,
    /// Ball coefficients of the certifying dual direction.
    pub certifying_dual: Vec<S>,
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("objective is +inf at the initial point (outside dom E)")]
    InfiniteAtInit,
    #[error("max_iter exceeded: best gap {best_gap} > tol {tol} after {iterations} iterations")]
    MaxIterExceeded { best_gap: f64, tol: f64, iterations: usize },
}

/// A per-step saddle problem: F(u|c) over primal u and ball coefficients c,
/// linear in c.
pub trait SaddleProblem<S: Scalar> {
    fn primal_dim(&self) -> usize;
    fn ball(&self) -> &DualBall<S>;

    /// F(u | c), +inf off the primal domain.
    fn value(&self, u: &[S], coeffs: &[S]) -> S;

    /// Gradient of F with respect to u.
    fn grad_primal(&self, u: &[S], coeffs: &[S]) -> Vec<S>;

    /// g(u) with F(u|c) = F(u|0) + g(u) . c (linearity in the dual).
    fn grad_dual(&self, u: &[S]) -> Vec<S>;

    /// Residuals of the eliminated null-direction constraints at u.
    fn null_residuals(&self, u: &[S]) -> Vec<S>;

    /// Exact maximum of g . c over the ball, if the problem has an exact
    /// oracle (polyhedral ball); returns (argmax coefficients, value).
    fn max_linear_over_ball(&self, _g: &[S]) -> Option<(Vec<S>, S)> {
        None
    }

    /// Minimize F(.|coeffs) from `init`. The default is a backtracking
    /// Barzilai-Borwein gradient descent; problems with analytic Hessians
    /// override this with Newton.
    fn min_over_primal(&self, coeffs: &[S], init: &[S], tol: S, max_iter: usize) -> Vec<S> {
        let mut u = init.to_vec();
        let mut g = self.grad_primal(&u, coeffs);
        let mut step = c::<S>(1e-2) / (S::one() + norm2(&g));
        let mut prev_u: Option<Vec<S>> = None;
        let mut prev_g: Option<Vec<S>> = None;
        for _ in 0..max_iter {
            let gnorm = norm2(&g);
            if gnorm <= tol {
                break;
            }
            if let (Some(pu), Some(pg)) = (&prev_u, &prev_g) {
                // Barzilai-Borwein step length.
                let du: Vec<S> = u.iter().zip(pu).map(|(&a, &b)| a - b).collect();
                let dg: Vec<S> = g.iter().zip(pg).map(|(&a, &b)| a - b).collect();
                let denom = dot(&du, &dg);
                if denom > S::zero() {
                    step = dot(&du, &du) / denom;
                }
            }
            let f0 = self.value(&u, coeffs);
            let mut s = step;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = axpy(&u, -s, &g);
                let ft = self.value(&trial, coeffs);
                if ft.is_finite() && ft < f0 {
                    prev_u = Some(u.clone());
                    prev_g = Some(g.clone());
                    u = trial;
                    g = self.grad_primal(&u, coeffs);
                    accepted = true;
                    break;
                }
                s = s * c::<S>(0.5);
            }
            if !accepted {
                break;
            }
        }
        u
    }
}

/// Sampled lower bound on max over the ball of g . c: random boundary
/// directions, signed basis directions, and the g-aligned direction, each
/// radially scaled to the boundary. Null components stay zero (their forms
/// are checked separately). Returns (best coefficients, best value >= 0).
fn sampled_sup_linear<S: Scalar>(ball: &DualBall<S>, g: &[S], n_samples: usize, seed: u64) -> (Vec<S>, S) {
    let dim = ball.dim();
    let mut best = vec![S::zero(); dim];
    let mut best_val = S::zero(); // c = 0 is feasible
    let mut consider = |dir: Vec<S>| {
        let w = ball.weight_of(&dir);
        if !(w > S::zero()) || !w.is_finite() {
            return;
        }
        let s = ball.limit / w;
        let val = dot(g, &dir) * s;
        let val = val.max(-val); // the ball is symmetric in sign for these directions
        if val > best_val {
            let sign = if dot(g, &dir) >= S::zero() { s } else { -s };
            best = dir.iter().map(|&d| sign * d).collect();
            // Re-project: the weight may differ for the flipped sign.
            let wflip = ball.weight_of(&best);
            if wflip > ball.limit {
                let shrink = ball.limit / wflip;
                for b in best.iter_mut() {
                    *b = *b * shrink;
                }
            }
            best_val = dot(g, &best);
        }
    };
    // Signed basis directions.
    for k in 0..dim {
        if ball.null_mask[k] {
            continue;
        }
        let mut d = vec![S::zero(); dim];
        d[k] = S::one();
        consider(d.clone());
        d[k] = -S::one();
        consider(d);
    }
    // The g-aligned direction.
    let mut gdir: Vec<S> = g.to_vec();
    for (v, &null) in gdir.iter_mut().zip(&ball.null_mask) {
        if null {
            *v = S::zero();
        }
    }
    if norm2(&gdir) > S::zero() {
        consider(gdir);
    }
    // Random directions.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let d: Vec<S> = (0..dim)
            .map(|k| {
                if ball.null_mask[k] {
                    S::zero()
                } else {
                    c::<S>(rng.gen_range(-1.0..1.0))
                }
            })
            .collect();
        if norm2(&d) > S::zero() {
            consider(d);
        }
    }
    (best, best_val)
}

/// Tolerance below which a null-direction linear form counts as annihilated.
const NULL_FORM_TOL: f64 = 1e-9;

/// Estimated sup over the ball of F(candidate|.): F(candidate|0) plus the
/// (exact or sampled) maximum of the linear dual part. A candidate violating
/// a null-direction constraint is flagged as +inf (the true sup is
/// unbounded along that direction).
pub fn estimate_sup_gap<S: Scalar>(
    problem: &dyn SaddleProblem<S>,
    candidate: &[S],
    n_samples: usize,
) -> (S, Vec<S>) {
    sup_gap_impl(problem, candidate, n_samples, true)
}

/// Shared gap estimation; `exact = false` skips the problem's ball oracle
/// and always uses the cheap sampled bound (a lower bound on the exact one,
/// used to screen before paying for the oracle).
fn sup_gap_impl<S: Scalar>(
    problem: &dyn SaddleProblem<S>,
    candidate: &[S],
    n_samples: usize,
    exact: bool,
) -> (S, Vec<S>) {
    let ball = problem.ball();
    for r in problem.null_residuals(candidate) {
        if r.abs() > c::<S>(NULL_FORM_TOL) {
            return (S::infinity(), vec![S::zero(); ball.dim()]);
        }
    }
    let base = problem.value(candidate, &vec![S::zero(); ball.dim()]);
    if !base.is_finite() {
        return (S::infinity(), vec![S::zero(); ball.dim()]);
    }
    if ball.limit <= S::zero() {
        // Degenerate ball: only the null directions and 0 remain.
        return (base, vec![S::zero(); ball.dim()]);
    }
    let g = problem.grad_dual(candidate);
    let oracle = if exact { problem.max_linear_over_ball(&g) } else { None };
    let (coeffs, sup_lin) = match oracle {
        Some((cstar, v)) => (cstar, v.max(S::zero())),
        None => sampled_sup_linear(ball, &g, n_samples, 0x5eed),
    };
    (base + sup_lin, coeffs)
}

/// Monotone projected dual ascent with exact inner minimization.
pub fn solve_saddle<S: Scalar>(
    problem: &dyn SaddleProblem<S>,
    init: &[S],
    cfg: &SolverConfig<S>,
) -> Result<SaddleResult<S>, SolverError> {
    let ball = problem.ball();
    let dim = ball.dim();
    let zero_c = vec![S::zero(); dim];
    if !problem.value(init, &zero_c).is_finite() {
        return Err(SolverError::InfiniteAtInit);
    }
    let inner_tol = cfg.tol * c::<S>(1e-3);
    let inner_iter = 10_000;
    let mut coeffs = zero_c.clone();
    let mut u = problem.min_over_primal(&coeffs, init, inner_tol, inner_iter);
    let mut dual_val = problem.value(&u, &coeffs);
    let mut best_gap = S::infinity();
    let mut best: Option<SaddleResult<S>> = None;
    let mut step = S::one() / (S::one() + ball.limit);
    for it in 0..cfg.max_iter {
        // Cheap sampled lower bound first; the exact (possibly expensive)
        // ball oracle runs only when certification at tol looks plausible.
        let (cheap_gap, cheap_cert) = sup_gap_impl(problem, &u, cfg.n_samples, false);
        let (gap, cert, sound) = if cheap_gap <= cfg.tol {
            let (g, ce) = sup_gap_impl(problem, &u, cfg.n_samples, true);
            (g, ce, true)
        } else {
            (cheap_gap, cheap_cert, false)
        };
        if gap < best_gap {
            best_gap = gap;
            best = Some(SaddleResult {
                primal: u.clone(),
                gap_estimate: gap,
                iterations: it,
                converged: sound && gap <= cfg.tol,
                certifying_dual: cert.clone(),
            });
        }
        if best.as_ref().map(|b| b.converged).unwrap_or(false) {
            break;
        }
        // Ascent step on the dual with radial projection and backtracking on
        // the dual value d(c) = min_u F(u|c); fall back to a line search
        // toward the certifying vertex when the gradient step stalls.
        let g = problem.grad_dual(&u);
        let mut advanced = false;
        let mut s = step;
        for _ in 0..40 {
            let mut trial: Vec<S> = coeffs
                .iter()
                .zip(&g)
                .zip(&ball.null_mask)
                .map(|((&ck, &gk), &null)| if null { ck } else { ck + s * gk })
                .collect();
            trial = project_dual(&trial, ball);
            let ut = problem.min_over_primal(&trial, &u, inner_tol, inner_iter);
            let dv = problem.value(&ut, &trial);
            if dv > dual_val + c::<S>(1e-16) {
                coeffs = trial;
                u = ut;
                dual_val = dv;
                step = s * c::<S>(1.3);
                advanced = true;
                break;
            }
            s = s * c::<S>(0.5);
        }
        if !advanced {
            // Frank-Wolfe style step toward the certifying direction.
            let mut improved = false;
            let mut theta = S::one();
            for _ in 0..40 {
                let trial: Vec<S> = coeffs
                    .iter()
                    .zip(&cert)
                    .map(|(&ck, &vk)| ck + theta * (vk - ck))
                    .collect();
                let trial = project_dual(&trial, ball);
                let ut = problem.min_over_primal(&trial, &u, inner_tol, inner_iter);
                let dv = problem.value(&ut, &trial);
                if dv > dual_val + c::<S>(1e-16) {
                    coeffs = trial;
                    u = ut;
                    dual_val = dv;
                    improved = true;
                    break;
                }
                theta = theta * c::<S>(0.5);
            }
            if !improved {
                // Stationary: the certificate is as good as it gets.
                break;
            }
        }
    }
    let result = best.expect("at least one iterate evaluated");
    if result.converged {
        Ok(result)
    } else {
        Err(SolverError::MaxIterExceeded {
            best_gap: result.gap_estimate.to_f64().unwrap_or(f64::NAN),
            tol: cfg.tol.to_f64().unwrap_or(f64::NAN),
            iterations: result.iterations,
        })
    }
}
