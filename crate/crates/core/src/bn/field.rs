//! Analytic solenoidal test fields and the binormal regularity weight.
//!
//! Fields are divergence-free by construction: trigonometric members are
//! curls of analytic vector potentials, the constant-curl members are the
//! rigid fields (1/2) c x x (whose operator pairing vanishes identically --
//! the null directions of the dual ball), and the linear-curl members carry
//! a constant, symmetric, trace-free curl gradient for closed-form oracles.
//! Each variant ships exact evaluation handles for phi, grad phi, curl phi,
//! grad(curl phi), and the directional third derivative needed by analytic
//! step gradients.
//!
//! Sup-norms over R^3 are replaced by maxima over a declared sampling box
//! (support box inflated by 1.25): a coarse full-box sweep followed by local
//! grid refinement around the argmax until the value moves less than 1e-6.

use crate::bn::measure::{v3_cross, v3_dot, v3_norm, v3_scale, Vec3};
use crate::linalg::sym3_spectral_norm;
use crate::scalar::{c, Scalar};

pub type Mat3<S> = [[S; 3]; 3];

pub fn m3_zero<S: Scalar>() -> Mat3<S> {
    [[S::zero(); 3]; 3]
}

pub fn m3_sym<S: Scalar>(m: &Mat3<S>) -> Mat3<S> {
    let half = c::<S>(0.5);
    let mut out = m3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = half * (m[i][j] + m[j][i]);
        }
    }
    out
}

pub fn m3_apply<S: Scalar>(m: &Mat3<S>, v: Vec3<S>) -> Vec3<S> {
    let mut out = [S::zero(); 3];
    for i in 0..3 {
        out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2];
    }
    out
}

pub fn m3_quad<S: Scalar>(m: &Mat3<S>, v: Vec3<S>) -> S {
    v3_dot(m3_apply(m, v), v)
}

/// One analytic solenoidal field.
#[derive(Clone, Debug)]
pub enum SolenoidalField<S> {
    /// phi = curl(a cos(k.x + delta)) = -sin(k.x + delta) (k x a).
    Trig { amp: Vec3<S>, wave: Vec3<S>, phase: S },
    /// phi = (1/2) c x x; curl phi = c, grad curl phi = 0 (null direction).
    ConstantCurl { curl: Vec3<S> },
    /// phi = ((M x) x x) / 3 with M symmetric trace-free; curl phi = M x.
    LinearCurl { m: Mat3<S> },
}

impl<S: Scalar> SolenoidalField<S> {
    pub fn linear_curl(m: Mat3<S>) -> Self {
        // Divergence-freeness of phi needs M symmetric; curl consistency
        // needs it trace-free.
        let tol = c::<S>(1e-12);
        assert!((m[0][0] + m[1][1] + m[2][2]).abs() <= tol, "M must be trace-free");
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - m[j][i]).abs() <= tol, "M must be symmetric");
            }
        }
        SolenoidalField::LinearCurl { m }
    }

    pub fn phi_at(&self, x: Vec3<S>) -> Vec3<S> {
        match self {
            SolenoidalField::Trig { amp, wave, phase } => {
                let p = v3_dot(*wave, x) + *phase;
                v3_scale(-p.sin(), v3_cross(*wave, *amp))
            }
            SolenoidalField::ConstantCurl { curl } => v3_scale(c::<S>(0.5), v3_cross(*curl, x)),
            SolenoidalField::LinearCurl { m } => {
                v3_scale(c::<S>(1.0 / 3.0), v3_cross(m3_apply(m, x), x))
            }
        }
    }

    /// Jacobian (grad phi)_ij = d_j phi_i.
    pub fn grad_phi_at(&self, x: Vec3<S>) -> Mat3<S> {
        match self {
            SolenoidalField::Trig { amp, wave, phase } => {
                let p = v3_dot(*wave, x) + *phase;
                let b = v3_cross(*wave, *amp);
                let mut out = m3_zero();
                for i in 0..3 {
                    for j in 0..3 {
                        out[i][j] = -p.cos() * b[i] * wave[j];
                    }
                }
                out
            }
            SolenoidalField::ConstantCurl { curl } => {
                // phi_i = (1/2) eps_ipq c_p x_q => d_j phi_i = (1/2) eps_ipj c_p.
                let half = c::<S>(0.5);
                let cv = *curl;
                [
                    [S::zero(), -half * cv[2], half * cv[1]],
                    [half * cv[2], S::zero(), -half * cv[0]],
                    [-half * cv[1], half * cv[0], S::zero()],
                ]
            }
            SolenoidalField::LinearCurl { m } => {
                // phi_i = (1/3) eps_ipq (Mx)_p x_q:
                // d_j phi_i = (1/3) eps_ipq (M_pj x_q + (Mx)_p delta_qj).
                let mx = m3_apply(m, x);
                let third = c::<S>(1.0 / 3.0);
                let mut out = m3_zero();
                let eps = |i: usize, p: usize, q: usize| -> S {
                    match (i, p, q) {
                        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => S::one(),
                        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -S::one(),
                        _ => S::zero(),
                    }
                };
                for i in 0..3 {
                    for j in 0..3 {
                        let mut v = S::zero();
                        for p in 0..3 {
                            for q in 0..3 {
                                let e = eps(i, p, q);
                                if e != S::zero() {
                                    v = v + e * m[p][j] * x[q];
                                    if q == j {
                                        v = v + e * mx[p];
                                    }
                                }
                            }
                        }
                        out[i][j] = third * v;
                    }
                }
                out
            }
        }
    }

    pub fn curl_at(&self, x: Vec3<S>) -> Vec3<S> {
        match self {
            SolenoidalField::Trig { amp, wave, phase } => {
                let p = v3_dot(*wave, x) + *phase;
                v3_scale(-p.cos(), v3_cross(*wave, v3_cross(*wave, *amp)))
            }
            SolenoidalField::ConstantCurl { curl } => *curl,
            SolenoidalField::LinearCurl { m } => m3_apply(m, x),
        }
    }

    /// G(x) = grad(curl phi), with G_ij = d_j (curl phi)_i.
    pub fn grad_curl_at(&self, x: Vec3<S>) -> Mat3<S> {
        match self {
            SolenoidalField::Trig { amp, wave, phase } => {
                let p = v3_dot(*wave, x) + *phase;
                let w = v3_cross(*wave, v3_cross(*wave, *amp));
                let mut out = m3_zero();
                for i in 0..3 {
                    for j in 0..3 {
                        out[i][j] = p.sin() * w[i] * wave[j];
                    }
                }
                out
            }
            SolenoidalField::ConstantCurl { .. } => m3_zero(),
            SolenoidalField::LinearCurl { m } => *m,
        }
    }

    /// Gradient of x |-> G(x) : (e tensor e): the vector with components
    /// d_l [ G_ij e_i e_j ]. Zero except for trigonometric members.
    pub fn grad_curl_dir2(&self, x: Vec3<S>, e: Vec3<S>) -> Vec3<S> {
        match self {
            SolenoidalField::Trig { amp, wave, phase } => {
                let p = v3_dot(*wave, x) + *phase;
                let w = v3_cross(*wave, v3_cross(*wave, *amp));
                let scalar = v3_dot(w, e) * v3_dot(*wave, e);
                v3_scale(p.cos() * scalar, *wave)
            }
            _ => [S::zero(); 3],
        }
    }

    /// Certified sup bound on |phi| over the given box (closed form for the
    /// trigonometric members, corner evaluation for the polynomial ones).
    pub fn sup_norm_bound(&self, box_lo: Vec3<S>, box_hi: Vec3<S>) -> S {
        let corner_radius = || {
            let mut best = S::zero();
            for mask in 0..8u8 {
                let corner = [
                    if mask & 1 != 0 { box_hi[0] } else { box_lo[0] },
                    if mask & 2 != 0 { box_hi[1] } else { box_lo[1] },
                    if mask & 4 != 0 { box_hi[2] } else { box_lo[2] },
                ];
                best = best.max(v3_norm(corner));
            }
            best
        };
        match self {
            SolenoidalField::Trig { amp, wave, .. } => v3_norm(v3_cross(*wave, *amp)),
            SolenoidalField::ConstantCurl { curl } => {
                // |phi| = |c x x| / 2 <= |c| |x| / 2, maximal on the corner
                // of largest radius.
                c::<S>(0.5) * v3_norm(*curl) * corner_radius()
            }
            SolenoidalField::LinearCurl { m } => {
                // |phi| = |(Mx) x x| / 3 <= ||M|| |x|^2 / 3.
                let r = corner_radius();
                c::<S>(1.0 / 3.0) * sym3_spectral_norm(m) * r * r
            }
        }
    }
}

/// Default sampling box for sup-norms: the unit-scale support box inflated
/// by the margin 1.25.
pub fn default_box<S: Scalar>() -> (Vec3<S>, Vec3<S>) {
    let r = c::<S>(2.0 * 1.25);
    ([-r, -r, -r], [r, r, r])
}

/// 3 * sup over the sampling box of the spectral norm of (grad curl phi)_sym
/// for a coefficient combination of fields: coarse 64^3 sweep plus local
/// refinement around the argmax until the improvement drops below 1e-6.
pub fn bn_k_combined<S: Scalar>(fields: &[(S, &SolenoidalField<S>)], box_lo: Vec3<S>, box_hi: Vec3<S>) -> S {
    let eval = |x: Vec3<S>| -> S {
        let mut g = m3_zero();
        for (coeff, f) in fields {
            if *coeff == S::zero() {
                continue;
            }
            let gf = f.grad_curl_at(x);
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] = g[i][j] + *coeff * gf[i][j];
                }
            }
        }
        sym3_spectral_norm(&m3_sym(&g))
    };
    let sweep = |lo: Vec3<S>, hi: Vec3<S>, n: usize| -> (S, Vec3<S>) {
        let mut best = S::neg_infinity();
        let mut arg = lo;
        for a in 0..n {
            for b in 0..n {
                for d in 0..n {
                    let frac = |i: usize| c::<S>(i as f64 / (n - 1) as f64);
                    let x = [
                        lo[0] + (hi[0] - lo[0]) * frac(a),
                        lo[1] + (hi[1] - lo[1]) * frac(b),
                        lo[2] + (hi[2] - lo[2]) * frac(d),
                    ];
                    let v = eval(x);
                    if v > best {
                        best = v;
                        arg = x;
                    }
                }
            }
        }
        (best, arg)
    };
    let coarse_n = 64;
    let (mut best, mut arg) = sweep(box_lo, box_hi, coarse_n);
    let mut half = [
        (box_hi[0] - box_lo[0]) / c::<S>((coarse_n - 1) as f64),
        (box_hi[1] - box_lo[1]) / c::<S>((coarse_n - 1) as f64),
        (box_hi[2] - box_lo[2]) / c::<S>((coarse_n - 1) as f64),
    ];
    for _ in 0..60 {
        let lo = [arg[0] - half[0], arg[1] - half[1], arg[2] - half[2]];
        let hi = [arg[0] + half[0], arg[1] + half[1], arg[2] + half[2]];
        let (b, a) = sweep(lo, hi, 9);
        let gain = b - best;
        if b > best {
            best = b;
            arg = a;
        }
        for h in half.iter_mut() {
            *h = *h * c::<S>(0.25);
        }
        if gain < c::<S>(1e-6) {
            break;
        }
    }
    c::<S>(3.0) * best
}

/// Regularity weight K(phi) = K-tilde(phi) of a single field over the
/// default sampling box.
pub fn bn_k<S: Scalar>(field: &SolenoidalField<S>) -> S {
    let (lo, hi) = default_box();
    bn_k_combined(&[(S::one(), field)], lo, hi)
}
