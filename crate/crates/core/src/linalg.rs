//! Small dense linear-algebra helpers sized for desk-scale grids (n <= 512):
//! row-major matrices with LU solves, a Thomas solver for tridiagonal
//! systems, shift-invert power iteration, closed-form symmetric 3x3
//! eigenvalues, and golden-section minimization.

use crate::scalar::{c, Scalar};

/// Dense row-major matrix.
#[derive(Clone, Debug)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        let mut y = vec![S::zero(); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = S::zero();
            for (a, b) in row.iter().zip(x) {
                acc = acc + *a * *b;
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x.
    pub fn matvec_t(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.rows, "matvec_t dimension mismatch");
        let mut y = vec![S::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (j, a) in row.iter().enumerate() {
                y[j] = y[j] + *a * xi;
            }
        }
        y
    }

    pub fn matmul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<S> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Mat<S>, s: S) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + s * *b;
        }
    }

    /// Solve A x = b by partial-pivot LU. Returns `None` for (numerically)
    /// singular systems.
    pub fn solve(&self, b: &[S]) -> Option<Vec<S>> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        let n = self.rows;
        assert_eq!(b.len(), n);
        let mut a = self.data.clone();
        let mut x: Vec<S> = b.to_vec();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            // Pivot search in column k.
            let mut p = k;
            let mut best = a[piv[k] * n + k].abs();
            for i in (k + 1)..n {
                let v = a[piv[i] * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > S::zero()) || !best.is_finite() {
                return None;
            }
            piv.swap(k, p);
            let akk = a[piv[k] * n + k];
            for i in (k + 1)..n {
                let f = a[piv[i] * n + k] / akk;
                a[piv[i] * n + k] = f;
                if f != S::zero() {
                    for j in (k + 1)..n {
                        let t = a[piv[k] * n + j];
                        a[piv[i] * n + j] = a[piv[i] * n + j] - f * t;
                    }
                    x[piv[i]] = x[piv[i]] - f * x[piv[k]];
                }
            }
        }
        // Back substitution.
        let mut out = vec![S::zero(); n];
        for k in (0..n).rev() {
            let mut acc = x[piv[k]];
            for j in (k + 1)..n {
                acc = acc - a[piv[k] * n + j] * out[j];
            }
            let d = a[piv[k] * n + k];
            out[k] = acc / d;
            if !out[k].is_finite() {
                return None;
            }
        }
        Some(out)
    }
}

impl<S: Scalar> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S: Scalar> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Solve a tridiagonal system with the Thomas algorithm.
/// `lower`, `diag`, `upper` have lengths n-1, n, n-1.
pub fn solve_tridiagonal<S: Scalar>(lower: &[S], diag: &[S], upper: &[S], b: &[S]) -> Option<Vec<S>> {
    let n = diag.len();
    assert_eq!(lower.len(), n - 1);
    assert_eq!(upper.len(), n - 1);
    assert_eq!(b.len(), n);
    let mut cp = vec![S::zero(); n - 1];
    let mut dp = vec![S::zero(); n];
    let mut denom = diag[0];
    if denom == S::zero() {
        return None;
    }
    if n > 1 {
        cp[0] = upper[0] / denom;
    }
    dp[0] = b[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * cp[i - 1];
        if denom == S::zero() || !denom.is_finite() {
            return None;
        }
        if i < n - 1 {
            cp[i] = upper[i] / denom;
        }
        dp[i] = (b[i] - lower[i - 1] * dp[i - 1]) / denom;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        let t = x[i + 1];
        x[i] = x[i] - cp[i] * t;
    }
    Some(x)
}

/// Largest generalized Rayleigh quotient max_x (x^T B x)/(x^T A x) over the
/// subspace orthogonal (in the `w`-weighted inner product) to the constant
/// vector, for symmetric PSD `A` with kernel = constants and symmetric PSD
/// `B`. Used for the discrete Poincare constant. Shift-invert power
/// iteration: repeatedly solve (A + reg * w w^T) y = B x.
pub fn max_generalized_rayleigh<S: Scalar>(a: &Mat<S>, b: &Mat<S>, w: &[S], iters: usize) -> S {
    let n = a.rows;
    assert_eq!(b.rows, n);
    assert_eq!(w.len(), n);
    // Regularize the constant kernel so the solve is well-posed; the
    // w-orthogonal projection keeps iterates mean-free so the value is
    // unaffected by the regularization weight.
    let mut areg = a.clone();
    let trace_scale = (0..n).fold(S::zero(), |s, i| s + a[(i, i)]) / c::<S>(n as f64);
    for i in 0..n {
        for j in 0..n {
            areg[(i, j)] = areg[(i, j)] + trace_scale * w[i] * w[j];
        }
    }
    let wsum: S = w.iter().fold(S::zero(), |s, &v| s + v);
    let project = |x: &mut Vec<S>| {
        let mean = x.iter().zip(w).fold(S::zero(), |s, (&xi, &wi)| s + xi * wi) / wsum;
        for xi in x.iter_mut() {
            *xi = *xi - mean;
        }
    };
    let mut x: Vec<S> = (0..n).map(|i| c::<S>(((i * 2654435761 + 12345) % 1000) as f64 / 1000.0 - 0.5)).collect();
    project(&mut x);
    let mut lambda = S::zero();
    for _ in 0..iters {
        let bx = b.matvec(&x);
        let mut y = match areg.solve(&bx) {
            Some(y) => y,
            None => break,
        };
        project(&mut y);
        let norm = y.iter().fold(S::zero(), |s, &v| s + v * v).sqrt();
        if norm == S::zero() {
            break;
        }
        for v in y.iter_mut() {
            *v = *v / norm;
        }
        let ay = a.matvec(&y);
        let by = b.matvec(&y);
        let num = y.iter().zip(&by).fold(S::zero(), |s, (&u, &v)| s + u * v);
        let den = y.iter().zip(&ay).fold(S::zero(), |s, (&u, &v)| s + u * v);
        if den > S::zero() {
            lambda = num / den;
        }
        x = y;
    }
    lambda
}

/// Smallest eigenpair of a dense symmetric matrix by shifted power
/// iteration: the Gershgorin radius bounds the spectrum from above, and the
/// dominant eigenvector of (sigma I - H) is the minimal one of H.
pub fn sym_min_eig<S: Scalar>(h: &Mat<S>, iters: usize) -> (S, Vec<S>) {
    let n = h.rows;
    assert_eq!(h.cols, n);
    let mut sigma = S::zero();
    for i in 0..n {
        let row: S = (0..n).fold(S::zero(), |s, j| s + h[(i, j)].abs());
        sigma = sigma.max(row);
    }
    let mut x: Vec<S> = (0..n)
        .map(|i| c::<S>(((i * 2654435761 + 98765) % 1000) as f64 / 1000.0 - 0.5))
        .collect();
    let mut lambda = S::zero();
    for _ in 0..iters {
        let hx = h.matvec(&x);
        let mut y: Vec<S> = x.iter().zip(&hx).map(|(&xi, &v)| sigma * xi - v).collect();
        let norm = y.iter().fold(S::zero(), |s, &v| s + v * v).sqrt();
        if norm == S::zero() {
            break;
        }
        for v in y.iter_mut() {
            *v = *v / norm;
        }
        let hy = h.matvec(&y);
        lambda = y.iter().zip(&hy).fold(S::zero(), |s, (&u, &v)| s + u * v);
        x = y;
    }
    (lambda, x)
}

/// Eigenvalues of a symmetric 3x3 matrix in ascending order, via the
/// trigonometric closed form for the characteristic cubic.
pub fn sym3_eigenvalues<S: Scalar>(m: &[[S; 3]; 3]) -> [S; 3] {
    let one = S::one();
    let two = c::<S>(2.0);
    let three = c::<S>(3.0);
    let six = c::<S>(6.0);
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / three;
    if p1 == S::zero() {
        // Already diagonal.
        let mut ev = [m[0][0], m[1][1], m[2][2]];
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return ev;
    }
    let d0 = m[0][0] - q;
    let d1 = m[1][1] - q;
    let d2 = m[2][2] - q;
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + two * p1;
    let p = (p2 / six).sqrt();
    // B = (M - q I)/p ; r = det(B)/2 clamped into [-1, 1].
    let b = [
        [d0 / p, m[0][1] / p, m[0][2] / p],
        [m[0][1] / p, d1 / p, m[1][2] / p],
        [m[0][2] / p, m[1][2] / p, d2 / p],
    ];
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / two).max(-one).min(one);
    let phi = r.max(-one).min(one).acos() / three;
    let two_pi_3 = c::<S>(2.0 * std::f64::consts::PI / 3.0);
    let eig_hi = q + two * p * phi.cos();
    let eig_lo = q + two * p * (phi + two_pi_3).cos();
    // The middle eigenvalue from the trace.
    let eig_mid = three * q - eig_hi - eig_lo;
    let mut ev = [eig_lo, eig_mid, eig_hi];
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Spectral norm (largest |eigenvalue|) of a symmetric 3x3 matrix.
pub fn sym3_spectral_norm<S: Scalar>(m: &[[S; 3]; 3]) -> S {
    let ev = sym3_eigenvalues(m);
    ev[0].abs().max(ev[2].abs())
}

/// Eigenvector for a given eigenvalue of a symmetric 3x3 matrix, via the
/// largest cross product of rows of (M - lambda I).
pub fn sym3_eigenvector<S: Scalar>(m: &[[S; 3]; 3], lambda: S) -> [S; 3] {
    let a = [
        [m[0][0] - lambda, m[0][1], m[0][2]],
        [m[0][1], m[1][1] - lambda, m[1][2]],
        [m[0][2], m[1][2], m[2][2] - lambda],
    ];
    let cross = |u: &[S; 3], v: &[S; 3]| {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    let candidates = [cross(&a[0], &a[1]), cross(&a[0], &a[2]), cross(&a[1], &a[2])];
    let mut best = candidates[0];
    let mut best_norm = S::zero();
    for cnd in &candidates {
        let nrm = (cnd[0] * cnd[0] + cnd[1] * cnd[1] + cnd[2] * cnd[2]).sqrt();
        if nrm > best_norm {
            best_norm = nrm;
            best = *cnd;
        }
    }
    if best_norm == S::zero() {
        // Degenerate (multiple eigenvalue): any unit vector works.
        return [S::one(), S::zero(), S::zero()];
    }
    [best[0] / best_norm, best[1] / best_norm, best[2] / best_norm]
}

/// Golden-section minimization of a unimodal function on [lo, hi].
pub fn golden_section_min<S: Scalar, F: Fn(S) -> S>(f: F, mut lo: S, mut hi: S, tol: S) -> (S, S) {
    let inv_phi = c::<S>((5.0_f64.sqrt() - 1.0) / 2.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo).abs() > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let xm = (lo + hi) / c::<S>(2.0);
    (xm, f(xm))
}

/// Euclidean norm.
pub fn norm2<S: Scalar>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |s, &v| s + v * v).sqrt()
}

/// Dot product.
pub fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    x.iter().zip(y).fold(S::zero(), |s, (&a, &b)| s + a * b)
}

/// x + s * y elementwise.
pub fn axpy<S: Scalar>(x: &[S], s: S, y: &[S]) -> Vec<S> {
    x.iter().zip(y).map(|(&a, &b)| a + s * b).collect()
}
