//! Dense complex linear algebra for the small (n <= 3) matrices this crate
//! works with: characteristic-polynomial eigenvalues with Newton polishing,
//! eigenvectors by full-pivot elimination, and Hermitian eigenvalue bounds.
//!
//! Identified responses are 2x2 or 3x3, so closed-form root finding plus a
//! polish step reaches near machine precision without a general QR solver.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("only matrices of dimension 1..=3 are supported, got {0}")]
    UnsupportedSize(usize),
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix is singular")]
    Singular,
    #[error("defective matrix: eigenvector basis condition {cond:.3e} exceeds {limit:.1e}")]
    Defective { cond: f64, limit: f64 },
}

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Roots of z^2 + b z + c with complex coefficients, numerically stable form.
pub fn quadratic_roots(b: Complex64, c: Complex64) -> [Complex64; 2] {
    let disc = (b * b - 4.0 * c).sqrt();
    // pick the sign that avoids cancellation in -b -+ disc
    let s = if (b + disc).norm() >= (b - disc).norm() {
        b + disc
    } else {
        b - disc
    };
    if s.norm() == 0.0 {
        return [ZERO, ZERO];
    }
    let r1 = -s / 2.0;
    let r2 = c / r1;
    [r1, r2]
}

/// Roots of z^3 + c2 z^2 + c1 z + c0 (complex Cardano plus Newton polish).
pub fn cubic_roots(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
    let third = 1.0 / 3.0;
    let shift = c2 * third;
    // depressed cubic t^3 + p t + q
    let p = c1 - c2 * c2 * third;
    let q = c0 - c1 * c2 * third + 2.0 * c2 * c2 * c2 * third * third * third;
    let mut roots = if p.norm() == 0.0 && q.norm() == 0.0 {
        [ZERO, ZERO, ZERO]
    } else {
        let disc = (q * q * 0.25 + p * p * p / 27.0).sqrt();
        let mut u3 = -q * 0.5 + disc;
        if u3.norm() < 1e-300 {
            u3 = -q * 0.5 - disc;
        }
        let u = u3.powf(third);
        let v = if u.norm() == 0.0 { ZERO } else { -p / (3.0 * u) };
        let w = Complex64::new(-0.5, 0.866_025_403_784_438_6);
        [
            u + v,
            w * u + w.conj() * v,
            w.conj() * u + w * v,
        ]
    };
    for r in roots.iter_mut() {
        let mut z = *r;
        for _ in 0..8 {
            let f = z * z * z + p * z + q;
            let df = 3.0 * z * z + p;
            if df.norm() == 0.0 {
                break;
            }
            let step = f / df;
            z -= step;
            if step.norm() <= 1e-16 * (1.0 + z.norm()) {
                break;
            }
        }
        *r = z - shift;
    }
    roots
}

/// Eigenvalues of a 1x1..3x3 complex matrix via its characteristic polynomial.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare);
    }
    let vals = match m.nrows() {
        1 => vec![m[(0, 0)]],
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            quadratic_roots(-tr, det).to_vec()
        }
        3 => {
            let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
            let minor = |i: usize, j: usize, k: usize, l: usize| {
                m[(i, i)] * m[(j, j)] - m[(k, l)] * m[(l, k)]
            };
            let m2 = minor(0, 1, 0, 1) + minor(0, 2, 0, 2) + minor(1, 2, 1, 2);
            let det = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
            let mut roots = cubic_roots(-tr, m2, -det).to_vec();
            polish_eigenvalues(m, &mut roots);
            roots
        }
        n => return Err(LinalgError::UnsupportedSize(n)),
    };
    Ok(vals)
}

/// Newton-polish roots of det(A - z I) using the characteristic polynomial
/// evaluated through the matrix coefficients.
fn polish_eigenvalues(m: &CMatrix, roots: &mut [Complex64]) {
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let m2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let det = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
    for z in roots.iter_mut() {
        for _ in 0..4 {
            let f = ((*z - tr) * *z + m2) * *z - det;
            let df = (3.0 * *z - 2.0 * tr) * *z + m2;
            if df.norm() == 0.0 {
                break;
            }
            let step = f / df;
            *z -= step;
            if step.norm() <= 1e-16 * (1.0 + z.norm()) {
                break;
            }
        }
    }
}

/// Right-eigenvector decomposition A = V diag(values) V^{-1}.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    /// Right eigenvectors as columns, unit norm.
    pub right: CMatrix,
    /// Left eigenvector matrix, the inverse of `right`.
    pub left: CMatrix,
    /// Condition estimate of the eigenvector basis.
    pub basis_cond: f64,
}

/// Full eigendecomposition; fails when the eigenvector basis is numerically
/// defective (condition above `cond_limit`, default 1e10 via [`eigen`]).
pub fn eigen_with_limit(m: &CMatrix, cond_limit: f64) -> Result<Eigen, LinalgError> {
    let values = eigenvalues(m)?;
    let n = m.nrows();
    let mut right = CMatrix::zeros(n, n);
    if n == 1 {
        right[(0, 0)] = ONE;
    } else {
        for (j, &lambda) in values.iter().enumerate() {
            let v = null_vector(m, lambda);
            for i in 0..n {
                right[(i, j)] = v[i];
            }
        }
    }
    let left = right
        .clone()
        .try_inverse()
        .ok_or(LinalgError::Defective {
            cond: f64::INFINITY,
            limit: cond_limit,
        })?;
    let basis_cond = frobenius(&right) * frobenius(&left);
    if basis_cond > cond_limit {
        return Err(LinalgError::Defective {
            cond: basis_cond,
            limit: cond_limit,
        });
    }
    Ok(Eigen {
        values,
        right,
        left,
        basis_cond,
    })
}

pub fn eigen(m: &CMatrix) -> Result<Eigen, LinalgError> {
    eigen_with_limit(m, 1e10)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Unit-norm null vector of (A - lambda I) by full-pivot Gaussian elimination.
fn null_vector(m: &CMatrix, lambda: Complex64) -> Vec<Complex64> {
    let n = m.nrows();
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] -= lambda;
    }
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut rank = 0usize;
    for step in 0..n {
        // full pivot over the remaining block
        let (mut pr, mut pc, mut best) = (step, step, 0.0);
        for r in step..n {
            for c in step..n {
                let mag = a[(r, c)].norm();
                if mag > best {
                    best = mag;
                    pr = r;
                    pc = c;
                }
            }
        }
        if best <= 1e-13 * (1.0 + frobenius(m)) {
            break;
        }
        a.swap_rows(step, pr);
        a.swap_columns(step, pc);
        col_perm.swap(step, pc);
        for r in step + 1..n {
            let factor = a[(r, step)] / a[(step, step)];
            for c in step..n {
                let sub = factor * a[(step, c)];
                a[(r, c)] -= sub;
            }
        }
        rank += 1;
    }
    // free variable = 1 for the first non-pivot column, back substitute
    let free = rank.min(n - 1);
    let mut x = vec![ZERO; n];
    x[free] = ONE;
    for r in (0..free).rev() {
        let mut sum = ZERO;
        for c in r + 1..n {
            sum += a[(r, c)] * x[c];
        }
        x[r] = -sum / a[(r, r)];
    }
    let mut out = vec![ZERO; n];
    for (packed, &orig) in col_perm.iter().enumerate() {
        out[orig] = x[packed];
    }
    let norm: f64 = out.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in out.iter_mut() {
            *v /= norm;
        }
    }
    out
}

/// Real eigenvalues of a Hermitian matrix (n <= 3) via the real-coefficient
/// characteristic polynomial, ascending order.
pub fn hermitian_eigenvalues(h: &CMatrix) -> Result<Vec<f64>, LinalgError> {
    if h.nrows() != h.ncols() {
        return Err(LinalgError::NotSquare);
    }
    let mut vals: Vec<f64> = match h.nrows() {
        1 => vec![h[(0, 0)].re],
        2 => {
            let a = h[(0, 0)].re;
            let c = h[(1, 1)].re;
            let b2 = h[(0, 1)].norm_sqr();
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b2).sqrt();
            vec![mid - rad, mid + rad]
        }
        3 => {
            let tr = (h[(0, 0)] + h[(1, 1)] + h[(2, 2)]).re;
            let m2 = (h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)]
                + h[(0, 0)] * h[(2, 2)]
                - h[(0, 2)] * h[(2, 0)]
                + h[(1, 1)] * h[(2, 2)]
                - h[(1, 2)] * h[(2, 1)])
                .re;
            let det = (h[(0, 0)] * (h[(1, 1)] * h[(2, 2)] - h[(1, 2)] * h[(2, 1)])
                - h[(0, 1)] * (h[(1, 0)] * h[(2, 2)] - h[(1, 2)] * h[(2, 0)])
                + h[(0, 2)] * (h[(1, 0)] * h[(2, 1)] - h[(1, 1)] * h[(2, 0)]))
                .re;
            real_cubic_roots(-tr, m2, -det).to_vec()
        }
        n => return Err(LinalgError::UnsupportedSize(n)),
    };
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

/// All-real roots of x^3 + a x^2 + b x + c when the cubic has three real
/// roots (always true for Hermitian characteristic polynomials).
fn real_cubic_roots(a: f64, b: f64, c: f64) -> [f64; 3] {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = a / 3.0;
    if p.abs() < 1e-300 {
        let r = -q.cbrt() - shift;
        return [r, r, r];
    }
    let m = 2.0 * (-p / 3.0).max(0.0).sqrt();
    let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
    let phi = arg.acos() / 3.0;
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift;
    }
    out
}

/// Matrix inverse through nalgebra LU; dedicated error on singularity.
pub fn inverse(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    m.clone().try_inverse().ok_or(LinalgError::Singular)
}

/// 2-norm condition estimate via Frobenius norms of M and its inverse.
pub fn condition_estimate(m: &CMatrix) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) => frobenius(m) * frobenius(&inv),
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sort_key(z: &Complex64) -> (i64, i64) {
        ((z.re * 1e9) as i64, (z.im * 1e9) as i64)
    }

    #[test]
    fn quadratic_and_cubic_known_roots() {
        let mut r = quadratic_roots(c(-3.0, 0.0), c(2.0, 0.0)).to_vec();
        r.sort_by_key(sort_key);
        assert!((r[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((r[1] - c(2.0, 0.0)).norm() < 1e-14);

        // (z-1)(z-2)(z-3) = z^3 - 6z^2 + 11z - 6
        let mut r3 = cubic_roots(c(-6.0, 0.0), c(11.0, 0.0), c(-6.0, 0.0)).to_vec();
        r3.sort_by_key(sort_key);
        for (got, want) in r3.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - c(want, 0.0)).norm() < 1e-12);
        }
    }

    fn random_matrix(seed: &[f64], n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |i, j| c(seed[2 * (i * n + j)], seed[2 * (i * n + j) + 1]))
    }

    proptest! {
        #[test]
        fn eigen_reconstructs_matrix(seed in proptest::collection::vec(-3.0f64..3.0, 18)) {
            let m = random_matrix(&seed, 3);
            if let Ok(e) = eigen(&m) {
                let lambda = CMatrix::from_fn(3, 3, |i, j| if i == j { e.values[i] } else { ZERO });
                let rebuilt = &e.right * lambda * &e.left;
                let err = frobenius(&(&rebuilt - &m)) / (1.0 + frobenius(&m));
                prop_assert!(err < 1e-10, "reconstruction error {err}");
            }
        }

        #[test]
        fn eigenvalues_match_constructed_spectrum(
            re in proptest::collection::vec(-2.0f64..2.0, 3),
            im in proptest::collection::vec(-2.0f64..2.0, 3),
            basis in proptest::collection::vec(-1.0f64..1.0, 18),
        ) {
            // build A = V diag(lambda) V^-1 from a random basis, check recovery
            let v = random_matrix(&basis, 3) + CMatrix::identity(3, 3) * c(3.0, 0.0);
            prop_assume!(v.clone().try_inverse().is_some());
            let vinv = v.clone().try_inverse().unwrap();
            let lam: Vec<Complex64> = (0..3).map(|i| c(re[i], im[i])).collect();
            prop_assume!((lam[0]-lam[1]).norm() > 0.05 && (lam[1]-lam[2]).norm() > 0.05 && (lam[0]-lam[2]).norm() > 0.05);
            let d = CMatrix::from_fn(3, 3, |i, j| if i == j { lam[i] } else { ZERO });
            let a = &v * d * &vinv;
            let mut got = eigenvalues(&a).unwrap();
            let mut want = lam.clone();
            got.sort_by_key(sort_key);
            want.sort_by_key(sort_key);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).norm() < 1e-7 * (1.0 + w.norm()), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn hermitian_eigenvalues_2x2_and_3x3() {
        let h2 = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let v = hermitian_eigenvalues(&h2).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 3.0).abs() < 1e-12);

        let h3 = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0), c(0.5, 0.2), c(0.0, 0.0),
                c(0.5, -0.2), c(2.0, 0.0), c(0.1, -0.3),
                c(0.0, 0.0), c(0.1, 0.3), c(3.0, 0.0),
            ],
        );
        let vals = hermitian_eigenvalues(&h3).unwrap();
        // trace and determinant invariants
        let tr: f64 = vals.iter().sum();
        assert!((tr - 6.0).abs() < 1e-10);
        let det_direct = h3.clone().determinant().re;
        let det_eig: f64 = vals.iter().product();
        assert!((det_direct - det_eig).abs() < 1e-9);
    }

    #[test]
    fn defective_matrix_flagged() {
        // Jordan block: eigenvector basis is singular
        let j = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), ONE, ZERO, c(1.0, 0.0)]);
        assert!(matches!(eigen(&j), Err(LinalgError::Defective { .. })));
    }
}
