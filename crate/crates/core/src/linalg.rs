//! Dense complex linear algebra shared by the estimators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Pivot threshold (relative to the largest pivot) below which a Hermitian
/// system is treated as singular.
const SINGULAR_RTOL: f64 = 1e-12;

#[inline]
pub fn cexpj(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Kronecker product of two column vectors, `a` major.
pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Solves `a x = b` for Hermitian positive semi-definite `a`.
///
/// Uses an LDLᴴ-style Cholesky factorization and rejects the system when
/// the smallest pivot falls below `SINGULAR_RTOL` of the largest one.
pub fn solve_hermitian(a: &CMat, b: &CMat, what: &str) -> Result<CMat> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "{what}: system {}x{} with right-hand side {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Singular(format!("{what}: matrix is zero")));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what}: matrix is not positive definite")))?;
    let l = chol.l_dirty();
    let min_pivot = (0..n).map(|i| l[(i, i)].norm_sqr()).fold(f64::INFINITY, f64::min);
    if min_pivot < SINGULAR_RTOL * scale {
        return Err(Error::Singular(format!(
            "{what}: smallest pivot {min_pivot:.3e} vs scale {scale:.3e}"
        )));
    }
    Ok(chol.solve(b))
}

/// Moore-Penrose pseudo-inverse through the SVD, discarding singular
/// values below `rtol * s_max`.
pub fn pinv(m: &CMat, rtol: f64) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let mut out = CMat::zeros(m.ncols(), m.nrows());
    if s_max == 0.0 {
        return out;
    }
    for (k, &sk) in s.iter().enumerate() {
        if sk <= rtol * s_max {
            continue;
        }
        let inv = 1.0 / sk;
        for i in 0..m.ncols() {
            let vik = v_t[(k, i)].conj() * inv;
            for j in 0..m.nrows() {
                out[(i, j)] += vik * u[(j, k)].conj();
            }
        }
    }
    out
}

/// Orthonormal basis of the column space of `m` (singular values above
/// `rtol * s_max`).
pub fn range_basis(m: &CMat, rtol: f64) -> CMat {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd u");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&k| s_max > 0.0 && s[k] > rtol * s_max).collect();
    let mut basis = CMat::zeros(m.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(k));
    }
    basis
}

/// Right singular directions of `m` (rows of `m` live in their span),
/// strongest first, returned as `d` row vectors scaled by their singular
/// value.
pub fn dominant_row_modes(m: &CMat, d: usize) -> CMat {
    let svd = m.clone().svd(true, true);
    let v_t = svd.v_t.expect("svd v_t");
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut out = CMat::zeros(d, m.ncols());
    for (r, &k) in order.iter().take(d).enumerate() {
        for c in 0..m.ncols() {
            out[(r, c)] = v_t[(k, c)] * s[k];
        }
    }
    out
}

/// `|<a, b>| / (|a| |b|)` for complex vectors given as row slices.
pub fn cosine_similarity<'a, I, J>(a: I, b: J) -> f64
where
    I: IntoIterator<Item = &'a Complex64>,
    J: IntoIterator<Item = &'a Complex64>,
{
    let (mut dot, mut na, mut nb) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
    for (x, y) in a.into_iter().zip(b) {
        dot += x.conj() * y;
        na += x.norm_sqr();
        nb += y.norm_sqr();
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot.norm() / (na.sqrt() * nb.sqrt())
}

/// Mean over rows of the per-row cosine similarity.
pub fn mean_row_cosine(estimate: &CMat, truth: &CMat) -> f64 {
    let rows = estimate.nrows().min(truth.nrows());
    if rows == 0 {
        return 0.0;
    }
    (0..rows)
        .map(|r| cosine_similarity(estimate.row(r).iter(), truth.row(r).iter()))
        .sum::<f64>()
        / rows as f64
}

/// `‖estimate − truth‖²_F / ‖truth‖²_F`.
pub fn relative_mse(estimate: &CMat, truth: &CMat) -> f64 {
    let denom = frobenius_sq(truth);
    if denom == 0.0 {
        return if frobenius_sq(estimate) == 0.0 { 0.0 } else { f64::INFINITY };
    }
    frobenius_sq(&(estimate - truth)) / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kron_orders_outer_index_first() {
        let a = CVec::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)]);
        let b = CVec::from_vec(vec![c(0.0, 1.0), c(3.0, 0.0)]);
        let k = kron_vec(&a, &b);
        assert_eq!(k.as_slice(), &[c(0.0, 1.0), c(3.0, 0.0), c(0.0, 2.0), c(6.0, 0.0)]);
    }

    #[test]
    fn hermitian_solve_rejects_rank_deficient() {
        let v = CMat::from_column_slice(3, 1, &[c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)]);
        let r = &v * v.adjoint();
        let err = solve_hermitian(&r, &identity(3), "test").unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 1.0), c(0.0, -1.0), c(1.0, 0.0), c(3.0, 0.5)]);
        let p = pinv(&m, 1e-12);
        let prod = &m * &p;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(i, j)].re, want, epsilon = 1e-12);
                assert_relative_eq!(prod[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cosine_ignores_global_phase() {
        let a = [c(1.0, 2.0), c(-0.5, 0.3)];
        let rot = cexpj(0.7);
        let b: Vec<_> = a.iter().map(|z| z * rot * 3.0).collect();
        assert_relative_eq!(cosine_similarity(a.iter(), b.iter()), 1.0, epsilon = 1e-12);
    }
}
