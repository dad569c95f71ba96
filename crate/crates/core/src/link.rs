//! Multi-user ZF downlink: precoder, per-stream SINR, sum spectral
//! efficiency and UL estimation-error injection.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dominant_row_modes, pinv, solve_hermitian, CMat};

/// Per-stream SINR ceiling (60 dB).
pub const SINR_CAP: f64 = 1e6;

/// Relative cutoff of the pseudo-inverse fallback precoder.
const PINV_RTOL: f64 = 1e-9;

fn normalize_columns(v: &mut CMat) {
    for mut col in v.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= Complex64::from(n);
        }
    }
}

/// `V = Hᴴ (H Hᴴ)⁻¹` with unit-norm columns, for a stack of stream rows.
pub fn zf_precoder(h_stack: &CMat) -> Result<CMat> {
    if h_stack.nrows() == 0 || h_stack.nrows() > h_stack.ncols() {
        return Err(Error::invalid(format!(
            "{} streams cannot be zero-forced with {} antennas",
            h_stack.nrows(),
            h_stack.ncols()
        )));
    }
    let gram = h_stack * h_stack.adjoint();
    let mut v = h_stack.adjoint() * solve_hermitian(&gram, &CMat::identity(gram.nrows(), gram.nrows()), "ZF stack")?;
    normalize_columns(&mut v);
    Ok(v)
}

/// Pseudo-inverse precoder for stacks that may be rank deficient, for
/// example when two users quantise to the same codeword. Columns are
/// unit-norm; columns with no usable direction are zero.
pub fn zf_precoder_pinv(h_stack: &CMat) -> CMat {
    let mut v = pinv(h_stack, PINV_RTOL);
    normalize_columns(&mut v);
    v
}

/// [`zf_precoder`], falling back to [`zf_precoder_pinv`] on singular stacks.
pub fn zf_precoder_or_pinv(h_stack: &CMat) -> Result<CMat> {
    match zf_precoder(h_stack) {
        Err(Error::Singular(_)) => Ok(zf_precoder_pinv(h_stack)),
        other => other,
    }
}

/// Per-stream SINRs. `stream_rows[k]` holds the effective receive rows of
/// user `k`, one per stream, and the precoder columns are ordered user by
/// user in the same way. Every stream gets `stream_power`.
pub fn user_sinr(stream_rows: &[CMat], v: &CMat, stream_power: f64, noise_var: f64) -> Result<Vec<f64>> {
    let total: usize = stream_rows.iter().map(|r| r.nrows()).sum();
    if total != v.ncols() {
        return Err(Error::ShapeMismatch(format!("{total} streams but {} precoder columns", v.ncols())));
    }
    if !(noise_var >= 0.0) || !(stream_power >= 0.0) {
        return Err(Error::invalid("noise variance and stream power must be non-negative"));
    }
    let mut out = Vec::with_capacity(total);
    let mut col = 0;
    for rows in stream_rows {
        if rows.ncols() != v.nrows() {
            return Err(Error::ShapeMismatch(format!("channel {:?} vs precoder {:?}", rows.shape(), v.shape())));
        }
        let gains = rows * v;
        for r in 0..rows.nrows() {
            let desired = gains[(r, col)].norm_sqr() * stream_power;
            let interference: f64 =
                (0..v.ncols()).filter(|&j| j != col).map(|j| gains[(r, j)].norm_sqr()).sum::<f64>() * stream_power;
            let denom = interference + noise_var;
            let sinr = if desired == 0.0 {
                0.0
            } else if denom == 0.0 {
                SINR_CAP
            } else {
                (desired / denom).min(SINR_CAP)
            };
            out.push(sinr);
            col += 1;
        }
    }
    Ok(out)
}

/// `Σ log2(1 + SINR)`.
pub fn sum_spectral_efficiency(sinrs: &[f64]) -> Result<f64> {
    if sinrs.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("SINR values must be non-negative"));
    }
    Ok(sinrs.iter().map(|s| s.ln_1p() / std::f64::consts::LN_2).sum())
}

/// `H' = H + Y`, `Y` i.i.d. `CN(0, σ²)`.
pub fn inject_ul_error<R: Rng + ?Sized>(h_ul: &CMat, sigma2: f64, rng: &mut R) -> Result<CMat> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid(format!("error variance {sigma2} must be finite and non-negative")));
    }
    if sigma2 == 0.0 {
        return Ok(h_ul.clone());
    }
    let s = (sigma2 / 2.0).sqrt();
    Ok(h_ul.map(|z| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        z + Complex64::new(re * s, im * s)
    }))
}

/// Stream rows of a user from a channel matrix (`m_r x n_t`): the rows
/// themselves when `d` equals the row count, otherwise the `d` dominant
/// right singular modes scaled by their singular values.
pub fn stream_rows(h: &CMat, d: usize) -> Result<CMat> {
    if d == 0 || d > h.nrows().max(1).min(h.ncols()) {
        return Err(Error::invalid(format!("cannot take {d} streams from a {:?} channel", h.shape())));
    }
    if d == h.nrows() {
        return Ok(h.clone());
    }
    Ok(dominant_row_modes(h, d))
}

/// Vertical concatenation of per-user stream rows.
pub fn stack_rows(rows: &[CMat]) -> Result<CMat> {
    let n_t = rows.first().map(|r| r.ncols()).ok_or_else(|| Error::invalid("no users to stack"))?;
    let total: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut out = CMat::zeros(total, n_t);
    let mut at = 0;
    for r in rows {
        if r.ncols() != n_t {
            return Err(Error::ShapeMismatch("users disagree on n_t".into()));
        }
        out.rows_mut(at, r.nrows()).copy_from(r);
        at += r.nrows();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_sq;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = stream(seed, &[]);
        CMat::from_fn(rows, cols, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn identity_stack_gives_identity() {
        let v = zf_precoder(&CMat::identity(4, 4)).unwrap();
        assert!(frobenius_sq(&(v - CMat::identity(4, 4))) < 1e-28);
    }

    #[test]
    fn single_stream_is_matched_filter() {
        let h = random_matrix(1, 6, 1);
        let v = zf_precoder(&h).unwrap();
        let want = h.adjoint() / Complex64::from(h.norm());
        assert!(frobenius_sq(&(v - want)) < 1e-26);
    }

    #[test]
    fn zf_diagonalises_the_stack() {
        let h = random_matrix(4, 8, 2);
        let gram = &h * h.adjoint();
        let raw = h.adjoint() * gram.try_inverse().unwrap();
        let prod = &h * raw;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(prod[(i, j)].norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zf_rejects_rank_deficient_stacks() {
        let r = random_matrix(1, 6, 3);
        let mut h = CMat::zeros(2, 6);
        h.set_row(0, &r.row(0));
        h.set_row(1, &r.row(0));
        assert!(matches!(zf_precoder(&h), Err(Error::Singular(_))));
        let v = zf_precoder_or_pinv(&h).unwrap();
        assert_eq!(v.shape(), (6, 2));
        assert!(zf_precoder(&random_matrix(7, 6, 4)).is_err());
    }

    #[test]
    fn perfect_csit_has_no_interference() {
        let users: Vec<CMat> = (0..3).map(|k| random_matrix(2, 8, 10 + k)).collect();
        let stack = stack_rows(&users).unwrap();
        let v = zf_precoder(&stack).unwrap();
        let prod = &stack * &v;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(prod[(i, j)].norm() <= 1e-8 * prod[(i, i)].norm());
                }
            }
        }
        let sinr = user_sinr(&users, &v, 10.0, 0.0).unwrap();
        assert!(sinr.iter().all(|&s| s == SINR_CAP));
    }

    #[test]
    fn zero_precoder_gives_zero_sinr() {
        let users: Vec<CMat> = (0..2).map(|k| random_matrix(1, 4, k)).collect();
        let sinr = user_sinr(&users, &CMat::zeros(4, 2), 1.0, 0.1).unwrap();
        assert_eq!(sinr, vec![0.0, 0.0]);
    }

    #[test]
    fn sinr_matches_termwise_expansion() {
        let users: Vec<CMat> = (0..2).map(|k| random_matrix(1, 4, 20 + k)).collect();
        let v = random_matrix(4, 2, 30);
        let (p, n0) = (2.5, 0.3);
        let got = user_sinr(&users, &v, p, n0).unwrap();
        for k in 0..2 {
            let term = |j: usize| -> f64 {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..4 {
                    acc += users[k][(0, n)] * v[(n, j)];
                }
                acc.norm_sqr() * p
            };
            let want = term(k) / (term(1 - k) + n0);
            assert_relative_eq!(got[k], want, max_relative = 1e-12);
        }
    }

    #[test]
    fn sum_rate_examples() {
        assert_relative_eq!(sum_spectral_efficiency(&[1.0]).unwrap(), 1.0);
        assert_eq!(sum_spectral_efficiency(&[]).unwrap(), 0.0);
        assert_relative_eq!(sum_spectral_efficiency(&[3.0, 7.0]).unwrap(), 5.0, epsilon = 1e-12);
        assert!(sum_spectral_efficiency(&[-1.0]).is_err());
    }

    #[test]
    fn ul_error_statistics() {
        let h = random_matrix(4, 2, 40);
        assert_eq!(inject_ul_error(&h, 0.0, &mut stream(1, &[])).unwrap(), h);
        let zero = CMat::zeros(500, 200);
        let e = inject_ul_error(&zero, 0.3, &mut stream(2, &[])).unwrap();
        let var = frobenius_sq(&e) / 1e5;
        assert!((var - 0.3).abs() < 0.02 * 0.3, "{var}");
        assert!(inject_ul_error(&h, -0.1, &mut stream(1, &[])).is_err());
    }

    #[test]
    fn stream_rows_selection() {
        let h = random_matrix(2, 6, 50);
        assert_eq!(stream_rows(&h, 2).unwrap(), h);
        let r = stream_rows(&h, 1).unwrap();
        assert_eq!(r.shape(), (1, 6));
        let s1 = h.clone().svd(false, false).singular_values.max();
        assert_relative_eq!(r.norm(), s1, max_relative = 1e-12);
        assert!(stream_rows(&h, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn zf_is_exact_for_full_rank_stacks(seed in 0u64..10_000, k in 1usize..6) {
            let h = random_matrix(k, 8, seed);
            let v = zf_precoder(&h).unwrap();
            let prod = &h * &v;
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        prop_assert!(prod[(i, j)].norm() <= 1e-8 * prod[(i, i)].norm());
                    }
                }
                prop_assert!((v.column(i).norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
