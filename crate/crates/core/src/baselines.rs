//! Comparison schemes: beamformed CSI-RS with dual codebooks, the
//! Kronecker-product codebook, random vector quantisation, azimuth-only
//! spectral estimation, and the feedback-overhead law.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, ArrayConfig, Axis, Link};
use crate::codebook::FdCodebook;
use crate::dsce::{best_projection, run_dsce, DsceConfig, DsceReport};
use crate::error::{Error, Result};
use crate::linalg::{cexpj, kron_vec, CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookOrigin {
    Dft,
    Kp,
    Rvq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerCodebook {
    pub words: CMat,
    /// `log2(N)`.
    pub bits: f64,
    pub origin: CodebookOrigin,
}

impl QuantizerCodebook {
    pub fn new(words: CMat, origin: CodebookOrigin) -> Result<Self> {
        if words.ncols() == 0 || words.nrows() == 0 {
            return Err(Error::invalid("empty quantizer codebook"));
        }
        let bits = (words.ncols() as f64).log2();
        Ok(Self { words, bits, origin })
    }

    pub fn len(&self) -> usize {
        self.words.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.words.ncols() == 0
    }

    pub fn from_fd(codebook: &FdCodebook) -> Result<Self> {
        Self::new(codebook.words.clone(), CodebookOrigin::Dft)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackResult {
    pub index: usize,
    pub bits_used: f64,
    /// BS-side direction estimate: the selected codeword as a row `wᴴ`.
    pub h_hat: CMat,
}

fn feedback(codebook: &QuantizerCodebook, index: usize) -> FeedbackResult {
    let w = codebook.words.column(index);
    let h_hat = CMat::from_fn(1, w.len(), |_, n| w[n].conj());
    FeedbackResult {
        index,
        bits_used: codebook.bits,
        h_hat,
    }
}

/// Closest-match selection `argmax_w ‖H w‖²`, ties to the lowest index.
pub fn quantize_select(h: &CMat, codebook: &QuantizerCodebook) -> Result<FeedbackResult> {
    let (index, _) = best_projection(h, &codebook.words)?;
    Ok(feedback(codebook, index))
}

/// The `d` codewords with the largest `‖H w‖²`, strongest first, as rows `wᴴ`.
pub fn quantize_top(h: &CMat, codebook: &QuantizerCodebook, d: usize) -> Result<CMat> {
    if h.ncols() != codebook.words.nrows() {
        return Err(Error::ShapeMismatch(format!("channel {:?} vs codewords {:?}", h.shape(), codebook.words.shape())));
    }
    if d == 0 || d > codebook.len() {
        return Err(Error::invalid(format!("cannot select {d} of {} codewords", codebook.len())));
    }
    let gains: Vec<f64> = (h * &codebook.words).column_iter().map(|c| c.norm_squared()).collect();
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut rows = CMat::zeros(d, h.ncols());
    for (r, &i) in order.iter().take(d).enumerate() {
        rows.set_row(r, &codebook.words.column(i).adjoint());
    }
    Ok(rows)
}

/// Beamformed CSI-RS: the UE sees `H_dl J`, de-beamforms to
/// `H_approx = (H_dl J) Jᴴ` and feeds back the best word of `t_codebook`.
pub fn ecsirs_run(h_dl: &CMat, j_codebook: &FdCodebook, t_codebook: &QuantizerCodebook) -> Result<FeedbackResult> {
    let h_approx = ecsirs_observation(h_dl, j_codebook, t_codebook)?;
    quantize_select(&h_approx, t_codebook)
}

/// `(H_dl J) Jᴴ` after checking shapes and `L <= N`.
pub fn ecsirs_observation(h_dl: &CMat, j_codebook: &FdCodebook, t_codebook: &QuantizerCodebook) -> Result<CMat> {
    let j = &j_codebook.words;
    if h_dl.ncols() != j.nrows() || t_codebook.words.nrows() != j.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "H_dl {:?}, J {:?}, T {:?}",
            h_dl.shape(),
            j.shape(),
            t_codebook.words.shape()
        )));
    }
    if j.ncols() > t_codebook.len() {
        return Err(Error::invalid(format!(
            "pilot codebook L = {} exceeds feedback codebook N = {}",
            j.ncols(),
            t_codebook.len()
        )));
    }
    Ok((h_dl * j) * j.adjoint())
}

/// Azimuth word `t` of the Kronecker-product codebook with `t_count` words.
///
/// For even `n_h` the word is `[ϖ, e^{j2π n_h t / T} ϖ] / √n_h` with
/// `ϖ_m = e^{j2π m t / T}`, `m < n_h / 2`; at `n_h = 8`, `T = 32` this is
/// `[ϖ, e^{jπt/2} ϖ] / √8`. Odd `n_h` falls back to the plain oversampled DFT word.
pub fn kp_azimuth_word(n_h: usize, t: usize, t_count: usize) -> CVec {
    let scale = 1.0 / (n_h as f64).sqrt();
    let phase = |k: f64| cexpj(2.0 * PI * ((k * t as f64 / t_count as f64).fract())) * scale;
    if n_h % 2 == 1 {
        return CVec::from_iterator(n_h, (0..n_h).map(|m| phase(m as f64)));
    }
    let half = n_h / 2;
    let co_phase = cexpj(2.0 * PI * ((n_h * t) % t_count) as f64 / t_count as f64);
    CVec::from_iterator(
        n_h,
        (0..n_h).map(|m| if m < half { phase(m as f64) } else { co_phase * phase((m - half) as f64) }),
    )
}

/// Kronecker-product codebook: every azimuth word times every DL elevation
/// response `a^v(φ_u) / √n_v`.
pub fn kp_codebook(array: &ArrayConfig, t_count: usize, elevation_grid: &[f64]) -> Result<QuantizerCodebook> {
    array.validate()?;
    if t_count == 0 || elevation_grid.is_empty() {
        return Err(Error::invalid("KP codebook needs t_count >= 1 and at least one elevation"));
    }
    let s = array.spacing_scale(Link::Dl);
    let v_scale = Complex64::from(1.0 / (array.n_v as f64).sqrt());
    let elevations = elevation_grid
        .iter()
        .map(|&phi| Ok(steering_vector(Axis::Vertical, phi, array.n_v, array.delta_v * s)? * v_scale))
        .collect::<Result<Vec<_>>>()?;
    let mut words = CMat::zeros(array.n_t(), t_count * elevations.len());
    for t in 0..t_count {
        let az = kp_azimuth_word(array.n_h, t, t_count);
        for (ui, el) in elevations.iter().enumerate() {
            words.set_column(t * elevations.len() + ui, &kron_vec(&az, el));
        }
    }
    QuantizerCodebook::new(words, CodebookOrigin::Kp)
}

fn isotropic_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    loop {
        let v = CVec::from_iterator(
            n,
            (0..n).map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im)
            }),
        );
        let norm = v.norm();
        if norm > 0.0 {
            return v / Complex64::from(norm);
        }
    }
}

/// `2^bits` isotropically random unit-norm words of length `n_t`.
pub fn rvq_codebook<R: Rng + ?Sized>(bits: u32, n_t: usize, rng: &mut R) -> Result<QuantizerCodebook> {
    if n_t == 0 {
        return Err(Error::invalid("n_t must be at least 1"));
    }
    if bits > 24 {
        return Err(Error::invalid(format!("{bits} RVQ bits is too many to enumerate")));
    }
    let n = 1usize << bits;
    let mut words = CMat::zeros(n_t, n);
    for i in 0..n {
        words.set_column(i, &isotropic_unit(n_t, rng));
    }
    QuantizerCodebook::new(words, CodebookOrigin::Rvq)
}

/// Azimuth-only RVQ: a random unit `n_h` word times the broadside vertical
/// response `1 / √n_v`.
pub fn rvq_2d_codebook<R: Rng + ?Sized>(bits: u32, array: &ArrayConfig, rng: &mut R) -> Result<QuantizerCodebook> {
    let az = rvq_codebook(bits, array.n_h, rng)?;
    let v = CVec::from_element(array.n_v, Complex64::from(1.0 / (array.n_v as f64).sqrt()));
    let mut words = CMat::zeros(array.n_t(), az.len());
    for (i, col) in az.words.column_iter().enumerate() {
        words.set_column(i, &kron_vec(&col.into_owned(), &v));
    }
    QuantizerCodebook::new(words, CodebookOrigin::Rvq)
}

/// D-SCE restricted to a single (broadside) elevation cell.
pub fn fmmsce2d_run(h_ul: &CMat, codebook_2d: &FdCodebook, config: &DsceConfig) -> Result<DsceReport> {
    if codebook_2d.u() != 1 {
        return Err(Error::invalid(format!("azimuth-only estimation needs U = 1, got U = {}", codebook_2d.u())));
    }
    let config = DsceConfig {
        q: codebook_2d.q(),
        u: 1,
        ..config.clone()
    };
    run_dsce(h_ul, None, codebook_2d, &config)
}

/// `B = (n_t - 1) log2(SNR)`.
pub fn feedback_bits(n_t: usize, snr_db: f64) -> Result<f64> {
    if n_t == 0 || !snr_db.is_finite() {
        return Err(Error::invalid("feedback_bits needs n_t >= 1 and a finite SNR"));
    }
    Ok((n_t as f64 - 1.0) * snr_db / 10.0 * 10f64.log2())
}
