//! Downlink channel estimation from the uplink channel through its
//! directional spatial spectrum.
//!
//! Pipeline: Capon spectrum of `H_ul` on the UL codebook, principal
//! elevation cell, strongest azimuth cells in that elevation, receive
//! responses `A_R`, their DL counterparts `A_T`, a rough estimate, and an
//! MMSE refinement.
//!
//! The rough estimate applies the rotation operator
//! `M = I - A_R^{H+} A_Rᴴ + A_R^{H+} A_Tᴴ` to `H_ulᴴ`. It re-synthesises the
//! component of every UL row lying in the span of the selected receive
//! responses with the matching transmit responses and leaves the rest
//! untouched, so `M = I` whenever `A_T = A_R`. The refinement then solves
//! the regularised least-squares problem of [`mmse_refine`] on the rotated
//! channel `Mᴴ H_ul`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{fd_response, ArrayConfig, Link};
use crate::codebook::FdCodebook;
use crate::error::{Error, Result};
use crate::linalg::{cexpj, identity, mean_row_cosine, pinv, relative_mse, solve_hermitian, CMat};
use crate::spectrum::{capon_spectrum, default_loading, SpatialSpectrum};

/// Relative singular-value cutoff of the pseudo-inverse in the rotation operator.
const ROTATION_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RotationMode {
    /// `A_T = diag(Ϝ) A_R` with `Ϝ_n = exp(-j2πn f_dl / f_ul)`.
    PaperDiagonal,
    /// `A_T` columns are DL responses at the selected angles.
    #[default]
    RegenerateAtDl,
}

impl FromStr for RotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-diagonal" => Ok(Self::PaperDiagonal),
            "regenerate-at-dl" => Ok(Self::RegenerateAtDl),
            other => Err(Error::invalid(format!(
                "unknown rotation mode `{other}` (expected paper-diagonal or regenerate-at-dl)"
            ))),
        }
    }
}

impl fmt::Display for RotationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PaperDiagonal => "paper-diagonal",
            Self::RegenerateAtDl => "regenerate-at-dl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsceConfig {
    pub q: usize,
    pub u: usize,
    pub rotation_mode: RotationMode,
    /// σ² of the refinement.
    pub mmse_noise_var: f64,
    /// Capon diagonal loading; `None` uses [`default_loading`].
    pub capon_loading: Option<f64>,
}

impl Default for DsceConfig {
    fn default() -> Self {
        Self {
            q: 120,
            u: 4,
            rotation_mode: RotationMode::RegenerateAtDl,
            mmse_noise_var: 1e-2,
            capon_loading: None,
        }
    }
}

impl DsceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.u == 0 {
            return Err(Error::invalid("q and u must be at least 1"));
        }
        if !(self.mmse_noise_var >= 0.0) || !self.mmse_noise_var.is_finite() {
            return Err(Error::invalid("mmse_noise_var must be finite and non-negative"));
        }
        if let Some(l) = self.capon_loading {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::invalid("capon_loading must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsceMetrics {
    pub mse_h1: f64,
    pub mse_h2: f64,
    pub cosine_h1: f64,
    pub cosine_h2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsceReport {
    pub spectrum: SpatialSpectrum,
    pub u_hat: usize,
    pub phi_hat: f64,
    /// Grid indices of the selected azimuths, strongest first.
    pub q_hat: Vec<usize>,
    pub theta_hat: Vec<f64>,
    pub rotation_mode: RotationMode,
    pub a_r: CMat,
    pub a_t: CMat,
    /// Operator mapping UL rows onto DL rows, `H⁽¹⁾ = H_ulᴴ M`.
    pub rotation: CMat,
    pub g: CMat,
    pub h1: CMat,
    pub h2: CMat,
    pub metrics: Option<DsceMetrics>,
}

impl DsceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Selected azimuths with their spectrum values.
    pub fn write_selection_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "rank,q,theta_deg,phi_deg,power")?;
        for (rank, (&q, &theta)) in self.q_hat.iter().zip(&self.theta_hat).enumerate() {
            writeln!(w, "{rank},{q},{theta},{},{:e}", self.phi_hat, self.spectrum.values[(q, self.u_hat)])?;
        }
        Ok(())
    }
}

/// `û = argmax_u mean_q P(θ_q, φ_u)²`, ties to the smaller index.
pub fn select_elevation(spectrum: &SpatialSpectrum) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for u in 0..spectrum.u() {
        let score = spectrum.values.column(u).iter().map(|p| p * p).sum::<f64>() / spectrum.q() as f64;
        if score > best.1 {
            best = (u, score);
        }
    }
    best.0
}

/// Grid indices of the `count` largest `P(θ_q, φ_û)`, strongest first,
/// ties by ascending index. Requests beyond `Q` are truncated.
pub fn top_azimuth_indices(spectrum: &SpatialSpectrum, u_hat: usize, count: usize) -> Vec<usize> {
    let col = spectrum.values.column(u_hat);
    let mut order: Vec<usize> = (0..spectrum.q()).collect();
    order.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

/// The `n_t` strongest azimuth grid angles in elevation cell `u_hat`.
pub fn select_azimuth_top_nt(spectrum: &SpatialSpectrum, u_hat: usize, n_t: usize) -> Result<Vec<f64>> {
    if spectrum.q() < n_t {
        return Err(Error::InsufficientGrid {
            q: spectrum.q(),
            needed: n_t,
        });
    }
    if u_hat >= spectrum.u() {
        return Err(Error::invalid(format!("elevation index {u_hat} outside 0..{}", spectrum.u())));
    }
    Ok(top_azimuth_indices(spectrum, u_hat, n_t)
        .into_iter()
        .map(|q| spectrum.theta_grid[q])
        .collect())
}

fn responses(theta_hat: &[f64], phi_deg: f64, array: &ArrayConfig, link: Link) -> Result<CMat> {
    if theta_hat.is_empty() {
        return Err(Error::invalid("no azimuth directions selected"));
    }
    let mut m = CMat::zeros(array.n_t(), theta_hat.len());
    for (i, &theta) in theta_hat.iter().enumerate() {
        m.set_column(i, &fd_response(theta, phi_deg, array, link)?);
    }
    Ok(m)
}

/// `A_R`: column `n` is the UL response at `(θ̂_n, φ̂_û)`.
pub fn build_receive_matrix(theta_hat: &[f64], phi_u_hat: f64, array: &ArrayConfig) -> Result<CMat> {
    responses(theta_hat, phi_u_hat, array, Link::Ul)
}

/// Maps the receive responses onto the DL carrier.
pub fn rotate_to_transmit(
    a_r: &CMat,
    array: &ArrayConfig,
    mode: RotationMode,
    theta_hat: &[f64],
    phi_u_hat: f64,
) -> Result<CMat> {
    if a_r.nrows() != array.n_t() {
        return Err(Error::ShapeMismatch(format!("A_R has {} rows, array has {}", a_r.nrows(), array.n_t())));
    }
    match mode {
        RotationMode::PaperDiagonal => {
            let ratio = array.f_dl / array.f_ul;
            let mut a_t = a_r.clone();
            for n in 0..a_t.nrows() {
                let ramp = cexpj(-2.0 * std::f64::consts::PI * (n as f64 * ratio).fract());
                a_t.row_mut(n).iter_mut().for_each(|z| *z *= ramp);
            }
            Ok(a_t)
        }
        RotationMode::RegenerateAtDl => {
            if theta_hat.len() != a_r.ncols() {
                return Err(Error::ShapeMismatch(format!(
                    "{} angles for {} receive columns",
                    theta_hat.len(),
                    a_r.ncols()
                )));
            }
            responses(theta_hat, phi_u_hat, array, Link::Dl)
        }
    }
}

/// `M = I - A_R^{H+} A_Rᴴ + A_R^{H+} A_Tᴴ`; identity when `A_T = A_R`.
pub fn rotation_operator(a_r: &CMat, a_t: &CMat) -> Result<CMat> {
    if a_r.shape() != a_t.shape() {
        return Err(Error::ShapeMismatch(format!("A_R {:?} vs A_T {:?}", a_r.shape(), a_t.shape())));
    }
    let a_r_h = a_r.adjoint();
    let p = pinv(&a_r_h, ROTATION_RTOL);
    Ok(identity(a_r.nrows()) + &p * (a_t.adjoint() - a_r_h))
}

/// `H⁽¹⁾ = H_ulᴴ A_T`.
pub fn rough_estimate(h_ul: &CMat, a_t: &CMat) -> Result<CMat> {
    if h_ul.nrows() != a_t.nrows() {
        return Err(Error::ShapeMismatch(format!("H_ul {:?} vs A_T {:?}", h_ul.shape(), a_t.shape())));
    }
    Ok(h_ul.adjoint() * a_t)
}

/// `G = (XᴴX + σ²I)⁻¹ H_ul H_ulᴴ A_T` with `X = H_ulᴴ A_T`, and
/// `H⁽²⁾ = H_ulᴴ G A_T`.
pub fn mmse_refine(h_ul: &CMat, a_t: &CMat, sigma2: f64) -> Result<(CMat, CMat)> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid(format!("sigma2 = {sigma2} must be finite and non-negative")));
    }
    if a_t.nrows() != a_t.ncols() {
        return Err(Error::ShapeMismatch(format!("A_T must be square, got {:?}", a_t.shape())));
    }
    let x = rough_estimate(h_ul, a_t)?;
    let mut lhs = x.adjoint() * &x;
    for i in 0..lhs.nrows() {
        lhs[(i, i)] += Complex64::new(sigma2, 0.0);
    }
    let rhs = h_ul * (h_ul.adjoint() * a_t);
    let g = solve_hermitian(&lhs, &rhs, "MMSE normal equations").map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!("{msg}; use sigma2 > 0")),
        other => other,
    })?;
    let h2 = h_ul.adjoint() * &g * a_t;
    Ok((g, h2))
}

/// Runs the full estimator on one UL channel. Metrics are filled when the
/// true DL channel is supplied.
pub fn run_dsce(h_ul: &CMat, truth_h_dl: Option<&CMat>, codebook: &FdCodebook, config: &DsceConfig) -> Result<DsceReport> {
    config.validate()?;
    if codebook.link != Link::Ul {
        return Err(Error::invalid("D-SCE needs a UL codebook"));
    }
    let array = &codebook.array;
    let n_t = array.n_t();
    let loading = config.capon_loading.unwrap_or_else(|| default_loading(h_ul));
    let spectrum = capon_spectrum(h_ul, codebook, loading)?;
    let u_hat = select_elevation(&spectrum);
    let phi_hat = spectrum.phi_grid[u_hat];
    if spectrum.q() < n_t {
        log::debug!("Q = {} < n_t = {n_t}: selecting all {} azimuth cells", spectrum.q(), spectrum.q());
    }
    let q_hat = top_azimuth_indices(&spectrum, u_hat, n_t);
    let theta_hat: Vec<f64> = q_hat.iter().map(|&q| spectrum.theta_grid[q]).collect();

    let a_r = build_receive_matrix(&theta_hat, phi_hat, array)?;
    let a_t = rotate_to_transmit(&a_r, array, config.rotation_mode, &theta_hat, phi_hat)?;
    let rotation = rotation_operator(&a_r, &a_t)?;
    let rotated_ul = rotation.adjoint() * h_ul;
    let h1 = rough_estimate(&rotated_ul, &identity(n_t))?;
    let (g, h2) = mmse_refine(&rotated_ul, &identity(n_t), config.mmse_noise_var)?;

    let metrics = truth_h_dl.map(|h| DsceMetrics {
        mse_h1: relative_mse(&h1, h),
        mse_h2: relative_mse(&h2, h),
        cosine_h1: mean_row_cosine(&h1, h),
        cosine_h2: mean_row_cosine(&h2, h),
    });
    Ok(DsceReport {
        spectrum,
        u_hat,
        phi_hat,
        q_hat,
        theta_hat,
        rotation_mode: config.rotation_mode,
        a_r,
        a_t,
        rotation,
        g,
        h1,
        h2,
        metrics,
    })
}

/// Exhaustive `argmax_w ‖H_dl w‖²`, ties to the lowest index.
pub fn oracle_best_codeword(h_dl: &CMat, codebook: &FdCodebook) -> Result<(usize, f64)> {
    if codebook.link != Link::Dl {
        return Err(Error::invalid("oracle search needs a DL codebook"));
    }
    best_projection(h_dl, &codebook.words)
}

/// `argmax_i ‖H w_i‖²` over the columns of `words`, ties to the lowest index.
pub(crate) fn best_projection(h: &CMat, words: &CMat) -> Result<(usize, f64)> {
    if words.ncols() == 0 {
        return Err(Error::invalid("empty codebook"));
    }
    if h.ncols() != words.nrows() {
        return Err(Error::ShapeMismatch(format!("channel {:?} vs codewords {:?}", h.shape(), words.shape())));
    }
    let proj = h * words;
    let mut best = (0, f64::NEG_INFINITY);
    for (i, col) in proj.column_iter().enumerate() {
        let gain = col.norm_squared();
        if gain > best.1 {
            best = (i, gain);
        }
    }
    Ok(best)
}
