//! Capon spatial spectra, DFT-domain cluster leakage and spectral
//! correlation statistics.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::FdCodebook;
use crate::error::{Error, Result};
use crate::linalg::{cexpj, solve_hermitian, CMat};

/// Fraction of the mean per-antenna channel power used as default diagonal loading.
pub const DEFAULT_LOADING_FRACTION: f64 = 1e-3;

/// Power estimates on a codebook grid: `values[(q, u)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSpectrum {
    pub values: DMatrix<f64>,
    pub theta_grid: Vec<f64>,
    pub phi_grid: Vec<f64>,
    pub loading: f64,
}

impl SpatialSpectrum {
    pub fn q(&self) -> usize {
        self.values.nrows()
    }

    pub fn u(&self) -> usize {
        self.values.ncols()
    }

    /// Values in codebook column order (`q * U + u`).
    pub fn flattened(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.q() * self.u());
        for q in 0..self.q() {
            for u in 0..self.u() {
                out.push(self.values[(q, u)]);
            }
        }
        out
    }

    /// Grid cell of the largest value, ties to the lowest column index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for q in 0..self.q() {
            for u in 0..self.u() {
                if self.values[(q, u)] > self.values[best] {
                    best = (q, u);
                }
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta_deg,phi_deg,power")?;
        for (q, theta) in self.theta_grid.iter().enumerate() {
            for (u, phi) in self.phi_grid.iter().enumerate() {
                writeln!(w, "{theta},{phi},{:e}", self.values[(q, u)])?;
            }
        }
        Ok(())
    }
}

/// `1e-3 · tr(H Hᴴ) / n_t`.
pub fn default_loading(h: &CMat) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    DEFAULT_LOADING_FRACTION * h.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.nrows() as f64
}

/// `P(q, u) = [wᴴ (H Hᴴ + loading I)⁻¹ w]⁻¹` for every codeword.
pub fn capon_spectrum(h: &CMat, codebook: &FdCodebook, loading: f64) -> Result<SpatialSpectrum> {
    let n_t = codebook.n_t();
    if h.nrows() != n_t {
        return Err(Error::ShapeMismatch(format!("channel has {} rows, codebook expects {n_t}", h.nrows())));
    }
    if !(loading >= 0.0) || !loading.is_finite() {
        return Err(Error::invalid(format!("loading {loading} must be finite and non-negative")));
    }
    let mut r = h * h.adjoint();
    for i in 0..n_t {
        r[(i, i)] += Complex64::new(loading, 0.0);
    }
    let x = solve_hermitian(&r, &codebook.words, "capon covariance").map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!("{msg}; use a positive diagonal loading")),
        other => other,
    })?;
    let (q_len, u_len) = (codebook.q(), codebook.u());
    let mut values = DMatrix::zeros(q_len, u_len);
    for col in 0..codebook.len() {
        let quad: f64 = codebook
            .words
            .column(col)
            .iter()
            .zip(x.column(col).iter())
            .map(|(w, xi)| (w.conj() * xi).re)
            .sum();
        values[(col / u_len, col % u_len)] = if quad > 0.0 { 1.0 / quad } else { 0.0 };
    }
    Ok(SpatialSpectrum {
        values,
        theta_grid: codebook.theta_grid.clone(),
        phi_grid: codebook.phi_grid.clone(),
        loading,
    })
}

/// DFT of a single-cluster array sequence: entry `b` is
/// `Σ_n g e^{-j2πΔ n cos φ} e^{-j2π b n / n_t}`.
pub fn dft_cluster_samples(gain: Complex64, phi_c_deg: f64, delta: f64, n_t: usize) -> Vec<Complex64> {
    let c = delta * phi_c_deg.to_radians().cos();
    (0..n_t)
        .map(|b| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..n_t {
                let cycles = (c * n as f64).fract() + ((b * n) % n_t) as f64 / n_t as f64;
                acc += cexpj(-2.0 * PI * cycles);
            }
            gain * acc
        })
        .collect()
}

/// Closed-form magnitude `|g| |sin(n_t x / 2) / sin(x / 2)|` of
/// [`dft_cluster_samples`], with `x = -2πΔ cos φ - 2π b / n_t` (the sign of
/// the bin term follows the `e^{-j2πbn/n_t}` kernel). Equals `|g| n_t`
/// where `sin(x / 2) = 0`.
pub fn dirichlet_magnitude(gain: Complex64, phi_c_deg: f64, delta: f64, n_t: usize, b: usize) -> f64 {
    let cycles = -delta * phi_c_deg.to_radians().cos() - b as f64 / n_t as f64;
    // Reduce to [-1/2, 1/2] cycles; the kernel magnitude has period 2π.
    let x = 2.0 * PI * (cycles - cycles.round());
    let den = (0.5 * x).sin();
    let n = n_t as f64;
    if den.abs() < 1e-300 {
        return gain.norm() * n;
    }
    gain.norm() * ((0.5 * n * x).sin() / den).abs()
}

/// Pearson correlation of two spectra on the same grid.
pub fn spectra_correlation(p_ul: &SpatialSpectrum, p_dl: &SpatialSpectrum) -> Result<f64> {
    if p_ul.values.shape() != p_dl.values.shape() {
        return Err(Error::ShapeMismatch(format!(
            "spectra grids {:?} and {:?} differ",
            p_ul.values.shape(),
            p_dl.values.shape()
        )));
    }
    pearson(p_ul.values.as_slice(), p_dl.values.as_slice())
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    if a.is_empty() {
        return Err(Error::UndefinedCorrelation("empty spectra".into()));
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("a spectrum has zero variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfTable {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl EcdfTable {
    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let count = self.values.partition_point(|v| *v <= x);
        count as f64 / self.values.len() as f64
    }

    /// Smallest sample whose cumulative probability reaches `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let idx = self.probabilities.partition_point(|c| *c < p - 1e-12);
        self.values[idx.min(self.values.len() - 1)]
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn ecdf(samples: &[f64]) -> Result<EcdfTable> {
    if samples.is_empty() {
        return Err(Error::invalid("ECDF of an empty sample"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("ECDF sample contains NaN"));
    }
    let mut values = samples.to_vec();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let probabilities = (1..=values.len()).map(|i| i as f64 / n).collect();
    Ok(EcdfTable { values, probabilities })
}
