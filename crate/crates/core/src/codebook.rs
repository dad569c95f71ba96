//! Full-dimensional DFT beamforming codebooks over an angular sector.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{fd_response, ArrayConfig, Link, Sector};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// Unit-norm codewords `(a^h(θ_q) ⊗ a^v(φ_u)) / √n_t` on a `Q x U` grid.
/// Column `q * U + u` holds the word for `(θ_q, φ_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdCodebook {
    pub theta_grid: Vec<f64>,
    pub phi_grid: Vec<f64>,
    pub words: CMat,
    pub link: Link,
    pub array: ArrayConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridIndex {
    pub q: usize,
    pub u: usize,
}

impl FdCodebook {
    pub fn q(&self) -> usize {
        self.theta_grid.len()
    }

    pub fn u(&self) -> usize {
        self.phi_grid.len()
    }

    pub fn len(&self) -> usize {
        self.words.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.words.ncols() == 0
    }

    pub fn n_t(&self) -> usize {
        self.words.nrows()
    }

    pub fn column_index(&self, q: usize, u: usize) -> usize {
        q * self.u() + u
    }

    pub fn grid_index(&self, column: usize) -> GridIndex {
        GridIndex {
            q: column / self.u(),
            u: column % self.u(),
        }
    }

    pub fn angles(&self, column: usize) -> (f64, f64) {
        let g = self.grid_index(column);
        (self.theta_grid[g.q], self.phi_grid[g.u])
    }

    pub fn word(&self, column: usize) -> CVec {
        self.words.column(column).into_owned()
    }
}

/// Codebook on explicit, strictly increasing angle grids.
pub fn fd_codebook_from_grids(array: &ArrayConfig, theta_grid: Vec<f64>, phi_grid: Vec<f64>, link: Link) -> Result<FdCodebook> {
    array.validate()?;
    let increasing = |g: &[f64]| !g.is_empty() && g.iter().all(|v| v.is_finite()) && g.windows(2).all(|w| w[0] < w[1]);
    if !increasing(&theta_grid) || !increasing(&phi_grid) {
        return Err(Error::invalid("codebook grids must be non-empty, finite and strictly increasing"));
    }
    assemble(array, theta_grid, phi_grid, link)
}

fn assemble(array: &ArrayConfig, theta_grid: Vec<f64>, phi_grid: Vec<f64>, link: Link) -> Result<FdCodebook> {
    let n_t = array.n_t();
    let scale = 1.0 / (n_t as f64).sqrt();
    let mut words = DMatrix::zeros(n_t, theta_grid.len() * phi_grid.len());
    for (qi, &theta) in theta_grid.iter().enumerate() {
        for (ui, &phi) in phi_grid.iter().enumerate() {
            let w = fd_response(theta, phi, array, link)? * Complex64::from(scale);
            words.set_column(qi * phi_grid.len() + ui, &w);
        }
    }
    Ok(FdCodebook {
        theta_grid,
        phi_grid,
        words,
        link,
        array: *array,
    })
}

/// Codebook on the cell centres of a `q x u` partition of `sector`.
pub fn build_fd_codebook(array: &ArrayConfig, q: usize, u: usize, link: Link, sector: &Sector) -> Result<FdCodebook> {
    array.validate()?;
    sector.validate()?;
    if q == 0 || u == 0 {
        return Err(Error::invalid(format!("codebook needs q >= 1 and u >= 1, got q = {q}, u = {u}")));
    }
    if q < array.n_t() {
        log::warn!(
            "azimuth grid Q = {q} is below n_t = {}; the array degrees of freedom are not fully used",
            array.n_t()
        );
    }
    let theta = Sector::grid(sector.az_start_deg, sector.az_span_deg, q);
    let phi = Sector::grid(sector.el_start_deg, sector.el_span_deg, u);
    assemble(array, theta, phi, link)
}

/// Increasing angles whose steering vectors form an orthogonal DFT basis of
/// an `n`-element axis with spacing `delta` wavelengths.
pub fn dft_angles(n: usize, delta: f64) -> Result<Vec<f64>> {
    let mut angles = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let c = ((k as f64 + 0.5) / n as f64 - 0.5) / delta;
        if !(-1.0..=1.0).contains(&c) {
            return Err(Error::invalid(format!("spacing {delta} too small for a full DFT grid")));
        }
        angles.push(c.acos().to_degrees());
    }
    Ok(angles)
}

/// Orthonormal codebook (`Q = n_h`, `U = n_v`) whose words span the whole
/// array space. Angles are chosen so the spatial frequencies are spaced by
/// exactly `1 / n` on each axis.
pub fn full_dft_codebook(array: &ArrayConfig, link: Link) -> Result<FdCodebook> {
    array.validate()?;
    let s = array.spacing_scale(link);
    let theta = dft_angles(array.n_h, array.delta_h * s)?;
    let phi = dft_angles(array.n_v, array.delta_v * s)?;
    assemble(array, theta, phi, link)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_sq;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn equal_gap() -> ArrayConfig {
        ArrayConfig::new(8, 8, 0.5, 2e9, 2e9).unwrap()
    }

    #[test]
    fn table_one_dimensions() {
        let cb = build_fd_codebook(&ArrayConfig::default(), 120, 4, Link::Ul, &Sector::default()).unwrap();
        assert_eq!(cb.words.shape(), (64, 480));
        assert_eq!((cb.q(), cb.u()), (120, 4));
    }

    #[test]
    fn single_cell_is_broadside() {
        let cb = build_fd_codebook(&equal_gap(), 1, 1, Link::Ul, &Sector::default()).unwrap();
        assert_eq!(cb.theta_grid, vec![90.0]);
        assert_eq!(cb.phi_grid, vec![90.0]);
        for z in cb.words.iter() {
            assert_relative_eq!(z.re, 0.125, epsilon = 1e-15);
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn columns_are_unit_norm_and_grids_increase() {
        let cb = build_fd_codebook(&ArrayConfig::default(), 37, 5, Link::Dl, &Sector::default()).unwrap();
        for c in cb.words.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        assert!(cb.theta_grid.windows(2).all(|w| w[0] < w[1]));
        assert!(cb.phi_grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn index_layout_round_trips() {
        let cb = build_fd_codebook(&equal_gap(), 6, 3, Link::Ul, &Sector::default()).unwrap();
        for col in 0..cb.len() {
            let g = cb.grid_index(col);
            assert_eq!(cb.column_index(g.q, g.u), col);
        }
        let (theta, phi) = cb.angles(cb.column_index(2, 1));
        let w = fd_response(theta, phi, &cb.array, Link::Ul).unwrap() / Complex64::from(8.0);
        assert!((cb.word(cb.column_index(2, 1)) - w).norm_squared() < 1e-28);
    }

    #[test]
    fn rejects_empty_grids_and_sectors() {
        let a = equal_gap();
        assert!(build_fd_codebook(&a, 0, 4, Link::Ul, &Sector::default()).is_err());
        assert!(build_fd_codebook(&a, 4, 0, Link::Ul, &Sector::default()).is_err());
        let empty = Sector {
            az_span_deg: 0.0,
            ..Sector::default()
        };
        assert!(build_fd_codebook(&a, 4, 4, Link::Ul, &empty).is_err());
    }

    #[test]
    fn full_dft_is_unitary() {
        let cb = full_dft_codebook(&ArrayConfig::new(4, 2, 0.5, 2e9, 2e9).unwrap(), Link::Ul).unwrap();
        let gram = cb.words.adjoint() * &cb.words;
        let err = frobenius_sq(&(gram - CMat::identity(8, 8)));
        assert!(err < 1e-24, "{err}");
    }

    proptest! {
        #[test]
        fn parseval_on_full_dft_grid(
            re in proptest::collection::vec(-1.0f64..1.0, 8),
            im in proptest::collection::vec(-1.0f64..1.0, 8),
            phases in proptest::collection::vec(0.0f64..6.28, 8),
        ) {
            let cb = full_dft_codebook(&ArrayConfig::new(4, 2, 0.5, 2e9, 2e9).unwrap(), Link::Ul).unwrap();
            let x = CVec::from_iterator(8, re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)));
            let energy = |v: &CVec| -> f64 { (cb.words.adjoint() * v).iter().map(|z| z.norm_sqr()).sum() };
            // Diagonal phase rotations composed with the DFT basis give a unitary map.
            let rot = CMat::from_diagonal(&CVec::from_iterator(8, phases.iter().map(|&p| Complex64::from_polar(1.0, p))));
            let unitary = &cb.words * rot * cb.words.adjoint();
            let y = &unitary * &x;
            prop_assert!((energy(&x) - energy(&y)).abs() <= 1e-10 * energy(&x).max(1.0));
            prop_assert!((energy(&x) - x.norm_squared()).abs() <= 1e-10 * x.norm_squared().max(1.0));
        }
    }
}
