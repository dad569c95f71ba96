//! UL/DL spatial-spectrum correlation across band gaps.

use std::io::Write;

use rayon::prelude::*;

use crate::array::Link;
use crate::channel::{draw_clusters, realize_channel_pair, ScenarioConfig};
use crate::codebook::build_fd_codebook;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::spectrum::{capon_spectrum, default_loading, ecdf, spectra_correlation, EcdfTable};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub omegas_hz: Vec<f64>,
    /// `rho[i][t]`: correlation at band gap `i` in trial `t`.
    pub rho: Vec<Vec<f64>>,
    pub ecdfs: Vec<EcdfTable>,
}

impl CorrelationResult {
    pub fn medians(&self) -> Vec<f64> {
        self.ecdfs.iter().map(|e| e.median()).collect()
    }

    /// Columns `omega_hz, rho, cdf`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "omega_hz,rho,cdf")?;
        for (omega, table) in self.omegas_hz.iter().zip(&self.ecdfs) {
            for (rho, cdf) in table.values.iter().zip(&table.probabilities) {
                writeln!(w, "{omega},{rho:.12},{cdf:.12}")?;
            }
        }
        Ok(())
    }
}

/// Correlation of the UL and DL Capon spectra of the same geometry, on UL
/// and DL codebooks sharing one angular grid, for every band gap.
pub fn correlation_experiment(
    scenario: &ScenarioConfig,
    q: usize,
    u: usize,
    omegas_hz: &[f64],
    trials: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    scenario.validate()?;
    if trials == 0 || omegas_hz.is_empty() {
        return Err(Error::invalid("correlation experiment needs trials >= 1 and at least one band gap"));
    }
    if omegas_hz.iter().any(|o| !(*o >= 0.0) || !o.is_finite()) {
        return Err(Error::invalid("band gaps must be finite and non-negative"));
    }
    let arrays: Vec<_> = omegas_hz.iter().map(|&o| scenario.array.with_band_gap(o)).collect();
    let books = arrays
        .iter()
        .map(|a| {
            Ok((
                build_fd_codebook(a, q, u, Link::Ul, &scenario.sector)?,
                build_fd_codebook(a, q, u, Link::Dl, &scenario.sector)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let clusters = draw_clusters(scenario, &mut stream(seed, &[t as u64, 0, tag::CORRELATION]))?;
            arrays
                .iter()
                .zip(&books)
                .map(|(array, (ul, dl))| {
                    let pair = realize_channel_pair(&clusters, array, scenario.m_r, scenario.ue_spacing)?;
                    let h_dl = pair.h_dl.adjoint();
                    let p_ul = capon_spectrum(&pair.h_ul, ul, default_loading(&pair.h_ul))?;
                    let p_dl = capon_spectrum(&h_dl, dl, default_loading(&h_dl))?;
                    spectra_correlation(&p_ul, &p_dl)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rho: Vec<Vec<f64>> = (0..omegas_hz.len()).map(|i| per_trial.iter().map(|t| t[i]).collect()).collect();
    let ecdfs = rho.iter().map(|r| ecdf(r)).collect::<Result<Vec<_>>>()?;
    Ok(CorrelationResult {
        omegas_hz: omegas_hz.to_vec(),
        rho,
        ecdfs,
    })
}
