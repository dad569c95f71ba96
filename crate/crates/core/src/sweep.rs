//! Monte-Carlo spectral-efficiency sweeps.
//!
//! Every trial draws one scattering geometry per user from a seed derived
//! from `(master seed, trial, user)`. The same geometries are reused at
//! every sweep point and by every estimator, so comparisons are paired.
//! Trials run in parallel and are reduced in trial order, which keeps the
//! result independent of the thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, Link, Sector};
use crate::baselines::{ecsirs_observation, fmmsce2d_run, kp_codebook, quantize_top, rvq_2d_codebook, QuantizerCodebook};
use crate::channel::{draw_clusters, realize_channel_pair, ScenarioConfig};
use crate::codebook::{build_fd_codebook, dft_angles, fd_codebook_from_grids, FdCodebook};
use crate::dsce::{run_dsce, DsceConfig};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::link::{inject_ul_error, stack_rows, stream_rows, sum_spectral_efficiency, user_sinr, zf_precoder_or_pinv};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "perfect")]
    Perfect,
    #[serde(rename = "dsce")]
    Dsce,
    #[serde(rename = "ecsi-rs")]
    EcsiRs,
    #[serde(rename = "kp")]
    Kp,
    #[serde(rename = "fmmsce-2d")]
    Fmmsce2d,
    #[serde(rename = "rvq-2d")]
    Rvq2d,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Perfect,
        EstimatorKind::Dsce,
        EstimatorKind::EcsiRs,
        EstimatorKind::Kp,
        EstimatorKind::Fmmsce2d,
        EstimatorKind::Rvq2d,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Perfect => "perfect",
            Self::Dsce => "dsce",
            Self::EcsiRs => "ecsi-rs",
            Self::Kp => "kp",
            Self::Fmmsce2d => "fmmsce-2d",
            Self::Rvq2d => "rvq-2d",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown estimator `{s}`")))
    }
}

/// Codebook sizes of the comparison schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Elevation cells of the beamformed pilots `J`; azimuth uses the
    /// `n_h` orthogonal DFT beams, so `L = n_h * ecsirs_pilot_u`.
    pub ecsirs_pilot_u: usize,
    /// Feedback grid `T`.
    pub ecsirs_feedback_q: usize,
    pub ecsirs_feedback_u: usize,
    pub kp_azimuth_words: usize,
    pub kp_elevations: usize,
    pub rvq_bits: u32,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ecsirs_pilot_u: 4,
            ecsirs_feedback_q: 16,
            ecsirs_feedback_u: 8,
            kp_azimuth_words: 256,
            kp_elevations: 4,
            rvq_bits: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum SweepVariable {
    #[default]
    None,
    Q(Vec<usize>),
    U(Vec<usize>),
    UlErrorVar(Vec<f64>),
    /// `(n_h, n_v)` pairs.
    ArraySize(Vec<(usize, usize)>),
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Q(_) => "q",
            Self::U(_) => "u",
            Self::UlErrorVar(_) => "ul_error_var",
            Self::ArraySize(_) => "array_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: ScenarioConfig,
    pub dsce: DsceConfig,
    pub baselines: BaselineConfig,
    pub estimators: Vec<EstimatorKind>,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub sweep: SweepVariable,
    /// Variance of the UL estimation error when it is not swept.
    pub ul_error_var: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            dsce: DsceConfig::default(),
            baselines: BaselineConfig::default(),
            estimators: EstimatorKind::ALL.to_vec(),
            snr_grid_db: (-5..=25).step_by(5).map(f64::from).collect(),
            trials: 500,
            seed: 1,
            sweep: SweepVariable::None,
            ul_error_var: 0.0,
        }
    }
}

/// One configuration of the swept quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub scenario: ScenarioConfig,
    pub dsce: DsceConfig,
    pub ul_error_var: f64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("SNR grid must be non-empty and finite"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("no estimators selected"));
        }
        if !(self.ul_error_var >= 0.0) {
            return Err(Error::invalid("ul_error_var must be non-negative"));
        }
        for p in self.points()? {
            p.scenario.validate()?;
            p.dsce.validate()?;
        }
        Ok(())
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let base = SweepPoint {
            label: "none".into(),
            scenario: self.scenario.clone(),
            dsce: self.dsce.clone(),
            ul_error_var: self.ul_error_var,
        };
        let empty = || Error::invalid(format!("sweep over {} has no values", self.sweep.name()));
        let points: Vec<SweepPoint> = match &self.sweep {
            SweepVariable::None => vec![base],
            SweepVariable::Q(values) => values
                .iter()
                .map(|&q| SweepPoint {
                    label: q.to_string(),
                    dsce: DsceConfig { q, ..base.dsce.clone() },
                    ..base.clone()
                })
                .collect(),
            SweepVariable::U(values) => values
                .iter()
                .map(|&u| SweepPoint {
                    label: u.to_string(),
                    dsce: DsceConfig { u, ..base.dsce.clone() },
                    ..base.clone()
                })
                .collect(),
            SweepVariable::UlErrorVar(values) => values
                .iter()
                .map(|&v| SweepPoint {
                    label: v.to_string(),
                    ul_error_var: v,
                    ..base.clone()
                })
                .collect(),
            SweepVariable::ArraySize(values) => values
                .iter()
                .map(|&(n_h, n_v)| {
                    let mut scenario = base.scenario.clone();
                    scenario.array = ArrayConfig { n_h, n_v, ..scenario.array };
                    SweepPoint {
                        label: format!("{n_h}x{n_v}"),
                        scenario,
                        ..base.clone()
                    }
                })
                .collect(),
        };
        if points.is_empty() {
            return Err(empty());
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeRow {
    pub estimator: EstimatorKind,
    pub sweep_var: String,
    pub snr_db: f64,
    pub mean_se: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SeResult {
    pub rows: Vec<SeRow>,
}

impl SeResult {
    pub fn get(&self, estimator: EstimatorKind, sweep_var: &str, snr_db: f64) -> Option<&SeRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.sweep_var == sweep_var && r.snr_db == snr_db)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "estimator,sweep_var,snr_db,mean_se,stderr,trials")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.9},{:.9},{}",
                r.estimator, r.sweep_var, r.snr_db, r.mean_se, r.stderr, r.trials
            )?;
        }
        Ok(())
    }
}

/// Codebooks shared by all trials of one sweep point.
struct PointContext {
    ul: Option<FdCodebook>,
    flat: Option<FdCodebook>,
    pilots: Option<FdCodebook>,
    feedback: Option<QuantizerCodebook>,
    kp: Option<QuantizerCodebook>,
    rvq: Option<QuantizerCodebook>,
}

impl PointContext {
    fn new(config: &SweepConfig, point: &SweepPoint) -> Result<Self> {
        let array = &point.scenario.array;
        let sector = &point.scenario.sector;
        let has = |e: EstimatorKind| config.estimators.contains(&e);
        let b = &config.baselines;
        let ul = has(EstimatorKind::Dsce)
            .then(|| build_fd_codebook(array, point.dsce.q, point.dsce.u, Link::Ul, sector))
            .transpose()?;
        let flat = has(EstimatorKind::Fmmsce2d)
            .then(|| build_fd_codebook(array, point.dsce.q, 1, Link::Ul, sector))
            .transpose()?;
        let pilots = has(EstimatorKind::EcsiRs)
            .then(|| pilot_codebook(array, b.ecsirs_pilot_u, sector))
            .transpose()?;
        let feedback = has(EstimatorKind::EcsiRs)
            .then(|| {
                build_fd_codebook(array, b.ecsirs_feedback_q, b.ecsirs_feedback_u, Link::Dl, sector)
                    .and_then(|cb| QuantizerCodebook::from_fd(&cb))
            })
            .transpose()?;
        let kp = has(EstimatorKind::Kp)
            .then(|| {
                let grid = Sector::grid(sector.el_start_deg, sector.el_span_deg, b.kp_elevations);
                kp_codebook(array, b.kp_azimuth_words, &grid)
            })
            .transpose()?;
        let rvq = has(EstimatorKind::Rvq2d)
            .then(|| rvq_2d_codebook(b.rvq_bits, array, &mut stream(config.seed, &[tag::RVQ])))
            .transpose()?;
        Ok(Self {
            ul,
            flat,
            pilots,
            feedback,
            kp,
            rvq,
        })
    }
}

/// Beamformed CSI-RS ports: orthogonal DFT azimuth beams times `u`
/// elevation cells of the sector, on the DL carrier.
pub fn pilot_codebook(array: &ArrayConfig, u: usize, sector: &Sector) -> Result<FdCodebook> {
    let theta = dft_angles(array.n_h, array.delta_h * array.spacing_scale(Link::Dl))?;
    let phi = Sector::grid(sector.el_start_deg, sector.el_span_deg, u);
    fd_codebook_from_grids(array, theta, phi, Link::Dl)
}

fn expect<'a, T>(v: &'a Option<T>) -> &'a T {
    v.as_ref().expect("codebook built for every selected estimator")
}

/// Stream rows the BS believes each user has, per estimator.
fn estimate_rows(
    kind: EstimatorKind,
    h_obs: &CMat,
    h_dl: &CMat,
    d: usize,
    ctx: &PointContext,
    dsce: &DsceConfig,
) -> Result<CMat> {
    match kind {
        EstimatorKind::Perfect => stream_rows(h_dl, d),
        EstimatorKind::Dsce => stream_rows(&run_dsce(h_obs, None, expect(&ctx.ul), dsce)?.h2, d),
        EstimatorKind::Fmmsce2d => stream_rows(&fmmsce2d_run(h_obs, expect(&ctx.flat), dsce)?.h2, d),
        EstimatorKind::EcsiRs => {
            let feedback = expect(&ctx.feedback);
            quantize_top(&ecsirs_observation(h_dl, expect(&ctx.pilots), feedback)?, feedback, d)
        }
        EstimatorKind::Kp => quantize_top(h_dl, expect(&ctx.kp), d),
        EstimatorKind::Rvq2d => quantize_top(h_dl, expect(&ctx.rvq), d),
    }
}

/// SE of every estimator at every SNR for one trial: `[estimator][snr]`.
fn run_trial(config: &SweepConfig, point: &SweepPoint, ctx: &PointContext, trial: usize) -> Result<Vec<Vec<f64>>> {
    let scenario = &point.scenario;
    let d = scenario.d_streams;
    let dsce = DsceConfig {
        mmse_noise_var: point.dsce.mmse_noise_var.max(point.ul_error_var),
        ..point.dsce.clone()
    };
    let mut truth = Vec::with_capacity(scenario.k_users);
    let mut observed = Vec::with_capacity(scenario.k_users);
    let mut dl = Vec::with_capacity(scenario.k_users);
    for k in 0..scenario.k_users {
        let path = [trial as u64, k as u64];
        let clusters = draw_clusters(scenario, &mut stream(config.seed, &[path[0], path[1], tag::CHANNEL]))?;
        let pair = realize_channel_pair(&clusters, &scenario.array, scenario.m_r, scenario.ue_spacing)?;
        let h_obs = inject_ul_error(&pair.h_ul, point.ul_error_var, &mut stream(config.seed, &[path[0], path[1], tag::UL_ERROR]))?;
        truth.push(stream_rows(&pair.h_dl, d)?);
        observed.push(h_obs);
        dl.push(pair.h_dl);
    }
    let mut out = Vec::with_capacity(config.estimators.len());
    for &kind in &config.estimators {
        let rows = (0..scenario.k_users)
            .map(|k| estimate_rows(kind, &observed[k], &dl[k], d, ctx, &dsce))
            .collect::<Result<Vec<_>>>()?;
        let v = zf_precoder_or_pinv(&stack_rows(&rows)?)?;
        let se = config
            .snr_grid_db
            .iter()
            .map(|&snr_db| {
                let power = 10f64.powf(snr_db / 10.0) / d as f64;
                sum_spectral_efficiency(&user_sinr(&truth, &v, power, 1.0)?)
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(se);
    }
    Ok(out)
}

/// Runs every sweep point and reports the mean SE with its standard error.
pub fn run_sweep(config: &SweepConfig) -> Result<SeResult> {
    config.validate()?;
    let mut result = SeResult::default();
    for point in config.points()? {
        let ctx = PointContext::new(config, &point)?;
        let per_trial = (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, &point, &ctx, t))
            .collect::<Result<Vec<_>>>()?;
        let n = config.trials as f64;
        for (e, &kind) in config.estimators.iter().enumerate() {
            for (s, &snr_db) in config.snr_grid_db.iter().enumerate() {
                let mean = per_trial.iter().map(|t| t[e][s]).sum::<f64>() / n;
                let var = if config.trials > 1 {
                    per_trial.iter().map(|t| (t[e][s] - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                result.rows.push(SeRow {
                    estimator: kind,
                    sweep_var: point.label.clone(),
                    snr_db,
                    mean_se: mean,
                    stderr: (var / n).sqrt(),
                    trials: config.trials,
                });
            }
        }
    }
    Ok(result)
}
