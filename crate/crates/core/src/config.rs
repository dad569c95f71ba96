//! Flat TOML experiment configuration.
//!
//! Every key is optional. Absent keys take the defaults of the selected
//! preset, which in turn only differ from the base defaults in the sweep
//! axis, the stream count and the estimator list.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::{ArrayConfig, Sector};
use crate::channel::{ClusterModel, LargeScale, ScenarioConfig};
use crate::dsce::{DsceConfig, RotationMode};
use crate::error::{Error, Result};
use crate::presets::Preset;
use crate::sweep::{BaselineConfig, EstimatorKind, SweepConfig, SweepVariable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    #[default]
    None,
    Q,
    U,
    UlErrorVar,
    ArraySize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub out_dir: String,
    pub seed: u64,
    pub trials: usize,
    pub snr_grid_db: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,

    pub n_h: usize,
    pub n_v: usize,
    pub delta_h: f64,
    pub delta_v: f64,
    pub f_ul_hz: f64,
    pub f_dl_hz: f64,

    pub az_start_deg: f64,
    pub az_span_deg: f64,
    pub el_start_deg: f64,
    pub el_span_deg: f64,

    pub m_r: usize,
    pub ue_spacing: f64,
    pub k_users: usize,
    pub d_streams: usize,
    pub speed_kmh: f64,
    pub los_probability: f64,
    pub propagation_constant: f64,
    pub pathloss_exponent: f64,
    pub shadowing_db: f64,
    pub cell_radius_m: f64,
    pub min_distance_m: f64,

    pub clusters_los: usize,
    pub clusters_nlos: usize,
    pub rays_per_cluster: usize,
    pub ray_spread_az_deg: f64,
    pub ray_spread_el_deg: f64,
    pub cluster_window_az_deg: f64,
    pub cluster_window_el_deg: f64,
    pub ue_ray_spread_deg: f64,
    pub delay_spread_ns: f64,
    pub intra_cluster_delay_ns: f64,
    pub cluster_shadowing_db: f64,
    pub los_k_factor_db: f64,

    pub q: usize,
    pub u: usize,
    pub rotation_mode: RotationMode,
    pub mmse_noise_var: f64,
    /// Capon diagonal loading; `None` scales it to the channel power.
    pub capon_loading: Option<f64>,

    pub ecsirs_pilot_u: usize,
    pub ecsirs_feedback_q: usize,
    pub ecsirs_feedback_u: usize,
    pub kp_azimuth_words: usize,
    pub kp_elevations: usize,
    pub rvq_bits: u32,

    pub ul_error_var: f64,
    pub sweep: SweepKind,
    pub sweep_q: Vec<usize>,
    pub sweep_u: Vec<usize>,
    pub sweep_ul_error_var: Vec<f64>,
    /// Array sizes written as `"<n_h>x<n_v>"`.
    pub sweep_arrays: Vec<String>,
    /// Band gaps of the correlation experiment.
    pub omegas_hz: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        let s = &sweep.scenario;
        let (a, sec, ls, m) = (&s.array, &s.sector, &s.large_scale, &s.model);
        let (d, b) = (&sweep.dsce, &sweep.baselines);
        Self {
            preset: Preset::Custom,
            out_dir: "out".into(),
            seed: sweep.seed,
            trials: sweep.trials,
            snr_grid_db: sweep.snr_grid_db.clone(),
            estimators: sweep.estimators.clone(),
            n_h: a.n_h,
            n_v: a.n_v,
            delta_h: a.delta_h,
            delta_v: a.delta_v,
            f_ul_hz: a.f_ul,
            f_dl_hz: a.f_dl,
            az_start_deg: sec.az_start_deg,
            az_span_deg: sec.az_span_deg,
            el_start_deg: sec.el_start_deg,
            el_span_deg: sec.el_span_deg,
            m_r: s.m_r,
            ue_spacing: s.ue_spacing,
            k_users: s.k_users,
            d_streams: s.d_streams,
            speed_kmh: s.speed_kmh,
            los_probability: s.los_probability,
            propagation_constant: ls.propagation_constant,
            pathloss_exponent: ls.pathloss_exponent,
            shadowing_db: ls.shadowing_db,
            cell_radius_m: ls.cell_radius_m,
            min_distance_m: ls.min_distance_m,
            clusters_los: m.clusters_los,
            clusters_nlos: m.clusters_nlos,
            rays_per_cluster: m.rays_per_cluster,
            ray_spread_az_deg: m.ray_spread_az_deg,
            ray_spread_el_deg: m.ray_spread_el_deg,
            cluster_window_az_deg: m.cluster_window_az_deg,
            cluster_window_el_deg: m.cluster_window_el_deg,
            ue_ray_spread_deg: m.ue_ray_spread_deg,
            delay_spread_ns: m.delay_spread_ns,
            intra_cluster_delay_ns: m.intra_cluster_delay_ns,
            cluster_shadowing_db: m.cluster_shadowing_db,
            los_k_factor_db: m.los_k_factor_db,
            q: d.q,
            u: d.u,
            rotation_mode: d.rotation_mode,
            mmse_noise_var: d.mmse_noise_var,
            capon_loading: d.capon_loading,
            ecsirs_pilot_u: b.ecsirs_pilot_u,
            ecsirs_feedback_q: b.ecsirs_feedback_q,
            ecsirs_feedback_u: b.ecsirs_feedback_u,
            kp_azimuth_words: b.kp_azimuth_words,
            kp_elevations: b.kp_elevations,
            rvq_bits: b.rvq_bits,
            ul_error_var: sweep.ul_error_var,
            sweep: SweepKind::None,
            sweep_q: vec![16, 32, 64, 120],
            sweep_u: vec![1, 2, 4, 8],
            sweep_ul_error_var: vec![0.0, 0.1, 0.2, 0.3],
            sweep_arrays: vec!["8x8".into(), "4x8".into(), "4x4".into()],
            omegas_hz: vec![100e6, 200e6, 400e6],
        }
    }
}

impl ExperimentConfig {
    /// Defaults of a preset: the base defaults with the preset's experiment
    /// shape applied.
    pub fn for_preset(preset: Preset) -> Self {
        let mut c = Self { preset, ..Self::default() };
        let dsce_only = vec![EstimatorKind::Perfect, EstimatorKind::Dsce];
        match preset {
            Preset::Custom | Preset::Fig2 => {}
            Preset::Fig5 => {
                c.d_streams = 2;
                c.k_users = 4;
                c.sweep = SweepKind::ArraySize;
                c.estimators = dsce_only;
            }
            Preset::Fig6 => {
                c.d_streams = 1;
                c.estimators = EstimatorKind::ALL.to_vec();
            }
            Preset::Fig7 => {
                c.sweep = SweepKind::UlErrorVar;
                c.estimators = dsce_only;
            }
            Preset::Fig8 => {
                c.sweep = SweepKind::Q;
                c.estimators = vec![EstimatorKind::Dsce];
            }
            Preset::Fig9 => {
                c.sweep = SweepKind::U;
                c.estimators = vec![EstimatorKind::Dsce];
            }
        }
        c
    }

    /// Checks every constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("trials", self.trials),
            ("n_h", self.n_h),
            ("n_v", self.n_v),
            ("m_r", self.m_r),
            ("k_users", self.k_users),
            ("d_streams", self.d_streams),
            ("clusters_los", self.clusters_los),
            ("clusters_nlos", self.clusters_nlos),
            ("rays_per_cluster", self.rays_per_cluster),
            ("q", self.q),
            ("u", self.u),
            ("ecsirs_pilot_u", self.ecsirs_pilot_u),
            ("ecsirs_feedback_q", self.ecsirs_feedback_q),
            ("ecsirs_feedback_u", self.ecsirs_feedback_u),
            ("kp_azimuth_words", self.kp_azimuth_words),
            ("kp_elevations", self.kp_elevations),
        ];
        for (key, v) in positive_counts {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.rvq_bits == 0 || self.rvq_bits > 20 {
            return Err(Error::config("rvq_bits", "must lie in 1..=20"));
        }
        let positive = [
            ("delta_h", self.delta_h),
            ("delta_v", self.delta_v),
            ("f_ul_hz", self.f_ul_hz),
            ("f_dl_hz", self.f_dl_hz),
            ("az_span_deg", self.az_span_deg),
            ("el_span_deg", self.el_span_deg),
            ("propagation_constant", self.propagation_constant),
            ("cell_radius_m", self.cell_radius_m),
            ("min_distance_m", self.min_distance_m),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("must be positive and finite, got {v}")));
            }
        }
        let non_negative = [
            ("ue_spacing", self.ue_spacing),
            ("speed_kmh", self.speed_kmh),
            ("pathloss_exponent", self.pathloss_exponent),
            ("shadowing_db", self.shadowing_db),
            ("ray_spread_az_deg", self.ray_spread_az_deg),
            ("ray_spread_el_deg", self.ray_spread_el_deg),
            ("cluster_window_az_deg", self.cluster_window_az_deg),
            ("cluster_window_el_deg", self.cluster_window_el_deg),
            ("ue_ray_spread_deg", self.ue_ray_spread_deg),
            ("delay_spread_ns", self.delay_spread_ns),
            ("intra_cluster_delay_ns", self.intra_cluster_delay_ns),
            ("cluster_shadowing_db", self.cluster_shadowing_db),
            ("mmse_noise_var", self.mmse_noise_var),
            ("ul_error_var", self.ul_error_var),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("must be non-negative and finite, got {v}")));
            }
        }
        if !self.los_k_factor_db.is_finite() {
            return Err(Error::config("los_k_factor_db", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.los_probability) {
            return Err(Error::config("los_probability", "must lie in [0, 1]"));
        }
        if self.min_distance_m >= self.cell_radius_m {
            return Err(Error::config("min_distance_m", "must be smaller than cell_radius_m"));
        }
        if let Some(l) = self.capon_loading {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::config("capon_loading", "must be non-negative and finite"));
            }
        }
        if self.d_streams > self.m_r {
            return Err(Error::config("d_streams", format!("must not exceed m_r = {}", self.m_r)));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("snr_grid_db", "must be a non-empty list of finite values"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("estimators", "must name at least one estimator"));
        }
        if self.omegas_hz.is_empty() || self.omegas_hz.iter().any(|o| !(*o >= 0.0) || !o.is_finite()) {
            return Err(Error::config("omegas_hz", "must be a non-empty list of non-negative values"));
        }
        if self.sweep_q.contains(&0) {
            return Err(Error::config("sweep_q", "values must be at least 1"));
        }
        if self.sweep_u.contains(&0) {
            return Err(Error::config("sweep_u", "values must be at least 1"));
        }
        if self.sweep_ul_error_var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("sweep_ul_error_var", "values must be non-negative and finite"));
        }
        let arrays = self.parsed_arrays()?;
        let active_empty = match self.sweep {
            SweepKind::None => false,
            SweepKind::Q => self.sweep_q.is_empty(),
            SweepKind::U => self.sweep_u.is_empty(),
            SweepKind::UlErrorVar => self.sweep_ul_error_var.is_empty(),
            SweepKind::ArraySize => arrays.is_empty(),
        };
        if active_empty {
            return Err(Error::config(self.sweep_key(), "the active sweep needs at least one value"));
        }
        let streams = self.d_streams * self.k_users;
        let smallest = match self.sweep {
            SweepKind::ArraySize => arrays.iter().map(|(h, v)| h * v).min().unwrap_or(0),
            _ => self.n_h * self.n_v,
        };
        if streams > smallest {
            return Err(Error::config(
                "k_users",
                format!("{streams} streams exceed the {smallest} transmit antennas"),
            ));
        }
        self.sweep_config()?.validate().map_err(|e| Error::config("config", e.to_string()))
    }

    fn sweep_key(&self) -> &'static str {
        match self.sweep {
            SweepKind::None => "sweep",
            SweepKind::Q => "sweep_q",
            SweepKind::U => "sweep_u",
            SweepKind::UlErrorVar => "sweep_ul_error_var",
            SweepKind::ArraySize => "sweep_arrays",
        }
    }

    fn parsed_arrays(&self) -> Result<Vec<(usize, usize)>> {
        self.sweep_arrays
            .iter()
            .map(|s| {
                let parsed = s
                    .split_once('x')
                    .and_then(|(h, v)| Some((h.trim().parse::<usize>().ok()?, v.trim().parse::<usize>().ok()?)));
                match parsed {
                    Some((h, v)) if h > 0 && v > 0 => Ok((h, v)),
                    _ => Err(Error::config("sweep_arrays", format!("`{s}` is not of the form <n_h>x<n_v>"))),
                }
            })
            .collect()
    }

    pub fn array(&self) -> ArrayConfig {
        ArrayConfig {
            n_h: self.n_h,
            n_v: self.n_v,
            delta_h: self.delta_h,
            delta_v: self.delta_v,
            f_ul: self.f_ul_hz,
            f_dl: self.f_dl_hz,
        }
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            array: self.array(),
            sector: Sector {
                az_start_deg: self.az_start_deg,
                az_span_deg: self.az_span_deg,
                el_start_deg: self.el_start_deg,
                el_span_deg: self.el_span_deg,
            },
            m_r: self.m_r,
            ue_spacing: self.ue_spacing,
            k_users: self.k_users,
            d_streams: self.d_streams,
            speed_kmh: self.speed_kmh,
            los_probability: self.los_probability,
            large_scale: LargeScale {
                propagation_constant: self.propagation_constant,
                pathloss_exponent: self.pathloss_exponent,
                shadowing_db: self.shadowing_db,
                cell_radius_m: self.cell_radius_m,
                min_distance_m: self.min_distance_m,
            },
            model: ClusterModel {
                clusters_los: self.clusters_los,
                clusters_nlos: self.clusters_nlos,
                rays_per_cluster: self.rays_per_cluster,
                ray_spread_az_deg: self.ray_spread_az_deg,
                ray_spread_el_deg: self.ray_spread_el_deg,
                cluster_window_az_deg: self.cluster_window_az_deg,
                cluster_window_el_deg: self.cluster_window_el_deg,
                ue_ray_spread_deg: self.ue_ray_spread_deg,
                delay_spread_ns: self.delay_spread_ns,
                intra_cluster_delay_ns: self.intra_cluster_delay_ns,
                cluster_shadowing_db: self.cluster_shadowing_db,
                los_k_factor_db: self.los_k_factor_db,
            },
        }
    }

    pub fn dsce(&self) -> DsceConfig {
        DsceConfig {
            q: self.q,
            u: self.u,
            rotation_mode: self.rotation_mode,
            mmse_noise_var: self.mmse_noise_var,
            capon_loading: self.capon_loading,
        }
    }

    pub fn baselines(&self) -> BaselineConfig {
        BaselineConfig {
            ecsirs_pilot_u: self.ecsirs_pilot_u,
            ecsirs_feedback_q: self.ecsirs_feedback_q,
            ecsirs_feedback_u: self.ecsirs_feedback_u,
            kp_azimuth_words: self.kp_azimuth_words,
            kp_elevations: self.kp_elevations,
            rvq_bits: self.rvq_bits,
        }
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let sweep = match self.sweep {
            SweepKind::None => SweepVariable::None,
            SweepKind::Q => SweepVariable::Q(self.sweep_q.clone()),
            SweepKind::U => SweepVariable::U(self.sweep_u.clone()),
            SweepKind::UlErrorVar => SweepVariable::UlErrorVar(self.sweep_ul_error_var.clone()),
            SweepKind::ArraySize => SweepVariable::ArraySize(self.parsed_arrays()?),
        };
        Ok(SweepConfig {
            scenario: self.scenario(),
            dsce: self.dsce(),
            baselines: self.baselines(),
            estimators: self.estimators.clone(),
            snr_grid_db: self.snr_grid_db.clone(),
            trials: self.trials,
            seed: self.seed,
            sweep,
            ul_error_var: self.ul_error_var,
        })
    }

    /// Canonical TOML: every key, in declaration order.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// SHA-256 of the canonical TOML, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Parses a config. The preset is taken from `preset_override`, else from
/// the `preset` key, else `custom`; its defaults fill absent keys.
pub fn parse_config(text: &str, preset_override: Option<Preset>) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("syntax", e.message().to_string()))?;
    let preset = match preset_override {
        Some(p) => p,
        None => match table.get("preset") {
            None => Preset::Custom,
            Some(toml::Value::String(s)) => s.parse().map_err(|_| Error::config("preset", format!("unknown preset `{s}`")))?,
            Some(other) => return Err(Error::config("preset", format!("expected a string, got {}", other.type_str()))),
        },
    };
    table.insert("preset".into(), toml::Value::String(preset.name().into()));

    let defaults = ExperimentConfig::for_preset(preset);
    let base = toml::Table::try_from(&defaults).map_err(|e| Error::config("config", e.to_string()))?;
    let merge = |extra: &mut dyn Iterator<Item = (&String, &toml::Value)>| -> std::result::Result<ExperimentConfig, toml::de::Error> {
        let mut merged = base.clone();
        for (k, v) in extra {
            merged.insert(k.clone(), v.clone());
        }
        merged.try_into()
    };
    let config = match merge(&mut table.iter()) {
        Ok(c) => c,
        Err(full) => {
            // Retry one key at a time to name the key at fault.
            for (key, value) in &table {
                if !base.contains_key(key) && key != "capon_loading" {
                    return Err(Error::config(key.clone(), "unknown key"));
                }
                if let Err(e) = merge(&mut std::iter::once((key, value))) {
                    return Err(Error::config(key.clone(), e.message().to_string()));
                }
            }
            return Err(Error::config("config", full.message().to_string()));
        }
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &std::path::Path, preset_override: Option<Preset>) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?, preset_override)
}
