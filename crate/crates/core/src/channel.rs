//! Spatially-correlated FD-MIMO channel pairs.
//!
//! A [`ClusterSet`] holds the scattering geometry of one user: cluster
//! centres, per-cluster gains and, for every ray, its angular offsets,
//! UE-side arrival angle, excess delay and path phase. UL and DL channels
//! are both synthesised from that one geometry and share the cluster
//! gains. They differ only through the carrier: a ray's path phase `Φ`
//! (its electrical length on the UL carrier) becomes `Φ f / f_ul`, an
//! optional intra-cluster excess delay adds `-2π f τ`, and the element
//! spacings scale with `f / f_ul`. At zero band gap the DL channel is the
//! Hermitian transpose of the UL channel.
//!
//! Ray angles are Laplacian around their cluster centre, cluster centres
//! are uniform inside a window around the user's mean direction, cluster
//! powers decay exponentially with cluster delay. The common delay phase
//! of a cluster is part of its gain, which both links share. Powers are renormalised so that
//! `E‖H‖²_F = n_t · m_r`; the large-scale factor is recorded but not
//! applied (it is absorbed into the SNR).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{cos_deg, fd_response, ArrayConfig, Link, Sector};
use crate::error::{Error, Result};
use crate::linalg::{cexpj, CMat, CVec};

/// Delay scaling factor of the exponential cluster power profile.
const DELAY_SCALING: f64 = 2.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterModel {
    pub clusters_los: usize,
    pub clusters_nlos: usize,
    pub rays_per_cluster: usize,
    /// Laplacian scale of per-ray azimuth offsets.
    pub ray_spread_az_deg: f64,
    /// Laplacian scale of per-ray elevation offsets.
    pub ray_spread_el_deg: f64,
    /// Width of the azimuth window around the user direction holding the cluster centres.
    pub cluster_window_az_deg: f64,
    /// Width of the elevation window around the user direction holding the cluster centres.
    pub cluster_window_el_deg: f64,
    /// Laplacian scale of UE-side arrival angles around each cluster's UE direction.
    pub ue_ray_spread_deg: f64,
    pub delay_spread_ns: f64,
    /// Rays of one cluster arrive uniformly within this excess-delay window.
    pub intra_cluster_delay_ns: f64,
    pub cluster_shadowing_db: f64,
    pub los_k_factor_db: f64,
}

impl Default for ClusterModel {
    fn default() -> Self {
        Self {
            clusters_los: 12,
            clusters_nlos: 20,
            rays_per_cluster: 20,
            ray_spread_az_deg: 5.0,
            ray_spread_el_deg: 2.0,
            cluster_window_az_deg: 30.0,
            cluster_window_el_deg: 6.0,
            ue_ray_spread_deg: 10.0,
            delay_spread_ns: 100.0,
            intra_cluster_delay_ns: 1.5,
            cluster_shadowing_db: 3.0,
            los_k_factor_db: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LargeScale {
    /// Propagation constant ℓ.
    pub propagation_constant: f64,
    pub pathloss_exponent: f64,
    pub shadowing_db: f64,
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
}

impl Default for LargeScale {
    fn default() -> Self {
        Self {
            propagation_constant: 1.0,
            pathloss_exponent: 3.5,
            shadowing_db: 8.0,
            cell_radius_m: 500.0,
            min_distance_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub array: ArrayConfig,
    pub sector: Sector,
    /// UE antennas (a ULA).
    pub m_r: usize,
    /// UE element spacing in UL wavelengths.
    pub ue_spacing: f64,
    pub k_users: usize,
    pub d_streams: usize,
    pub speed_kmh: f64,
    pub los_probability: f64,
    pub large_scale: LargeScale,
    pub model: ClusterModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            array: ArrayConfig::default(),
            sector: Sector::default(),
            m_r: 2,
            ue_spacing: 0.5,
            k_users: 8,
            d_streams: 1,
            speed_kmh: 30.0,
            los_probability: 0.3,
            large_scale: LargeScale::default(),
            model: ClusterModel::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.sector.validate()?;
        if self.m_r == 0 {
            return Err(Error::invalid("m_r must be at least 1"));
        }
        if self.k_users == 0 {
            return Err(Error::invalid("k_users must be at least 1"));
        }
        if self.d_streams == 0 || self.d_streams > self.m_r {
            return Err(Error::invalid(format!(
                "d_streams = {} must be in 1..={}",
                self.d_streams, self.m_r
            )));
        }
        if self.d_streams * self.k_users > self.array.n_t() {
            return Err(Error::invalid(format!(
                "{} streams exceed the {} transmit antennas",
                self.d_streams * self.k_users,
                self.array.n_t()
            )));
        }
        if !(0.0..=1.0).contains(&self.los_probability) {
            return Err(Error::invalid("los_probability must lie in [0, 1]"));
        }
        let m = &self.model;
        if m.clusters_los == 0 || m.clusters_nlos == 0 || m.rays_per_cluster == 0 {
            return Err(Error::invalid("cluster and ray counts must be positive"));
        }
        let non_negative = [
            m.ray_spread_az_deg,
            m.ray_spread_el_deg,
            m.cluster_window_az_deg,
            m.cluster_window_el_deg,
            m.ue_ray_spread_deg,
            m.delay_spread_ns,
            m.intra_cluster_delay_ns,
            m.cluster_shadowing_db,
            self.speed_kmh,
            self.ue_spacing,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("spreads, delays, spacing and speed must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub az_offset_deg: f64,
    pub el_offset_deg: f64,
    /// Arrival angle at the UE array (measured from the UE array axis).
    pub ue_angle_deg: f64,
    /// Excess delay of the ray relative to its cluster.
    pub excess_delay_ns: f64,
    /// Path phase Φ on the UL carrier, in radians.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub delay_ns: f64,
    /// Λ: transmit power and antenna gain.
    pub constant: f64,
    /// γ: large-scale amplitude of the cluster.
    pub large_scale: f64,
    /// Υ: small-scale factor, CN(0, 1).
    pub small_scale: Complex64,
    /// g = Λ γ Υ.
    pub gain: Complex64,
    pub rays: Vec<Ray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub los: bool,
    pub sector: Sector,
    /// α = ℓ ε^(-β) μ of the user; recorded, not applied to the channel.
    pub large_scale_gain: f64,
}

impl ClusterSet {
    /// One cluster holding one ray at exactly `(az, el)`.
    pub fn single_path(az_deg: f64, el_deg: f64, gain: Complex64, ue_angle_deg: f64) -> Self {
        Self {
            clusters: vec![Cluster {
                azimuth_deg: az_deg,
                elevation_deg: el_deg,
                delay_ns: 0.0,
                constant: 1.0,
                large_scale: gain.norm(),
                small_scale: if gain.norm() > 0.0 { gain / gain.norm() } else { Complex64::new(0.0, 0.0) },
                gain,
                rays: vec![Ray {
                    az_offset_deg: 0.0,
                    el_offset_deg: 0.0,
                    ue_angle_deg,
                    excess_delay_ns: 0.0,
                    phase: 0.0,
                }],
            }],
            los: true,
            sector: Sector {
                az_start_deg: 0.0,
                az_span_deg: 180.0,
                el_start_deg: 0.0,
                el_span_deg: 180.0,
            },
            large_scale_gain: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// One joint realization of the UL (`n_t x m_r`) and DL (`m_r x n_t`) channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPair {
    pub h_ul: CMat,
    pub h_dl: CMat,
    pub clusters: ClusterSet,
    pub m_r: usize,
}

fn laplacian<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let e: f64 = Exp1.sample(rng);
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Centre of a window of `width` placed uniformly so it stays inside `[lo, hi]`.
fn window_center<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64, width: f64) -> f64 {
    let half = 0.5 * width.min(hi - lo);
    rng.random_range(lo + half..=hi - half)
}

/// Draws the scattering geometry and cluster gains of one user.
pub fn draw_clusters<R: Rng + ?Sized>(scenario: &ScenarioConfig, rng: &mut R) -> Result<ClusterSet> {
    scenario.validate()?;
    let model = &scenario.model;
    let sector = scenario.sector;
    let los = rng.random::<f64>() < scenario.los_probability;
    let c = if los { model.clusters_los } else { model.clusters_nlos };

    let ls = &scenario.large_scale;
    let r = ls.min_distance_m.max(ls.cell_radius_m * rng.random::<f64>().sqrt());
    let shadow: f64 = Normal::new(0.0, ls.shadowing_db).map_err(|e| Error::invalid(e.to_string()))?.sample(rng);
    let large_scale_gain = ls.propagation_constant * r.powf(-ls.pathloss_exponent) * 10f64.powf(shadow / 10.0);

    let az_w = model.cluster_window_az_deg.min(sector.az_span_deg);
    let el_w = model.cluster_window_el_deg.min(sector.el_span_deg);
    let user_az = window_center(rng, sector.az_start_deg, sector.az_end_deg(), az_w);
    let user_el = window_center(rng, sector.el_start_deg, sector.el_end_deg(), el_w);

    // Exponential power-delay profile with log-normal per-cluster shadowing.
    let mut delays: Vec<f64> = (0..c)
        .map(|_| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            -DELAY_SCALING * model.delay_spread_ns * u.ln()
        })
        .collect();
    delays.sort_by(f64::total_cmp);
    let d0 = delays[0];
    delays.iter_mut().for_each(|d| *d -= d0);
    let shadow_dist = Normal::new(0.0, model.cluster_shadowing_db).map_err(|e| Error::invalid(e.to_string()))?;
    let mut powers: Vec<f64> = delays
        .iter()
        .map(|&tau| {
            let decay = if model.delay_spread_ns > 0.0 {
                (-tau * (DELAY_SCALING - 1.0) / (DELAY_SCALING * model.delay_spread_ns)).exp()
            } else {
                1.0
            };
            decay * 10f64.powf(-shadow_dist.sample(rng) / 10.0)
        })
        .collect();
    if los {
        let k = 10f64.powf(model.los_k_factor_db / 10.0);
        let rest: f64 = powers[1..].iter().sum();
        powers[0] = if c > 1 { k * rest } else { 1.0 };
    }
    let total: f64 = powers.iter().sum();
    powers.iter_mut().for_each(|p| *p *= c as f64 / total);

    let mut clusters = Vec::with_capacity(c);
    for (ci, (&delay_ns, &power)) in delays.iter().zip(&powers).enumerate() {
        let azimuth_deg = (user_az + rng.random_range(-0.5..=0.5) * az_w).clamp(sector.az_start_deg, sector.az_end_deg());
        let elevation_deg = (user_el + rng.random_range(-0.5..=0.5) * el_w).clamp(sector.el_start_deg, sector.el_end_deg());
        let ue_center = rng.random_range(0.0..360.0);
        let rays = (0..model.rays_per_cluster)
            .map(|_| {
                let az = (azimuth_deg + laplacian(rng, model.ray_spread_az_deg)).clamp(sector.az_start_deg, sector.az_end_deg());
                let el = (elevation_deg + laplacian(rng, model.ray_spread_el_deg)).clamp(sector.el_start_deg, sector.el_end_deg());
                Ray {
                    az_offset_deg: az - azimuth_deg,
                    el_offset_deg: el - elevation_deg,
                    ue_angle_deg: ue_center + laplacian(rng, model.ue_ray_spread_deg),
                    excess_delay_ns: rng.random::<f64>() * model.intra_cluster_delay_ns,
                    phase: rng.random_range(0.0..2.0 * PI),
                }
            })
            .collect();
        let small_scale = if los && ci == 0 {
            cexpj(rng.random_range(0.0..2.0 * PI))
        } else {
            complex_normal(rng)
        };
        let constant = 1.0;
        let large_scale = power.sqrt();
        clusters.push(Cluster {
            azimuth_deg,
            elevation_deg,
            delay_ns,
            constant,
            large_scale,
            small_scale,
            gain: small_scale * (constant * large_scale),
            rays,
        });
    }
    Ok(ClusterSet {
        clusters,
        los,
        sector,
        large_scale_gain,
    })
}

fn ue_response(angle_deg: f64, m_r: usize, spacing: f64) -> CVec {
    let step = -2.0 * PI * spacing * cos_deg(angle_deg);
    CVec::from_iterator(m_r, (0..m_r).map(|m| cexpj(step * m as f64)))
}

/// Ray phase `Φ f / f_ul - 2π f τ` on carrier `f`, with `f τ` reduced
/// mod 1 before scaling to keep precision.
fn ray_phase(phase: f64, array: &ArrayConfig, link: Link, excess_delay_ns: f64) -> f64 {
    let f = array.carrier(link);
    let cycles = (f * excess_delay_ns * 1e-9).fract();
    phase * array.spacing_scale(link) - 2.0 * PI * cycles
}

/// Synthesises the UL/DL pair of one cluster geometry.
///
/// `h_ul = C^-1/2 Σ_c g_c Z^-1/2 Σ_z e^{jψ_ul} a_ul(θ, φ) b_ul(ϑ)ᴴ` and
/// `h_dl = C^-1/2 Σ_c g_c* Z^-1/2 Σ_z e^{-jψ_dl} b_dl(ϑ) a_dl(θ, φ)ᴴ`.
pub fn realize_channel_pair(clusters: &ClusterSet, array: &ArrayConfig, m_r: usize, ue_spacing: f64) -> Result<ChannelPair> {
    array.validate()?;
    if m_r == 0 {
        return Err(Error::invalid("m_r must be at least 1"));
    }
    if clusters.is_empty() {
        return Err(Error::invalid("cluster set is empty"));
    }
    let n_t = array.n_t();
    let mut h_ul = CMat::zeros(n_t, m_r);
    let mut h_dl = CMat::zeros(m_r, n_t);
    let c_norm = 1.0 / (clusters.len() as f64).sqrt();
    let dl_scale = array.spacing_scale(Link::Dl);
    for cl in &clusters.clusters {
        if cl.rays.is_empty() {
            return Err(Error::invalid("cluster without rays"));
        }
        let z_norm = 1.0 / (cl.rays.len() as f64).sqrt();
        let g = cl.gain * (c_norm * z_norm);
        for ray in &cl.rays {
            let az = cl.azimuth_deg + ray.az_offset_deg;
            let el = cl.elevation_deg + ray.el_offset_deg;

            let a_ul = fd_response(az, el, array, Link::Ul)?;
            let b_ul = ue_response(ray.ue_angle_deg, m_r, ue_spacing);
            let coef_ul = g * cexpj(ray_phase(ray.phase, array, Link::Ul, ray.excess_delay_ns));
            for m in 0..m_r {
                let bm = coef_ul * b_ul[m].conj();
                for n in 0..n_t {
                    h_ul[(n, m)] += a_ul[n] * bm;
                }
            }

            let a_dl = fd_response(az, el, array, Link::Dl)?;
            let b_dl = ue_response(ray.ue_angle_deg, m_r, ue_spacing * dl_scale);
            let coef_dl = g.conj() * cexpj(-ray_phase(ray.phase, array, Link::Dl, ray.excess_delay_ns));
            for m in 0..m_r {
                let bm = coef_dl * b_dl[m];
                for n in 0..n_t {
                    h_dl[(m, n)] += bm * a_dl[n].conj();
                }
            }
        }
    }
    Ok(ChannelPair {
        h_ul,
        h_dl,
        clusters: clusters.clone(),
        m_r,
    })
}

/// Draws a geometry and realises it on `scenario.array`.
pub fn draw_channel_pair<R: Rng + ?Sized>(scenario: &ScenarioConfig, rng: &mut R) -> Result<ChannelPair> {
    let clusters = draw_clusters(scenario, rng)?;
    realize_channel_pair(&clusters, &scenario.array, scenario.m_r, scenario.ue_spacing)
}

/// ζ = mean_c |g_c| / (n_t √C), the sample mean standing in for the expectation.
pub fn average_cluster_gain(clusters: &ClusterSet, n_t: usize) -> Result<f64> {
    if clusters.is_empty() {
        return Err(Error::invalid("average gain of an empty cluster set"));
    }
    if n_t == 0 {
        return Err(Error::invalid("n_t must be at least 1"));
    }
    let c = clusters.len() as f64;
    let mean = clusters.clusters.iter().map(|cl| cl.gain.norm()).sum::<f64>() / c;
    Ok(mean / (n_t as f64 * c.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_sq;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn scenario(los_probability: f64) -> ScenarioConfig {
        ScenarioConfig {
            los_probability,
            ..Default::default()
        }
    }

    #[test]
    fn cluster_counts_follow_los_state() {
        let mut rng = stream(1, &[]);
        assert_eq!(draw_clusters(&scenario(1.0), &mut rng).unwrap().len(), 12);
        assert_eq!(draw_clusters(&scenario(0.0), &mut rng).unwrap().len(), 20);
        let set = draw_clusters(&scenario(0.0), &mut rng).unwrap();
        assert!(set.clusters.iter().all(|c| c.rays.len() == 20));
    }

    #[test]
    fn draws_are_deterministic() {
        let s = ScenarioConfig::default();
        let a = draw_clusters(&s, &mut stream(42, &[3])).unwrap();
        let b = draw_clusters(&s, &mut stream(42, &[3])).unwrap();
        assert_eq!(a, b);
        let pa = realize_channel_pair(&a, &s.array, 2, 0.5).unwrap();
        let pb = realize_channel_pair(&b, &s.array, 2, 0.5).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn angles_stay_inside_the_sector() {
        let s = ScenarioConfig::default();
        let mut rng = stream(5, &[]);
        for _ in 0..50 {
            let set = draw_clusters(&s, &mut rng).unwrap();
            for c in &set.clusters {
                assert!(s.sector.contains(c.azimuth_deg, c.elevation_deg));
                for r in &c.rays {
                    assert!(s.sector.contains(c.azimuth_deg + r.az_offset_deg, c.elevation_deg + r.el_offset_deg));
                }
            }
        }
    }

    #[test]
    fn gain_decomposition_multiplies_out() {
        let set = draw_clusters(&ScenarioConfig::default(), &mut stream(9, &[])).unwrap();
        for c in &set.clusters {
            let prod = c.small_scale * (c.constant * c.large_scale);
            assert!((prod - c.gain).norm() <= 1e-15 * c.gain.norm().max(1.0));
            assert!(c.gain.norm().is_finite());
        }
    }

    #[test]
    fn table_one_shapes() {
        let s = ScenarioConfig::default();
        let pair = draw_channel_pair(&s, &mut stream(2, &[])).unwrap();
        assert_eq!(pair.h_ul.shape(), (64, 2));
        assert_eq!(pair.h_dl.shape(), (2, 64));
        assert!(pair.h_ul.iter().chain(pair.h_dl.iter()).all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn single_ray_zero_gap_is_hermitian_reciprocal() {
        let array = ArrayConfig::new(4, 2, 0.5, 2e9, 2e9).unwrap();
        let set = ClusterSet::single_path(63.0, 101.0, Complex64::new(0.3, -1.1), 40.0);
        let pair = realize_channel_pair(&set, &array, 1, 0.5).unwrap();
        let diff = &pair.h_dl - pair.h_ul.adjoint();
        assert!(frobenius_sq(&diff) < 1e-24);
    }

    #[test]
    fn zero_gap_full_model_is_hermitian_reciprocal() {
        let mut s = ScenarioConfig::default();
        s.array = s.array.with_band_gap(0.0);
        for seed in 0..5 {
            let pair = draw_channel_pair(&s, &mut stream(seed, &[])).unwrap();
            let diff = &pair.h_dl - pair.h_ul.adjoint();
            assert!(frobenius_sq(&diff) <= 1e-24 * frobenius_sq(&pair.h_dl));
        }
    }

    #[test]
    fn band_gap_changes_the_dl_channel() {
        let s = ScenarioConfig::default();
        let pair = draw_channel_pair(&s, &mut stream(11, &[])).unwrap();
        let diff = &pair.h_dl - pair.h_ul.adjoint();
        assert!(frobenius_sq(&diff) > 1e-3 * frobenius_sq(&pair.h_dl));
    }

    #[test]
    fn average_gain_examples() {
        let g0 = 0.8;
        let mut set = ClusterSet::single_path(90.0, 90.0, Complex64::new(g0, 0.0), 90.0);
        let proto = set.clusters[0].clone();
        set.clusters = vec![proto; 4];
        assert_relative_eq!(average_cluster_gain(&set, 1).unwrap(), g0 / 2.0, epsilon = 1e-15);

        let zero = ClusterSet::single_path(90.0, 90.0, Complex64::new(0.0, 0.0), 90.0);
        assert_eq!(average_cluster_gain(&zero, 1).unwrap(), 0.0);

        let mut empty = zero.clone();
        empty.clusters.clear();
        assert!(average_cluster_gain(&empty, 1).is_err());
    }

    #[test]
    fn average_gain_matches_direct_sum() {
        let set = draw_clusters(&ScenarioConfig::default(), &mut stream(77, &[])).unwrap();
        let mut total = 0.0;
        for c in &set.clusters {
            total += (c.gain.re * c.gain.re + c.gain.im * c.gain.im).sqrt();
        }
        let c = set.clusters.len() as f64;
        let direct = total / c / (64.0 * c.sqrt());
        assert_relative_eq!(average_cluster_gain(&set, 64).unwrap(), direct, max_relative = 1e-12);
    }

    #[test]
    fn mean_channel_power_is_antenna_count() {
        let s = ScenarioConfig {
            array: ArrayConfig::new(4, 4, 0.5, 1.95e9, 2.15e9).unwrap(),
            ..Default::default()
        };
        let trials = 10_000;
        let (mut ul, mut dl) = (0.0, 0.0);
        for t in 0..trials {
            let pair = draw_channel_pair(&s, &mut stream(5, &[t])).unwrap();
            ul += frobenius_sq(&pair.h_ul);
            dl += frobenius_sq(&pair.h_dl);
        }
        let expected = (16 * 2) as f64;
        assert_relative_eq!(ul / trials as f64, expected, max_relative = 0.02);
        assert_relative_eq!(dl / trials as f64, expected, max_relative = 0.02);
    }
}
