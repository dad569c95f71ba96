//! Uniform rectangular array geometry and its steering responses.
//!
//! Element spacings are stored in UL wavelengths. The physical spacing is
//! fixed, so on the DL carrier the same elements sit `f_dl / f_ul` DL
//! wavelengths apart; [`ArrayConfig::spacing_scale`] carries that factor
//! into every DL response.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cexpj, kron_vec, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Ul,
    Dl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_h: usize,
    pub n_v: usize,
    /// Horizontal spacing in UL wavelengths.
    pub delta_h: f64,
    /// Vertical spacing in UL wavelengths.
    pub delta_v: f64,
    pub f_ul: f64,
    pub f_dl: f64,
}

impl Default for ArrayConfig {
    /// 8 x 8 URA at half-wavelength spacing, 1.95 GHz UL with a 200 MHz gap.
    fn default() -> Self {
        Self {
            n_h: 8,
            n_v: 8,
            delta_h: 0.5,
            delta_v: 0.5,
            f_ul: 1.95e9,
            f_dl: 2.15e9,
        }
    }
}

impl ArrayConfig {
    pub fn new(n_h: usize, n_v: usize, delta: f64, f_ul: f64, f_dl: f64) -> Result<Self> {
        let cfg = Self {
            n_h,
            n_v,
            delta_h: delta,
            delta_v: delta,
            f_ul,
            f_dl,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_h == 0 || self.n_v == 0 {
            return Err(Error::invalid("array needs at least one element per axis"));
        }
        if !(self.delta_h > 0.0 && self.delta_v > 0.0) || !self.delta_h.is_finite() || !self.delta_v.is_finite() {
            return Err(Error::invalid("element spacing must be positive and finite"));
        }
        if !(self.f_ul > 0.0 && self.f_dl > 0.0) || !self.f_ul.is_finite() || !self.f_dl.is_finite() {
            return Err(Error::invalid("carrier frequencies must be positive and finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn n_t(&self) -> usize {
        self.n_h * self.n_v
    }

    /// Band gap `f_dl - f_ul` in Hz.
    #[inline]
    pub fn band_gap(&self) -> f64 {
        self.f_dl - self.f_ul
    }

    pub fn with_band_gap(mut self, omega_hz: f64) -> Self {
        self.f_dl = self.f_ul + omega_hz;
        self
    }

    #[inline]
    pub fn carrier(&self, link: Link) -> f64 {
        match link {
            Link::Ul => self.f_ul,
            Link::Dl => self.f_dl,
        }
    }

    /// Factor converting UL-wavelength spacings to wavelengths on `link`.
    #[inline]
    pub fn spacing_scale(&self, link: Link) -> f64 {
        match link {
            Link::Ul => 1.0,
            Link::Dl => self.f_dl / self.f_ul,
        }
    }
}

/// Angular coverage of the BS sector, in degrees. Azimuth and elevation are
/// measured from the array axes, so 90 degrees is broadside on both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub az_start_deg: f64,
    pub az_span_deg: f64,
    pub el_start_deg: f64,
    pub el_span_deg: f64,
}

impl Default for Sector {
    /// 120 degrees of azimuth by 90 degrees of elevation centred on broadside.
    fn default() -> Self {
        Self {
            az_start_deg: 30.0,
            az_span_deg: 120.0,
            el_start_deg: 45.0,
            el_span_deg: 90.0,
        }
    }
}

impl Sector {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.az_start_deg, self.az_span_deg, self.el_start_deg, self.el_span_deg]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.az_span_deg <= 0.0 || self.el_span_deg <= 0.0 {
            return Err(Error::invalid(format!("empty or non-finite sector {self:?}")));
        }
        Ok(())
    }

    pub fn az_end_deg(&self) -> f64 {
        self.az_start_deg + self.az_span_deg
    }

    pub fn el_end_deg(&self) -> f64 {
        self.el_start_deg + self.el_span_deg
    }

    pub fn az_center_deg(&self) -> f64 {
        self.az_start_deg + 0.5 * self.az_span_deg
    }

    pub fn el_center_deg(&self) -> f64 {
        self.el_start_deg + 0.5 * self.el_span_deg
    }

    pub fn contains(&self, az_deg: f64, el_deg: f64) -> bool {
        (self.az_start_deg..=self.az_end_deg()).contains(&az_deg)
            && (self.el_start_deg..=self.el_end_deg()).contains(&el_deg)
    }

    /// Cell-centre grid of `count` points over `[start, start + span)`.
    pub fn grid(start: f64, span: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| start + (i as f64 + 0.5) * span / count as f64)
            .collect()
    }
}

/// `cos` of an angle in degrees, exact on multiples of 90 degrees.
pub fn cos_deg(angle_deg: f64) -> f64 {
    let r = angle_deg.rem_euclid(360.0);
    if r == 0.0 {
        1.0
    } else if r == 90.0 || r == 270.0 {
        0.0
    } else if r == 180.0 {
        -1.0
    } else {
        angle_deg.to_radians().cos()
    }
}

/// Steering vector of a uniform linear axis: entry `m` is
/// `exp(-j 2π delta m cos(angle))`.
pub fn steering_vector(_axis: Axis, angle_deg: f64, n: usize, delta: f64) -> Result<CVec> {
    if !angle_deg.is_finite() {
        return Err(Error::invalid(format!("steering angle {angle_deg} is not finite")));
    }
    if n == 0 {
        return Err(Error::invalid("steering vector needs n >= 1"));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("spacing {delta} must be positive")));
    }
    let step = -2.0 * PI * delta * cos_deg(angle_deg);
    Ok(CVec::from_iterator(n, (0..n).map(|m| cexpj(step * m as f64))))
}

/// Full-dimensional response `a^h(theta) ⊗ a^v(phi)` on `link`.
pub fn fd_response(theta_deg: f64, phi_deg: f64, array: &ArrayConfig, link: Link) -> Result<CVec> {
    array.validate()?;
    let s = array.spacing_scale(link);
    let h = steering_vector(Axis::Horizontal, theta_deg, array.n_h, array.delta_h * s)?;
    let v = steering_vector(Axis::Vertical, phi_deg, array.n_v, array.delta_v * s)?;
    Ok(kron_vec(&h, &v))
}
