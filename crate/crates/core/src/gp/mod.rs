//! Stationary Gaussian processes: covariances, spectral densities and
//! grid samplers.
//!
//! All processes have unit variance. The Fourier convention is
//! `S(w) = ∫ e^{iwt} R(t) dt`, so `R(0) = (1/2π) ∫ S(w) dw` and the sech
//! process has `S_y(w) = 2π sech(πw)`.

mod sampler;

pub use sampler::{sample_ou, sample_path, sample_y_alpha, PathSampler, SamplerMethod};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_panels, uniform_breaks};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovarianceKind {
    /// `sech(t/2)`.
    Y,
    /// `sech(t/2) (2e^{-|t|} - e^{-2|t|})`.
    Z,
    /// `(1 - alpha) R_y + alpha R_z`.
    Alpha { alpha: f64 },
    /// Ornstein-Uhlenbeck, `e^{-|t|/2}`.
    #[serde(rename = "ou")]
    OU,
}

impl CovarianceKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovarianceKind::Alpha { alpha } if !(0.0..=1.0).contains(&alpha) => {
                Err(Error::InvalidParameter(format!("alpha = {alpha} is outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for CovarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceKind::Y => f.write_str("y"),
            CovarianceKind::Z => f.write_str("z"),
            CovarianceKind::Alpha { alpha } => write!(f, "alpha:{alpha}"),
            CovarianceKind::OU => f.write_str("ou"),
        }
    }
}

impl FromStr for CovarianceKind {
    type Err = Error;

    /// `y`, `z`, `ou` or `alpha:<a>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "y" => CovarianceKind::Y,
            "z" => CovarianceKind::Z,
            "ou" => CovarianceKind::OU,
            other => match other.strip_prefix("alpha:") {
                Some(a) => CovarianceKind::Alpha {
                    alpha: a
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad alpha in '{s}'")))?,
                },
                None => return Err(Error::InvalidParameter(format!("unknown process '{s}'"))),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

fn sech(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

pub fn covariance(kind: CovarianceKind, tau: f64) -> f64 {
    let t = tau.abs();
    let ry = sech(t / 2.0);
    let rz = || {
        let e = (-t).exp();
        ry * (2.0 * e - e * e)
    };
    match kind {
        CovarianceKind::Y => ry,
        CovarianceKind::Z => rz(),
        CovarianceKind::Alpha { alpha } => (1.0 - alpha) * ry + alpha * rz(),
        CovarianceKind::OU => (-t / 2.0).exp(),
    }
}

/// Fourier transform of `2e^{-|t|} - e^{-2|t|}`.
fn z_factor_spectrum(w: f64) -> f64 {
    let w2 = w * w;
    12.0 / ((4.0 + w2) * (1.0 + w2))
}

fn spectral_y(w: f64) -> f64 {
    2.0 * PI * sech(PI * w)
}

// S_y is below 1e-17 outside [-13, 13]
const Z_CONV_HALF_WIDTH: f64 = 14.0;

fn spectral_z(w: f64) -> f64 {
    let conv = integrate_panels(
        |v| spectral_y(v) * z_factor_spectrum(w - v),
        &uniform_breaks(-Z_CONV_HALF_WIDTH, Z_CONV_HALF_WIDTH, 1.0),
        1e-12,
    )
    .map_or(f64::NAN, |r| r.value);
    (conv / (2.0 * PI)).max(0.0)
}

/// `S(w) = ∫ e^{iwt} R(t) dt`. `S_y` and `S_ou` are closed forms; `S_z` is
/// the convolution `(1/2π) S_y * F` evaluated by quadrature, where `F` is the
/// transform of `2e^{-|t|} - e^{-2|t|}`.
pub fn spectral_density(kind: CovarianceKind, w: f64) -> f64 {
    match kind {
        CovarianceKind::Y => spectral_y(w),
        CovarianceKind::Z => spectral_z(w),
        CovarianceKind::Alpha { alpha } => {
            let y = (1.0 - alpha) * spectral_y(w);
            if alpha == 0.0 {
                y
            } else {
                y + alpha * spectral_z(w)
            }
        }
        CovarianceKind::OU => 4.0 / (1.0 + 4.0 * w * w),
    }
}

/// Horizon beyond which every covariance here is below 1e-17.
const TAU_CUTOFF: f64 = 82.0;

/// `2 ∫_0^∞ cos(wt) R(t) dt` by quadrature, for checking the closed forms.
pub fn fourier_transform_numeric(kind: CovarianceKind, w: f64) -> Result<f64> {
    let width = if w.abs() > 1.0 { 1.0 / w.abs() } else { 1.0 };
    let r = integrate_panels(
        |t| (w * t).cos() * covariance(kind, t),
        &uniform_breaks(0.0, TAU_CUTOFF, width),
        1e-13,
    )?;
    Ok(2.0 * r.value)
}

/// `(1/2π) ∫ S(w) dw`, which must equal `R(0) = 1`.
pub fn spectral_mass(kind: CovarianceKind) -> Result<f64> {
    let half = match kind {
        CovarianceKind::OU => {
            // 1/(1+4w^2) tails are heavy: substitute w = tan(u)/2
            let r = integrate_panels(
                |u: f64| {
                    let c = u.cos();
                    if c == 0.0 {
                        return 2.0;
                    }
                    spectral_density(kind, u.tan() / 2.0) / (2.0 * c * c)
                },
                &uniform_breaks(0.0, PI / 2.0, 0.1),
                1e-12,
            )?;
            return Ok(2.0 * r.value / (2.0 * PI));
        }
        _ => integrate_panels(|w| spectral_density(kind, w), &uniform_breaks(0.0, 16.0, 0.5), 1e-12)?,
    };
    Ok(2.0 * half.value / (2.0 * PI))
}

/// How a path is checked against the level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    /// Maximum over the grid points.
    #[default]
    Grid,
    /// Continuous-time check between grid points by the Brownian-bridge
    /// crossing probability of the Lamperti time change. OU at level 0 only.
    Bridge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub kind: CovarianceKind,
    pub t_max: f64,
    pub dt: f64,
    #[serde(default)]
    pub level: f64,
    #[serde(default)]
    pub monitor: Monitor,
}

impl PathSpec {
    pub fn new(kind: CovarianceKind, t_max: f64, dt: f64) -> Self {
        Self { kind, t_max, dt, level: 0.0, monitor: Monitor::Grid }
    }

    pub fn with_level(self, level: f64) -> Self {
        Self { level, ..self }
    }

    pub fn with_monitor(self, monitor: Monitor) -> Self {
        Self { monitor, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max = {} must be positive", self.t_max)));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_max) {
            return Err(Error::InvalidParameter(format!("dt = {} must lie in (0, t_max]", self.dt)));
        }
        if !self.level.is_finite() {
            return Err(Error::InvalidParameter("level must be finite".into()));
        }
        if self.monitor == Monitor::Bridge && (self.kind != CovarianceKind::OU || self.level != 0.0) {
            return Err(Error::InvalidParameter("the bridge monitor needs the OU process at level 0".into()));
        }
        Ok(())
    }

    /// `floor(t_max / dt) + 1`, tolerant of rounding in the ratio.
    pub fn points(&self) -> usize {
        grid_index(self.t_max, self.dt) + 1
    }
}

/// Index of the last grid point at or before `t`.
pub fn grid_index(t: f64, dt: f64) -> usize {
    (t / dt * (1.0 + 1e-12)).floor() as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    pub values: Vec<f64>,
    pub dt: f64,
}

impl GridPath {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_values() {
        assert_eq!(covariance(CovarianceKind::Y, 0.0), 1.0);
        assert_eq!(covariance(CovarianceKind::Z, 0.0), 1.0);
        assert_eq!(covariance(CovarianceKind::OU, 0.0), 1.0);
        let t = 1.7;
        let a = covariance(CovarianceKind::Alpha { alpha: 0.3 }, t);
        let mix = 0.7 * covariance(CovarianceKind::Y, t) + 0.3 * covariance(CovarianceKind::Z, t);
        assert!((a - mix).abs() < 1e-15);
        assert!((covariance(CovarianceKind::Y, 3.0) - 1.0 / 1.5f64.cosh()).abs() < 1e-15);
        assert_eq!(covariance(CovarianceKind::Y, -2.0), covariance(CovarianceKind::Y, 2.0));
        assert!(covariance(CovarianceKind::Y, 2000.0) >= 0.0);
    }

    #[test]
    fn sech_dominates_ou() {
        for k in 0..=50_000 {
            let t = k as f64 * 1e-3;
            assert!(covariance(CovarianceKind::Y, t) >= covariance(CovarianceKind::OU, t));
        }
    }

    #[test]
    fn spectral_closed_forms() {
        assert!((spectral_density(CovarianceKind::Y, 0.0) - 2.0 * PI).abs() < 1e-15);
        assert!((spectral_density(CovarianceKind::Y, 1.0) - 0.5420299027988368).abs() < 1e-15);
        for w in [0.0, 0.5, 1.0, 2.0, 5.0] {
            for kind in [CovarianceKind::Y, CovarianceKind::OU] {
                let exact = spectral_density(kind, w);
                let num = fourier_transform_numeric(kind, w).unwrap();
                assert!(((num - exact) / exact).abs() < 1e-6, "{kind} w={w}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn z_spectrum_is_transform_of_rz() {
        for w in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let conv = spectral_density(CovarianceKind::Z, w);
            let num = fourier_transform_numeric(CovarianceKind::Z, w).unwrap();
            assert!(conv >= 0.0);
            assert!(((conv - num) / num).abs() < 1e-8, "w={w}: {conv} vs {num}");
        }
    }

    #[test]
    fn spectral_mass_is_unit_variance() {
        for kind in [CovarianceKind::Y, CovarianceKind::OU] {
            let m = spectral_mass(kind).unwrap();
            assert!((m - 1.0).abs() < 1e-8, "{kind}: {m}");
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("Y".parse::<CovarianceKind>().unwrap(), CovarianceKind::Y);
        assert_eq!("alpha:0.25".parse::<CovarianceKind>().unwrap(), CovarianceKind::Alpha { alpha: 0.25 });
        assert!("alpha:2".parse::<CovarianceKind>().is_err());
        assert!("w".parse::<CovarianceKind>().is_err());
        let k = CovarianceKind::Alpha { alpha: 0.5 };
        assert_eq!(k.to_string().parse::<CovarianceKind>().unwrap(), k);
    }

    #[test]
    fn path_spec_points() {
        assert_eq!(PathSpec::new(CovarianceKind::Y, 32.0, 0.01).points(), 3201);
        assert_eq!(PathSpec::new(CovarianceKind::Y, 10.0, 0.05).points(), 201);
        assert_eq!(PathSpec::new(CovarianceKind::OU, 2f64.ln(), 0.005).points(), 139);
        assert!(PathSpec::new(CovarianceKind::Y, 1.0, 2.0).validate().is_err());
        assert!(PathSpec::new(CovarianceKind::Y, 1.0, 0.1).with_monitor(Monitor::Bridge).validate().is_err());
        assert!(PathSpec::new(CovarianceKind::OU, 1.0, 0.1).with_monitor(Monitor::Bridge).validate().is_ok());
    }
}
