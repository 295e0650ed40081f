//! Uniform linear array model and steering-vector dictionary.
//!
//! Angles are degrees at every API boundary; radians appear only inside the
//! trig evaluation. Steering derivatives are taken per degree so that bounds
//! built from them come out in deg² and compare directly to RMSE in degrees.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Uniform linear array: `n_sensors` elements spaced `spacing_wavelengths`
/// apart (in units of the carrier wavelength).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub n_sensors: usize,
    pub spacing_wavelengths: f64,
}

impl ArrayGeometry {
    /// Half-wavelength ULA with `n_sensors` elements.
    #[must_use]
    pub fn half_wavelength(n_sensors: usize) -> Self {
        Self {
            n_sensors,
            spacing_wavelengths: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sensors < 2 {
            return Err(Error::InvalidParameter {
                name: "n_sensors",
                reason: format!("need at least 2 sensors, got {}", self.n_sensors),
            });
        }
        if !(self.spacing_wavelengths > 0.0) {
            return Err(Error::InvalidParameter {
                name: "spacing_wavelengths",
                reason: format!("must be positive, got {}", self.spacing_wavelengths),
            });
        }
        Ok(())
    }
}

/// Steering vector a(θ): element n (0-based) is `exp(-j·n·2π·spacing·sin θ)`.
///
/// Every entry has unit modulus, so ‖a(θ)‖² = N exactly.
pub fn steering_vector(geometry: &ArrayGeometry, theta_degrees: f64) -> Result<DVector<Complex64>> {
    geometry.validate()?;
    check_angle(theta_degrees)?;
    let phase_rate = -2.0 * std::f64::consts::PI
        * geometry.spacing_wavelengths
        * theta_degrees.to_radians().sin();
    Ok(DVector::from_fn(geometry.n_sensors, |n, _| {
        Complex64::from_polar(1.0, phase_rate * n as f64)
    }))
}

/// Derivative of the steering vector with respect to θ *in degrees*:
/// element n is `-j·n·2π·spacing·cos θ·(π/180)·a_n(θ)`.
pub fn steering_derivative(
    geometry: &ArrayGeometry,
    theta_degrees: f64,
) -> Result<DVector<Complex64>> {
    let a = steering_vector(geometry, theta_degrees)?;
    let scale = -2.0 * std::f64::consts::PI
        * geometry.spacing_wavelengths
        * theta_degrees.to_radians().cos()
        * std::f64::consts::PI
        / 180.0;
    Ok(DVector::from_fn(geometry.n_sensors, |n, _| {
        Complex64::new(0.0, scale * n as f64) * a[n]
    }))
}

/// Steering matrix sampled on a uniform angular grid from −90° to +90°.
///
/// Grid point m (0-based) sits at `-90 + m·δ` with `δ = 180/(M−1)`. Columns
/// are the steering vectors, stored column-major so per-DOA inner products in
/// the estimator's hot loop stay contiguous.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub geometry: ArrayGeometry,
    pub grid_degrees: Vec<f64>,
    pub steering: DMatrix<Complex64>,
}

impl Dictionary {
    pub fn m_points(&self) -> usize {
        self.grid_degrees.len()
    }

    /// Grid step δ in degrees.
    pub fn step_degrees(&self) -> f64 {
        180.0 / (self.m_points() - 1) as f64
    }

    /// Column m as a view, without copying.
    pub fn column(&self, m: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.steering.column(m)
    }
}

/// Build the dictionary with `m_points` grid points spanning [−90°, +90°].
pub fn build_dictionary(geometry: &ArrayGeometry, m_points: usize) -> Result<Dictionary> {
    geometry.validate()?;
    if m_points < 2 {
        return Err(Error::GridTooSmall(m_points));
    }
    let delta = 180.0 / (m_points - 1) as f64;
    let grid_degrees: Vec<f64> = (0..m_points).map(|m| -90.0 + m as f64 * delta).collect();
    let mut steering = DMatrix::zeros(geometry.n_sensors, m_points);
    for (m, &theta) in grid_degrees.iter().enumerate() {
        steering.set_column(m, &steering_vector(geometry, theta)?);
    }
    Ok(Dictionary {
        geometry: *geometry,
        grid_degrees,
        steering,
    })
}

fn check_angle(theta_degrees: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&theta_degrees) || theta_degrees.is_nan() {
        return Err(Error::AngleOutOfRange(theta_degrees));
    }
    Ok(())
}
