//! Uniform linear array geometry, field-region boundaries, and steering-vector
//! models (exact spherical, Fresnel quadratic, far-field planar).
//!
//! All steering vectors are phase-normalized so the entry at the geometry's
//! phase-reference element is exactly `1 + 0j`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{NfError, Result};

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;

/// Uniform linear array description. Spacing and wavelength are in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    num_elements: usize,
    spacing: f64,
    carrier_freq: f64,
    wavelength: f64,
    phase_reference: usize,
}

impl ArrayGeometry {
    /// Geometry from carrier frequency; wavelength derived as `C0 / f_c`.
    pub fn new(num_elements: usize, spacing: f64, carrier_freq: f64) -> Result<Self> {
        if carrier_freq <= 0.0 || !carrier_freq.is_finite() {
            return Err(NfError::InvalidGeometry(format!(
                "carrier frequency must be positive, got {carrier_freq}"
            )));
        }
        Self::from_wavelength(num_elements, spacing, C0 / carrier_freq)
    }

    /// Geometry from an exact wavelength; carrier derived as `C0 / lambda`.
    pub fn from_wavelength(num_elements: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        if num_elements < 2 {
            return Err(NfError::InvalidGeometry(format!(
                "need at least 2 elements, got {num_elements}"
            )));
        }
        if spacing <= 0.0 || !spacing.is_finite() {
            return Err(NfError::InvalidGeometry(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if wavelength <= 0.0 || !wavelength.is_finite() {
            return Err(NfError::InvalidGeometry(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        Ok(Self {
            num_elements,
            spacing,
            carrier_freq: C0 / wavelength,
            wavelength,
            phase_reference: 0,
        })
    }

    /// Symmetric array with `2 * n_bar + 1` elements, phase reference at the
    /// center element. Required by the cumulant and polar-domain methods.
    pub fn symmetric(n_bar: usize, spacing: f64, carrier_freq: f64) -> Result<Self> {
        if n_bar == 0 {
            return Err(NfError::InvalidGeometry(
                "symmetric array needs n_bar >= 1".into(),
            ));
        }
        let mut g = Self::new(2 * n_bar + 1, spacing, carrier_freq)?;
        g.phase_reference = n_bar;
        Ok(g)
    }

    /// Same geometry with the phase reference moved to `index`.
    pub fn with_phase_reference(mut self, index: usize) -> Result<Self> {
        if index >= self.num_elements {
            return Err(NfError::InvalidGeometry(format!(
                "phase reference {index} out of range for {} elements",
                self.num_elements
            )));
        }
        self.phase_reference = index;
        Ok(self)
    }

    /// Phase reference at `floor((N-1)/2)`; the exact center for odd N.
    pub fn with_center_reference(self) -> Self {
        let c = (self.num_elements - 1) / 2;
        self.with_phase_reference(c).expect("center index in range")
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn carrier_freq(&self) -> f64 {
        self.carrier_freq
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn phase_reference(&self) -> usize {
        self.phase_reference
    }

    /// Aperture `D = (N - 1) d`.
    pub fn aperture(&self) -> f64 {
        (self.num_elements as f64 - 1.0) * self.spacing
    }

    /// Signed element offset from the phase reference, in element counts.
    pub fn offset(&self, element: usize) -> f64 {
        element as f64 - self.phase_reference as f64
    }

    /// True when the array is odd-length with the exact center as reference.
    pub fn is_center_referenced(&self) -> bool {
        self.num_elements % 2 == 1 && self.phase_reference == self.num_elements / 2
    }
}

/// Field region of a propagation distance relative to an array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRegion {
    ReactiveNf,
    RadiativeNf,
    FarField,
}

/// Closed-form field-region boundary distances, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionBoundaries {
    /// End of the reactive near field: `0.62 sqrt(D^3 / lambda)`.
    pub reactive_limit: f64,
    /// Fraunhofer distance `2 D^2 / lambda`; start of the far field.
    pub fraunhofer: f64,
    /// Single-antenna reactive scale `lambda / pi` (informational).
    pub antenna_reactive_inner: f64,
}

/// Field-region boundaries for a geometry.
pub fn region_boundaries(geometry: &ArrayGeometry) -> RegionBoundaries {
    let d = geometry.aperture();
    let lambda = geometry.wavelength();
    RegionBoundaries {
        reactive_limit: 0.62 * (d.powi(3) / lambda).sqrt(),
        fraunhofer: 2.0 * d * d / lambda,
        antenna_reactive_inner: lambda / PI,
    }
}

/// Classify a range against the geometry's region boundaries.
pub fn classify_range(geometry: &ArrayGeometry, r: f64) -> Result<FieldRegion> {
    if !(r > 0.0) {
        return Err(NfError::Domain(format!("range must be positive, got {r}")));
    }
    let b = region_boundaries(geometry);
    if r <= b.reactive_limit {
        Ok(FieldRegion::ReactiveNf)
    } else if r <= b.fraunhofer {
        Ok(FieldRegion::RadiativeNf)
    } else {
        Ok(FieldRegion::FarField)
    }
}

/// Wavefront model used to build a steering vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteeringModel {
    /// Per-element spherical distances, no truncation.
    ExactSpherical,
    /// Quadratic phase `omega n + kappa n^2` with
    /// `omega = 2 pi d sin(theta) / lambda`, `kappa = -pi d^2 cos^2(theta) / (lambda r)`.
    FresnelQuadratic,
    /// Planar phase `omega n`; range-independent.
    FarFieldPlanar,
}

/// Electrical angle `omega = 2 pi d sin(theta) / lambda`.
pub fn electrical_angle(geometry: &ArrayGeometry, theta: f64) -> f64 {
    2.0 * PI * geometry.spacing() * theta.sin() / geometry.wavelength()
}

/// Quadratic phase coefficient `kappa = -pi d^2 cos^2(theta) / (lambda r)`.
pub fn quadratic_phase(geometry: &ArrayGeometry, theta: f64, r: f64) -> f64 {
    let d = geometry.spacing();
    let c = theta.cos();
    -PI * d * d * c * c / (geometry.wavelength() * r)
}

fn check_theta(theta: f64) -> Result<()> {
    if !theta.is_finite() || theta.abs() > PI / 2.0 + 1e-12 {
        return Err(NfError::Domain(format!(
            "theta must satisfy |theta| <= pi/2, got {theta}"
        )));
    }
    Ok(())
}

/// Steering vector of length N for a source at `(theta, r)`.
///
/// `r` may be `f64::INFINITY` only with [`SteeringModel::FarFieldPlanar`];
/// the range-dependent models require a finite positive range.
pub fn steering(
    geometry: &ArrayGeometry,
    theta: f64,
    r: f64,
    model: SteeringModel,
) -> Result<DVector<Complex64>> {
    check_theta(theta)?;
    let n = geometry.num_elements();
    let mut v = DVector::from_element(n, Complex64::new(1.0, 0.0));
    match model {
        SteeringModel::FarFieldPlanar => {
            if !(r > 0.0) {
                return Err(NfError::Domain(format!("range must be positive, got {r}")));
            }
            let omega = electrical_angle(geometry, theta);
            for i in 0..n {
                let m = geometry.offset(i);
                v[i] = Complex64::from_polar(1.0, omega * m);
            }
        }
        SteeringModel::FresnelQuadratic => {
            if !r.is_finite() || r <= 0.0 {
                return Err(NfError::Domain(format!(
                    "FresnelQuadratic requires finite positive range, got {r}"
                )));
            }
            let omega = electrical_angle(geometry, theta);
            let kappa = quadratic_phase(geometry, theta, r);
            for i in 0..n {
                let m = geometry.offset(i);
                v[i] = Complex64::from_polar(1.0, omega * m + kappa * m * m);
            }
        }
        SteeringModel::ExactSpherical => {
            if !r.is_finite() || r <= 0.0 {
                return Err(NfError::Domain(format!(
                    "ExactSpherical requires finite positive range, got {r}"
                )));
            }
            let d = geometry.spacing();
            let lambda = geometry.wavelength();
            let sin_t = theta.sin();
            for i in 0..n {
                let m = geometry.offset(i);
                let x = m * d;
                // r_m - r in cancellation-free form: (x^2 - 2 r x sin t) / (r_m + r)
                let rm = (r * r + x * x - 2.0 * r * x * sin_t).sqrt();
                let diff = (x * x - 2.0 * r * x * sin_t) / (rm + r);
                v[i] = Complex64::from_polar(1.0, -2.0 * PI * diff / lambda);
            }
        }
    }
    Ok(v)
}

/// Per-range MSE between the exact spherical and planar steering models:
/// `mse(r) = (1/N) || a_exact(theta, r) - a_ff(theta) ||^2`.
pub fn wavefront_mismatch_mse(
    geometry: &ArrayGeometry,
    theta: f64,
    r_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if r_grid.is_empty() {
        return Err(NfError::Domain("empty range grid".into()));
    }
    check_theta(theta)?;
    let a_ff = steering(geometry, theta, f64::INFINITY, SteeringModel::FarFieldPlanar)?;
    let n = geometry.num_elements() as f64;
    let mut out = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let a_ex = steering(geometry, theta, r, SteeringModel::ExactSpherical)?;
        let mse = (&a_ex - &a_ff).norm_squared() / n;
        out.push((r, mse));
    }
    Ok(out)
}
