//! Wideband near-field beam squint: per-subcarrier steering, closed-form
//! peak deviations in sine-space angle and range, and beampattern maps.
//!
//! A beamformer matched to `(vartheta, r)` at the carrier `f_c` peaks, at
//! subcarrier `f_m`, where the per-element phases realign:
//! `f_m vartheta_bar = f_c vartheta` for the linear term and
//! `f_m (1 - vartheta_bar^2) / r_bar = f_c (1 - vartheta^2) / r` for the
//! quadratic term. With `eta = f_c / f_m` this gives
//! `vartheta_bar = eta vartheta` and
//! `r_bar = (1 - eta^2 vartheta^2) / (eta (1 - vartheta^2)) r`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::array::{ArrayGeometry, C0};
use crate::error::{NfError, Result};

/// Uniform subcarrier layout over a band centered on the carrier:
/// `f_m = f_c + B (2m - 1 - M) / (2M)`, `m = 1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidebandGrid {
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub num_subcarriers: usize,
}

impl WidebandGrid {
    pub fn new(carrier_freq: f64, bandwidth: f64, num_subcarriers: usize) -> Result<Self> {
        if !(carrier_freq > 0.0) || !(bandwidth >= 0.0) {
            return Err(NfError::Config(format!(
                "need positive carrier and nonnegative bandwidth, got {carrier_freq}, {bandwidth}"
            )));
        }
        if num_subcarriers == 0 {
            return Err(NfError::Config("need at least one subcarrier".into()));
        }
        if bandwidth >= 2.0 * carrier_freq {
            return Err(NfError::Config(
                "bandwidth would push subcarriers to nonpositive frequencies".into(),
            ));
        }
        Ok(Self {
            carrier_freq,
            bandwidth,
            num_subcarriers,
        })
    }

    /// Frequency of subcarrier `m` (1-based).
    pub fn subcarrier(&self, m: usize) -> f64 {
        let mm = self.num_subcarriers as f64;
        self.carrier_freq + self.bandwidth * (2.0 * m as f64 - 1.0 - mm) / (2.0 * mm)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (1..=self.num_subcarriers).map(|m| self.subcarrier(m)).collect()
    }

    /// `eta_m = f_c / f_m`.
    pub fn eta(&self, m: usize) -> f64 {
        self.carrier_freq / self.subcarrier(m)
    }
}

/// Steering vector at subcarrier frequency `f_m` for sine-space angle
/// `vartheta` and range `r`:
/// entries `exp(j 2 pi (f_m / c0) (m d vartheta - m^2 d^2 (1 - vartheta^2) / (2 r)))`.
pub fn steering_subcarrier(
    geometry: &ArrayGeometry,
    vartheta: f64,
    r: f64,
    f_m: f64,
) -> Result<DVector<Complex64>> {
    if vartheta.abs() >= 1.0 {
        return Err(NfError::Domain(format!(
            "|vartheta| must be < 1, got {vartheta}"
        )));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(NfError::Domain(format!("range must be positive finite, got {r}")));
    }
    if !(f_m > 0.0) {
        return Err(NfError::Domain(format!("frequency must be positive, got {f_m}")));
    }
    let d = geometry.spacing();
    let upsilon = (1.0 - vartheta * vartheta) / (2.0 * r);
    let scale = TAU * f_m / C0;
    let n = geometry.num_elements();
    Ok(DVector::from_fn(n, |i, _| {
        let m = geometry.offset(i);
        Complex64::from_polar(1.0, scale * (m * d * vartheta - m * m * d * d * upsilon))
    }))
}

/// Closed-form squint of the beampattern peak at one subcarrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquintDeviation {
    /// Sine-space angle drift `(eta - 1) vartheta`.
    pub delta_vartheta: f64,
    /// Range drift `r_bar - r` with
    /// `r_bar = (1 - eta^2 vartheta^2) / (eta (1 - vartheta^2)) r`.
    pub delta_range: f64,
}

/// Evaluate the closed-form deviations; both vanish at `eta = 1`.
pub fn squint_deviation(vartheta: f64, r: f64, eta: f64) -> Result<SquintDeviation> {
    if vartheta.abs() >= 1.0 {
        return Err(NfError::Domain(format!(
            "|vartheta| = 1 makes the range deviation singular (got {vartheta})"
        )));
    }
    if !(eta > 0.0) {
        return Err(NfError::Domain(format!("eta must be positive, got {eta}")));
    }
    if !(r > 0.0) {
        return Err(NfError::Domain(format!("range must be positive, got {r}")));
    }
    let delta_vartheta = (eta - 1.0) * vartheta;
    let r_bar = (1.0 - eta * eta * vartheta * vartheta) / (eta * (1.0 - vartheta * vartheta)) * r;
    Ok(SquintDeviation {
        delta_vartheta,
        delta_range: r_bar - r,
    })
}

/// Beampattern of a fixed beamformer over a `(vartheta, r)` grid at one
/// subcarrier, normalized so a matched unit-norm beamformer peaks at 1.
#[derive(Debug, Clone)]
pub struct BeampatternMap {
    pub vartheta_grid: Vec<f64>,
    pub range_grid: Vec<f64>,
    /// `gains[(i_vartheta, i_range)] = |w^H a|^2 / N`.
    pub gains: DMatrix<f64>,
    pub peak_vartheta: f64,
    pub peak_range: f64,
    pub peak_gain: f64,
}

/// Evaluate `|w^H a(vartheta, r; f_m)|^2 / N` over the grid and locate the
/// strongest cell.
pub fn wideband_beampattern(
    geometry: &ArrayGeometry,
    w: &DVector<Complex64>,
    vartheta_grid: &[f64],
    range_grid: &[f64],
    f_m: f64,
) -> Result<BeampatternMap> {
    if vartheta_grid.is_empty() || range_grid.is_empty() {
        return Err(NfError::Domain("empty beampattern grid".into()));
    }
    if w.len() != geometry.num_elements() {
        return Err(NfError::Domain(format!(
            "beamformer length {} does not match {} elements",
            w.len(),
            geometry.num_elements()
        )));
    }
    let n = geometry.num_elements() as f64;
    let rows: Vec<Vec<f64>> = vartheta_grid
        .par_iter()
        .map(|&vt| {
            range_grid
                .iter()
                .map(|&r| {
                    let a = steering_subcarrier(geometry, vt, r, f_m)?;
                    Ok((w.adjoint() * a)[(0, 0)].norm_sqr() / n)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let gains = DMatrix::from_fn(vartheta_grid.len(), range_grid.len(), |i, j| rows[i][j]);
    let mut peak = (0usize, 0usize, f64::NEG_INFINITY);
    for i in 0..vartheta_grid.len() {
        for j in 0..range_grid.len() {
            if gains[(i, j)] > peak.2 {
                peak = (i, j, gains[(i, j)]);
            }
        }
    }
    Ok(BeampatternMap {
        vartheta_grid: vartheta_grid.to_vec(),
        range_grid: range_grid.to_vec(),
        gains,
        peak_vartheta: vartheta_grid[peak.0],
        peak_range: range_grid[peak.1],
        peak_gain: peak.2,
    })
}
