//! Mixed far-field/near-field localization from fourth-order statistics.
//!
//! Stage 1 builds the cumulant matrix C1 of a center-referenced odd-length
//! array, whose structure depends only on the electrical angles, and reads
//! all source angles from a 1-D MUSIC spectrum over the virtual steering
//! `b1(omega)`. Stage 2 fixes each estimated angle and searches the
//! quadratic-phase coefficient kappa against the noise subspace of the
//! ordinary sample covariance; near-zero kappa classifies a source as
//! far-field, otherwise the range follows from the Fresnel relation.
//!
//! Gaussian processes have zero fourth-order cumulants, so stage 1 needs a
//! non-Gaussian waveform; QPSK (kurtosis -1) is the usual choice.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::array::{quadratic_phase, region_boundaries, ArrayGeometry};
use crate::error::{NfError, Result};
use crate::linalg::{hermitian_eigen_sorted, hermitian_eigen_sorted_abs};
use crate::music::{find_peaks_1d, music_spectrum_1d, partition_eigen, SubspacePair};
use crate::scenario::{CovarianceEstimate, SnapshotSet};

/// Fourth-order cumulant matrix `C1 = B1 Cs B1^H` (noiseless limit).
#[derive(Debug, Clone)]
pub struct CumulantMatrixC1 {
    pub matrix: DMatrix<Complex64>,
    pub num_snapshots: usize,
}

/// FF/NF label assigned by the kappa stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceClass {
    FarField,
    NearField,
}

/// Joint estimate for one source from the two-stage pipeline.
#[derive(Debug, Clone)]
pub struct MixedSourceEstimate {
    pub omega: f64,
    pub kappa: f64,
    pub classification: SourceClass,
    pub theta: f64,
    /// Recovered range; absent for far-field sources.
    pub range: Option<f64>,
}

/// Sample fourth-order cumulant matrix per the center-referenced pattern
/// `cum{ y_p, y_{-p}^*, y_q^*, y_{-q} }`, with sample means subtracted.
pub fn cumulant_c1(snapshots: &SnapshotSet) -> Result<CumulantMatrixC1> {
    let geometry = &snapshots.geometry;
    let n = geometry.num_elements();
    if n % 2 == 0 {
        return Err(NfError::Domain(format!(
            "cumulant matrix needs an odd element count, got {n}"
        )));
    }
    if !geometry.is_center_referenced() {
        return Err(NfError::Domain(
            "cumulant matrix needs the center element as phase reference".into(),
        ));
    }
    let t = snapshots.num_snapshots();
    let tf = t as f64;

    // zero-mean rows
    let mut y = snapshots.data.clone();
    for i in 0..n {
        let mean: Complex64 = y.row(i).iter().sum::<Complex64>() / tf;
        for ti in 0..t {
            y[(i, ti)] -= mean;
        }
    }

    // pairwise moment tables: p1[i][j] = E[y_i y_j^*], p2[i][j] = E[y_i y_j]
    let p1 = (&y * y.adjoint()) / Complex64::new(tf, 0.0);
    let p2 = (&y * y.transpose()) / Complex64::new(tf, 0.0);

    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|pb| {
            let mp = n - 1 - pb; // element index of y_{-p}
            (0..n)
                .map(|qb| {
                    let mq = n - 1 - qb;
                    let mut quad = Complex64::new(0.0, 0.0);
                    for ti in 0..t {
                        quad += y[(pb, ti)] * y[(mp, ti)].conj() * y[(qb, ti)].conj()
                            * y[(mq, ti)];
                    }
                    quad /= tf;
                    let m_ab = p1[(pb, mp)];
                    let m_cd = p1[(qb, mq)].conj();
                    let m_ac = p1[(pb, qb)];
                    let m_bd = p1[(mp, mq)].conj();
                    let m_ad = p2[(pb, mq)];
                    let m_bc = p2[(mp, qb)].conj();
                    quad - m_ab * m_cd - m_ac * m_bd - m_ad * m_bc
                })
                .collect()
        })
        .collect();

    let mut c1 = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let c1h = c1.adjoint();
    c1 = (c1 + c1h) * Complex64::new(0.5, 0.0);
    Ok(CumulantMatrixC1 {
        matrix: c1,
        num_snapshots: t,
    })
}

/// Virtual steering vector `b1(omega)` with entries `exp(j 2 m omega)` for
/// `m = -N_bar .. N_bar`.
pub fn virtual_steering_b1(n: usize, omega: f64) -> DVector<Complex64> {
    let n_bar = (n - 1) / 2;
    DVector::from_fn(n, |i, _| {
        let m = i as f64 - n_bar as f64;
        Complex64::from_polar(1.0, 2.0 * m * omega)
    })
}

/// Electrical-angle estimates of all K sources from the C1 spectrum
/// `P(omega) = 1 / (b1^H U_N U_N^H b1)`, strongest peaks first.
pub fn music_omega(c1: &CumulantMatrixC1, k: usize, omega_grid: &[f64]) -> Result<Vec<f64>> {
    let n = c1.matrix.nrows();
    // cumulant eigenvalues carry the source kurtosis sign, so partition by
    // magnitude rather than by signed value
    let pair = partition_eigen(&c1.matrix, k, hermitian_eigen_sorted_abs)?;
    let spectrum = music_spectrum_1d(&pair, omega_grid, |w| Ok(virtual_steering_b1(n, w)))?;
    let peaks = find_peaks_1d(&spectrum, k)?;
    Ok(peaks.into_iter().map(|i| omega_grid[i]).collect())
}

/// Unambiguous omega grid for the doubled-phase virtual array:
/// `|omega| <= min(pi/2, 2 pi d / lambda)`.
pub fn default_omega_grid(geometry: &ArrayGeometry, points: usize) -> Vec<f64> {
    let w_max = (PI / 2.0).min(2.0 * PI * geometry.spacing() / geometry.wavelength());
    linspace(-w_max, w_max, points)
}

/// Kappa grid for the stage-2 search: zero (far-field atom) plus the kappa
/// images of log-spaced ranges from `r_min` out to five Fraunhofer distances.
pub fn default_kappa_grid(geometry: &ArrayGeometry, r_min: f64, points: usize) -> Vec<f64> {
    let b = region_boundaries(geometry);
    let r_max = 5.0 * b.fraunhofer;
    let mut grid: Vec<f64> = Vec::with_capacity(points + 1);
    let log_lo = r_min.ln();
    let log_hi = r_max.ln();
    for i in 0..points {
        let r = (log_lo + (log_hi - log_lo) * i as f64 / (points - 1) as f64).exp();
        grid.push(quadratic_phase(geometry, 0.0, r));
    }
    grid.push(0.0);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid
}

/// Default FF/NF decision threshold: the |kappa| of a broadside source ten
/// Fraunhofer distances out.
pub fn kappa_ff_threshold(geometry: &ArrayGeometry) -> f64 {
    let b = region_boundaries(geometry);
    quadratic_phase(geometry, 0.0, 10.0 * b.fraunhofer).abs()
}

/// Map an estimated (theta, kappa) pair back to range via the Fresnel
/// relation `r = -pi d^2 cos^2(theta) / (lambda kappa)`.
pub fn range_from_kappa(geometry: &ArrayGeometry, theta: f64, kappa: f64) -> f64 {
    let d = geometry.spacing();
    let c = theta.cos();
    -PI * d * d * c * c / (geometry.wavelength() * kappa)
}

fn steering_omega_kappa(geometry: &ArrayGeometry, omega: f64, kappa: f64) -> DVector<Complex64> {
    let n = geometry.num_elements();
    DVector::from_fn(n, |i, _| {
        let m = geometry.offset(i);
        Complex64::from_polar(1.0, omega * m + kappa * m * m)
    })
}

/// Stage-2 search: for each estimated omega, scan kappa against the noise
/// subspace of the sample covariance; classify FF when |kappa| falls below
/// `ff_threshold`, otherwise recover the range.
///
/// When fewer omega estimates than sources are supplied (merged angle
/// peaks), the extra sources are taken from additional kappa peaks.
pub fn kappa_search(
    r: &CovarianceEstimate,
    geometry: &ArrayGeometry,
    k_total: usize,
    omega_hat: &[f64],
    kappa_grid: &[f64],
    ff_threshold: f64,
) -> Result<Vec<MixedSourceEstimate>> {
    if omega_hat.is_empty() {
        return Err(NfError::Domain("no omega estimates supplied".into()));
    }
    if omega_hat.len() > k_total {
        return Err(NfError::Domain(format!(
            "{} omega estimates exceed K_total = {k_total}",
            omega_hat.len()
        )));
    }
    if !kappa_grid.contains(&0.0) {
        return Err(NfError::Domain("kappa grid must include 0".into()));
    }
    let pair: SubspacePair = partition_eigen(&r.matrix, k_total, hermitian_eigen_sorted)?;
    let per_omega_max = k_total + 1 - omega_hat.len();

    // candidate (value, omega_idx, kappa) triples per omega
    let mut candidates: Vec<Vec<(f64, usize, f64)>> = Vec::with_capacity(omega_hat.len());
    for (oi, &w) in omega_hat.iter().enumerate() {
        let spectrum =
            music_spectrum_1d(&pair, kappa_grid, |k| Ok(steering_omega_kappa(geometry, w, k)))?;
        let median = median_of(&spectrum);
        let mut found: Vec<(f64, usize, f64)> = match find_peaks_1d(&spectrum, per_omega_max) {
            Ok(idx) => idx
                .into_iter()
                .map(|i| (spectrum[i], oi, kappa_grid[i]))
                .collect(),
            Err(NfError::PeakShortage { found, .. }) if found > 0 => {
                let idx = find_peaks_1d(&spectrum, found).expect("found peaks exist");
                idx.into_iter()
                    .map(|i| (spectrum[i], oi, kappa_grid[i]))
                    .collect()
            }
            Err(_) => Vec::new(),
        };
        found.retain(|&(v, _, _)| v > 3.0 * median);
        if found.is_empty() {
            return Err(NfError::Classification(format!(
                "no kappa peak above the spectrum floor for omega = {w:.5}"
            )));
        }
        candidates.push(found);
    }

    // coverage pass: best peak per omega, then fill by descending value
    let mut selected: Vec<(f64, usize, f64)> = Vec::with_capacity(k_total);
    for c in &candidates {
        selected.push(c[0]);
    }
    let mut rest: Vec<(f64, usize, f64)> = candidates
        .iter()
        .flat_map(|c| c.iter().skip(1).cloned())
        .collect();
    rest.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    for extra in rest {
        if selected.len() >= k_total {
            break;
        }
        selected.push(extra);
    }
    if selected.len() < k_total {
        return Err(NfError::Classification(format!(
            "only {} kappa peaks found for {k_total} sources",
            selected.len()
        )));
    }

    let lambda = geometry.wavelength();
    let d = geometry.spacing();
    selected
        .into_iter()
        .map(|(_, oi, kappa)| {
            let omega = omega_hat[oi];
            let sin_theta = (omega * lambda / (2.0 * PI * d)).clamp(-1.0, 1.0);
            let theta = sin_theta.asin();
            if kappa.abs() < ff_threshold {
                Ok(MixedSourceEstimate {
                    omega,
                    kappa,
                    classification: SourceClass::FarField,
                    theta,
                    range: None,
                })
            } else if kappa < 0.0 {
                Ok(MixedSourceEstimate {
                    omega,
                    kappa,
                    classification: SourceClass::NearField,
                    theta,
                    range: Some(range_from_kappa(geometry, theta, kappa)),
                })
            } else {
                Err(NfError::Classification(format!(
                    "kappa peak {kappa:.3e} has the wrong sign for a physical range"
                )))
            }
        })
        .collect()
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v[v.len() / 2]
}

pub(crate) fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{steering, SteeringModel};
    use crate::scenario::{sample_covariance, synthesize_snapshots, SourceSpec, Waveform};

    /// Quarter-wavelength symmetric array; standard for the doubled-phase
    /// virtual steering.
    fn geom(n_bar: usize) -> ArrayGeometry {
        let fc = 3e9;
        let lam = crate::array::C0 / fc;
        ArrayGeometry::symmetric(n_bar, lam / 4.0, fc).unwrap()
    }

    /// Brute-force kurtosis over the QPSK constellation:
    /// cum{s, s*, s*, s} = E|s|^4 - 2 (E|s|^2)^2 - |E[s^2]|^2.
    fn qpsk_kurtosis_oracle() -> f64 {
        let pts = [
            Complex64::new(1.0, 1.0),
            Complex64::new(1.0, -1.0),
            Complex64::new(-1.0, 1.0),
            Complex64::new(-1.0, -1.0),
        ]
        .map(|z| z * std::f64::consts::FRAC_1_SQRT_2);
        let e4: f64 = pts.iter().map(|s| s.norm_sqr().powi(2)).sum::<f64>() / 4.0;
        let e2: f64 = pts.iter().map(|s| s.norm_sqr()).sum::<f64>() / 4.0;
        let es2: Complex64 = pts.iter().map(|s| s * s).sum::<Complex64>() / 4.0;
        e4 - 2.0 * e2 * e2 - es2.norm_sqr()
    }

    #[test]
    fn qpsk_kurtosis_is_minus_one() {
        assert!((qpsk_kurtosis_oracle() - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_c1_vanishes_with_snapshots() {
        let g = geom(4);
        let src = SourceSpec::far_field(0.3, 1.0, Waveform::CircularGaussian);
        let t = 20_000;
        let snap = synthesize_snapshots(&g, &[src], t, f64::INFINITY, 31).unwrap();
        let c1 = cumulant_c1(&snap).unwrap();
        let bound = 50.0 / (t as f64).sqrt();
        assert!(
            c1.matrix.norm() < bound,
            "||C1||_F = {} exceeds {bound}",
            c1.matrix.norm()
        );
    }

    #[test]
    fn noise_only_c1_vanishes() {
        let g = geom(4);
        let src = SourceSpec::far_field(0.0, 1.0, Waveform::CircularGaussian);
        let t = 20_000;
        let snap = synthesize_snapshots(&g, &[src], t, -40.0, 5).unwrap();
        // data is noise-dominated by 40 dB; normalize by the noise power
        let c1 = cumulant_c1(&snap).unwrap();
        let sigma2 = 10f64.powf(4.0);
        assert!(c1.matrix.norm() / (sigma2 * sigma2) < 60.0 / (t as f64).sqrt());
    }

    #[test]
    fn qpsk_source_c1_matches_analytic_form() {
        let g = geom(4);
        let n = g.num_elements();
        let theta = 0.35;
        let range = 9.0;
        let src = SourceSpec::near_field(theta, range, 1.0, Waveform::Qpsk);
        let t = 50_000;
        let snap = synthesize_snapshots(&g, &[src], t, f64::INFINITY, 77).unwrap();
        let c1 = cumulant_c1(&snap).unwrap();
        let omega = crate::array::electrical_angle(&g, theta);
        let b1 = virtual_steering_b1(n, omega);
        let analytic = &b1 * b1.adjoint() * Complex64::new(qpsk_kurtosis_oracle(), 0.0);
        let rel = (&c1.matrix - &analytic).norm() / analytic.norm();
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn even_array_rejected() {
        let g = ArrayGeometry::new(8, 0.01, 3e9).unwrap();
        let src = SourceSpec::far_field(0.0, 1.0, Waveform::Qpsk);
        let snap = synthesize_snapshots(&g, &[src], 16, f64::INFINITY, 0).unwrap();
        assert!(cumulant_c1(&snap).is_err());
    }

    #[test]
    fn omega_recovered_for_single_source() {
        let g = geom(8);
        let theta = 20f64.to_radians();
        let src = SourceSpec::far_field(theta, 1.0, Waveform::Qpsk);
        let snap = synthesize_snapshots(&g, &[src], 30_000, f64::INFINITY, 2).unwrap();
        let c1 = cumulant_c1(&snap).unwrap();
        let grid = default_omega_grid(&g, 721);
        let est = music_omega(&c1, 1, &grid).unwrap();
        let truth = crate::array::electrical_angle(&g, theta);
        let step = grid[1] - grid[0];
        assert!((est[0] - truth).abs() <= step, "omega {} vs {}", est[0], truth);
    }

    #[test]
    fn broadside_source_peaks_at_zero() {
        let g = geom(6);
        let src = SourceSpec::far_field(0.0, 1.0, Waveform::Qpsk);
        let snap = synthesize_snapshots(&g, &[src], 20_000, f64::INFINITY, 3).unwrap();
        let c1 = cumulant_c1(&snap).unwrap();
        let grid = default_omega_grid(&g, 361);
        let est = music_omega(&c1, 1, &grid).unwrap();
        assert!(est[0].abs() <= (grid[1] - grid[0]) + 1e-12);
    }

    #[test]
    fn argmax_invariant_to_scaling_and_global_phase() {
        let g = geom(6);
        let src = SourceSpec::far_field(0.4, 1.0, Waveform::Qpsk);
        let snap = synthesize_snapshots(&g, &[src], 10_000, f64::INFINITY, 4).unwrap();
        let grid = default_omega_grid(&g, 361);
        let c1 = cumulant_c1(&snap).unwrap();
        let w0 = music_omega(&c1, 1, &grid).unwrap()[0];

        let scaled = CumulantMatrixC1 {
            matrix: &c1.matrix * Complex64::new(12.0, 0.0),
            num_snapshots: c1.num_snapshots,
        };
        assert_eq!(music_omega(&scaled, 1, &grid).unwrap()[0], w0);

        // global phase on the snapshots leaves C1's argmax unchanged
        let mut rotated = snap.clone();
        let phase = Complex64::from_polar(1.0, 1.234);
        for v in rotated.data.iter_mut() {
            *v *= phase;
        }
        let c1r = cumulant_c1(&rotated).unwrap();
        assert_eq!(music_omega(&c1r, 1, &grid).unwrap()[0], w0);
    }

    #[test]
    fn kappa_round_trips_through_range() {
        let g = geom(32);
        let b = region_boundaries(&g);
        for frac in [0.05, 0.1, 0.3, 0.7] {
            let r = frac * b.fraunhofer;
            for theta in [0.0, 0.4, -0.9] {
                let kappa = quadratic_phase(&g, theta, r);
                let back = range_from_kappa(&g, theta, kappa);
                assert!((back - r).abs() / r < 1e-9);
            }
        }
    }

    #[test]
    fn kappa_search_recovers_near_field_range() {
        // 128-element half-wavelength array, broadside source at 20 m
        let fc = 30e9;
        let lam = crate::array::C0 / fc;
        let g = ArrayGeometry::new(128, lam / 2.0, fc)
            .unwrap()
            .with_center_reference();
        let src = SourceSpec::near_field(0.0, 20.0, 1.0, Waveform::CircularGaussian);
        let snap = synthesize_snapshots(&g, &[src], 400, f64::INFINITY, 6).unwrap();
        let r = sample_covariance(&snap);
        let b = region_boundaries(&g);
        let grid = default_kappa_grid(&g, 0.9 * b.reactive_limit, 400);
        let est = kappa_search(&r, &g, 1, &[0.0], &grid, kappa_ff_threshold(&g)).unwrap();
        assert_eq!(est[0].classification, SourceClass::NearField);
        let truth = quadratic_phase(&g, 0.0, 20.0);
        // within one grid step of the true kappa
        let pos = grid.iter().position(|&k| k == est[0].kappa).unwrap();
        let step = if pos + 1 < grid.len() {
            grid[pos + 1] - grid[pos]
        } else {
            grid[pos] - grid[pos - 1]
        };
        assert!(
            (est[0].kappa - truth).abs() <= step.abs() * 1.5,
            "kappa {} vs {truth}",
            est[0].kappa
        );
        let r_hat = est[0].range.unwrap();
        assert!((r_hat - 20.0).abs() / 20.0 < 0.05, "range {r_hat}");
    }

    #[test]
    fn far_field_source_classified_ff() {
        let g = geom(16);
        let src = SourceSpec::far_field(0.2, 1.0, Waveform::CircularGaussian);
        let snap = synthesize_snapshots(&g, &[src], 400, f64::INFINITY, 7).unwrap();
        let r = sample_covariance(&snap);
        let b = region_boundaries(&g);
        let omega = crate::array::electrical_angle(&g, 0.2);
        let grid = default_kappa_grid(&g, b.reactive_limit, 300);
        let est = kappa_search(&r, &g, 1, &[omega], &grid, kappa_ff_threshold(&g)).unwrap();
        assert_eq!(est[0].classification, SourceClass::FarField);
        assert!(est[0].range.is_none());
        assert_eq!(est[0].kappa, 0.0);
    }

    #[test]
    fn merged_omega_resolved_into_two_kappa_peaks() {
        // two sources at the same angle, different ranges
        let g = geom(24);
        let b = region_boundaries(&g);
        let theta = 0.25;
        let (r1, r2) = (0.06 * b.fraunhofer, 0.30 * b.fraunhofer);
        let sources = vec![
            SourceSpec::near_field(theta, r1, 1.0, Waveform::Qpsk),
            SourceSpec::near_field(theta, r2, 1.0, Waveform::Qpsk),
        ];
        let snap = synthesize_snapshots(&g, &sources, 3000, f64::INFINITY, 8).unwrap();
        let omega = crate::array::electrical_angle(&g, theta);
        let r = sample_covariance(&snap);
        let grid = default_kappa_grid(&g, 0.5 * b.reactive_limit, 500);
        let est = kappa_search(&r, &g, 2, &[omega], &grid, kappa_ff_threshold(&g)).unwrap();
        assert_eq!(est.len(), 2);
        let mut ranges: Vec<f64> = est.iter().map(|e| e.range.unwrap()).collect();
        ranges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ranges[0] - r1).abs() / r1 < 0.1, "r1 {} vs {r1}", ranges[0]);
        assert!((ranges[1] - r2).abs() / r2 < 0.1, "r2 {} vs {r2}", ranges[1]);
    }

    #[test]
    fn c1_depends_only_on_omega_not_kappa() {
        // same angle, one FF and one NF realization: C1 structure identical
        let g = geom(5);
        let theta = 0.3;
        let t = 40_000;
        let ff = SourceSpec::far_field(theta, 1.0, Waveform::Qpsk);
        let nf = SourceSpec::near_field(theta, 6.0, 1.0, Waveform::Qpsk);
        let c_ff = cumulant_c1(&synthesize_snapshots(&g, &[ff], t, f64::INFINITY, 9).unwrap())
            .unwrap();
        let c_nf = cumulant_c1(&synthesize_snapshots(&g, &[nf], t, f64::INFINITY, 9).unwrap())
            .unwrap();
        let rel = (&c_ff.matrix - &c_nf.matrix).norm() / c_ff.matrix.norm();
        assert!(rel < 0.05, "C1 should not see kappa, rel diff {rel}");
    }

    #[test]
    fn steering_matches_fresnel_for_matching_parameters() {
        let g = geom(10);
        let theta = 0.4;
        let r = 8.0;
        let omega = crate::array::electrical_angle(&g, theta);
        let kappa = quadratic_phase(&g, theta, r);
        let via_pair = steering_omega_kappa(&g, omega, kappa);
        let via_model = steering(&g, theta, r, SteeringModel::FresnelQuadratic).unwrap();
        assert!((via_pair - via_model).norm() < 1e-12);
    }
}
