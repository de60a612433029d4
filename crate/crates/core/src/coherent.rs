//! Coherent far-field + near-field mixture resolution.
//!
//! A single far-field master arriving together with its coherent near-field
//! reflections produces a rank-one covariance that defeats plain subspace
//! methods. The pipeline here: (1) estimate the FF angle with MUSIC
//! restricted to a calibration table that embeds the NF disturbances,
//! (2) map the array output to the far-field domain with a near-to-far
//! transformation (NFT) matrix fitted on calibration steering sets,
//! (3) restore covariance rank with forward-backward smoothing and read the
//! NF angles from a planar MUSIC spectrum, (4) recover per-angle ranges by
//! matching pursuit on the FF-deflated principal direction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::array::{steering, ArrayGeometry, SteeringModel};
use crate::error::{NfError, Result};
use crate::linalg::{hermitian_eigen_sorted, numerical_rank, pinv};
use crate::music::{fbss_covariance, find_peaks_1d, music_spectrum_1d, partition_eigen};
use crate::rng::SeedTree;
use crate::scenario::{covariance_of, sample_covariance, SnapshotSet, SourceSpec};

/// Simulated calibration acquisition: per-angle measured responses and the
/// entrywise disturbance ratios `gamma[n, c] = a_meas[n] / a_ideal[n]`.
#[derive(Debug, Clone)]
pub struct CalibrationTable {
    pub angles: Vec<f64>,
    pub measured_steering: DMatrix<Complex64>,
    pub gamma: DMatrix<Complex64>,
}

/// `C` calibration angles uniform over `[-pi/2, pi/2]`, endpoints included.
pub fn calibration_angles(c: usize) -> Vec<f64> {
    crate::cumulant::linspace(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, c)
}

/// Simulate the calibration acquisition over `c` angles. Each probe records
/// the ideal planar response plus the configured NF disturbances; a
/// disturbance's gain is its `coherence_gain` when present, otherwise a
/// random-phase gain of amplitude `sqrt(power)` drawn from `seed`.
pub fn build_calibration(
    geometry: &ArrayGeometry,
    c: usize,
    nf_disturbances: &[SourceSpec],
    seed: u64,
) -> Result<CalibrationTable> {
    if c < 2 {
        return Err(NfError::Config(format!(
            "need at least 2 calibration angles, got {c}"
        )));
    }
    let n = geometry.num_elements();
    let angles = calibration_angles(c);

    let mut disturbance = DVector::<Complex64>::zeros(n);
    for (j, spec) in nf_disturbances.iter().enumerate() {
        let gain = match spec.coherence_gain {
            Some(z) => z,
            None => {
                let mut rng = SeedTree::from_root(seed)
                    .child("calibration-disturbance")
                    .index(j as u64)
                    .rng();
                Complex64::from_polar(
                    spec.power.sqrt(),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            }
        };
        let a = steering(geometry, spec.theta, spec.range, SteeringModel::FresnelQuadratic)?;
        disturbance += a * gain;
    }

    let mut measured = DMatrix::<Complex64>::zeros(n, c);
    let mut gamma = DMatrix::<Complex64>::zeros(n, c);
    for (ci, &theta) in angles.iter().enumerate() {
        let ideal = steering(geometry, theta, f64::INFINITY, SteeringModel::FarFieldPlanar)?;
        for ni in 0..n {
            let meas = ideal[ni] + disturbance[ni];
            measured[(ni, ci)] = meas;
            gamma[(ni, ci)] = meas / ideal[ni];
        }
    }
    Ok(CalibrationTable {
        angles,
        measured_steering: measured,
        gamma,
    })
}

/// FF angle of the coherent mixture: rank-one MUSIC spectrum evaluated only
/// at the calibration angles, matching against the measured (disturbed)
/// steering columns.
pub fn estimate_ff_doa_calibrated(
    snapshots: &SnapshotSet,
    calib: &CalibrationTable,
) -> Result<f64> {
    let r = sample_covariance(snapshots);
    let trace: f64 = (0..r.matrix.nrows()).map(|i| r.matrix[(i, i)].re).sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(NfError::Numerical("degenerate covariance".into()));
    }
    let pair = partition_eigen(&r.matrix, 1, hermitian_eigen_sorted)?;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for ci in 0..calib.angles.len() {
        let col = calib.measured_steering.column(ci);
        let norm = col.norm();
        let v = col.map(|z| z / norm);
        let p = 1.0 / crate::music::noise_power(&pair, &v);
        if p > best.0 {
            best = (p, ci);
        }
    }
    Ok(calib.angles[best.1])
}

/// Near-to-far transformation fitted over calibration steering sets.
#[derive(Debug, Clone)]
pub struct NftMatrix {
    pub matrix: DMatrix<Complex64>,
    /// Relative Frobenius fit error `||A_FF - T A_NF|| / ||A_FF||`.
    pub residual: f64,
    pub rank_deficient: bool,
}

/// Fit `T` so that `T A_NF ~= A_FF` in least squares, where the columns are
/// planar and Fresnel steering vectors at the calibration angles, the NF
/// side taken on the ring `nf_ring_range`. Ill-conditioned systems fall
/// back to a truncated-SVD pseudo-inverse (singular values below
/// `1e-8 sigma_max` dropped).
pub fn build_nft(
    geometry: &ArrayGeometry,
    calib_angles: &[f64],
    nf_ring_range: f64,
) -> Result<NftMatrix> {
    if calib_angles.len() < 2 {
        return Err(NfError::Config("need at least 2 calibration angles".into()));
    }
    let n = geometry.num_elements();
    let c = calib_angles.len();
    let mut a_ff = DMatrix::<Complex64>::zeros(n, c);
    let mut a_nf = DMatrix::<Complex64>::zeros(n, c);
    for (ci, &theta) in calib_angles.iter().enumerate() {
        a_ff.set_column(
            ci,
            &steering(geometry, theta, f64::INFINITY, SteeringModel::FarFieldPlanar)?,
        );
        a_nf.set_column(
            ci,
            &steering(geometry, theta, nf_ring_range, SteeringModel::FresnelQuadratic)?,
        );
    }
    let rank_deficient = numerical_rank(&a_nf, 1e-8) < n.min(c);
    let t = &a_ff * pinv(&a_nf, 1e-8)?;
    let residual = (&a_ff - &t * &a_nf).norm() / a_ff.norm();
    Ok(NftMatrix {
        matrix: t,
        residual,
        rank_deficient,
    })
}

/// Default NF calibration ring: geometric mean of the reactive limit and
/// the Fraunhofer distance.
pub fn default_nft_ring(geometry: &ArrayGeometry) -> f64 {
    let b = crate::array::region_boundaries(geometry);
    (b.reactive_limit * b.fraunhofer).sqrt()
}

/// Output of the coherent-mixture pipeline.
#[derive(Debug, Clone)]
pub struct CoherentResolution {
    pub ff_theta: f64,
    /// Estimated `(theta, range)` of each NF reflection.
    pub nf_paths: Vec<(f64, f64)>,
}

/// Residual energy below this fraction of the principal direction means no
/// detectable NF reflection; the pipeline then degenerates to FF DoA only.
const NF_ABSENCE_THRESHOLD: f64 = 1e-6;

/// Full pipeline for the single-FF-master coherent model. `range_grid`
/// is the candidate grid for per-angle matching-pursuit range recovery.
pub fn resolve_coherent_mixture(
    snapshots: &SnapshotSet,
    calib: &CalibrationTable,
    nft: &NftMatrix,
    fbss_len: usize,
    k_n: usize,
    range_grid: &[f64],
) -> Result<CoherentResolution> {
    if k_n == 0 {
        return Err(NfError::Config("K_N must be at least 1".into()));
    }
    if range_grid.is_empty() {
        return Err(NfError::Config("empty range grid".into()));
    }
    let geometry = &snapshots.geometry;
    let n = geometry.num_elements();

    // stage 1: calibrated FF DoA
    let ff_theta = estimate_ff_doa_calibrated(snapshots, calib)?;
    let a_ff = steering(geometry, ff_theta, f64::INFINITY, SteeringModel::FarFieldPlanar)?;

    // principal direction of the raw covariance, and its FF-deflated part
    let r_full = sample_covariance(snapshots);
    let (_, vecs) = hermitian_eigen_sorted(&r_full.matrix);
    let principal = vecs.column(0).into_owned();
    let proj_coeff = (a_ff.adjoint() * &principal)[(0, 0)] / Complex64::new(n as f64, 0.0);
    let deflated = &principal - &a_ff * proj_coeff;

    if deflated.norm_squared() <= NF_ABSENCE_THRESHOLD * principal.norm_squared() {
        // no detectable reflection energy
        return Ok(CoherentResolution {
            ff_theta,
            nf_paths: Vec::new(),
        });
    }

    // stage 2: transform to the FF domain and smooth
    let transformed = &nft.matrix * &snapshots.data;
    let r_nf = covariance_of(&transformed);
    let r_s = fbss_covariance(&r_nf.matrix, fbss_len).map_err(|e| NfError::Stage {
        stage: "fbss",
        detail: e.to_string(),
    })?;
    let needed = (k_n + 1).min(fbss_len - 1);
    if snapshots.snr_db.is_infinite() && numerical_rank(&r_s, 1e-6) < needed {
        return Err(NfError::Stage {
            stage: "fbss",
            detail: format!(
                "smoothed covariance rank {} below required {needed}",
                numerical_rank(&r_s, 1e-6)
            ),
        });
    }

    // stage 3: planar MUSIC on the smoothed covariance for the NF angles.
    // one signal dimension is reserved for the transformed-FF leakage.
    let g_sub = ArrayGeometry::new(fbss_len, geometry.spacing(), geometry.carrier_freq())
        .map_err(|e| NfError::Stage {
            stage: "nf-angles",
            detail: e.to_string(),
        })?;
    let pair = partition_eigen(&r_s, needed, hermitian_eigen_sorted).map_err(|e| {
        NfError::Stage {
            stage: "nf-angles",
            detail: e.to_string(),
        }
    })?;
    let spectrum = music_spectrum_1d(&pair, &calib.angles, |th| {
        steering(&g_sub, th, f64::INFINITY, SteeringModel::FarFieldPlanar)
    })?;
    let grid_step = calib.angles[1] - calib.angles[0];
    let mut nf_thetas: Vec<f64> = Vec::new();
    let candidates = match find_peaks_1d(&spectrum, k_n + 1) {
        Ok(idx) => idx,
        Err(NfError::PeakShortage { found, .. }) if found >= k_n => {
            find_peaks_1d(&spectrum, found).expect("found peaks exist")
        }
        Err(e) => {
            return Err(NfError::Stage {
                stage: "nf-angles",
                detail: e.to_string(),
            })
        }
    };
    for i in candidates {
        let th = calib.angles[i];
        // skip the FF leakage peak
        if (th - ff_theta).abs() <= 2.0 * grid_step {
            continue;
        }
        nf_thetas.push(th);
        if nf_thetas.len() == k_n {
            break;
        }
    }
    if nf_thetas.len() < k_n {
        return Err(NfError::Stage {
            stage: "nf-angles",
            detail: format!("found {} NF angle peaks, needed {k_n}", nf_thetas.len()),
        });
    }

    // stage 4: per-angle sparse range recovery on the deflated direction
    let mut nf_paths = Vec::with_capacity(k_n);
    for &th in &nf_thetas {
        let mut best = (f64::NEG_INFINITY, range_grid[0]);
        for &r in range_grid {
            let atom = steering(geometry, th, r, SteeringModel::FresnelQuadratic)?;
            let coeff = (a_ff.adjoint() * &atom)[(0, 0)] / Complex64::new(n as f64, 0.0);
            let atom_defl = &atom - &a_ff * coeff;
            let norm = atom_defl.norm();
            if norm < 1e-9 {
                continue;
            }
            let score = (atom_defl.adjoint() * &deflated)[(0, 0)].norm() / norm;
            if score > best.0 {
                best = (score, r);
            }
        }
        nf_paths.push((th, best.1));
    }

    Ok(CoherentResolution { ff_theta, nf_paths })
}
