//! Subspace DoA machinery: eigendecomposition into signal/noise bases, the
//! 2-D angle-range pseudo-spectrum, peak extraction, and forward-backward
//! spatial smoothing for coherent sources.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::array::{steering, ArrayGeometry, SteeringModel};
use crate::error::{NfError, Result};
use crate::linalg::hermitian_eigen_sorted;
use crate::scenario::{CovarianceEstimate, SnapshotSet};

/// Signal/noise eigenvector partition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    /// N x K columns spanning the signal subspace.
    pub signal_basis: DMatrix<Complex64>,
    /// N x (N - K) columns spanning the noise subspace.
    pub noise_basis: DMatrix<Complex64>,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Denominator floor relative to the steering norm; keeps the spectrum
/// finite at exact subspace alignment without moving any peak.
const DENOM_FLOOR: f64 = 1e-12;

/// Partition the covariance eigenvectors by the K largest eigenvalues.
pub fn eigendecompose(r: &CovarianceEstimate, k: usize) -> Result<SubspacePair> {
    partition_eigen(&r.matrix, k, hermitian_eigen_sorted)
}

pub(crate) fn partition_eigen(
    m: &DMatrix<Complex64>,
    k: usize,
    eig: fn(&DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>),
) -> Result<SubspacePair> {
    let n = m.nrows();
    if k == 0 || k >= n {
        return Err(NfError::Domain(format!(
            "source count must satisfy 1 <= K < N, got K={k}, N={n}"
        )));
    }
    let (values, vectors) = eig(m);
    Ok(SubspacePair {
        signal_basis: vectors.columns(0, k).into_owned(),
        noise_basis: vectors.columns(k, n - k).into_owned(),
        eigenvalues: values,
    })
}

/// `a^H U_N U_N^H a` evaluated through the signal-subspace complement,
/// floored at `1e-12 * ||a||^2`.
pub fn noise_power(pair: &SubspacePair, a: &DVector<Complex64>) -> f64 {
    let total = a.norm_squared();
    let sig = (pair.signal_basis.adjoint() * a).norm_squared();
    (total - sig).max(DENOM_FLOOR * total)
}

/// Sampled 2-D pseudo-spectrum over (angle, range) with peak annotations.
#[derive(Debug, Clone)]
pub struct Spectrum2D {
    pub theta_grid: Vec<f64>,
    pub range_grid: Vec<f64>,
    /// `values[(i_theta, i_range)]`, strictly positive.
    pub values: DMatrix<f64>,
    pub peaks: Vec<SpectrumPeak>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPeak {
    pub theta: f64,
    pub range: f64,
    pub value: f64,
    pub theta_idx: usize,
    pub range_idx: usize,
}

/// Near-field MUSIC spectrum `P(theta, r) = 1 / (a^H U_N U_N^H a)` with
/// Fresnel steering, evaluated over the Cartesian product of the grids.
pub fn music_spectrum_2d(
    pair: &SubspacePair,
    geometry: &ArrayGeometry,
    theta_grid: &[f64],
    range_grid: &[f64],
) -> Result<Spectrum2D> {
    if theta_grid.is_empty() || range_grid.is_empty() {
        return Err(NfError::Domain("empty spectrum grid".into()));
    }
    let rows: Vec<Vec<f64>> = theta_grid
        .par_iter()
        .map(|&theta| {
            range_grid
                .iter()
                .map(|&r| {
                    let a = steering(geometry, theta, r, SteeringModel::FresnelQuadratic)?;
                    Ok(1.0 / noise_power(pair, &a))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let values = DMatrix::from_fn(theta_grid.len(), range_grid.len(), |i, j| rows[i][j]);
    Ok(Spectrum2D {
        theta_grid: theta_grid.to_vec(),
        range_grid: range_grid.to_vec(),
        values,
        peaks: Vec::new(),
    })
}

/// 1-D pseudo-spectrum with caller-supplied steering (angle, electrical
/// angle, or quadratic-phase domains).
pub fn music_spectrum_1d<F>(pair: &SubspacePair, grid: &[f64], steer: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<DVector<Complex64>>,
{
    if grid.is_empty() {
        return Err(NfError::Domain("empty spectrum grid".into()));
    }
    grid.iter()
        .map(|&x| Ok(1.0 / noise_power(pair, &steer(x)?)))
        .collect()
}

/// K strongest strict local maxima (8-neighborhood) in descending value;
/// ties broken by lower theta index, then lower range index.
pub fn find_peaks(spectrum: &Spectrum2D, k: usize) -> Result<Vec<SpectrumPeak>> {
    if k == 0 {
        return Err(NfError::Domain("peak count must be at least 1".into()));
    }
    let (nt, nr) = spectrum.values.shape();
    let mut found: Vec<SpectrumPeak> = Vec::new();
    for i in 0..nt {
        for j in 0..nr {
            let v = spectrum.values[(i, j)];
            let mut is_max = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= nt as i64 || nj >= nr as i64 {
                        continue;
                    }
                    if spectrum.values[(ni as usize, nj as usize)] >= v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                found.push(SpectrumPeak {
                    theta: spectrum.theta_grid[i],
                    range: spectrum.range_grid[j],
                    value: v,
                    theta_idx: i,
                    range_idx: j,
                });
            }
        }
    }
    found.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.theta_idx.cmp(&b.theta_idx))
            .then(a.range_idx.cmp(&b.range_idx))
    });
    if found.len() < k {
        let detail = found
            .iter()
            .map(|p| format!("(theta={:.4}, r={:.3}, P={:.3e})", p.theta, p.range, p.value))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(NfError::PeakShortage {
            requested: k,
            found: found.len(),
            detail: if detail.is_empty() {
                "no strict local maxima".into()
            } else {
                detail
            },
        });
    }
    found.truncate(k);
    Ok(found)
}

/// Strict local maxima of a 1-D spectrum, strongest first; same tie rule.
pub fn find_peaks_1d(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(NfError::Domain("peak count must be at least 1".into()));
    }
    let n = values.len();
    let mut found: Vec<usize> = Vec::new();
    for i in 0..n {
        let v = values[i];
        let left_ok = i == 0 || values[i - 1] < v;
        let right_ok = i + 1 == n || values[i + 1] < v;
        if left_ok && right_ok && n > 1 {
            found.push(i);
        }
    }
    found.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    if found.len() < k {
        return Err(NfError::PeakShortage {
            requested: k,
            found: found.len(),
            detail: format!("1-D spectrum of {n} cells"),
        });
    }
    found.truncate(k);
    Ok(found)
}

/// Forward-only spatially smoothed covariance of subarray length `l`.
pub fn forward_smoothed(r_full: &DMatrix<Complex64>, l: usize) -> Result<DMatrix<Complex64>> {
    let n = r_full.nrows();
    if l == 0 || l > n {
        return Err(NfError::Domain(format!(
            "subarray length must satisfy 1 <= L <= N, got L={l}, N={n}"
        )));
    }
    let j = n - l + 1;
    let mut acc = DMatrix::<Complex64>::zeros(l, l);
    for s in 0..j {
        acc += r_full.view((s, s), (l, l));
    }
    Ok(acc / Complex64::new(j as f64, 0.0))
}

/// Forward-backward spatial smoothing on a full covariance matrix:
/// forward subarray averaging followed by exchange-conjugation averaging.
pub fn fbss_covariance(r_full: &DMatrix<Complex64>, l: usize) -> Result<DMatrix<Complex64>> {
    let fwd = forward_smoothed(r_full, l)?;
    // backward: J conj(R_f) J with J the exchange matrix
    let mut bwd = DMatrix::<Complex64>::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            bwd[(i, j)] = fwd[(l - 1 - i, l - 1 - j)].conj();
        }
    }
    Ok((fwd + bwd) * Complex64::new(0.5, 0.0))
}

/// FBSS applied to a snapshot set; returns the `L x L` smoothed covariance.
pub fn fbss(snapshots: &SnapshotSet, subarray_len: usize) -> Result<CovarianceEstimate> {
    let r = crate::scenario::sample_covariance(snapshots);
    Ok(CovarianceEstimate {
        matrix: fbss_covariance(&r.matrix, subarray_len)?,
        num_snapshots: r.num_snapshots,
    })
}
