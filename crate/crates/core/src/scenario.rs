//! Synthetic array snapshots for far-field, near-field, mixed, and coherent
//! source configurations, plus the sample covariance estimate.
//!
//! SNR convention: `snr_db` is per-source signal power over per-element noise
//! power, referenced to the first master source. `f64::INFINITY` disables
//! noise entirely.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{steering, ArrayGeometry, SteeringModel};
use crate::error::{NfError, Result};
use crate::rng::SeedTree;

/// Source waveform family. Fourth-order-cumulant methods need a
/// non-Gaussian waveform (QPSK has kurtosis -1 at unit power).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Waveform {
    CircularGaussian,
    Qpsk,
    ConstantModulusRandomPhase,
}

/// One emitter. An infinite `range` marks a far-field source (planar
/// steering); finite ranges use the Fresnel model.
///
/// A source with `coherence_gain = Some(zeta)` emits `zeta * s_m(t)` where
/// `s_m` is the waveform of the nearest preceding source without a gain
/// (its group master); `power` and `waveform` are ignored for such slaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub theta: f64,
    pub range: f64,
    pub power: f64,
    pub waveform: Waveform,
    pub coherence_gain: Option<Complex64>,
}

impl SourceSpec {
    pub fn far_field(theta: f64, power: f64, waveform: Waveform) -> Self {
        Self {
            theta,
            range: f64::INFINITY,
            power,
            waveform,
            coherence_gain: None,
        }
    }

    pub fn near_field(theta: f64, range: f64, power: f64, waveform: Waveform) -> Self {
        Self {
            theta,
            range,
            power,
            waveform,
            coherence_gain: None,
        }
    }

    pub fn coherent_reflection(theta: f64, range: f64, zeta: Complex64) -> Self {
        Self {
            theta,
            range,
            power: 1.0,
            waveform: Waveform::CircularGaussian,
            coherence_gain: Some(zeta),
        }
    }

    pub fn is_far_field(&self) -> bool {
        self.range.is_infinite()
    }
}

/// Complex array observations `N x T` with generation metadata.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub data: DMatrix<Complex64>,
    pub snr_db: f64,
    pub seed: u64,
    pub sources: Vec<SourceSpec>,
    pub geometry: ArrayGeometry,
}

impl SnapshotSet {
    pub fn num_snapshots(&self) -> usize {
        self.data.ncols()
    }
}

/// Hermitian PSD sample covariance `R = (1/T) sum_t y(t) y(t)^H`.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<Complex64>,
    pub num_snapshots: usize,
}

fn draw_waveform(rng: &mut impl Rng, waveform: Waveform, t: usize) -> Vec<Complex64> {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    (0..t)
        .map(|_| match waveform {
            Waveform::CircularGaussian => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * inv_sqrt2
            }
            Waveform::Qpsk => {
                let sym = rng.gen_range(0u8..4);
                let re = if sym & 1 == 0 { 1.0 } else { -1.0 };
                let im = if sym & 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(re, im) * inv_sqrt2
            }
            Waveform::ConstantModulusRandomPhase => {
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                Complex64::from_polar(1.0, phase)
            }
        })
        .collect()
}

/// Steering vector for a source spec: planar for far-field entries, Fresnel
/// for finite ranges.
pub fn source_steering(geometry: &ArrayGeometry, src: &SourceSpec) -> Result<DVector<Complex64>> {
    if src.is_far_field() {
        steering(geometry, src.theta, f64::INFINITY, SteeringModel::FarFieldPlanar)
    } else {
        steering(geometry, src.theta, src.range, SteeringModel::FresnelQuadratic)
    }
}

/// Generate `y(t) = sum_k a_k s_k(t) + e(t)` for `t = 0..T-1`.
///
/// Deterministic given `(seed, sources, geometry, t, snr_db)`; waveform and
/// noise substreams are indexed per source and per element so the result is
/// independent of evaluation order.
pub fn synthesize_snapshots(
    geometry: &ArrayGeometry,
    sources: &[SourceSpec],
    t: usize,
    snr_db: f64,
    seed: u64,
) -> Result<SnapshotSet> {
    if sources.is_empty() {
        return Err(NfError::Config("no sources configured".into()));
    }
    if t == 0 {
        return Err(NfError::Config("need at least one snapshot".into()));
    }
    if sources[0].coherence_gain.is_some() {
        return Err(NfError::Config(
            "first source carries a coherence gain but has no master".into(),
        ));
    }
    for (k, s) in sources.iter().enumerate() {
        if s.coherence_gain.is_none() && !(s.power > 0.0) {
            return Err(NfError::Config(format!(
                "source {k} has non-positive power {}",
                s.power
            )));
        }
    }

    let tree = SeedTree::from_root(seed);
    let n = geometry.num_elements();

    // waveforms: masters draw their own stream, slaves reuse the master's
    let mut signals: Vec<Vec<Complex64>> = Vec::with_capacity(sources.len());
    let mut master_of_group: Option<usize> = None;
    for (k, src) in sources.iter().enumerate() {
        match src.coherence_gain {
            None => {
                let mut rng = tree.child("waveform").index(k as u64).rng();
                let scale = src.power.sqrt();
                let wf = draw_waveform(&mut rng, src.waveform, t)
                    .into_iter()
                    .map(|v| v * scale)
                    .collect();
                signals.push(wf);
                master_of_group = Some(k);
            }
            Some(zeta) => {
                let m = master_of_group.ok_or_else(|| {
                    NfError::Config(format!("source {k} has coherence gain but no master"))
                })?;
                let wf = signals[m].iter().map(|v| v * zeta).collect();
                signals.push(wf);
            }
        }
    }

    let mut data = DMatrix::<Complex64>::zeros(n, t);
    for (k, src) in sources.iter().enumerate() {
        let a = source_steering(geometry, src)?;
        for ti in 0..t {
            let s = signals[k][ti];
            for ni in 0..n {
                data[(ni, ti)] += a[ni] * s;
            }
        }
    }

    // noise referenced to the first master's power
    let noise_var = if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        sources[0].power / 10f64.powf(snr_db / 10.0)
    };
    if noise_var > 0.0 {
        let sigma = (noise_var / 2.0).sqrt();
        for ni in 0..n {
            let mut rng = tree.child("noise").index(ni as u64).rng();
            for ti in 0..t {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                data[(ni, ti)] += Complex64::new(re * sigma, im * sigma);
            }
        }
    }

    Ok(SnapshotSet {
        data,
        snr_db,
        seed,
        sources: sources.to_vec(),
        geometry: geometry.clone(),
    })
}

/// Sample covariance of a snapshot set, symmetrized to exact Hermitian form.
pub fn sample_covariance(snapshots: &SnapshotSet) -> CovarianceEstimate {
    covariance_of(&snapshots.data)
}

/// Sample covariance of an arbitrary data matrix (columns are snapshots).
pub fn covariance_of(data: &DMatrix<Complex64>) -> CovarianceEstimate {
    let t = data.ncols();
    let mut r = data * data.adjoint();
    r /= Complex64::new(t as f64, 0.0);
    // enforce exact Hermitian symmetry against rounding
    let rh = r.adjoint();
    r = (r + rh) * Complex64::new(0.5, 0.0);
    CovarianceEstimate {
        matrix: r,
        num_snapshots: t,
    }
}
