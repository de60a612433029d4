//! Polar-domain dictionary design and sparse near-field channel estimation.
//!
//! Angles are sampled at the far-field beam nulls
//! `theta = arcsin(n lambda / (N d))` and distances on rings
//! `r = N^2 d^2 cos^2(theta) / (2 lambda eps^2 s)`, `s = 0` being the
//! far-field atom. Larger `eps` lowers the worst-case column coherence of
//! the resulting steering dictionary, which is what greedy recovery needs.
//!
//! Coherence is defined on the raw unit-modulus steering atoms (maximum
//! pairwise inner-product magnitude, up to `N`); the dictionary columns
//! handed to OMP are separately 12-normalized.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::array::{region_boundaries, steering, ArrayGeometry, SteeringModel};
use crate::error::{NfError, Result};
use crate::linalg::pinv;
use crate::rng::SeedTree;

/// One multipath component: complex gain at `(theta, range)`; infinite
/// range marks a far-field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPath {
    pub alpha: Complex64,
    pub theta: f64,
    pub range: f64,
}

/// Parametric multipath channel `h = sum_l alpha_l a(theta_l, r_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub paths: Vec<ChannelPath>,
}

/// Pilot observation setup: `y = sqrt(rho) A h + n` with a unit-modulus
/// analog combining matrix of `P * N_RF` rows, entries of modulus
/// `1 / sqrt(N)` with uniformly random phases.
#[derive(Debug, Clone)]
pub struct PilotSetup {
    pub snr_rho: f64,
    pub num_rf: usize,
    pub num_slots: usize,
    pub combining: DMatrix<Complex64>,
    pub seed: u64,
}

impl PilotSetup {
    pub fn new(
        geometry: &ArrayGeometry,
        snr_rho: f64,
        num_rf: usize,
        num_slots: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_rf == 0 || num_slots == 0 {
            return Err(NfError::Config(
                "pilot setup needs num_rf >= 1 and num_slots >= 1".into(),
            ));
        }
        if !(snr_rho > 0.0) {
            return Err(NfError::Config(format!(
                "pilot SNR must be positive, got {snr_rho}"
            )));
        }
        let n = geometry.num_elements();
        let m = num_rf * num_slots;
        let modulus = 1.0 / (n as f64).sqrt();
        let mut rng = SeedTree::from_root(seed).child("combining").rng();
        let combining = DMatrix::from_fn(m, n, |_, _| {
            Complex64::from_polar(modulus, rng.gen_range(0.0..std::f64::consts::TAU))
        });
        Ok(Self {
            snr_rho,
            num_rf,
            num_slots,
            combining,
            seed,
        })
    }

    pub fn num_measurements(&self) -> usize {
        self.num_rf * self.num_slots
    }
}

/// Column label of a dictionary atom: angle, range (infinite for the
/// far-field ring), and ring index `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomLabel {
    pub theta: f64,
    pub range: f64,
    pub ring: usize,
}

/// Labeled near-field steering dictionary with l2-normalized columns.
#[derive(Debug, Clone)]
pub struct PolarDictionary {
    pub atoms: DMatrix<Complex64>,
    pub labels: Vec<AtomLabel>,
    pub epsilon: f64,
    pub normalized: bool,
}

impl PolarDictionary {
    pub fn num_atoms(&self) -> usize {
        self.labels.len()
    }
}

/// Angle samples `arcsin(n lambda / (N d))` for `n = 0, +-1, ..,
/// +-floor(N d / lambda)`, sorted ascending.
pub fn angle_samples(geometry: &ArrayGeometry) -> Vec<f64> {
    let nd = geometry.num_elements() as f64 * geometry.spacing();
    let n_max = (nd / geometry.wavelength()).floor() as i64;
    let mut out = Vec::with_capacity((2 * n_max + 1) as usize);
    for n in -n_max..=n_max {
        out.push((n as f64 * geometry.wavelength() / nd).clamp(-1.0, 1.0).asin());
    }
    out
}

/// Distance rings at one angle: `(0, inf)` for the far-field atom, then
/// `r_s = N^2 d^2 cos^2(theta) / (2 lambda eps^2 s)` while `r_s >= r_min`.
pub fn distance_samples(
    geometry: &ArrayGeometry,
    theta: f64,
    epsilon: f64,
    r_min: f64,
) -> Vec<(usize, f64)> {
    let n = geometry.num_elements() as f64;
    let d = geometry.spacing();
    let c = theta.cos();
    let base = n * n * d * d * c * c / (2.0 * geometry.wavelength() * epsilon * epsilon);
    let mut out = vec![(0usize, f64::INFINITY)];
    let mut s = 1usize;
    loop {
        let r = base / s as f64;
        if r < r_min {
            break;
        }
        out.push((s, r));
        s += 1;
    }
    out
}

/// Build the full dictionary over all (angle, ring) pairs.
///
/// When `N d / lambda` is integral the outermost angle samples sit at
/// `sin(theta) = +-1` and alias to the same steering vector; the negative
/// endpoint is dropped so labels map to distinct atoms.
pub fn build_dictionary(
    geometry: &ArrayGeometry,
    epsilon: f64,
    r_min: f64,
) -> Result<PolarDictionary> {
    if !(epsilon > 0.0) {
        return Err(NfError::Config(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(r_min > 0.0) {
        return Err(NfError::Config(format!(
            "r_min must be positive, got {r_min}"
        )));
    }
    let mut angles = angle_samples(geometry);
    let endpoint_aliased = angles
        .first()
        .zip(angles.last())
        .map(|(a, b)| (a.sin() + 1.0).abs() < 1e-12 && (b.sin() - 1.0).abs() < 1e-12)
        .unwrap_or(false);
    if endpoint_aliased {
        angles.remove(0);
    }

    let n = geometry.num_elements();
    let mut labels = Vec::new();
    let mut columns: Vec<DVector<Complex64>> = Vec::new();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    for &theta in &angles {
        for (ring, r) in distance_samples(geometry, theta, epsilon, r_min) {
            let atom = if ring == 0 {
                steering(geometry, theta, f64::INFINITY, SteeringModel::FarFieldPlanar)?
            } else {
                steering(geometry, theta, r, SteeringModel::FresnelQuadratic)?
            };
            columns.push(atom * Complex64::new(inv_sqrt_n, 0.0));
            labels.push(AtomLabel { theta, range: r, ring });
        }
    }
    let mut atoms = DMatrix::<Complex64>::zeros(n, columns.len());
    for (i, col) in columns.iter().enumerate() {
        atoms.set_column(i, col);
    }
    Ok(PolarDictionary {
        atoms,
        labels,
        epsilon,
        normalized: true,
    })
}

/// Mutual coherence report: raw-atom `mu` (up to `N`) and `mu / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceReport {
    pub mu: f64,
    pub mu_over_n: f64,
}

/// Exact maximum pairwise inner-product magnitude over all atom pairs,
/// computed on the raw unit-modulus steering atoms. For normalized columns
/// the raw inner product is `N` times the normalized one.
pub fn coherence(dict: &PolarDictionary) -> Result<CoherenceReport> {
    let q = dict.num_atoms();
    if q < 2 {
        return Err(NfError::Domain(
            "coherence needs at least two atoms".into(),
        ));
    }
    let n = dict.atoms.nrows() as f64;
    let scale = if dict.normalized { n } else { 1.0 };
    let mu = (0..q)
        .into_par_iter()
        .map(|p| {
            let ap = dict.atoms.column(p);
            let mut best = 0.0f64;
            for r in (p + 1)..q {
                let ip = (ap.adjoint() * dict.atoms.column(r))[(0, 0)].norm() * scale;
                if ip > best {
                    best = ip;
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(CoherenceReport {
        mu,
        mu_over_n: mu / n,
    })
}

/// `h = sum_l alpha_l a(theta_l, r_l)`; planar steering for infinite ranges.
pub fn synthesize_channel(geometry: &ArrayGeometry, spec: &ChannelSpec) -> Result<DVector<Complex64>> {
    if spec.paths.is_empty() {
        return Err(NfError::Config("channel needs at least one path".into()));
    }
    let mut h = DVector::<Complex64>::zeros(geometry.num_elements());
    for p in &spec.paths {
        let a = if p.range.is_infinite() {
            steering(geometry, p.theta, f64::INFINITY, SteeringModel::FarFieldPlanar)?
        } else {
            steering(geometry, p.theta, p.range, SteeringModel::FresnelQuadratic)?
        };
        h += a * p.alpha;
    }
    Ok(h)
}

/// Pilot observation `y = sqrt(rho) A h + n`, `n ~ CN(0, I)`, deterministic
/// given the setup seed.
pub fn observe_pilot(h: &DVector<Complex64>, setup: &PilotSetup) -> Result<DVector<Complex64>> {
    if h.len() != setup.combining.ncols() {
        return Err(NfError::Domain(format!(
            "channel length {} does not match combining width {}",
            h.len(),
            setup.combining.ncols()
        )));
    }
    let mut y = &setup.combining * h * Complex64::new(setup.snr_rho.sqrt(), 0.0);
    let mut rng = SeedTree::from_root(setup.seed).child("pilot-noise").rng();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for v in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re, im) * inv_sqrt2;
    }
    Ok(y)
}

/// Minimum-norm least-squares channel estimate through the pseudo-inverse
/// of the effective sensing matrix `sqrt(rho) A`.
pub fn ls_estimate(y: &DVector<Complex64>, setup: &PilotSetup) -> Result<DVector<Complex64>> {
    let eff = &setup.combining * Complex64::new(setup.snr_rho.sqrt(), 0.0);
    Ok(pinv(&eff, 1e-12)? * y)
}

/// OMP stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmpStop {
    /// Select exactly this many atoms.
    Sparsity(usize),
    /// Stop when the residual norm falls to or below this value.
    ResidualTol(f64),
}

/// OMP channel estimate on the effective sensing matrix
/// `sqrt(rho) A W`; returns the estimate and the selected column indices.
/// Correlation ties break toward the lowest column index.
pub fn omp_estimate(
    y: &DVector<Complex64>,
    setup: &PilotSetup,
    dict: &PolarDictionary,
    stop: OmpStop,
) -> Result<(DVector<Complex64>, Vec<usize>)> {
    if !dict.normalized {
        return Err(NfError::Domain("dictionary must be normalized".into()));
    }
    let q = dict.num_atoms();
    let max_atoms = match stop {
        OmpStop::Sparsity(l) => {
            if l > q {
                return Err(NfError::Domain(format!(
                    "sparsity {l} exceeds dictionary size {q}"
                )));
            }
            l
        }
        OmpStop::ResidualTol(_) => y.len().min(q),
    };
    let phi = &setup.combining * &dict.atoms * Complex64::new(setup.snr_rho.sqrt(), 0.0);
    let mut residual = y.clone();
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs = DVector::<Complex64>::zeros(0);
    for _ in 0..max_atoms {
        if let OmpStop::ResidualTol(tol) = stop {
            if residual.norm() <= tol {
                break;
            }
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for col in 0..q {
            if support.contains(&col) {
                continue;
            }
            let c = (phi.column(col).adjoint() * &residual)[(0, 0)].norm();
            if c > best.0 {
                best = (c, col);
            }
        }
        support.push(best.1);
        // LS refit on the selected columns
        let mut sub = DMatrix::<Complex64>::zeros(phi.nrows(), support.len());
        for (i, &col) in support.iter().enumerate() {
            sub.set_column(i, &phi.column(col));
        }
        coeffs = pinv(&sub, 1e-12)? * y;
        residual = y - sub * &coeffs;
    }
    let mut h = DVector::<Complex64>::zeros(dict.atoms.nrows());
    for (i, &col) in support.iter().enumerate() {
        h += dict.atoms.column(col) * coeffs[i];
    }
    Ok((h, support))
}

/// Normalized mean-squared error `||h_hat - h||^2 / ||h||^2`.
pub fn nmse(h_hat: &DVector<Complex64>, h_true: &DVector<Complex64>) -> Result<f64> {
    if h_hat.len() != h_true.len() {
        return Err(NfError::Domain(format!(
            "length mismatch {} vs {}",
            h_hat.len(),
            h_true.len()
        )));
    }
    let denom = h_true.norm_squared();
    if !(denom > 0.0) {
        return Err(NfError::Domain("true channel has zero norm".into()));
    }
    Ok((h_hat - h_true).norm_squared() / denom)
}

/// Default inner sampling limit: the reactive-field boundary, below which
/// the Fresnel ring model stops being valid.
pub fn default_r_min(geometry: &ArrayGeometry) -> f64 {
    region_boundaries(geometry).reactive_limit
}
