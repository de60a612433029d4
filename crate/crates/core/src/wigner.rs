//! Wigner d/D-function evaluation, rotation-space field synthesis, and
//! gradient-based phase retrieval of Wigner-D expansion coefficients from
//! magnitude-only measurements.
//!
//! `d_l^{k,n}(cos theta)` is evaluated by an upward three-term recursion in
//! the degree, seeded with the closed factorial-sum form at the two lowest
//! admissible degrees. `D_l^{k,n}(theta, phi, chi) =
//! N_l e^{-j k phi} d_l^{k,n}(cos theta) e^{-j n chi}` with
//! `N_l = sqrt((2l+1) / (8 pi^2))`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::error::{NfError, Result};
use crate::rng::SeedTree;

const FACT_TABLE_LEN: usize = 64;

fn factorial(n: i64) -> f64 {
    debug_assert!((0..FACT_TABLE_LEN as i64).contains(&n));
    static TABLE: std::sync::OnceLock<[f64; FACT_TABLE_LEN]> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [1.0; FACT_TABLE_LEN];
        for i in 1..FACT_TABLE_LEN {
            t[i] = t[i - 1] * i as f64;
        }
        t
    })[n as usize]
}

/// Direct factorial-sum evaluation; exact for the small degrees used as
/// recursion seeds.
fn wigner_d_sum(j: i64, k: i64, n: i64, x: f64) -> f64 {
    let c = ((1.0 + x) / 2.0).max(0.0).sqrt(); // cos(theta/2)
    let s = ((1.0 - x) / 2.0).max(0.0).sqrt(); // sin(theta/2)
    let pref = (factorial(j + k) * factorial(j - k) * factorial(j + n) * factorial(j - n)).sqrt();
    let s_lo = 0.max(n - k);
    let s_hi = (j + n).min(j - k);
    let mut total = 0.0;
    for t in s_lo..=s_hi {
        let sign = if (k - n + t) % 2 == 0 { 1.0 } else { -1.0 };
        let denom = factorial(j + n - t) * factorial(t) * factorial(k - n + t) * factorial(j - k - t);
        let c_pow = 2 * j + n - k - 2 * t;
        let s_pow = k - n + 2 * t;
        total += sign * c.powi(c_pow as i32) * s.powi(s_pow as i32) / denom;
    }
    pref * total
}

/// Wigner small-d function `d_l^{k,n}(x)` with `x = cos(theta)`.
pub fn wigner_d(l: i64, k: i64, n: i64, cos_theta: f64) -> Result<f64> {
    if l < 0 || k.abs() > l || n.abs() > l {
        return Err(NfError::Domain(format!(
            "orders out of range: l={l}, k={k}, n={n}"
        )));
    }
    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&cos_theta) {
        return Err(NfError::Domain(format!(
            "cos(theta) must lie in [-1, 1], got {cos_theta}"
        )));
    }
    let x = cos_theta.clamp(-1.0, 1.0);
    let l_min = k.abs().max(n.abs());
    if l == l_min {
        return Ok(wigner_d_sum(l_min, k, n, x));
    }
    if l == l_min + 1 {
        return Ok(wigner_d_sum(l_min + 1, k, n, x));
    }
    let mut d_prev = wigner_d_sum(l_min, k, n, x);
    let mut d_curr = wigner_d_sum(l_min + 1, k, n, x);
    let (kf, nf) = (k as f64, n as f64);
    for ll in (l_min + 1)..l {
        let lf = ll as f64;
        let denom = lf
            * (((lf + 1.0) * (lf + 1.0) - kf * kf) * ((lf + 1.0) * (lf + 1.0) - nf * nf)).sqrt();
        let a = (2.0 * lf + 1.0) * (lf * (lf + 1.0) * x - kf * nf);
        let b = (lf + 1.0) * ((lf * lf - kf * kf) * (lf * lf - nf * nf)).sqrt();
        let d_next = (a * d_curr - b * d_prev) / denom;
        d_prev = d_curr;
        d_curr = d_next;
    }
    Ok(d_curr)
}

/// Normalization `N_l = sqrt((2l+1) / (8 pi^2))`.
pub fn wigner_norm(l: i64) -> f64 {
    ((2.0 * l as f64 + 1.0) / (8.0 * PI * PI)).sqrt()
}

/// Full Wigner D-function at Euler angles `(theta, phi, chi)`.
pub fn wigner_big_d(l: i64, k: i64, n: i64, theta: f64, phi: f64, chi: f64) -> Result<Complex64> {
    let d = wigner_d(l, k, n, theta.cos())?;
    let phase = -(k as f64) * phi - (n as f64) * chi;
    Ok(Complex64::from_polar(wigner_norm(l) * d.abs(), phase + if d < 0.0 { PI } else { 0.0 }))
}

/// Band-limited coefficient layout: degrees `0 <= l <= B-1`, orders
/// `|k|, |n| <= l`, enumerated l-major with k then n ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WignerBasisSpec {
    pub bandlimit: usize,
}

impl WignerBasisSpec {
    pub fn new(bandlimit: usize) -> Result<Self> {
        if bandlimit == 0 {
            return Err(NfError::Config("bandlimit must be at least 1".into()));
        }
        Ok(Self { bandlimit })
    }

    /// `sum_l (2l+1)^2 = B (2B-1) (2B+1) / 3`.
    pub fn num_coefficients(&self) -> usize {
        let b = self.bandlimit;
        b * (2 * b - 1) * (2 * b + 1) / 3
    }

    pub fn indices(&self) -> Vec<(i64, i64, i64)> {
        let mut out = Vec::with_capacity(self.num_coefficients());
        for l in 0..self.bandlimit as i64 {
            for k in -l..=l {
                for n in -l..=l {
                    out.push((l, k, n));
                }
            }
        }
        out
    }
}

/// Rotation-space sample set `(theta, phi, chi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSamples {
    pub samples: Vec<[f64; 3]>,
}

impl RotationSamples {
    pub fn new(samples: Vec<[f64; 3]>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !(0.0..=PI).contains(&s[0])
                || !(0.0..=2.0 * PI).contains(&s[1])
                || !(0.0..=2.0 * PI).contains(&s[2])
            {
                return Err(NfError::Domain(format!(
                    "sample {i} outside [0,pi] x [0,2pi] x [0,2pi]: {s:?}"
                )));
            }
        }
        Ok(Self { samples })
    }

    /// Uniform random rotations: `cos(theta)` uniform on [-1, 1], `phi` and
    /// `chi` uniform on [0, 2pi).
    pub fn uniform_random(m: usize, seed: u64) -> Self {
        let mut rng = SeedTree::from_root(seed).child("rotation-samples").rng();
        let samples = (0..m)
            .map(|_| {
                let ct: f64 = rng.gen_range(-1.0..=1.0);
                [
                    ct.acos(),
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(0.0..2.0 * PI),
                ]
            })
            .collect();
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Measurement matrix: one row per rotation sample, one column per
/// `(l, k, n)` coefficient.
pub fn build_wigner_matrix(
    spec: &WignerBasisSpec,
    samples: &RotationSamples,
) -> Result<DMatrix<Complex64>> {
    if samples.is_empty() {
        return Err(NfError::Domain("need at least one rotation sample".into()));
    }
    let idx = spec.indices();
    let mut a = DMatrix::<Complex64>::zeros(samples.len(), idx.len());
    for (row, s) in samples.samples.iter().enumerate() {
        for (col, &(l, k, n)) in idx.iter().enumerate() {
            a[(row, col)] = wigner_big_d(l, k, n, s[0], s[1], s[2])?;
        }
    }
    Ok(a)
}

/// Linear synthesis `h = A_W alpha`.
pub fn synthesize_field(alpha: &DVector<Complex64>, a_w: &DMatrix<Complex64>) -> Result<DVector<Complex64>> {
    if alpha.len() != a_w.ncols() {
        return Err(NfError::Domain(format!(
            "coefficient length {} does not match {} columns",
            alpha.len(),
            a_w.ncols()
        )));
    }
    Ok(a_w * alpha)
}

/// Elementwise magnitudes `y = |A_W alpha|`.
pub fn phaseless_measure(alpha: &DVector<Complex64>, a_w: &DMatrix<Complex64>) -> Result<DVector<f64>> {
    Ok(synthesize_field(alpha, a_w)?.map(|z| z.norm()))
}

/// Amplitude residual objective `f = 0.5 || |A alpha| - y ||^2`.
pub fn pr_objective(alpha: &DVector<Complex64>, a_w: &DMatrix<Complex64>, y: &DVector<f64>) -> f64 {
    let u = a_w * alpha;
    0.5 * u
        .iter()
        .zip(y.iter())
        .map(|(ui, &yi)| {
            let e = ui.norm() - yi;
            e * e
        })
        .sum::<f64>()
}

/// Wirtinger gradient `A^H ((|u| - y) sign(u))`, zero subgradient where
/// `|u| = 0`.
pub fn pr_gradient(
    alpha: &DVector<Complex64>,
    a_w: &DMatrix<Complex64>,
    y: &DVector<f64>,
) -> DVector<Complex64> {
    let u = a_w * alpha;
    let resid = DVector::from_fn(u.len(), |i, _| {
        let m = u[i].norm();
        if m > 0.0 {
            u[i] / m * Complex64::new(m - y[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    a_w.adjoint() * resid
}

#[derive(Debug, Clone, Copy)]
pub struct PhaseRetrievalOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Success threshold on the relative amplitude residual.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PhaseRetrievalOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iters: 2000,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseRetrievalResult {
    pub alpha: DVector<Complex64>,
    /// Relative amplitude residual of the returned solution.
    pub residual: f64,
    pub converged: bool,
    pub restarts_used: usize,
    /// Final residual of each restart that ran.
    pub restart_log: Vec<f64>,
}

/// Recover coefficients from `y = |A_W alpha|` by gradient descent on the
/// amplitude residual with backtracking line search. Restart 0 uses a
/// spectral initializer (leading eigenvector of `A^H diag(y^2) A`), later
/// restarts random draws; the first restart reaching `tol` wins. The
/// answer is defined up to a global phase.
pub fn phase_retrieve(
    y: &DVector<f64>,
    a_w: &DMatrix<Complex64>,
    opts: PhaseRetrievalOptions,
) -> Result<PhaseRetrievalResult> {
    if y.len() != a_w.nrows() {
        return Err(NfError::Domain(format!(
            "{} measurements for {} matrix rows",
            y.len(),
            a_w.nrows()
        )));
    }
    if y.iter().any(|&v| v < 0.0) {
        return Err(NfError::Domain("magnitudes must be nonnegative".into()));
    }
    if opts.restarts == 0 {
        return Err(NfError::Config("need at least one restart".into()));
    }
    let ncol = a_w.ncols();
    let y_norm = y.norm();
    if y_norm == 0.0 {
        return Ok(PhaseRetrievalResult {
            alpha: DVector::zeros(ncol),
            residual: 0.0,
            converged: true,
            restarts_used: 0,
            restart_log: Vec::new(),
        });
    }

    let tree = SeedTree::from_root(opts.seed).child("phase-retrieval");
    let mut best: Option<(f64, DVector<Complex64>)> = None;
    let mut restart_log = Vec::new();
    let mut restarts_used = 0;

    for restart in 0..opts.restarts {
        restarts_used = restart + 1;
        let alpha0 = if restart == 0 {
            spectral_init(y, a_w)
        } else {
            let mut rng = tree.index(restart as u64).rng();
            let mut v = DVector::from_fn(ncol, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im)
            });
            rescale_to_measurements(&mut v, a_w, y);
            v
        };
        let (alpha, obj) = descend(alpha0, a_w, y, opts.max_iters, opts.tol * y_norm);
        let residual = (2.0 * obj).sqrt() / y_norm;
        restart_log.push(residual);
        if best.as_ref().map_or(true, |(r, _)| residual < *r) {
            best = Some((residual, alpha));
        }
        if residual <= opts.tol {
            break;
        }
    }

    let (residual, alpha) = best.expect("at least one restart ran");
    Ok(PhaseRetrievalResult {
        alpha,
        residual,
        converged: residual <= opts.tol,
        restarts_used,
        restart_log,
    })
}

fn spectral_init(y: &DVector<f64>, a_w: &DMatrix<Complex64>) -> DVector<Complex64> {
    let n = a_w.ncols();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..a_w.nrows() {
        let row = a_w.row(i);
        let w = y[i] * y[i];
        // m += w * row^H row
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] += row[a].conj() * row[b] * w;
            }
        }
    }
    let (_, vecs) = crate::linalg::hermitian_eigen_sorted(&m);
    let mut v = vecs.column(0).into_owned();
    rescale_to_measurements(&mut v, a_w, y);
    v
}

fn rescale_to_measurements(v: &mut DVector<Complex64>, a_w: &DMatrix<Complex64>, y: &DVector<f64>) {
    let mags = (a_w * v.clone()).map(|z| z.norm());
    let denom = mags.norm_squared();
    if denom > 0.0 {
        let s = mags.dot(y) / denom;
        *v *= Complex64::new(s, 0.0);
    }
}

fn descend(
    mut alpha: DVector<Complex64>,
    a_w: &DMatrix<Complex64>,
    y: &DVector<f64>,
    max_iters: usize,
    abs_tol: f64,
) -> (DVector<Complex64>, f64) {
    let mut obj = pr_objective(&alpha, a_w, y);
    let mut step = 1.0 / (a_w.norm_squared() / a_w.nrows() as f64 * a_w.ncols() as f64).max(1e-12);
    for _ in 0..max_iters {
        if (2.0 * obj).sqrt() <= abs_tol {
            break;
        }
        let grad = pr_gradient(&alpha, a_w, y);
        let g2 = grad.norm_squared();
        if g2 == 0.0 {
            break;
        }
        let mut accepted = false;
        let mut t = step * 2.0;
        for _ls in 0..40 {
            let cand = &alpha - &grad * Complex64::new(t, 0.0);
            let cand_obj = pr_objective(&cand, a_w, y);
            if cand_obj <= obj - 1e-4 * t * g2 {
                alpha = cand;
                obj = cand_obj;
                step = t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break; // no descent direction at line-search resolution
        }
    }
    (alpha, obj)
}

/// Relative error between coefficient vectors minimized over a global
/// phase: `min_gamma || e^{j gamma} a - b || / || b ||`.
pub fn phase_aligned_error(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    let inner = (a.adjoint() * b)[(0, 0)];
    let cross = 2.0 * inner.norm();
    let err2 = (a.norm_squared() + b.norm_squared() - cross).max(0.0);
    err2.sqrt() / b.norm()
}

/// The conjugate-flip gauge transformation
/// `alpha_{l,k,n} -> (-1)^{k-n} conj(alpha_{l,-k,-n})`.
///
/// Because `conj(D_l^{k,n}) = (-1)^{k-n} D_l^{-k,-n}`, this map conjugates
/// the synthesized field pointwise, so every phaseless measurement is
/// invariant under it. Magnitude-only data therefore determines the
/// coefficients only up to a global phase together with this flip.
pub fn conjugate_flip(spec: &WignerBasisSpec, alpha: &DVector<Complex64>) -> DVector<Complex64> {
    let idx = spec.indices();
    debug_assert_eq!(idx.len(), alpha.len());
    let pos: std::collections::HashMap<(i64, i64, i64), usize> =
        idx.iter().cloned().zip(0..).collect();
    DVector::from_fn(alpha.len(), |i, _| {
        let (l, k, n) = idx[i];
        let j = pos[&(l, -k, -n)];
        let sign = if (k - n) % 2 == 0 { 1.0 } else { -1.0 };
        alpha[j].conj() * Complex64::new(sign, 0.0)
    })
}

/// Relative error minimized over the full trivial-ambiguity group of the
/// phaseless problem: global phase and the conjugate flip.
pub fn gauge_aligned_error(
    spec: &WignerBasisSpec,
    a: &DVector<Complex64>,
    b: &DVector<Complex64>,
) -> f64 {
    phase_aligned_error(a, b).min(phase_aligned_error(&conjugate_flip(spec, a), b))
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the standard recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degree_zero_is_one() {
        for x in [-1.0, -0.3, 0.0, 0.8, 1.0] {
            assert_eq!(wigner_d(0, 0, 0, x).unwrap(), 1.0);
        }
    }

    #[test]
    fn degree_one_matches_tabulated_forms() {
        // d^1 table in terms of beta
        for beta in [0.1f64, 0.7, 1.9, 2.9] {
            let x = beta.cos();
            let c2 = (beta / 2.0).cos();
            let s2 = (beta / 2.0).sin();
            assert_abs_diff_eq!(wigner_d(1, 0, 0, x).unwrap(), x, epsilon = 1e-13);
            assert_abs_diff_eq!(
                wigner_d(1, 1, 1, x).unwrap(),
                c2 * c2,
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                wigner_d(1, 1, -1, x).unwrap(),
                s2 * s2,
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                wigner_d(1, 1, 0, x).unwrap(),
                -beta.sin() / 2f64.sqrt(),
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                wigner_d(1, 0, 1, x).unwrap(),
                beta.sin() / 2f64.sqrt(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn zero_orders_reduce_to_legendre() {
        // independent Legendre recurrence as oracle
        fn legendre(l: usize, x: f64) -> f64 {
            let (mut p0, mut p1) = (1.0, x);
            if l == 0 {
                return p0;
            }
            for k in 2..=l {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
        for l in 0..8usize {
            for x in [-0.9, -0.2, 0.37, 0.95] {
                assert_abs_diff_eq!(
                    wigner_d(l as i64, 0, 0, x).unwrap(),
                    legendre(l, x),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn recursion_agrees_with_direct_sum() {
        for l in 2..9i64 {
            for k in -l..=l {
                for n in -l..=l {
                    for x in [-0.7, 0.1, 0.6] {
                        let rec = wigner_d(l, k, n, x).unwrap();
                        let sum = wigner_d_sum(l, k, n, x);
                        assert_abs_diff_eq!(rec, sum, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn transpose_symmetry() {
        for l in 1..7i64 {
            for k in -l..=l {
                for n in -l..=l {
                    for x in [-0.8, 0.0, 0.55] {
                        let a = wigner_d(l, k, n, x).unwrap();
                        let b = wigner_d(l, n, k, x).unwrap();
                        let sign = if (k - n) % 2 == 0 { 1.0 } else { -1.0 };
                        assert_abs_diff_eq!(a, sign * b, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn orders_out_of_range_rejected() {
        assert!(wigner_d(1, 2, 0, 0.5).is_err());
        assert!(wigner_d(1, 0, -2, 0.5).is_err());
        assert!(wigner_d(2, 1, 1, 1.5).is_err());
    }

    #[test]
    fn orthogonality_by_quadrature() {
        // int_{-1}^{1} d_l d_l' dx = 2/(2l+1) delta_{ll'} for fixed (k, n)
        let (nodes, weights) = gauss_legendre(48);
        for (k, n) in [(0i64, 0i64), (1, 0), (2, 1), (1, -1)] {
            let lmin = k.abs().max(n.abs());
            for l in lmin..=5 {
                for lp in lmin..=5 {
                    let mut acc = 0.0;
                    for (x, w) in nodes.iter().zip(weights.iter()) {
                        acc +=
                            w * wigner_d(l, k, n, *x).unwrap() * wigner_d(lp, k, n, *x).unwrap();
                    }
                    let expect = if l == lp { 2.0 / (2.0 * l as f64 + 1.0) } else { 0.0 };
                    assert_abs_diff_eq!(acc, expect, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn big_d_phases_and_magnitude() {
        let (l, k, n) = (3i64, 2i64, -1i64);
        let (theta, phi, chi) = (0.9f64, 1.3f64, 2.2f64);
        let d = wigner_d(l, k, n, theta.cos()).unwrap();
        let big = wigner_big_d(l, k, n, theta, phi, chi).unwrap();
        assert_abs_diff_eq!(big.norm(), wigner_norm(l) * d.abs(), epsilon = 1e-13);
        let expect =
            Complex64::from_polar(wigner_norm(l) * d, -(k as f64) * phi - (n as f64) * chi);
        assert!((big - expect).norm() < 1e-12);
        // constant at l = 0
        let d0 = wigner_big_d(0, 0, 0, theta, phi, chi).unwrap();
        assert_abs_diff_eq!(d0.re, 1.0 / (8.0 * PI * PI).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(d0.im, 0.0, epsilon = 1e-14);
        // conjugation under negated polarization angles (real d)
        let pos = wigner_big_d(l, k, n, theta, phi, chi).unwrap();
        let neg = wigner_big_d(l, k, n, theta, -phi + 2.0 * PI, -chi + 2.0 * PI).unwrap();
        assert!((pos.conj() - neg).norm() < 1e-10);
    }

    #[test]
    fn coefficient_counts() {
        assert_eq!(WignerBasisSpec::new(1).unwrap().num_coefficients(), 1);
        assert_eq!(WignerBasisSpec::new(3).unwrap().num_coefficients(), 35);
        for b in 1..6usize {
            let spec = WignerBasisSpec::new(b).unwrap();
            assert_eq!(spec.indices().len(), spec.num_coefficients());
            let direct: usize = (0..b).map(|l| (2 * l + 1) * (2 * l + 1)).sum();
            assert_eq!(spec.num_coefficients(), direct);
        }
    }

    #[test]
    fn matrix_reproduces_triple_sum() {
        let spec = WignerBasisSpec::new(4).unwrap();
        let samples = RotationSamples::uniform_random(6, 11);
        let a = build_wigner_matrix(&spec, &samples).unwrap();
        let mut rng = SeedTree::from_root(3).rng();
        let alpha = DVector::from_fn(spec.num_coefficients(), |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let h = synthesize_field(&alpha, &a).unwrap();
        // oracle: explicit triple sum per sample
        for (row, s) in samples.samples.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, &(l, k, n)) in spec.indices().iter().enumerate() {
                acc += alpha[col] * wigner_big_d(l, k, n, s[0], s[1], s[2]).unwrap();
            }
            assert!((acc - h[row]).norm() < 1e-10);
        }
    }

    #[test]
    fn bandlimit_one_matrix_is_constant_column() {
        let spec = WignerBasisSpec::new(1).unwrap();
        let samples = RotationSamples::uniform_random(5, 2);
        let a = build_wigner_matrix(&spec, &samples).unwrap();
        assert_eq!(a.ncols(), 1);
        for v in a.iter() {
            assert_abs_diff_eq!(v.re, wigner_norm(0), epsilon = 1e-14);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn discrete_near_orthogonality_with_quadrature_weights() {
        let b = 3usize;
        let spec = WignerBasisSpec::new(b).unwrap();
        let (nodes, gl_w) = gauss_legendre(16);
        let n_ang = 12usize;
        let mut samples = Vec::new();
        let mut weights = Vec::new();
        for (x, w) in nodes.iter().zip(gl_w.iter()) {
            for a in 0..n_ang {
                for c in 0..n_ang {
                    samples.push([
                        x.acos(),
                        2.0 * PI * a as f64 / n_ang as f64,
                        2.0 * PI * c as f64 / n_ang as f64,
                    ]);
                    weights.push(w * (2.0 * PI / n_ang as f64).powi(2));
                }
            }
        }
        let a = build_wigner_matrix(&spec, &RotationSamples::new(samples).unwrap()).unwrap();
        let mut gram = DMatrix::<Complex64>::zeros(spec.num_coefficients(), spec.num_coefficients());
        for (row, &w) in weights.iter().enumerate() {
            let r = a.row(row);
            for i in 0..gram.nrows() {
                for j in 0..gram.ncols() {
                    gram[(i, j)] += r[i].conj() * r[j] * w;
                }
            }
        }
        let eye = DMatrix::<Complex64>::identity(gram.nrows(), gram.ncols());
        let max_err = (&gram - &eye)
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-3, "max Gram deviation {max_err}");
    }

    #[test]
    fn objective_is_global_phase_invariant() {
        let spec = WignerBasisSpec::new(2).unwrap();
        let samples = RotationSamples::uniform_random(30, 5);
        let a = build_wigner_matrix(&spec, &samples).unwrap();
        let mut rng = SeedTree::from_root(6).rng();
        let alpha = DVector::from_fn(spec.num_coefficients(), |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let y = phaseless_measure(&alpha, &a).unwrap();
        let f0 = pr_objective(&alpha, &a, &y);
        for gamma in [0.4, 1.9, 4.4] {
            let rotated = alpha.map(|z| z * Complex64::from_polar(1.0, gamma));
            let f1 = pr_objective(&rotated, &a, &y);
            assert_abs_diff_eq!(f0, f1, epsilon = 1e-12);
        }
        // measurements themselves are invariant
        let y2 = phaseless_measure(
            &alpha.map(|z| z * Complex64::from_polar(1.0, 0.77)),
            &a,
        )
        .unwrap();
        assert!((y - y2).norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = WignerBasisSpec::new(2).unwrap();
        let samples = RotationSamples::uniform_random(40, 7);
        let a = build_wigner_matrix(&spec, &samples).unwrap();
        let mut rng = SeedTree::from_root(8).rng();
        let truth = DVector::from_fn(spec.num_coefficients(), |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let y = phaseless_measure(&truth, &a).unwrap();
        let h = 1e-6;
        for trial in 0..10 {
            let mut rng = SeedTree::from_root(100 + trial).rng();
            let alpha = DVector::from_fn(spec.num_coefficients(), |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let grad = pr_gradient(&alpha, &a, &y);
            for j in [0usize, 3, 8] {
                let mut ap = alpha.clone();
                ap[j] += Complex64::new(h, 0.0);
                let mut am = alpha.clone();
                am[j] -= Complex64::new(h, 0.0);
                let fd_re = (pr_objective(&ap, &a, &y) - pr_objective(&am, &a, &y)) / (2.0 * h);
                let mut aip = alpha.clone();
                aip[j] += Complex64::new(0.0, h);
                let mut aim = alpha.clone();
                aim[j] -= Complex64::new(0.0, h);
                let fd_im = (pr_objective(&aip, &a, &y) - pr_objective(&aim, &a, &y)) / (2.0 * h);
                let denom = (fd_re * fd_re + fd_im * fd_im).sqrt().max(1e-9);
                assert!(
                    ((grad[j].re - fd_re).powi(2) + (grad[j].im - fd_im).powi(2)).sqrt() / denom
                        < 1e-6 * 100.0,
                    "trial {trial} coeff {j}: analytic {:?} vs fd ({fd_re}, {fd_im})",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn zero_measurements_recover_zero() {
        let spec = WignerBasisSpec::new(2).unwrap();
        let samples = RotationSamples::uniform_random(20, 9);
        let a = build_wigner_matrix(&spec, &samples).unwrap();
        let y = DVector::zeros(20);
        let res = phase_retrieve(&y, &a, PhaseRetrievalOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.alpha.norm(), 0.0);
    }

    #[test]
    fn single_coefficient_magnitude_recovered() {
        let spec = WignerBasisSpec::new(1).unwrap();
        let samples = RotationSamples::uniform_random(1, 10);
        let a = build_wigner_matrix(&spec, &samples).unwrap();
        let truth = DVector::from_vec(vec![Complex64::new(0.3, -0.8)]);
        let y = phaseless_measure(&truth, &a).unwrap();
        let res = phase_retrieve(&y, &a, PhaseRetrievalOptions::default()).unwrap();
        assert!(res.converged);
        assert_abs_diff_eq!(res.alpha[0].norm(), truth[0].norm(), epsilon = 1e-6);
    }

    #[test]
    fn b2_instances_recover_up_to_global_phase() {
        let spec = WignerBasisSpec::new(2).unwrap();
        let ncoef = spec.num_coefficients();
        let m = 8 * ncoef;
        let mut ok = 0;
        let total = 6;
        for inst in 0..total {
            let samples = RotationSamples::uniform_random(m, 40 + inst);
            let a = build_wigner_matrix(&spec, &samples).unwrap();
            let mut rng = SeedTree::from_root(50 + inst).rng();
            let truth = DVector::from_fn(ncoef, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let y = phaseless_measure(&truth, &a).unwrap();
            let res = phase_retrieve(
                &y,
                &a,
                PhaseRetrievalOptions { restarts: 10, max_iters: 3000, tol: 1e-9, seed: inst },
            )
            .unwrap();
            if gauge_aligned_error(&spec, &res.alpha, &truth) <= 1e-3 {
                ok += 1;
            }
        }
        assert!(ok >= total - 1, "only {ok}/{total} instances recovered");
    }

    #[test]
    fn conjugate_flip_is_measurement_invariant() {
        let spec = WignerBasisSpec::new(3).unwrap();
        let samples = RotationSamples::uniform_random(50, 21);
        let a = build_wigner_matrix(&spec, &samples).unwrap();
        let mut rng = SeedTree::from_root(22).rng();
        let alpha = DVector::from_fn(spec.num_coefficients(), |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let flipped = conjugate_flip(&spec, &alpha);
        // genuinely different coefficient vector, identical magnitudes
        assert!(phase_aligned_error(&flipped, &alpha) > 0.1);
        let y1 = phaseless_measure(&alpha, &a).unwrap();
        let y2 = phaseless_measure(&flipped, &a).unwrap();
        assert!((y1 - y2).norm() < 1e-12);
        // involution up to nothing: flipping twice returns the original
        let back = conjugate_flip(&spec, &flipped);
        assert!((back - alpha).norm() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (nodes, weights) = gauss_legendre(10);
        // int x^4 dx over [-1,1] = 2/5
        let acc: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * x.powi(4))
            .sum();
        assert_abs_diff_eq!(acc, 0.4, epsilon = 1e-12);
        let total: f64 = weights.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-12);
    }
}
