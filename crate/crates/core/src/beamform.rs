//! Acoustic and ultrasound beamforming: the acoustic-vector-sensor
//! manifold, MVDR (Capon) weights with diagonal loading, linear combining,
//! and sidelobe-constrained weight design for near-field transducer
//! arrays.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NfError, Result};
use crate::linalg::hermitian_eigen_sorted;
use crate::scenario::CovarianceEstimate;

/// Acoustic vector-sensor response: three velocity components and the
/// range-dependent complex pressure. `phi` is elevation from the z-axis,
/// `theta` azimuth in the x-y plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvsManifold {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: Complex64,
}

impl AvsManifold {
    pub fn as_vector(&self) -> DVector<Complex64> {
        DVector::from_vec(vec![
            Complex64::new(self.u, 0.0),
            Complex64::new(self.v, 0.0),
            Complex64::new(self.w, 0.0),
            self.p,
        ])
    }
}

/// AVS manifold at `(theta, phi, r)`:
/// velocity `(sin phi cos theta, sin phi sin theta, cos phi)` and pressure
/// `p = exp(j arctan(lambda / 2 pi r)) / sqrt(1 + (lambda / 2 pi r)^2)`.
pub fn avs_manifold(theta: f64, phi: f64, r: f64, lambda: f64) -> Result<AvsManifold> {
    if !(r > 0.0) {
        return Err(NfError::Domain(format!("range must be positive, got {r}")));
    }
    if !(lambda > 0.0) {
        return Err(NfError::Domain(format!(
            "wavelength must be positive, got {lambda}"
        )));
    }
    let q = lambda / (2.0 * std::f64::consts::PI * r);
    Ok(AvsManifold {
        u: phi.sin() * theta.cos(),
        v: phi.sin() * theta.sin(),
        w: phi.cos(),
        p: Complex64::from_polar(1.0 / (1.0 + q * q).sqrt(), q.atan()),
    })
}

/// Condition-number threshold beyond which diagonal loading kicks in.
const LOADING_CONDITION: f64 = 1e10;
/// Loading level relative to the average eigenvalue.
const LOADING_LEVEL: f64 = 1e-6;

/// MVDR (Capon) weights `w = R^{-1} a / (a^H R^{-1} a)`, distortionless by
/// construction. Ill-conditioned covariances are diagonally loaded with
/// `1e-6 tr(R)/N` before inversion.
pub fn mvdr_weights(r_m: &CovarianceEstimate, a: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let n = r_m.matrix.nrows();
    if a.len() != n {
        return Err(NfError::Domain(format!(
            "steering length {} does not match covariance size {n}",
            a.len()
        )));
    }
    if !(a.norm() > 0.0) {
        return Err(NfError::Domain("zero steering vector".into()));
    }
    let (vals, _) = hermitian_eigen_sorted(&r_m.matrix);
    let lam_max = vals[0].max(0.0);
    let lam_min = vals[n - 1];
    let mut m = r_m.matrix.clone();
    if lam_min <= 0.0 || lam_max / lam_min > LOADING_CONDITION {
        let trace: f64 = vals.iter().sum();
        let load = LOADING_LEVEL * trace / n as f64;
        for i in 0..n {
            m[(i, i)] += Complex64::new(load, 0.0);
        }
    }
    let r_inv_a = crate::linalg::solve_hpd(&m, a)?;
    let denom = (a.adjoint() * &r_inv_a)[(0, 0)];
    if denom.norm() == 0.0 {
        return Err(NfError::Numerical("vanishing MVDR denominator".into()));
    }
    let mut w = &r_inv_a / denom;
    // pin the distortionless constraint exactly
    let t = (w.adjoint() * a)[(0, 0)];
    w /= t.conj();
    Ok(w)
}

/// Linear combining `y_o(t) = w^H y(t)` over snapshot columns.
pub fn beamformer_output(w: &DVector<Complex64>, data: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    if w.len() != data.nrows() {
        return Err(NfError::Domain(format!(
            "weight length {} does not match {} sensors",
            w.len(),
            data.nrows()
        )));
    }
    Ok((0..data.ncols())
        .map(|t| (w.adjoint() * data.column(t))[(0, 0)])
        .collect())
}

/// Sidelobe-constrained design instance: unit response at the focus,
/// `|w^H y_p| <= delta` on the sidelobe set, minimum `||w||`.
#[derive(Debug, Clone)]
pub struct SidelobeProblem {
    pub focus_response: DVector<Complex64>,
    pub sidelobe_responses: Vec<DVector<Complex64>>,
    pub delta: f64,
}

/// Solver knobs for the penalty-continuation scheme.
#[derive(Debug, Clone, Copy)]
pub struct SidelobeOptions {
    pub stages: usize,
    pub iters_per_stage: usize,
    pub initial_penalty: f64,
    /// Constraint slack accepted as feasible.
    pub tol: f64,
}

impl Default for SidelobeOptions {
    fn default() -> Self {
        Self {
            stages: 6,
            iters_per_stage: 2000,
            initial_penalty: 1.0,
            tol: 1e-4,
        }
    }
}

/// High-iteration continuation settings used as a reference solve.
impl SidelobeOptions {
    pub fn reference() -> Self {
        Self {
            stages: 10,
            iters_per_stage: 20_000,
            initial_penalty: 1.0,
            tol: 1e-6,
        }
    }
}

/// Solution with post-hoc constraint audit; feasibility is always checked
/// by direct evaluation, never trusted from solver state.
#[derive(Debug, Clone)]
pub struct SidelobeSolution {
    pub weights: DVector<Complex64>,
    pub xi: f64,
    pub max_sidelobe: f64,
    pub feasible: bool,
}

/// Projected-gradient penalty solver:
/// minimize `||w||^2 + rho sum_p max(0, |y_p^H w| - delta)^2` with the
/// equality constraint `y_f^H w = 1` restored by exact affine projection
/// after every step; `rho` grows tenfold per stage.
pub fn sidelobe_design(problem: &SidelobeProblem, opts: SidelobeOptions) -> Result<SidelobeSolution> {
    let yf = &problem.focus_response;
    let nf2 = yf.norm_squared();
    if !(nf2 > 0.0) {
        return Err(NfError::Domain("zero focus response".into()));
    }
    if !(problem.delta > 0.0) {
        return Err(NfError::Domain(format!(
            "sidelobe ceiling must be positive, got {}",
            problem.delta
        )));
    }
    for (i, y) in problem.sidelobe_responses.iter().enumerate() {
        if y.len() != yf.len() {
            return Err(NfError::Domain(format!(
                "sidelobe response {i} has length {} expected {}",
                y.len(),
                yf.len()
            )));
        }
    }

    let project = |w: &DVector<Complex64>| -> DVector<Complex64> {
        let gap = Complex64::new(1.0, 0.0) - (yf.adjoint() * w)[(0, 0)];
        w + yf * (gap / Complex64::new(nf2, 0.0))
    };

    // matched filter start: minimum-norm distortionless point
    let mut w = yf / Complex64::new(nf2, 0.0);
    let delta = problem.delta;

    let objective = |w: &DVector<Complex64>, rho: f64| -> f64 {
        let mut obj = w.norm_squared();
        for y in &problem.sidelobe_responses {
            let e = (y.adjoint() * w)[(0, 0)].norm() - delta;
            if e > 0.0 {
                obj += rho * e * e;
            }
        }
        obj
    };

    let mut rho = opts.initial_penalty;
    for _stage in 0..opts.stages {
        let mut step = 1.0 / (2.0 + rho * problem.sidelobe_responses.len() as f64);
        for _it in 0..opts.iters_per_stage {
            // Wirtinger gradient of the penalized objective
            let mut grad = w.clone();
            for y in &problem.sidelobe_responses {
                let t = (y.adjoint() * &w)[(0, 0)];
                let e = t.norm() - delta;
                if e > 0.0 && t.norm() > 0.0 {
                    grad += y * (t / Complex64::new(t.norm(), 0.0))
                        * Complex64::new(rho * e, 0.0);
                }
            }
            let f0 = objective(&w, rho);
            // backtracking on the projected step
            let mut accepted = false;
            for _ls in 0..30 {
                let cand = project(&(&w - &grad * Complex64::new(step, 0.0)));
                if objective(&cand, rho) <= f0 - 1e-12 * f0.abs() {
                    w = cand;
                    step *= 1.3;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break; // stationary at this penalty level
            }
        }
        rho *= 10.0;
    }

    let w = project(&w);
    let max_sidelobe = problem
        .sidelobe_responses
        .iter()
        .map(|y| (y.adjoint() * &w)[(0, 0)].norm())
        .fold(0.0f64, f64::max);
    Ok(SidelobeSolution {
        xi: w.norm(),
        feasible: max_sidelobe <= delta + opts.tol,
        max_sidelobe,
        weights: w,
    })
}

/// 3-D exact-spherical transducer response: per-element propagation phases
/// from the field point to a line of `n` elements spaced `d` along x,
/// referenced to the first element. Distances in the same unit as `lambda`.
pub fn ultrasound_response(
    n: usize,
    d: f64,
    lambda: f64,
    point: [f64; 3],
) -> Result<DVector<Complex64>> {
    if n == 0 || !(d > 0.0) || !(lambda > 0.0) {
        return Err(NfError::Domain("invalid transducer line parameters".into()));
    }
    let dist = |e: usize| -> f64 {
        let x = point[0] - e as f64 * d;
        (x * x + point[1] * point[1] + point[2] * point[2]).sqrt()
    };
    let d0 = dist(0);
    Ok(DVector::from_fn(n, |e, _| {
        Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (dist(e) - d0) / lambda)
    }))
}
