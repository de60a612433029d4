//! Near-field beam focusing: normalized array gain along range, 3 dB beam
//! depth, MRT precoding, and MMSE-combining spectral efficiency for
//! co-angle multi-user multiplexing.
//!
//! Angle convention in this module: `theta` is measured from the array
//! axis, so broadside is `theta = pi/2` and the depth formulas carry
//! `sin^2(theta)`. The steering-vector modules measure angles from
//! broadside; the conversion is `theta_broadside = pi/2 - theta`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

use crate::array::{steering, ArrayGeometry, SteeringModel};
use crate::error::{NfError, Result};
use crate::fresnel::fresnel_integrals;

/// `z` where the Fresnel-approximated gain crosses one half.
pub const Z_3DB: f64 = 1.6;

/// Exact normalized array gain `G = (1/N) |a^H(theta, r0) a(theta, r)|`
/// using the Fresnel steering model at the axis-referenced angle.
pub fn array_gain(geometry: &ArrayGeometry, theta: f64, r0: f64, r: f64) -> Result<f64> {
    if !(r0 > 0.0) || !(r > 0.0) {
        return Err(NfError::Domain(format!(
            "ranges must be positive, got r0={r0}, r={r}"
        )));
    }
    let th_b = FRAC_PI_2 - theta;
    let a0 = steering(geometry, th_b, r0, SteeringModel::FresnelQuadratic)?;
    let a1 = steering(geometry, th_b, r, SteeringModel::FresnelQuadratic)?;
    Ok((a0.adjoint() * a1)[(0, 0)].norm() / geometry.num_elements() as f64)
}

/// Fresnel-integral approximation `G ~ |C(z) + j S(z)| / z` with
/// `z = sqrt(N^2 d^2 sin^2(theta) / (2 lambda) |1/r0 - 1/r|)`.
pub fn array_gain_approx(geometry: &ArrayGeometry, theta: f64, r0: f64, r: f64) -> Result<f64> {
    if !(r0 > 0.0) || !(r > 0.0) {
        return Err(NfError::Domain(format!(
            "ranges must be positive, got r0={r0}, r={r}"
        )));
    }
    let z = squint_free_z(geometry, theta, r0, r);
    if z < 1e-9 {
        return Ok(1.0);
    }
    let (c, s) = fresnel_integrals(z);
    Ok((c * c + s * s).sqrt() / z)
}

fn squint_free_z(geometry: &ArrayGeometry, theta: f64, r0: f64, r: f64) -> f64 {
    let n = geometry.num_elements() as f64;
    let d = geometry.spacing();
    let s = theta.sin();
    (n * n * d * d * s * s / (2.0 * geometry.wavelength()) * (1.0 / r0 - 1.0 / r).abs()).sqrt()
}

/// Closed-form 3 dB beam depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamDepthResult {
    /// Boundary range `r_BD = N^2 d^2 sin^2(theta) / (2 lambda z_3dB^2)`.
    pub r_bd: f64,
    /// `2 r0^2 r_BD / (r_BD^2 - r0^2)`, infinite once `r0 >= r_BD`.
    pub bd_3db: f64,
    pub z_3db: f64,
    /// Set when `sin(theta) = 0` collapses `r_BD` to zero and the closed
    /// form degenerates.
    pub degenerate: bool,
}

/// Closed-form beam depth at a focus range `r0`.
pub fn beam_depth(geometry: &ArrayGeometry, theta: f64, r0: f64) -> Result<BeamDepthResult> {
    if !(r0 > 0.0) {
        return Err(NfError::Domain(format!("focus range must be positive, got {r0}")));
    }
    let n = geometry.num_elements() as f64;
    let d = geometry.spacing();
    let s = theta.sin();
    let r_bd = n * n * d * d * s * s / (2.0 * geometry.wavelength() * Z_3DB * Z_3DB);
    let degenerate = r_bd == 0.0;
    let bd_3db = if r0 >= r_bd {
        f64::INFINITY
    } else {
        2.0 * r0 * r0 * r_bd / (r_bd * r_bd - r0 * r0)
    };
    Ok(BeamDepthResult {
        r_bd,
        bd_3db,
        z_3db: Z_3DB,
        degenerate,
    })
}

/// Half-power interval of the exact gain along range, found numerically:
/// the nearest crossings of `G = 0.5` on either side of `r0`. `None` when
/// the gain never falls to one half beyond the focus (infinite depth).
pub fn numerical_beam_depth_3db(
    geometry: &ArrayGeometry,
    theta: f64,
    r0: f64,
) -> Result<Option<f64>> {
    let g_at = |r: f64| array_gain(geometry, theta, r0, r);
    // outward log sweeps for the first half-power brackets
    let lower = sweep_crossing(&g_at, r0, 1.0 / 1.01, r0 * 1e-4)?;
    let upper = sweep_crossing(&g_at, r0, 1.01, r0 * 1e6)?;
    match (lower, upper) {
        (Some(lo), Some(hi)) => Ok(Some(hi - lo)),
        _ => Ok(None),
    }
}

fn sweep_crossing<F: Fn(f64) -> Result<f64>>(g: &F, start: f64, ratio: f64, limit: f64) -> Result<Option<f64>> {
    let mut prev_r = start;
    let mut prev_g = g(start)?;
    let mut r = start;
    loop {
        r *= ratio;
        let gr = g(r)?;
        if gr < 0.5 {
            // bisect between prev_r and r
            let (mut a, mut b) = (prev_r, r);
            let (mut ga, _) = (prev_g, gr);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let gm = g(m)?;
                if (gm < 0.5) == (ga >= 0.5) {
                    b = m;
                } else {
                    a = m;
                    ga = gm;
                }
            }
            return Ok(Some(0.5 * (a + b)));
        }
        prev_r = r;
        prev_g = gr;
        let out_of_bounds = if ratio > 1.0 { r > limit } else { r < limit };
        if out_of_bounds {
            return Ok(None);
        }
    }
}

/// Unit-norm maximum-ratio-transmission precoder `w = h / ||h||`.
pub fn mrt_precoder(h: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let norm = h.norm();
    if !(norm > 0.0) {
        return Err(NfError::Domain("zero channel has no MRT precoder".into()));
    }
    Ok(h / Complex64::new(norm, 0.0))
}

/// Single uplink user: axis-referenced angle, range, transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkUser {
    pub theta: f64,
    pub range: f64,
    pub power: f64,
}

/// Multi-user uplink scene with per-element noise power `sigma^2`.
#[derive(Debug, Clone)]
pub struct UplinkScenario {
    pub users: Vec<UplinkUser>,
    pub noise_power: f64,
}

impl UplinkScenario {
    fn validate(&self, channels: &[DVector<Complex64>]) -> Result<()> {
        if channels.len() != self.users.len() {
            return Err(NfError::Domain(format!(
                "{} channels for {} users",
                channels.len(),
                self.users.len()
            )));
        }
        if !(self.noise_power > 0.0) {
            return Err(NfError::Domain("noise power must be positive".into()));
        }
        for u in &self.users {
            if !(u.power > 0.0) {
                return Err(NfError::Domain("user powers must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-user spectral efficiency under MMSE combining with perfect CSI:
/// `SE_k = log2(1 + p_k h_k^H (sum_{i != k} p_i h_i h_i^H + sigma^2 I)^{-1} h_k)`.
///
/// Evaluated through the Gram-matrix (Woodbury) form of the interference
/// inverse, which is algebraically exact and avoids the N x N solve.
pub fn mmse_se(scenario: &UplinkScenario, channels: &[DVector<Complex64>]) -> Result<Vec<f64>> {
    scenario.validate(channels)?;
    let k = channels.len();
    let sigma2 = scenario.noise_power;
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        let sinr = sinr_against(
            &channels[i],
            scenario.users[i].power,
            &others.iter().map(|&j| (&channels[j], scenario.users[j].power)).collect::<Vec<_>>(),
            sigma2,
        )?;
        out.push((1.0 + sinr).log2());
    }
    Ok(out)
}

/// `p h^H (sum_j p_j v_j v_j^H + sigma^2 I)^{-1} h` via the Gram form.
fn sinr_against(
    h: &DVector<Complex64>,
    p: f64,
    interferers: &[(&DVector<Complex64>, f64)],
    sigma2: f64,
) -> Result<f64> {
    let m = interferers.len();
    if m == 0 {
        return Ok(p * h.norm_squared() / sigma2);
    }
    // inner = sigma^2 P^{-1} + V^H V, g = V^H h
    let mut inner = DMatrix::<Complex64>::zeros(m, m);
    let mut g = DVector::<Complex64>::zeros(m);
    for a in 0..m {
        g[a] = (interferers[a].0.adjoint() * h)[(0, 0)];
        for b in 0..m {
            inner[(a, b)] = (interferers[a].0.adjoint() * interferers[b].0)[(0, 0)];
        }
        inner[(a, a)] += Complex64::new(sigma2 / interferers[a].1, 0.0);
    }
    let w = inner
        .lu()
        .solve(&g)
        .ok_or_else(|| NfError::Numerical("singular Gram system in MMSE SINR".into()))?;
    let quad = h.norm_squared() - (g.adjoint() * w)[(0, 0)].re;
    Ok((p / sigma2) * quad.max(0.0))
}

/// SE when the combiner is built from presumed channels but propagation
/// follows the true ones. With `presumed == true` this reduces to
/// [`mmse_se`].
pub fn mmse_se_mismatched(
    scenario: &UplinkScenario,
    true_channels: &[DVector<Complex64>],
    presumed_channels: &[DVector<Complex64>],
) -> Result<Vec<f64>> {
    scenario.validate(true_channels)?;
    scenario.validate(presumed_channels)?;
    let k = true_channels.len();
    let sigma2 = scenario.noise_power;
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        // combiner direction u = (sum_{j != i} p_j hp_j hp_j^H + sigma^2 I)^{-1} hp_i,
        // computed through the same Gram identity (scale irrelevant)
        let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        let m = others.len();
        let hp = &presumed_channels[i];
        let u: DVector<Complex64> = if m == 0 {
            hp.clone()
        } else {
            let mut inner = DMatrix::<Complex64>::zeros(m, m);
            let mut g = DVector::<Complex64>::zeros(m);
            for (a, &ja) in others.iter().enumerate() {
                g[a] = (presumed_channels[ja].adjoint() * hp)[(0, 0)];
                for (b, &jb) in others.iter().enumerate() {
                    inner[(a, b)] =
                        (presumed_channels[ja].adjoint() * &presumed_channels[jb])[(0, 0)];
                }
                inner[(a, a)] += Complex64::new(sigma2 / scenario.users[ja].power, 0.0);
            }
            let w = inner
                .lu()
                .solve(&g)
                .ok_or_else(|| NfError::Numerical("singular Gram system in combiner".into()))?;
            let mut u = hp.clone();
            for (a, &ja) in others.iter().enumerate() {
                u -= &presumed_channels[ja] * w[a];
            }
            u
        };
        let signal = scenario.users[i].power * (u.adjoint() * &true_channels[i])[(0, 0)].norm_sqr();
        let mut interference = 0.0;
        for &j in &others {
            interference +=
                scenario.users[j].power * (u.adjoint() * &true_channels[j])[(0, 0)].norm_sqr();
        }
        let sinr = signal / (interference + sigma2 * u.norm_squared());
        out.push((1.0 + sinr).log2());
    }
    Ok(out)
}
