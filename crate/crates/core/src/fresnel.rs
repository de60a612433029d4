//! Fresnel integrals `C(z) = int_0^z cos(pi/2 x^2) dx` and
//! `S(z) = int_0^z sin(pi/2 x^2) dx`.
//!
//! Power series for small arguments, adaptive Simpson quadrature elsewhere.
//! Internal tolerance 1e-10.

use std::f64::consts::PI;

const SERIES_CUTOFF: f64 = 1.25;
const QUAD_TOL: f64 = 1e-11;
const MAX_DEPTH: u32 = 40;

/// Both Fresnel integrals `(C(z), S(z))`. Odd in `z`.
pub fn fresnel_integrals(z: f64) -> (f64, f64) {
    if z == 0.0 || z.is_nan() {
        return (0.0 * z, 0.0 * z); // preserves NaN
    }
    let sign = z.signum();
    let az = z.abs();
    let (c, s) = if az <= SERIES_CUTOFF {
        (series_c(az), series_s(az))
    } else {
        // take the series value at the cutoff and integrate the rest
        let c0 = series_c(SERIES_CUTOFF);
        let s0 = series_s(SERIES_CUTOFF);
        let c = c0 + integrate(|x| (0.5 * PI * x * x).cos(), SERIES_CUTOFF, az);
        let s = s0 + integrate(|x| (0.5 * PI * x * x).sin(), SERIES_CUTOFF, az);
        (c, s)
    };
    (sign * c, sign * s)
}

/// C(z) = sum_k (-1)^k (pi/2)^(2k) z^(4k+1) / ((2k)! (4k+1))
fn series_c(z: f64) -> f64 {
    let w = (0.5 * PI * z * z).powi(2); // (pi/2)^2 z^4
    let mut term = z;
    let mut sum = term;
    for k in 0..60u32 {
        let k = k as f64;
        term *= -w / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
        let contrib = term * (4.0 * k + 1.0) / (4.0 * k + 5.0);
        term = contrib; // fold the (4k+1)/(4k+5) factor into the running term
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// S(z) = sum_k (-1)^k (pi/2)^(2k+1) z^(4k+3) / ((2k+1)! (4k+3))
fn series_s(z: f64) -> f64 {
    let w = (0.5 * PI * z * z).powi(2);
    let mut term = 0.5 * PI * z * z * z / 3.0;
    let mut sum = term;
    for k in 0..60u32 {
        let k = k as f64;
        term *= -w / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
        let contrib = term * (4.0 * k + 3.0) / (4.0 * k + 7.0);
        term = contrib;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Composite adaptive Simpson over unit-length panels so the oscillation of
/// the integrand never outruns the initial sampling.
fn integrate<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64) -> f64 {
    debug_assert!(b >= a);
    let mut total = 0.0;
    let mut left = a;
    while left < b {
        // panel short enough to hold at most ~one oscillation of cos(pi/2 x^2)
        let width = (2.0 / left.max(1.0)).min(b - left);
        let right = left + width;
        total += adaptive_simpson(f, left, right, QUAD_TOL, MAX_DEPTH);
        left = right;
    }
    total
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let whole = simpson(&f, a, b);
    let m = 0.5 * (a + b);
    let lhs = simpson(&f, a, m);
    let rhs = simpson(&f, m, b);
    let err = lhs + rhs - whole;
    if err.abs() <= 15.0 * tol || depth == 0 {
        lhs + rhs + err / 15.0
    } else {
        adaptive_simpson(f, a, m, 0.5 * tol, depth - 1)
            + adaptive_simpson(f, m, b, 0.5 * tol, depth - 1)
    }
}
