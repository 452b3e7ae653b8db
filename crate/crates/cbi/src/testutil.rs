//! Test-only oracles, deliberately independent of the library's numerical
//! paths: brute-force quadrature and summation used to freeze expected
//! values in unit tests.

use crate::measure::{ContinuousComponent, JumpMeasure};

/// Adaptive Simpson quadrature with interval-halving error control.
pub fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        let m = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let whole = simpson(&f, a, b);
    recurse(&f, a, b, whole, tol, 48)
}

/// Brute-force k-th moment of a jump measure: direct sum over atoms plus
/// adaptive quadrature of the continuous density.
pub fn measure_moment_oracle(m: &JumpMeasure, k: u32) -> f64 {
    let atoms: f64 = m.atoms.iter().map(|a| a.size.powi(k as i32) * a.mass).sum();
    let cont = match m.continuous {
        None => 0.0,
        Some(ContinuousComponent::Exponential { rate, mass }) => {
            // truncate far in the exponential tail relative to the rate
            let hi = 80.0 / rate;
            mass * adaptive_simpson(
                |z| z.powi(k as i32) * rate * (-rate * z).exp(),
                0.0,
                hi,
                1e-13,
            )
        }
        Some(ContinuousComponent::Uniform { lo, hi, mass }) => {
            mass * adaptive_simpson(|z| z.powi(k as i32) / (hi - lo), lo, hi, 1e-13)
        }
    };
    atoms + cont
}
