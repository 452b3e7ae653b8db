//! Small numerical toolbox: stable exponential ratios, compensated
//! summation, Gauss-Legendre quadrature, 2x2 symmetric matrices, the
//! normal distribution, and an adaptive Dormand-Prince 5(4) integrator.

// coefficient tables are transcribed verbatim from their published sources
#![allow(clippy::excessive_precision)]

use crate::error::{CbiError, Result};
use std::sync::OnceLock;

/// (e^x - 1) / x, with a series fallback near zero to avoid cancellation.
pub fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Integral of e^{k u} over the unit interval: (e^k - 1) / k.
pub fn int01_exp(k: f64) -> f64 {
    expm1_ratio(k)
}

/// Integral of u^s over s in the unit interval, for u > 0: (u - 1) / ln u.
///
/// The singularity at u = 1 is removable (value 1).
pub fn int01_pow(u: f64) -> f64 {
    expm1_ratio(u.ln())
}

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of an iterator.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

const GL_POINTS: usize = 64;

fn legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    // Newton iteration on P_n with the Chebyshev-like initial guess.
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0_f64, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// 64-point Gauss-Legendre quadrature of `f` over `[a, b]`.
///
/// Spectrally accurate for smooth integrands; every integrand fed here is
/// entire in the integration variable.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let nodes = NODES.get_or_init(|| legendre_nodes(GL_POINTS));
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = KahanSum::new();
    for &(x, w) in nodes {
        acc.add(w * f(mid + half * x));
    }
    half * acc.value()
}

/// Complex-valued variant of [`gauss_legendre`].
pub fn gauss_legendre_complex<F>(mut f: F, a: f64, b: f64) -> num_complex::Complex64
where
    F: FnMut(f64) -> num_complex::Complex64,
{
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let nodes = NODES.get_or_init(|| legendre_nodes(GL_POINTS));
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let (mut re, mut im) = (KahanSum::new(), KahanSum::new());
    for &(x, w) in nodes {
        let v = f(mid + half * x);
        re.add(w * v.re);
        im.add(w * v.im);
    }
    num_complex::Complex64::new(half * re.value(), half * im.value())
}

/// Dense 2x2 real matrix. All the limit matrices are symmetric positive
/// definite, which keeps the square root closed-form.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Mat2 {
    pub fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Self { m11, m12, m21, m22 }
    }

    pub fn symmetric(m11: f64, m12: f64, m22: f64) -> Self {
        Self::new(m11, m12, m12, m22)
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn trace(&self) -> f64 {
        self.m11 + self.m22
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        Mat2::new(
            self.m11 * other.m11 + self.m12 * other.m21,
            self.m11 * other.m12 + self.m12 * other.m22,
            self.m21 * other.m11 + self.m22 * other.m21,
            self.m21 * other.m12 + self.m22 * other.m22,
        )
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m11, self.m21, self.m12, self.m22)
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m11 * v[0] + self.m12 * v[1],
            self.m21 * v[0] + self.m22 * v[1],
        ]
    }

    /// Symmetric positive semidefinite square root:
    /// sqrt(M) = (M + sqrt(det) I) / sqrt(trace + 2 sqrt(det)).
    pub fn sqrt_psd(&self) -> Result<Mat2> {
        let det = self.det();
        if det < -1e-12 || (self.m12 - self.m21).abs() > 1e-12 * (1.0 + self.trace().abs()) {
            return Err(CbiError::Domain(format!(
                "matrix square root requires a symmetric PSD matrix, got det={det}, m12={}, m21={}",
                self.m12, self.m21
            )));
        }
        let s = det.max(0.0).sqrt();
        let denom = (self.trace() + 2.0 * s).sqrt();
        if !(denom > 0.0) {
            if self.m11.abs() + self.m12.abs() + self.m22.abs() < 1e-300 {
                return Ok(Mat2::symmetric(0.0, 0.0, 0.0));
            }
            return Err(CbiError::Domain(
                "matrix square root of a non-PSD matrix".into(),
            ));
        }
        Ok(Mat2::symmetric(
            (self.m11 + s) / denom,
            self.m12 / denom,
            (self.m22 + s) / denom,
        ))
    }
}

// Rational coefficients of the three-branch erf/erfc approximation
// (relative error below 1e-15 in double precision).
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const ONE_OVER_SQRT_PI: f64 = 0.5641895835477562869480794515607726;

// exp(-y^2) with the argument split at a 1/16 grid to keep full precision
fn exp_neg_square(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

fn erfc_positive(y: f64) -> f64 {
    debug_assert!(y >= 0.0);
    if y <= 0.46875 {
        // erfc = 1 - erf on the central branch
        let z = y * y;
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        1.0 - y * (num + ERF_A[3]) / (den + ERF_B[3])
    } else if y <= 4.0 {
        let mut num = ERF_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERF_C[i]) * y;
            den = (den + ERF_D[i]) * y;
        }
        exp_neg_square(y) * (num + ERF_C[7]) / (den + ERF_D[7])
    } else if y < 26.5 {
        let z = 1.0 / (y * y);
        let mut num = ERF_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERF_P[i]) * z;
            den = (den + ERF_Q[i]) * z;
        }
        let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
        exp_neg_square(y) * (ONE_OVER_SQRT_PI - r) / y
    } else {
        0.0
    }
}

/// Complementary error function in double precision.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        erfc_positive(x)
    } else {
        2.0 - erfc_positive(-x)
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile (Acklam's algorithm plus one Newton step).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // One Newton step against the CDF.
    let e = normal_cdf(x) - p;
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if pdf > 0.0 {
        x -= e / pdf;
    }
    x
}

/// Options for the adaptive Dormand-Prince integrator.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_steps: 1_000_000,
        }
    }
}

/// Adaptive embedded Runge-Kutta 5(4) (Dormand-Prince) from `t0` to `t1`.
///
/// Returns the terminal state, or a numerical error carrying step
/// diagnostics if the controller stalls.
pub fn rk45<const N: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    opt: &OdeOptions,
) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    if t1 < t0 {
        return Err(CbiError::Domain("rk45 requires t1 >= t0".into()));
    }
    if t1 == t0 {
        return Ok(y0);
    }

    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // b(5th) - b(4th), used for the embedded error estimate.
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut h = (span / 16.0).clamp(1e-10, 0.1);
    let mut k1 = f(t, &y);

    for _ in 0..opt.max_steps {
        if t + h > t1 {
            h = t1 - t;
        }

        let mut y2 = [0.0; N];
        for i in 0..N {
            y2[i] = y[i] + h * A21 * k1[i];
        }
        let k2 = f(t + h / 5.0, &y2);

        let mut y3 = [0.0; N];
        for i in 0..N {
            y3[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        let k3 = f(t + 3.0 * h / 10.0, &y3);

        let mut y4 = [0.0; N];
        for i in 0..N {
            y4[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        let k4 = f(t + 4.0 * h / 5.0, &y4);

        let mut y5 = [0.0; N];
        for i in 0..N {
            y5[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        let k5 = f(t + 8.0 * h / 9.0, &y5);

        let mut y6 = [0.0; N];
        for i in 0..N {
            y6[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let k6 = f(t + h, &y6);

        let mut y_new = [0.0; N];
        for i in 0..N {
            y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        let k7 = f(t + h, &y_new);

        let mut err: f64 = 0.0;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opt.abs_tol + opt.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }

        if err <= 1.0 {
            t += h;
            y = y_new;
            k1 = k7; // FSAL
            if t >= t1 {
                return Ok(y);
            }
        }

        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if !(h > span * 1e-14) {
            return Err(CbiError::Numerical(format!(
                "rk45 step size underflow at t={t} (h={h:.3e}, err={err:.3e})"
            )));
        }
    }
    Err(CbiError::Numerical(format!(
        "rk45 exceeded {} steps at t={t}",
        opt.max_steps
    )))
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    kahan_sum(xs.iter().copied()) / xs.len() as f64
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let ss = kahan_sum(xs.iter().map(|x| (x - m) * (x - m)));
    (m, ss / (xs.len() as f64 - 1.0))
}
