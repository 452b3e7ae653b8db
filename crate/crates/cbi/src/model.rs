//! Model parameters and every derived constant used downstream.
//!
//! A process is specified by the admissible tuple `(c, a, b, nu, mu)` plus
//! a deterministic initial value. The derived quantities are:
//!
//! ```text
//! growth_rate       B  = b + int_(1,inf) (z - 1) mu(dz)
//! immigration_mean  A  = a + int r nu(dr)
//! variance_activity C  = 2c + int z^2 mu(dz)
//! step_growth       e^B                (one-step branching mean)
//! step_inflow       A int_0^1 e^{Bs} ds (one-step mean inflow)
//! var_slope / var_intercept:  Var(X_k | X_{k-1} = x) = var_slope x + var_intercept
//! tau               C e^B (e^B - 1) / B (weighted-CLS variance constant)
//! ```
//!
//! All unit-interval exponential integrals are evaluated in closed form
//! with a series fallback near zero, so the whole derivation is exact up
//! to rounding and regime-agnostic in the sign of `B`.

use crate::error::{CbiError, Result};
use crate::measure::JumpMeasure;
use crate::numeric::{expm1_ratio, int01_exp, Mat2};
use serde::{Deserialize, Serialize};

/// Admissible parameter tuple plus the deterministic initial value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbiParams {
    /// Diffusion coefficient (c >= 0).
    pub c: f64,
    /// Immigration drift (a >= 0).
    pub a: f64,
    /// Branching drift.
    pub b: f64,
    /// Immigration jump measure.
    #[serde(default)]
    pub nu: JumpMeasure,
    /// Branching jump measure.
    #[serde(default)]
    pub mu: JumpMeasure,
    /// Deterministic initial value (x0 >= 0).
    pub x0: f64,
}

impl CbiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(CbiError::Config(format!("c must be >= 0, got {}", self.c)));
        }
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return Err(CbiError::Config(format!("a must be >= 0, got {}", self.a)));
        }
        if !self.b.is_finite() {
            return Err(CbiError::Config(format!(
                "b must be finite, got {}",
                self.b
            )));
        }
        if !(self.x0 >= 0.0) || !self.x0.is_finite() {
            return Err(CbiError::Config(format!(
                "x0 must be >= 0, got {}",
                self.x0
            )));
        }
        self.nu.validate()?;
        self.mu.validate()?;
        Ok(())
    }

    /// Computes every derived constant in closed form.
    pub fn derive(&self) -> DerivedParams {
        let growth_rate = self.b + self.mu.mean_excess_above_one();
        let nu_mean = self.nu.moment(1).expect("first moment");
        let nu_second_moment = self.nu.moment(2).expect("second moment");
        let mu_mean = self.mu.moment(1).expect("first moment");
        let immigration_mean = self.a + nu_mean;
        let variance_activity = 2.0 * self.c + self.mu.moment(2).expect("second moment");

        let b = growth_rate;
        let step_growth = b.exp();
        let step_inflow = immigration_mean * int01_exp(b);
        // V = C int_0^1 e^{B(1+u)} du = C e^B (e^B - 1)/B
        let var_slope = variance_activity * b.exp() * expm1_ratio(b);
        // V0 = int r^2 nu(dr) (e^{2B}-1)/(2B) + A C (e^B-1)^2/(2B^2),
        // the second factor being the closed form of the nested flow integral.
        let r = expm1_ratio(b);
        let var_intercept = nu_second_moment * expm1_ratio(2.0 * b)
            + immigration_mean * variance_activity * r * r / 2.0;
        let tau = var_slope;

        DerivedParams {
            growth_rate,
            immigration_mean,
            variance_activity,
            step_growth,
            step_inflow,
            var_slope,
            var_intercept,
            tau,
            nu_mean,
            nu_second_moment,
            mu_mean,
        }
    }
}

/// Criticality regime, classified by the sign of the growth rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

/// Derived scalar constants; see the module docs for the formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub growth_rate: f64,
    pub immigration_mean: f64,
    pub variance_activity: f64,
    pub step_growth: f64,
    pub step_inflow: f64,
    pub var_slope: f64,
    pub var_intercept: f64,
    pub tau: f64,
    /// First moment of the immigration measure.
    pub nu_mean: f64,
    /// Second moment of the immigration measure.
    pub nu_second_moment: f64,
    /// First moment of the branching measure.
    pub mu_mean: f64,
}

impl DerivedParams {
    pub fn criticality(&self) -> Criticality {
        if self.growth_rate > 0.0 {
            Criticality::Supercritical
        } else if self.growth_rate < 0.0 {
            Criticality::Subcritical
        } else {
            Criticality::Critical
        }
    }

    /// Conditional mean after time `t` started from `x`:
    /// e^{Bt} x + A int_0^t e^{Bu} du.
    pub fn conditional_mean(&self, t: f64, x: f64) -> f64 {
        let b = self.growth_rate;
        (b * t).exp() * x + self.immigration_mean * t * expm1_ratio(b * t)
    }
}

/// The three limit covariance shapes and the lower-triangular factor of
/// the martingale one, evaluated at a realization `w` of the growth limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitMatrices {
    /// Mixing covariance shape of the drift-parameter estimators.
    pub s: Mat2,
    /// Mixing covariance shape of the step-parameter estimators.
    pub s_tilde: Mat2,
    /// Covariance shape of the scaled martingale partial sums.
    pub r: Mat2,
    /// Lower-triangular factor with kappa kappa^T = r.
    pub kappa: Mat2,
}

/// Evaluates the limit matrices at `w > 0`; requires a supercritical regime.
pub fn limit_matrices(d: &DerivedParams, w: f64) -> Result<LimitMatrices> {
    let b = d.growth_rate;
    if !(b > 0.0) {
        return Err(CbiError::Domain(format!(
            "limit matrices need a positive growth rate, got {b}"
        )));
    }
    if !(w > 0.0) {
        return Err(CbiError::Domain(format!(
            "limit matrices need w > 0, got {w}"
        )));
    }
    let e1 = b.exp();
    let e2 = (2.0 * b).exp();
    let e3 = (3.0 * b).exp();
    let off = -e1 * (e1 - 1.0) / (e3 - 1.0);

    let s = Mat2::symmetric(
        (e1 - 1.0) * (e2 - 1.0).powi(2) / (b * e1 * (e3 - 1.0)) / w,
        off,
        b * e2 / ((e1 - 1.0) * (e3 - 1.0)) * w,
    );
    let s_tilde = Mat2::symmetric(
        (e2 - 1.0).powi(2) / (e3 - 1.0) / w,
        off,
        e1 / (e3 - 1.0) * w,
    );
    let r = Mat2::symmetric(w / (e1 - 1.0), w * w / (e2 - 1.0), w * w * w / (e3 - 1.0));
    let kappa = Mat2::new(
        (w / (e1 - 1.0)).sqrt(),
        0.0,
        ((e1 - 1.0) * w.powi(3)).sqrt() / (e2 - 1.0),
        (e1 - 1.0) * (e1 * w.powi(3) / (e3 - 1.0)).sqrt() / (e2 - 1.0),
    );
    Ok(LimitMatrices {
        s,
        s_tilde,
        r,
        kappa,
    })
}

/// Asymptotic variances of the randomly scaled estimator pivots, plus the
/// constants of the pure-immigration regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitVariances {
    /// Variance of sqrt(sum (X_{k-1}+1)) (B_hat - B).
    pub cls_b: f64,
    /// Variance of n (sum (X_{k-1}+1))^{-1/2} (A_hat - A).
    pub cls_a: f64,
    /// Same pivot variances for the weighted estimators.
    pub wcls_b: f64,
    pub wcls_a: f64,
    /// Variance of n^{1/2} (A_hat - A) in the pure-immigration regime.
    pub c0_a: f64,
    /// Scale multiplying the geometric series limit of e^{Bn}(B_hat - B).
    pub c0_b_series_scale: f64,
}

/// Evaluates the pivot variances; requires a supercritical regime.
pub fn limit_variances(d: &DerivedParams) -> Result<LimitVariances> {
    let b = d.growth_rate;
    if !(b > 0.0) {
        return Err(CbiError::Domain(format!(
            "limit variances need a positive growth rate, got {b}"
        )));
    }
    let c = d.variance_activity;
    let e1 = b.exp();
    let e2 = (2.0 * b).exp();
    let e3 = (3.0 * b).exp();
    Ok(LimitVariances {
        cls_b: c * (e2 - 1.0).powi(2) / (b * e1 * (e3 - 1.0)),
        cls_a: c * b * e2 / (e3 - 1.0),
        wcls_b: c * (e1 - 1.0) / (b * e1),
        wcls_a: 4.0 * c * b * e1 / (e1 - 1.0),
        c0_a: b * (e2 - 1.0) / (2.0 * (e1 - 1.0).powi(2)) * d.nu_second_moment,
        c0_b_series_scale: (e2 - 1.0) / e2,
    })
}
