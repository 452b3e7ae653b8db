//! Samplers for the limit laws of the normalized estimators and
//! martingale partial sums.
//!
//! Three mixed-normal families (a covariance shape evaluated at a
//! realization of the growth limit, scaled by the variance activity or
//! the conditional-variance slope), the compound-Poisson increment law of
//! the pure-immigration regime, the geometric series built from it, and
//! the two genuinely normal limits.

use crate::error::{CbiError, Result};
use crate::measure::JumpMeasure;
use crate::model::{limit_matrices, DerivedParams};
use crate::numeric::expm1_ratio;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

/// Which covariance shape a mixed-normal draw uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedKind {
    /// Drift-estimator limit: N2(0, C S(w)).
    DriftPair,
    /// Step-estimator limit: N2(0, V S~(w)).
    StepPair,
    /// Martingale partial-sum limit: N2(0, V R(w)).
    MartingalePair,
}

/// Source of the growth-limit realization entering a mixed-normal draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WSource {
    Fixed(f64),
    /// Plug-in draws, e.g. per-replicate `e^{-B_hat n} X_n` values.
    Empirical(Vec<f64>),
}

impl WSource {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let w = match self {
            WSource::Fixed(w) => *w,
            WSource::Empirical(ws) => {
                if ws.is_empty() {
                    return Err(CbiError::Domain("empty empirical w sample".into()));
                }
                ws[rng.gen_range(0..ws.len())]
            }
        };
        if !(w > 0.0) {
            return Err(CbiError::Domain(format!(
                "w realizations must be positive, got {w}"
            )));
        }
        Ok(w)
    }
}

/// One draw from the requested mixed-normal law. Degenerate scales
/// (variance activity zero for the drift pair, variance slope zero for
/// the others) produce the zero vector.
pub fn sample_mixed_normal<R: Rng + ?Sized>(
    d: &DerivedParams,
    kind: MixedKind,
    w_source: &WSource,
    rng: &mut R,
) -> Result<[f64; 2]> {
    let w = w_source.draw(rng)?;
    let scale2 = match kind {
        MixedKind::DriftPair => d.variance_activity,
        MixedKind::StepPair | MixedKind::MartingalePair => d.var_slope,
    };
    // Consume the normal pair regardless of degeneracy so replicate
    // streams stay aligned across parameter sets.
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    if scale2 == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let m = limit_matrices(d, w)?;
    let shape = match kind {
        MixedKind::DriftPair => m.s,
        MixedKind::StepPair => m.s_tilde,
        MixedKind::MartingalePair => m.r,
    };
    let root = shape.sqrt_psd()?;
    let s = scale2.sqrt();
    Ok(root.mul_vec([s * z1, s * z2]))
}

/// Exact draw of the centered one-step increment of the pure-immigration
/// regime via its compound-Poisson representation:
/// sum of flow-weighted jumps on a unit interval minus its mean.
pub fn sample_increment_law<R: Rng + ?Sized>(
    d: &DerivedParams,
    nu: &JumpMeasure,
    rng: &mut R,
) -> Result<f64> {
    if d.variance_activity != 0.0 {
        return Err(CbiError::Domain(
            "the closed increment law requires zero variance activity".into(),
        ));
    }
    let b = d.growth_rate;
    let total = nu.total_mass();
    let compensator = d.nu_mean * expm1_ratio(b);
    let mut sum = 0.0;
    if total > 0.0 {
        let k = Poisson::new(total).expect("positive rate").sample(rng) as u64;
        for _ in 0..k {
            let u: f64 = rng.gen();
            sum += nu.sample(rng)? * (b * u).exp();
        }
    }
    Ok(sum - compensator)
}

/// Variance of the increment law: (e^{2B} - 1)/(2B) times the second
/// moment of the immigration measure.
pub fn increment_variance(d: &DerivedParams) -> f64 {
    d.nu_second_moment * expm1_ratio(2.0 * d.growth_rate)
}

/// Truncation length for the geometric series so that the discarded
/// tail's standard deviation sd(Z) e^{-B(J+1)} / sqrt(1 - e^{-2B}) stays
/// below `tol`.
pub fn series_truncation_len(d: &DerivedParams, increment_var: f64, tol: f64) -> usize {
    if increment_var <= 0.0 {
        return 0;
    }
    let b = d.growth_rate;
    let sd = increment_var.sqrt();
    let bound = (sd / (tol * (1.0 - (-2.0 * b).exp()).sqrt())).ln() / b - 1.0;
    bound.ceil().max(0.0) as usize
}

/// One draw of the limit of the rescaled growth-rate error in the
/// pure-immigration regime:
/// (e^{2B} - 1)/e^{2B} w^{-1} sum_{j=0}^{J} e^{-Bj} Z_j with i.i.d. Z_j
/// following the increment law and J chosen from `tol`.
pub fn sample_series_c0<R: Rng + ?Sized>(
    d: &DerivedParams,
    nu: &JumpMeasure,
    w: f64,
    tol: f64,
    rng: &mut R,
) -> Result<f64> {
    if d.variance_activity != 0.0 {
        return Err(CbiError::Domain(
            "the series limit requires zero variance activity".into(),
        ));
    }
    let b = d.growth_rate;
    if !(b > 0.0) {
        return Err(CbiError::Domain(format!(
            "the series limit needs a positive growth rate, got {b}"
        )));
    }
    if !(w > 0.0) {
        return Err(CbiError::Domain(format!("w must be positive, got {w}")));
    }
    let j_max = series_truncation_len(d, increment_variance(d), tol);
    let mut sum = 0.0;
    for j in 0..=j_max {
        sum += (-b * j as f64).exp() * sample_increment_law(d, nu, rng)?;
    }
    let scale = ((2.0 * b).exp() - 1.0) / (2.0 * b).exp();
    Ok(scale * sum / w)
}

/// The two genuinely normal limits of the pure-immigration regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalLimit {
    /// Limit of n^{1/2} (A_hat - A).
    DriftImmigration,
    /// Limit of n^{-1/2} sum M_k.
    MartingaleMean,
}

/// One draw from the requested normal limit.
pub fn sample_normal_limit<R: Rng + ?Sized>(
    d: &DerivedParams,
    which: NormalLimit,
    rng: &mut R,
) -> Result<f64> {
    let var = normal_limit_variance(d, which)?;
    let z: f64 = StandardNormal.sample(rng);
    Ok(var.sqrt() * z)
}

/// Variance of the requested normal limit; requires zero variance activity.
pub fn normal_limit_variance(d: &DerivedParams, which: NormalLimit) -> Result<f64> {
    if d.variance_activity != 0.0 {
        return Err(CbiError::Domain(
            "the normal limits are specific to zero variance activity".into(),
        ));
    }
    let b = d.growth_rate;
    let e1 = b.exp();
    let e2 = (2.0 * b).exp();
    Ok(match which {
        NormalLimit::DriftImmigration => {
            b * (e2 - 1.0) / (2.0 * (e1 - 1.0).powi(2)) * d.nu_second_moment
        }
        NormalLimit::MartingaleMean => increment_variance(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::JumpMeasure;
    use crate::model::CbiParams;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    fn pure_immigration() -> CbiParams {
        CbiParams {
            c: 0.0,
            a: 0.0,
            b: 0.2,
            nu: JumpMeasure::atom(1.0, 1.0),
            mu: JumpMeasure::empty(),
            x0: 1.0,
        }
    }

    fn cir() -> CbiParams {
        CbiParams {
            c: 0.5,
            a: 1.0,
            b: 0.3,
            nu: JumpMeasure::empty(),
            mu: JumpMeasure::empty(),
            x0: 1.0,
        }
    }

    #[test]
    fn mixed_normal_degenerates_without_variance_activity() {
        let d = pure_immigration().derive();
        let mut rng = seeded(1);
        for _ in 0..16 {
            let v = sample_mixed_normal(&d, MixedKind::DriftPair, &WSource::Fixed(1.0), &mut rng)
                .unwrap();
            assert_eq!(v, [0.0, 0.0]);
        }
    }

    #[test]
    fn mixed_normal_covariance_matches_target_at_fixed_w() {
        let d = cir().derive();
        let w = 1.7;
        let m = crate::model::limit_matrices(&d, w).unwrap();
        let mut rng = seeded(33);
        let n = 100_000;
        let draws: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                sample_mixed_normal(&d, MixedKind::DriftPair, &WSource::Fixed(w), &mut rng).unwrap()
            })
            .collect();
        let c = d.variance_activity;
        let target = [c * m.s.m11, c * m.s.m12, c * m.s.m22];
        let xs: Vec<f64> = draws.iter().map(|v| v[0]).collect();
        let ys: Vec<f64> = draws.iter().map(|v| v[1]).collect();
        let (mx, vx) = crate::numeric::mean_var(&xs);
        let (my, vy) = crate::numeric::mean_var(&ys);
        let cov = crate::numeric::mean(
            &draws
                .iter()
                .map(|v| (v[0] - mx) * (v[1] - my))
                .collect::<Vec<_>>(),
        );
        // normal fourth-moment standard errors
        let se_vx = vx * (2.0 / n as f64).sqrt() * 1.5;
        let se_vy = vy * (2.0 / n as f64).sqrt() * 1.5;
        let se_cov = ((vx * vy + cov * cov) / n as f64).sqrt();
        assert!(
            (vx - target[0]).abs() <= 3.0 * se_vx,
            "vx={vx}, target={}",
            target[0]
        );
        assert!(
            (cov - target[1]).abs() <= 3.0 * se_cov,
            "cov={cov}, target={}",
            target[1]
        );
        assert!(
            (vy - target[2]).abs() <= 3.0 * se_vy,
            "vy={vy}, target={}",
            target[2]
        );
    }

    #[test]
    fn martingale_pair_matches_triangular_factor_covariance() {
        let d = cir().derive();
        let w = 0.9;
        let m = crate::model::limit_matrices(&d, w).unwrap();
        let kkt = m.kappa.mul(&m.kappa.transpose());
        // kappa kappa^T = R exactly, so the covariance target is V * R
        assert_relative_eq!(kkt.m11, m.r.m11, epsilon = 1e-12);
        let mut rng = seeded(91);
        let n = 100_000;
        let draws: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                sample_mixed_normal(&d, MixedKind::MartingalePair, &WSource::Fixed(w), &mut rng)
                    .unwrap()
            })
            .collect();
        let v = d.var_slope;
        let xs: Vec<f64> = draws.iter().map(|x| x[0]).collect();
        let (_, vx) = crate::numeric::mean_var(&xs);
        let se = v * m.r.m11 * (2.0 / n as f64).sqrt() * 1.5;
        assert!((vx - v * m.r.m11).abs() <= 3.0 * se);
    }

    #[test]
    fn increment_law_moments_and_charfn() {
        let p = pure_immigration();
        let d = p.derive();
        let mut rng = seeded(7);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_increment_law(&d, &p.nu, &mut rng).unwrap())
            .collect();
        let (mean, var) = crate::numeric::mean_var(&draws);
        let se_mean = (var / n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se_mean, "mean={mean}");

        let target_var = increment_variance(&d);
        let m4 =
            crate::numeric::mean(&draws.iter().map(|x| (x - mean).powi(4)).collect::<Vec<_>>());
        let se_var = ((m4 - var * var) / n as f64).sqrt();
        assert!(
            (var - target_var).abs() <= 3.0 * se_var,
            "var={var}, target={target_var}"
        );

        let thetas: Vec<f64> = (0..51).map(|i| -5.0 + 0.2 * i as f64).collect();
        let ecf = crate::harness::empirical_charfn(&draws, &thetas);
        let mut sup: f64 = 0.0;
        for (phi_hat, &theta) in ecf.iter().zip(&thetas) {
            let phi = crate::affine::char_m1(&p, theta).unwrap();
            sup = sup.max((phi_hat - phi).norm());
        }
        assert!(sup <= 0.01, "sup={sup}");
    }

    #[test]
    fn increment_law_rejects_active_variance() {
        let d = cir().derive();
        let mut rng = seeded(0);
        assert!(sample_increment_law(&d, &JumpMeasure::empty(), &mut rng).is_err());
        assert!(sample_series_c0(&d, &JumpMeasure::empty(), 1.0, 1e-4, &mut rng).is_err());
        assert!(normal_limit_variance(&d, NormalLimit::DriftImmigration).is_err());
    }

    #[test]
    fn series_truncation_solves_the_tail_bound() {
        let d = pure_immigration().derive();
        // recomputed from the stated bound at var=1.23, tol=1e-4:
        // smallest J with sd e^{-B(J+1)} / sqrt(1-e^{-2B}) <= tol is 49
        let j = series_truncation_len(&d, 1.23, 1e-4);
        assert_eq!(j, 49);
        let sd_tail =
            1.23_f64.sqrt() * (-0.2 * (j as f64 + 1.0)).exp() / (1.0 - (-0.4_f64).exp()).sqrt();
        assert!(sd_tail <= 1e-4);
        let sd_tail_prev =
            1.23_f64.sqrt() * (-0.2 * (j as f64)).exp() / (1.0 - (-0.4_f64).exp()).sqrt();
        assert!(sd_tail_prev > 1e-4, "J is minimal");
        assert_eq!(series_truncation_len(&d, 0.0, 1e-4), 0);
    }

    #[test]
    fn series_degenerates_without_immigration_jumps() {
        let p = CbiParams {
            c: 0.0,
            a: 1.0,
            b: 0.2,
            nu: JumpMeasure::empty(),
            mu: JumpMeasure::empty(),
            x0: 1.0,
        };
        let d = p.derive();
        let mut rng = seeded(4);
        for _ in 0..8 {
            assert_eq!(
                sample_series_c0(&d, &p.nu, 1.0, 1e-4, &mut rng).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn series_variance_matches_geometric_sum() {
        let p = pure_immigration();
        let d = p.derive();
        let mut rng = seeded(13);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_series_c0(&d, &p.nu, 1.0, 1e-4, &mut rng).unwrap())
            .collect();
        let b = d.growth_rate;
        let scale = ((2.0 * b).exp() - 1.0) / (2.0 * b).exp();
        let target = scale * scale * increment_variance(&d) / (1.0 - (-2.0 * b).exp());
        let (mean, var) = crate::numeric::mean_var(&draws);
        let m4 =
            crate::numeric::mean(&draws.iter().map(|x| (x - mean).powi(4)).collect::<Vec<_>>());
        let se_var = ((m4 - var * var) / n as f64).sqrt();
        assert!(
            (var - target).abs() <= 3.0 * se_var,
            "var={var}, target={target}"
        );
    }

    #[test]
    fn doubling_the_truncation_barely_moves_the_sample_variance() {
        // common random numbers: each draw gets its own stream, so the
        // first J+1 increments coincide between the two truncations and
        // the difference is exactly the extra tail
        let p = pure_immigration();
        let d = p.derive();
        let tol = 1e-2;
        let j = series_truncation_len(&d, increment_variance(&d), tol);
        let b = d.growth_rate;
        let scale = ((2.0 * b).exp() - 1.0) / (2.0 * b).exp();
        let sample = |j_max: usize| -> Vec<f64> {
            (0..10_000u64)
                .map(|i| {
                    let mut rng = crate::rng::replicate_stream(500, i);
                    let mut sum = 0.0;
                    for jj in 0..=j_max {
                        sum += (-b * jj as f64).exp()
                            * sample_increment_law(&d, &p.nu, &mut rng).unwrap();
                    }
                    scale * sum
                })
                .collect()
        };
        let (_, v1) = crate::numeric::mean_var(&sample(j));
        let (_, v2) = crate::numeric::mean_var(&sample(2 * j));
        assert!(
            (v2 - v1).abs() < 2.0 * tol * tol,
            "delta var {}",
            (v2 - v1).abs()
        );
    }

    #[test]
    fn normal_limit_variances() {
        let p = pure_immigration();
        let d = p.derive();
        let v_mart = normal_limit_variance(&d, NormalLimit::MartingaleMean).unwrap();
        // coincides with the conditional-variance intercept here
        assert_relative_eq!(v_mart, d.var_intercept, epsilon = 1e-12);
        let v_drift = normal_limit_variance(&d, NormalLimit::DriftImmigration).unwrap();
        let b = d.growth_rate;
        // algebraic relation between the two displayed variances:
        // their ratio collapses to (B/(e^B - 1))^2
        let ratio = v_drift / v_mart;
        assert_relative_eq!(ratio, (b / (b.exp() - 1.0)).powi(2), max_relative = 1e-10);

        let empty = CbiParams {
            nu: JumpMeasure::empty(),
            ..pure_immigration()
        };
        let d0 = empty.derive();
        assert_eq!(
            normal_limit_variance(&d0, NormalLimit::DriftImmigration).unwrap(),
            0.0
        );
    }

    #[test]
    fn empirical_w_source_draws_from_the_list() {
        let d = cir().derive();
        let source = WSource::Empirical(vec![0.5, 2.0]);
        let mut rng = seeded(8);
        for _ in 0..32 {
            let v = sample_mixed_normal(&d, MixedKind::StepPair, &source, &mut rng).unwrap();
            assert!(v[0].is_finite() && v[1].is_finite());
        }
        let empty = WSource::Empirical(vec![]);
        assert!(sample_mixed_normal(&d, MixedKind::StepPair, &empty, &mut rng).is_err());
        let negative = WSource::Empirical(vec![-1.0]);
        assert!(sample_mixed_normal(&d, MixedKind::StepPair, &negative, &mut rng).is_err());
    }

    #[test]
    fn samplers_are_reproducible() {
        let p = pure_immigration();
        let d = p.derive();
        let a: Vec<f64> = {
            let mut rng = seeded(321);
            (0..32)
                .map(|_| sample_series_c0(&d, &p.nu, 1.0, 1e-4, &mut rng).unwrap())
                .collect()
        };
        let b: Vec<f64> = {
            let mut rng = seeded(321);
            (0..32)
                .map(|_| sample_series_c0(&d, &p.nu, 1.0, 1e-4, &mut rng).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }
}
