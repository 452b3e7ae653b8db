//! Monte Carlo experiment harness: simulate replicates on split streams,
//! normalize estimator errors, and confront them with their limit laws
//! through Kolmogorov-Smirnov comparisons.
//!
//! Mixed-normal targets are checked through the randomly scaled pivots,
//! whose limits are genuine normals with closed-form variances; the
//! deterministic-scale statistics are compared against reference samples
//! drawn from the limit samplers with per-replicate plug-in growth
//! limits. Replicates run in parallel but reduce by index, so reports are
//! identical whether one thread runs or sixteen do.

use crate::error::{CbiError, Result};
use crate::estimate::{cls_errors_from_increments, wcls_values, ClsErrors};
use crate::limits::{sample_mixed_normal, sample_series_c0, MixedKind, WSource};
use crate::model::{limit_variances, CbiParams};
use crate::numeric::{normal_cdf, KahanSum};
use crate::rng::{reference_stream, replicate_stream};
use crate::simulate::{simulate_tracked, Scheme};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Normalized estimator statistics an experiment can collect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// e^{Bn/2} (B_hat - B); mixed-normal limit, reference-sample target.
    GrowthDeterministic,
    /// n e^{-Bn/2} (A_hat - A); mixed-normal limit, reference-sample target.
    ImmigrationDeterministic,
    /// sqrt(sum (X_{k-1}+1)) (B_hat - B); normal pivot.
    GrowthPivot,
    /// n (sum (X_{k-1}+1))^{-1/2} (A_hat - A); normal pivot.
    ImmigrationPivot,
    /// Weighted-estimator pivots with the same random scaling.
    WclsGrowthPivot,
    WclsImmigrationPivot,
    /// e^{Bn} (B_hat - B) in the pure-immigration regime; series target.
    GrowthPureImmigration,
    /// n^{1/2} (A_hat - A) in the pure-immigration regime; normal target.
    ImmigrationPureImmigration,
}

impl StatisticKind {
    pub fn all() -> &'static [StatisticKind] {
        &[
            StatisticKind::GrowthDeterministic,
            StatisticKind::ImmigrationDeterministic,
            StatisticKind::GrowthPivot,
            StatisticKind::ImmigrationPivot,
            StatisticKind::WclsGrowthPivot,
            StatisticKind::WclsImmigrationPivot,
            StatisticKind::GrowthPureImmigration,
            StatisticKind::ImmigrationPureImmigration,
        ]
    }
}

/// Experiment configuration; JSON with unknown fields rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: CbiParams,
    /// Observations per replicate (transitions).
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub statistics: Vec<StatisticKind>,
    pub scheme: Scheme,
    /// Substeps per unit interval, Euler scheme only.
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    /// Size of reference samples for two-sample targets.
    #[serde(default = "default_reference_draws")]
    pub reference_draws: usize,
    /// Tail tolerance of the series sampler.
    #[serde(default = "default_series_tol")]
    pub series_tol: f64,
}

fn default_substeps() -> u32 {
    200
}

fn default_reference_draws() -> usize {
    100_000
}

fn default_series_tol() -> f64 {
    1e-4
}

/// How a statistic is compared with its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum TargetLaw {
    /// One-sample KS against a centered normal CDF.
    Normal { variance: f64 },
    /// Two-sample KS against a reference sample from a limit sampler.
    ReferenceSample { description: String },
}

/// Per-statistic slice of an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticReport {
    pub statistic: StatisticKind,
    pub target: TargetLaw,
    /// One entry per replicate, `null` where the estimator did not exist.
    pub per_replicate: Vec<Option<f64>>,
    pub undefined: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_p: Option<f64>,
}

impl StatisticReport {
    /// Defined values in replicate order.
    pub fn values(&self) -> Vec<f64> {
        self.per_replicate.iter().filter_map(|v| *v).collect()
    }
}

/// Machine-readable experiment outcome. Wall-clock time is intentionally
/// not serialized: reports are byte-reproducible functions of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub scheme: Scheme,
    pub statistics: Vec<StatisticReport>,
    #[serde(skip)]
    pub runtime_ms: u128,
}

struct ReplicateRow {
    /// Identity-route estimator errors; None when the estimator does not
    /// exist on this replicate.
    errors: Option<ClsErrors>,
    /// Weighted-estimator errors (growth rate, immigration mean).
    wcls_errors: Option<(f64, f64)>,
    /// sum of (X_{k-1} + 1), the random pivot scale
    weight_sum: f64,
    /// plug-in growth limit e^{-B_hat n} X_n
    w_hat: Option<f64>,
}

/// Kolmogorov distribution survival function Q(lambda) = P(K > lambda),
/// truncated once terms stop contributing (at least ten are summed).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        sign = -sign;
        if k >= 10 && term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided KS statistic of a sample against a CDF, with the asymptotic
/// p-value.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(CbiError::Domain("KS test needs a nonempty sample".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        d = d
            .max((i as f64 / n - c).abs())
            .max(((i + 1) as f64 / n - c).abs());
    }
    Ok((d, kolmogorov_sf(n.sqrt() * d)))
}

/// Two-sample two-sided KS statistic with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(CbiError::Domain("KS test needs nonempty samples".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.total_cmp(v));
    ys.sort_by(|u, v| u.total_cmp(v));
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let m_eff = na * nb / (na + nb);
    Ok((d, kolmogorov_sf(m_eff.sqrt() * d)))
}

/// Empirical characteristic function of a sample on a grid.
pub fn empirical_charfn(sample: &[f64], thetas: &[f64]) -> Vec<Complex64> {
    let n = sample.len() as f64;
    thetas
        .iter()
        .map(|&theta| {
            let (mut re, mut im) = (KahanSum::new(), KahanSum::new());
            for &x in sample {
                let (s, c) = (theta * x).sin_cos();
                re.add(c);
                im.add(s);
            }
            Complex64::new(re.value() / n, im.value() / n)
        })
        .collect()
}

fn statistic_value(
    kind: StatisticKind,
    row: &ReplicateRow,
    n: usize,
    d: &crate::model::DerivedParams,
) -> Option<f64> {
    let b = d.growth_rate;
    let nf = n as f64;
    let e = row.errors.as_ref();
    match kind {
        StatisticKind::GrowthDeterministic => {
            e.map(|e| (-b * nf / 2.0).exp() * e.growth_rate_err_scaled)
        }
        StatisticKind::ImmigrationDeterministic => {
            e.map(|e| nf * (-b * nf / 2.0).exp() * e.immigration_mean_err)
        }
        StatisticKind::GrowthPivot => e.map(|e| row.weight_sum.sqrt() * e.growth_rate_err),
        StatisticKind::ImmigrationPivot => {
            e.map(|e| nf / row.weight_sum.sqrt() * e.immigration_mean_err)
        }
        StatisticKind::WclsGrowthPivot => row
            .wcls_errors
            .map(|(berr, _)| row.weight_sum.sqrt() * berr),
        StatisticKind::WclsImmigrationPivot => row
            .wcls_errors
            .map(|(_, aerr)| nf / row.weight_sum.sqrt() * aerr),
        StatisticKind::GrowthPureImmigration => e.map(|e| e.growth_rate_err_scaled),
        StatisticKind::ImmigrationPureImmigration => e.map(|e| nf.sqrt() * e.immigration_mean_err),
    }
}

/// Runs the full experiment: simulate, estimate, normalize, compare.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = std::time::Instant::now();
    cfg.params.validate()?;
    if cfg.replicates == 0 {
        return Err(CbiError::Config("replicates must be positive".into()));
    }
    if cfg.n == 0 {
        return Err(CbiError::Config("n must be positive".into()));
    }
    let d = cfg.params.derive();
    if !(d.growth_rate > 0.0) {
        return Err(CbiError::Config(
            "experiments target the supercritical regime (positive growth rate)".into(),
        ));
    }
    let pure_requested = cfg.statistics.iter().any(|k| {
        matches!(
            k,
            StatisticKind::GrowthPureImmigration | StatisticKind::ImmigrationPureImmigration
        )
    });
    if pure_requested && d.variance_activity != 0.0 {
        return Err(CbiError::Config(
            "pure-immigration statistics require zero variance activity".into(),
        ));
    }

    let rows: Vec<Result<ReplicateRow>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_stream(cfg.master_seed, i);
            let tracked = simulate_tracked(&cfg.params, cfg.scheme, cfg.n, cfg.substeps, &mut rng)?;
            let errors = cls_errors_from_increments(&tracked.values, &tracked.increments, &d);
            let wcls_errors = wcls_values(&tracked.values, d.nu_mean).map(|w| {
                (
                    w.growth_rate - d.growth_rate,
                    w.immigration_mean - d.immigration_mean,
                )
            });
            let weight_sum = tracked.values[..cfg.n]
                .iter()
                .fold(KahanSum::new(), |mut acc, &x| {
                    acc.add(x + 1.0);
                    acc
                })
                .value();
            let x_n = tracked.values[cfg.n];
            let w_hat = errors.as_ref().and_then(|e| {
                let b_hat = d.growth_rate + e.growth_rate_err;
                (x_n > 0.0).then(|| (x_n.ln() - b_hat * cfg.n as f64).exp())
            });
            Ok(ReplicateRow {
                errors,
                wcls_errors,
                weight_sum,
                w_hat,
            })
        })
        .collect();
    let rows: Vec<ReplicateRow> = rows.into_iter().collect::<Result<_>>()?;

    if rows.iter().all(|r| r.errors.is_none()) {
        return Err(CbiError::Numerical(
            "every replicate produced an undefined estimator".into(),
        ));
    }

    let w_hats: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.w_hat)
        .filter(|&w| w > 0.0)
        .collect();

    let lv = limit_variances(&d)?;
    let mut statistics = Vec::with_capacity(cfg.statistics.len());
    for (slot, &kind) in cfg.statistics.iter().enumerate() {
        let per_replicate: Vec<Option<f64>> = rows
            .iter()
            .map(|row| statistic_value(kind, row, cfg.n, &d))
            .collect();
        let values: Vec<f64> = per_replicate.iter().filter_map(|v| *v).collect();
        let undefined = per_replicate.len() - values.len();

        let target = match kind {
            StatisticKind::GrowthPivot => TargetLaw::Normal { variance: lv.cls_b },
            StatisticKind::ImmigrationPivot => TargetLaw::Normal { variance: lv.cls_a },
            StatisticKind::WclsGrowthPivot => TargetLaw::Normal {
                variance: lv.wcls_b,
            },
            StatisticKind::WclsImmigrationPivot => TargetLaw::Normal {
                variance: lv.wcls_a,
            },
            StatisticKind::ImmigrationPureImmigration => TargetLaw::Normal { variance: lv.c0_a },
            StatisticKind::GrowthDeterministic => TargetLaw::ReferenceSample {
                description: "mixed normal, drift pair, first coordinate, plug-in w".into(),
            },
            StatisticKind::ImmigrationDeterministic => TargetLaw::ReferenceSample {
                description: "mixed normal, drift pair, second coordinate, plug-in w".into(),
            },
            StatisticKind::GrowthPureImmigration => TargetLaw::ReferenceSample {
                description: "geometric series of one-step increments, plug-in w".into(),
            },
        };

        // KS needs a reasonable sample; below 100 defined replicates the
        // comparison is reported without a verdict.
        let (ks_d, ks_p) = if values.len() >= 100 {
            match &target {
                TargetLaw::Normal { variance } => {
                    if *variance > 0.0 {
                        let sd = variance.sqrt();
                        let (dstat, p) = ks_test(&values, |x| normal_cdf(x / sd))?;
                        (Some(dstat), Some(p))
                    } else {
                        (None, None)
                    }
                }
                TargetLaw::ReferenceSample { .. } => {
                    let mut ref_rng = reference_stream(cfg.master_seed, slot as u64);
                    let source = WSource::Empirical(w_hats.clone());
                    let reference: Vec<f64> = match kind {
                        StatisticKind::GrowthDeterministic => (0..cfg.reference_draws)
                            .map(|_| {
                                sample_mixed_normal(&d, MixedKind::DriftPair, &source, &mut ref_rng)
                                    .map(|v| v[0])
                            })
                            .collect::<Result<_>>()?,
                        StatisticKind::ImmigrationDeterministic => (0..cfg.reference_draws)
                            .map(|_| {
                                sample_mixed_normal(&d, MixedKind::DriftPair, &source, &mut ref_rng)
                                    .map(|v| v[1])
                            })
                            .collect::<Result<_>>()?,
                        StatisticKind::GrowthPureImmigration => (0..cfg.reference_draws)
                            .map(|_| {
                                let w = match &source {
                                    WSource::Empirical(ws) => {
                                        use rand::Rng;
                                        ws[ref_rng.gen_range(0..ws.len())]
                                    }
                                    WSource::Fixed(w) => *w,
                                };
                                sample_series_c0(
                                    &d,
                                    &cfg.params.nu,
                                    w,
                                    cfg.series_tol,
                                    &mut ref_rng,
                                )
                            })
                            .collect::<Result<_>>()?,
                        _ => unreachable!("normal targets handled above"),
                    };
                    let (dstat, p) = ks_two_sample(&values, &reference)?;
                    (Some(dstat), Some(p))
                }
            }
        } else {
            (None, None)
        };

        statistics.push(StatisticReport {
            statistic: kind,
            target,
            per_replicate,
            undefined,
            ks_d,
            ks_p,
        });
    }

    Ok(ExperimentReport {
        n: cfg.n,
        replicates: cfg.replicates,
        master_seed: cfg.master_seed,
        scheme: cfg.scheme,
        statistics,
        runtime_ms: start.elapsed().as_millis(),
    })
}

/// CSV rows: replicate, statistic, value, defined — one line per
/// replicate and statistic, in report order.
pub fn report_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("replicate,statistic,value,defined\n");
    for stat in &report.statistics {
        let name = serde_json::to_value(stat.statistic)
            .expect("enum serializes")
            .as_str()
            .expect("string variant")
            .to_string();
        for (i, v) in stat.per_replicate.iter().enumerate() {
            match v {
                Some(v) => out.push_str(&format!("{i},{name},{v},true\n")),
                None => out.push_str(&format!("{i},{name},,false\n")),
            }
        }
    }
    out
}
