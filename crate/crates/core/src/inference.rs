//! Uncertainty for effect-modification estimates: Welch-style analytic
//! standard errors, a nonparametric unit bootstrap, normal-theory
//! confidence intervals, and a Wald test of zero effect modification.
//!
//! Bootstrap replicates resample whole units (the covariate together
//! with both outcomes), mirroring the i.i.d. sampling model. Replicate
//! `r` draws from an RNG stream derived from `(seed, r)`, so the result
//! is a pure function of the inputs regardless of thread schedule.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dist::{norm_cdf, norm_quantile, DistError};
use crate::estimators::{
    contrast_stats, fit_delta_regression, sdid_categorical, sdid_continuous, BasisSpec,
    ConfidenceInterval, EffectModEstimate, EstimatorError, ExtrapolationPolicy,
};
use crate::model::{CovariateKind, LevelStats, PanelDataset, SubgroupContrast};
use crate::rng::replicate_rng;

/// Largest tolerated share of failed replicates before the bootstrap as
/// a whole is rejected.
const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("confidence level must lie strictly in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("standard error must be finite and >= 0, got {0}")]
    InvalidSe(f64),
    #[error("standard error is zero; the test statistic is degenerate")]
    DegenerateSe,
    #[error("level `{level}` has n = {n}; at least 2 observations are needed for a variance")]
    GroupTooSmall { level: String, n: usize },
    #[error("bootstrap needs at least one replicate")]
    NoReplicates,
    #[error(
        "{failed} of {b} bootstrap replicates failed (over {max_percent}%); \
         a contrast level is too small to survive unit resampling — \
         consider the stratified-by-level mode"
    )]
    TooManyFailedReplicates {
        failed: usize,
        b: usize,
        max_percent: u32,
    },
    #[error("stratified resampling requires a categorical subgroup-means estimator")]
    StratifiedRequiresCategorical,
}

/// Welch (unpooled) standard error for a difference of two independent
/// subgroup delta means: `sqrt(var_a / n_a + var_b / n_b)`.
pub fn analytic_se(stats_a: &LevelStats, stats_b: &LevelStats) -> Result<f64, InferenceError> {
    let var_over_n = |s: &LevelStats| -> Result<f64, InferenceError> {
        match s.var_delta {
            Some(v) if s.n >= 2 => Ok(v / s.n as f64),
            _ => Err(InferenceError::GroupTooSmall {
                level: s.level.clone(),
                n: s.n,
            }),
        }
    };
    Ok((var_over_n(stats_a)? + var_over_n(stats_b)?).sqrt())
}

/// Symmetric normal-theory interval `point ± z((1 + level) / 2) * se`.
pub fn confidence_interval(
    point: f64,
    se: f64,
    level: f64,
) -> Result<ConfidenceInterval, InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::InvalidLevel(level));
    }
    if !se.is_finite() || se < 0.0 {
        return Err(InferenceError::InvalidSe(se));
    }
    let z = norm_quantile(0.5 + 0.5 * level)?;
    Ok(ConfidenceInterval {
        lower: point - z * se,
        upper: point + z * se,
        level,
    })
}

/// Two-sided Wald test of zero effect modification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest {
    pub z: f64,
    pub p_two_sided: f64,
}

pub fn wald_test(point: f64, se: f64) -> Result<WaldTest, InferenceError> {
    if !se.is_finite() || se < 0.0 {
        return Err(InferenceError::InvalidSe(se));
    }
    if se == 0.0 {
        return Err(InferenceError::DegenerateSe);
    }
    let z = point / se;
    Ok(WaldTest {
        z,
        p_two_sided: 2.0 * (1.0 - norm_cdf(z.abs())),
    })
}

/// Categorical point estimate with Welch SE and normal-theory CI
/// attached, plus the Wald test when the SE is positive.
pub fn analytic_estimate(
    panel: &PanelDataset,
    contrast: &SubgroupContrast,
    ci_level: f64,
) -> Result<(EffectModEstimate, Option<WaldTest>), InferenceError> {
    let mut est = sdid_categorical(panel, contrast)?;
    let (sa, sb) = contrast_stats(panel, contrast)?;
    let se = analytic_se(&sa, &sb)?;
    est.se = Some(se);
    est.ci = Some(confidence_interval(est.point, se, ci_level)?);
    let wald = if se > 0.0 {
        Some(wald_test(est.point, se)?)
    } else {
        None
    };
    Ok((est, wald))
}

/// Which estimator the bootstrap (or a simulation study) recomputes per
/// resample.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimatorSpec {
    SubgroupMeans {
        contrast: SubgroupContrast,
    },
    DeltaRegression {
        basis: BasisSpec,
        contrast: SubgroupContrast,
    },
}

impl EstimatorSpec {
    pub fn contrast(&self) -> &SubgroupContrast {
        match self {
            EstimatorSpec::SubgroupMeans { contrast } => contrast,
            EstimatorSpec::DeltaRegression { contrast, .. } => contrast,
        }
    }

    /// Runs the estimator once on a panel.
    pub fn estimate(
        &self,
        panel: &PanelDataset,
        policy: ExtrapolationPolicy,
    ) -> Result<EffectModEstimate, EstimatorError> {
        match self {
            EstimatorSpec::SubgroupMeans { contrast } => sdid_categorical(panel, contrast),
            EstimatorSpec::DeltaRegression { basis, contrast } => {
                let model = fit_delta_regression(panel, basis)?;
                sdid_continuous(&model, contrast, policy)
            }
        }
    }
}

/// How resamples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingMode {
    /// Resample n whole units with replacement from the pooled panel.
    #[default]
    Unit,
    /// Resample within each contrast level, holding level counts fixed.
    /// Only defined for the categorical subgroup-means statistic.
    StratifiedByLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Successful replicate statistics in replicate-index order.
    pub replicates: Vec<f64>,
    pub ci_percentile: ConfidenceInterval,
    pub se_boot: f64,
    pub seed: u64,
    pub b: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub b: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub mode: ResamplingMode,
}

/// Nonparametric bootstrap of an SDiD estimator.
///
/// Replicates that lose a contrast level (or whose regression refit
/// fails) are counted and excluded; if more than 10% fail the whole run
/// is an error. Continuous contrasts are evaluated under the warn
/// extrapolation policy inside replicates: the original estimate has
/// already enforced the caller's policy, and a strict range check would
/// reject every resample that happens to miss the sample extremes.
pub fn bootstrap_sdid(
    panel: &PanelDataset,
    spec: &EstimatorSpec,
    opts: &BootstrapOptions,
) -> Result<BootstrapResult, InferenceError> {
    if opts.b == 0 {
        return Err(InferenceError::NoReplicates);
    }
    if !(opts.ci_level > 0.0 && opts.ci_level < 1.0) {
        return Err(InferenceError::InvalidLevel(opts.ci_level));
    }

    let raw: Vec<Option<f64>> = match plan_bootstrap(panel, spec)? {
        BootstrapPlan::Categorical(sample) => {
            let stratified = match opts.mode {
                ResamplingMode::Unit => false,
                ResamplingMode::StratifiedByLevel => true,
            };
            (0..opts.b)
                .into_par_iter()
                .map(|r| {
                    let mut rng = replicate_rng(opts.seed, r as u64);
                    if stratified {
                        sample.replicate_stratified(&mut rng)
                    } else {
                        sample.replicate_pooled(&mut rng)
                    }
                })
                .collect()
        }
        BootstrapPlan::Regression(sample) => {
            if opts.mode == ResamplingMode::StratifiedByLevel {
                return Err(InferenceError::StratifiedRequiresCategorical);
            }
            (0..opts.b)
                .into_par_iter()
                .map(|r| {
                    let mut rng = replicate_rng(opts.seed, r as u64);
                    sample.replicate(&mut rng)
                })
                .collect()
        }
    };

    let replicates: Vec<f64> = raw.iter().filter_map(|v| *v).collect();
    let n_failed = opts.b - replicates.len();
    if n_failed as f64 > MAX_FAILURE_RATE * opts.b as f64 {
        return Err(InferenceError::TooManyFailedReplicates {
            failed: n_failed,
            b: opts.b,
            max_percent: (MAX_FAILURE_RATE * 100.0) as u32,
        });
    }

    let m = replicates.len();
    let mean = replicates.iter().sum::<f64>() / m as f64;
    let se_boot = if m >= 2 {
        (replicates.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64).sqrt()
    } else {
        0.0
    };

    let mut sorted = replicates.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let alpha = 1.0 - opts.ci_level;
    let ci_percentile = ConfidenceInterval {
        lower: sorted[order_statistic_index(0.5 * alpha, m)],
        upper: sorted[order_statistic_index(1.0 - 0.5 * alpha, m)],
        level: opts.ci_level,
    };

    Ok(BootstrapResult {
        replicates,
        ci_percentile,
        se_boot,
        seed: opts.seed,
        b: opts.b,
        n_failed,
    })
}

/// Index of the empirical `q`-quantile as an order statistic
/// (inverse-CDF convention: the ceil(q * m)-th smallest value).
fn order_statistic_index(q: f64, m: usize) -> usize {
    let k = (q * m as f64).ceil() as usize;
    k.clamp(1, m) - 1
}

enum BootstrapPlan {
    Categorical(CategoricalSample),
    Regression(RegressionSample),
}

/// Pre-extracted columns for the categorical statistic, so each
/// replicate is an index-draw loop with two running sums.
struct CategoricalSample {
    level_of: Vec<u32>,
    deltas: Vec<f64>,
    id_a: u32,
    id_b: u32,
    members_a: Vec<u32>,
    members_b: Vec<u32>,
}

impl CategoricalSample {
    fn replicate_pooled(&self, rng: &mut impl Rng) -> Option<f64> {
        if self.id_a == self.id_b {
            return Some(0.0);
        }
        let n = self.deltas.len();
        let (mut sum_a, mut n_a) = (0.0, 0usize);
        let (mut sum_b, mut n_b) = (0.0, 0usize);
        for _ in 0..n {
            let j = rng.random_range(0..n);
            let lid = self.level_of[j];
            if lid == self.id_a {
                sum_a += self.deltas[j];
                n_a += 1;
            } else if lid == self.id_b {
                sum_b += self.deltas[j];
                n_b += 1;
            }
        }
        if n_a == 0 || n_b == 0 {
            return None;
        }
        Some(sum_a / n_a as f64 - sum_b / n_b as f64)
    }

    fn replicate_stratified(&self, rng: &mut impl Rng) -> Option<f64> {
        if self.id_a == self.id_b {
            return Some(0.0);
        }
        let mut level_mean = |members: &[u32]| {
            let mut sum = 0.0;
            for _ in 0..members.len() {
                let j = members[rng.random_range(0..members.len())] as usize;
                sum += self.deltas[j];
            }
            sum / members.len() as f64
        };
        Some(level_mean(&self.members_a) - level_mean(&self.members_b))
    }
}

/// Pre-extracted (covariate, delta) columns for regression refits.
struct RegressionSample {
    xs: Vec<f64>,
    deltas: Vec<f64>,
    basis: BasisSpec,
    contrast: SubgroupContrast,
}

impl RegressionSample {
    fn replicate(&self, rng: &mut impl Rng) -> Option<f64> {
        let n = self.xs.len();
        let mut xs = Vec::with_capacity(n);
        let mut deltas = Vec::with_capacity(n);
        for _ in 0..n {
            let j = rng.random_range(0..n);
            xs.push(self.xs[j]);
            deltas.push(self.deltas[j]);
        }
        let model = crate::estimators::fit_continuous_from(&xs, &deltas, &self.basis).ok()?;
        let a = model.predict(&self.contrast.level_a).ok()?;
        let b = model.predict(&self.contrast.level_b).ok()?;
        Some(a - b)
    }
}

fn plan_bootstrap(
    panel: &PanelDataset,
    spec: &EstimatorSpec,
) -> Result<BootstrapPlan, InferenceError> {
    // Validates the contrast against the full panel up front, so level
    // and basis errors surface before any resampling.
    spec.estimate(panel, ExtrapolationPolicy::Warn)?;

    let categorical_contrast = match spec {
        EstimatorSpec::SubgroupMeans { contrast } => Some(contrast),
        EstimatorSpec::DeltaRegression {
            basis: BasisSpec::SaturatedIndicators,
            contrast,
        } => Some(contrast),
        EstimatorSpec::DeltaRegression { .. } => None,
    };

    if let Some(contrast) = categorical_contrast {
        let mut levels: Vec<&str> = Vec::new();
        let mut level_of = Vec::with_capacity(panel.len());
        let mut deltas = Vec::with_capacity(panel.len());
        for r in panel.records() {
            let label = r.x.as_label().expect("categorical panel invariant");
            let lid = match levels.iter().position(|l| *l == label) {
                Some(i) => i as u32,
                None => {
                    levels.push(label);
                    (levels.len() - 1) as u32
                }
            };
            level_of.push(lid);
            deltas.push(r.y_post - r.y_pre);
        }
        // estimate() above guarantees both labels exist.
        let label_a = contrast.level_a.as_label().expect("validated contrast");
        let label_b = contrast.level_b.as_label().expect("validated contrast");
        let id_a = levels.iter().position(|l| *l == label_a).unwrap() as u32;
        let id_b = levels.iter().position(|l| *l == label_b).unwrap() as u32;
        let collect_members = |id: u32| -> Vec<u32> {
            level_of
                .iter()
                .enumerate()
                .filter(|(_, lid)| **lid == id)
                .map(|(i, _)| i as u32)
                .collect()
        };
        let members_a = collect_members(id_a);
        let members_b = collect_members(id_b);
        return Ok(BootstrapPlan::Categorical(CategoricalSample {
            level_of,
            deltas,
            id_a,
            id_b,
            members_a,
            members_b,
        }));
    }

    let EstimatorSpec::DeltaRegression { basis, contrast } = spec else {
        unreachable!("subgroup means handled above");
    };
    debug_assert_eq!(panel.covariate_kind(), CovariateKind::Continuous);
    let xs = panel
        .records()
        .iter()
        .map(|r| r.x.as_value().expect("continuous panel invariant"))
        .collect();
    let deltas = panel.records().iter().map(|r| r.y_post - r.y_pre).collect();
    Ok(BootstrapPlan::Regression(RegressionSample {
        xs,
        deltas,
        basis: basis.clone(),
        contrast: contrast.clone(),
    }))
}
