//! Pre-trends diagnostics for the subgroup parallel-trends assumption.
//!
//! With several pre-treatment periods, the same subgroup contrast can be
//! computed on each adjacent pre-period pair; under the pre-period
//! analog of parallel trends every such contrast has expectation zero.
//! A joint chi-squared statistic summarizes them. Non-rejection supports
//! the assumption but can never establish it: the assumption itself
//! concerns the treatment interval, where no test is possible.

use serde::Serialize;
use thiserror::Error;

use crate::dist::{chi_squared_sf, DistError};
use crate::model::{CovariateKind, MultiPeriodPanel, SubgroupContrast};

#[derive(Debug, Error, PartialEq)]
pub enum PretrendsError {
    #[error("pre-trends are untestable with a single pre-period")]
    SinglePrePeriod,
    #[error("pre-trends contrasts require a categorical covariate")]
    CategoricalRequired,
    #[error("contrast levels must be categorical labels, got `{0}`")]
    ContrastKindMismatch(String),
    #[error("unknown level `{level}`; available levels: {}", available.join(", "))]
    UnknownLevel {
        level: String,
        available: Vec<String>,
    },
    #[error("no interval contrasts to combine")]
    NoIntervals,
    #[error(
        "interval ({0}, {1}) has a zero or undefined standard error; \
         the joint test is degenerate on noiseless or single-unit data"
    )]
    DegenerateSe(i64, i64),
    #[error("base period {base} is not a pre-treatment period (treatment at {treatment_time})")]
    BasePeriodNotPre { base: i64, treatment_time: i64 },
    #[error("significance level must lie strictly in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// The between-level trend difference over one period pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalContrast {
    pub interval: (i64, i64),
    pub estimate: f64,
    /// Welch SE of the estimate; `None` when either level has a single
    /// unit and the variance is undefined.
    pub se: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
}

impl IntervalContrast {
    /// Standardized estimate, when the SE exists and is positive.
    pub fn z(&self) -> Option<f64> {
        self.se.filter(|se| *se > 0.0).map(|se| self.estimate / se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointTest {
    pub stat: f64,
    pub df: usize,
    pub p: f64,
}

/// One event-study point: the subgroup contrast of outcome changes from
/// the base period to `period`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudyPoint {
    pub period: i64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub is_pre_treatment: bool,
}

/// Full diagnostic report for one contrast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrendsReport {
    pub contrast: SubgroupContrast,
    pub per_interval: Vec<IntervalContrast>,
    pub joint_stat: f64,
    pub joint_df: usize,
    pub joint_p: f64,
    pub alpha: f64,
    pub passed: bool,
    pub decision_note: String,
}

fn contrast_labels(contrast: &SubgroupContrast) -> Result<(&str, &str), PretrendsError> {
    let a = contrast
        .level_a
        .as_label()
        .ok_or_else(|| PretrendsError::ContrastKindMismatch(contrast.level_a.to_string()))?;
    let b = contrast
        .level_b
        .as_label()
        .ok_or_else(|| PretrendsError::ContrastKindMismatch(contrast.level_b.to_string()))?;
    Ok((a, b))
}

/// Per-unit changes from period index `from` to `to`, split into the two
/// contrast levels.
fn level_changes(
    mpanel: &MultiPeriodPanel,
    labels: (&str, &str),
    from: usize,
    to: usize,
) -> Result<(Vec<f64>, Vec<f64>), PretrendsError> {
    if mpanel.covariate_kind() != CovariateKind::Categorical {
        return Err(PretrendsError::CategoricalRequired);
    }
    let mut deltas_a = Vec::new();
    let mut deltas_b = Vec::new();
    for unit in mpanel.units() {
        let label = unit.x.as_label().expect("categorical panel invariant");
        let d = unit.outcomes[to] - unit.outcomes[from];
        if label == labels.0 {
            deltas_a.push(d);
        }
        if label == labels.1 {
            deltas_b.push(d);
        }
    }
    for (label, deltas) in [(labels.0, &deltas_a), (labels.1, &deltas_b)] {
        if deltas.is_empty() {
            let mut available: Vec<String> = mpanel
                .units()
                .iter()
                .map(|u| u.x.to_string())
                .collect();
            available.sort();
            available.dedup();
            return Err(PretrendsError::UnknownLevel {
                level: label.to_string(),
                available,
            });
        }
    }
    Ok((deltas_a, deltas_b))
}

fn mean_and_var(deltas: &[f64]) -> (f64, Option<f64>) {
    let n = deltas.len();
    let mean = deltas.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let ss: f64 = deltas.iter().map(|d| (d - mean) * (d - mean)).sum();
    (mean, Some(ss / (n - 1) as f64))
}

fn contrast_of_changes(deltas_a: &[f64], deltas_b: &[f64]) -> (f64, Option<f64>) {
    let (mean_a, var_a) = mean_and_var(deltas_a);
    let (mean_b, var_b) = mean_and_var(deltas_b);
    let se = match (var_a, var_b) {
        (Some(va), Some(vb)) => {
            Some((va / deltas_a.len() as f64 + vb / deltas_b.len() as f64).sqrt())
        }
        _ => None,
    };
    (mean_a - mean_b, se)
}

/// Between-level trend contrasts over every adjacent pre-period pair.
///
/// Each contrast applies the SDiD expression to the pair `(t, t_next)`
/// in place of (pre, post); under the pre-period parallel-trends analog
/// every estimate has expectation zero.
pub fn interval_trend_contrasts(
    mpanel: &MultiPeriodPanel,
    contrast: &SubgroupContrast,
) -> Result<Vec<IntervalContrast>, PretrendsError> {
    let labels = contrast_labels(contrast)?;
    let pre = mpanel.pre_times();
    if pre.len() < 2 {
        return Err(PretrendsError::SinglePrePeriod);
    }

    pre.windows(2)
        .map(|w| {
            let from = mpanel.time_index(w[0]).expect("pre time is observed");
            let to = mpanel.time_index(w[1]).expect("pre time is observed");
            let (da, db) = level_changes(mpanel, labels, from, to)?;
            let (estimate, se) = contrast_of_changes(&da, &db);
            Ok(IntervalContrast {
                interval: (w[0], w[1]),
                estimate,
                se,
                n_a: da.len(),
                n_b: db.len(),
            })
        })
        .collect()
}

/// Combines interval contrasts into one chi-squared statistic:
/// `sum((estimate / se)^2)` on `df = number of intervals`.
///
/// Adjacent intervals share a period, so the terms are not independent;
/// treating the sum as chi-squared is a working approximation, not an
/// exact size guarantee.
pub fn pretrends_joint_test(contrasts: &[IntervalContrast]) -> Result<JointTest, PretrendsError> {
    if contrasts.is_empty() {
        return Err(PretrendsError::NoIntervals);
    }
    let mut stat = 0.0;
    for c in contrasts {
        match c.se {
            Some(se) if se > 0.0 && se.is_finite() => {
                let z = c.estimate / se;
                stat += z * z;
            }
            _ => return Err(PretrendsError::DegenerateSe(c.interval.0, c.interval.1)),
        }
    }
    let df = contrasts.len();
    let p = chi_squared_sf(stat, df)?;
    Ok(JointTest { stat, df, p })
}

/// Event-study contrasts of every period against a pre-treatment base.
///
/// Pre-treatment entries are placebo contrasts; post-treatment entries
/// estimate effect modification at that horizon. The base period's own
/// zero entry is emitted only when `include_base` is set.
pub fn event_study_contrasts(
    mpanel: &MultiPeriodPanel,
    contrast: &SubgroupContrast,
    base_period: i64,
    include_base: bool,
) -> Result<Vec<EventStudyPoint>, PretrendsError> {
    let labels = contrast_labels(contrast)?;
    let base_idx = mpanel
        .time_index(base_period)
        .filter(|_| mpanel.is_pre_treatment(base_period))
        .ok_or(PretrendsError::BasePeriodNotPre {
            base: base_period,
            treatment_time: mpanel.treatment_time(),
        })?;

    let mut points = Vec::new();
    for (idx, &t) in mpanel.times().iter().enumerate() {
        if t == base_period && !include_base {
            continue;
        }
        let (da, db) = level_changes(mpanel, labels, base_idx, idx)?;
        let (estimate, se) = contrast_of_changes(&da, &db);
        points.push(EventStudyPoint {
            period: t,
            estimate,
            se,
            is_pre_treatment: mpanel.is_pre_treatment(t),
        });
    }
    Ok(points)
}

/// Runs the interval contrasts and joint test, and renders the decision.
pub fn run_pretrends(
    mpanel: &MultiPeriodPanel,
    contrast: &SubgroupContrast,
    alpha: f64,
) -> Result<PretrendsReport, PretrendsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PretrendsError::InvalidAlpha(alpha));
    }
    let per_interval = interval_trend_contrasts(mpanel, contrast)?;
    let joint = pretrends_joint_test(&per_interval)?;
    let passed = joint.p >= alpha;
    let decision_note = if passed {
        format!(
            "joint p = {:.4} >= alpha = {alpha}: no evidence against equal pre-period trends \
             for contrast {contrast}. Non-rejection supports but cannot establish subgroup \
             parallel trends over the treatment interval; that assumption remains untestable.",
            joint.p
        )
    } else {
        format!(
            "joint p = {:.4} < alpha = {alpha}: pre-period trends differ between the levels of \
             contrast {contrast}; the subgroup parallel-trends assumption is not credible here.",
            joint.p
        )
    };
    Ok(PretrendsReport {
        contrast: contrast.clone(),
        per_interval,
        joint_stat: joint.stat,
        joint_df: joint.df,
        joint_p: joint.p,
        alpha,
        passed,
        decision_note,
    })
}
