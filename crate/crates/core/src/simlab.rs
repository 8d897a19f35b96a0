//! Potential-outcome data-generating processes with oracle truth.
//!
//! A `DgpSpec` fully determines both potential outcomes for every unit,
//! so the effect-modification estimand has a closed form (the oracle)
//! and estimator bias can be measured exactly. The per-level trend
//! deviation is the violation knob: subgroup parallel trends holds
//! precisely when all deviations are equal. A population-wide post
//! shock models circumstances that change for everyone at treatment
//! time; it cancels in the subgroup contrast but not in any per-level
//! pre-post comparison.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{contrast_stats, ExtrapolationPolicy};
use crate::inference::{
    analytic_se, bootstrap_sdid, confidence_interval, wald_test, BootstrapOptions, EstimatorSpec,
    InferenceError, ResamplingMode,
};
use crate::model::{
    subgroup_stats, Covariate, CovariateKind, ModelError, MultiPeriodPanel, MultiPeriodRow,
    PanelDataset, SubgroupContrast, UnitRecord,
};
use crate::rng::derive_seed;

/// Share of failed repetitions above which a Monte Carlo run errors.
const MAX_REP_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum SimlabError {
    #[error("invalid DGP spec: {0}")]
    InvalidSpec(String),
    #[error("unknown level `{level}`; available levels: {}", available.join(", "))]
    UnknownLevel {
        level: String,
        available: Vec<String>,
    },
    #[error("contrast levels must be categorical labels, got `{0}`")]
    ContrastKindMismatch(String),
    #[error("{failed} of {reps} Monte Carlo repetitions failed (over 5%): {first_failure}")]
    TooManyFailedReps {
        failed: usize,
        reps: usize,
        first_failure: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Noise family for the outcome draws. Non-Gaussian options are scaled
/// so the draw's standard deviation equals the requested one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    Uniform,
    StudentT {
        df: f64,
    },
}

/// NaN-aware: rejects NaN as well as negative values.
fn invalid_sd(sd: f64) -> bool {
    sd.is_nan() || sd < 0.0
}

impl NoiseDistribution {
    fn sample(&self, rng: &mut ChaCha12Rng, sd: f64) -> f64 {
        if sd == 0.0 {
            return 0.0;
        }
        match self {
            NoiseDistribution::Gaussian => {
                Normal::new(0.0, sd).expect("validated sd").sample(rng)
            }
            NoiseDistribution::Uniform => {
                let half_width = sd * 3.0_f64.sqrt();
                (rng.random::<f64>() - 0.5) * 2.0 * half_width
            }
            NoiseDistribution::StudentT { df } => {
                let t: f64 = StudentT::new(*df).expect("validated df").sample(rng);
                t * sd * ((df - 2.0) / df).sqrt()
            }
        }
    }

    fn validate(&self) -> Result<(), SimlabError> {
        if let NoiseDistribution::StudentT { df } = self {
            if !df.is_finite() || *df <= 2.0 {
                return Err(SimlabError::InvalidSpec(format!(
                    "student-t noise needs df > 2 for a finite variance, got {df}"
                )));
            }
        }
        Ok(())
    }
}

/// Independent noise standard deviations for the two observation times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub distribution: NoiseDistribution,
    pub sd_pre: f64,
    pub sd_post: f64,
}

/// One covariate level of the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub label: String,
    pub probability: f64,
    /// Mean of the pre-period outcome.
    pub baseline_mean: f64,
    /// Per-level deviation from the common trend; parallel trends across
    /// two levels holds exactly when their deviations are equal.
    #[serde(default)]
    pub trend_deviation: f64,
    /// Additive treatment effect on the post-period outcome.
    pub treatment_effect: f64,
}

/// A fully specified two-period potential-outcome generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub levels: Vec<LevelSpec>,
    /// Common untreated trend added to every unit's post-period path.
    pub common_trend: f64,
    /// Population-wide shock entering every unit's untreated post-period
    /// outcome: circumstances other than the intervention changing at
    /// treatment time for the whole (fully treated) population.
    #[serde(default)]
    pub post_shock: f64,
    pub noise: NoiseSpec,
    pub n: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<(), SimlabError> {
        if self.levels.is_empty() {
            return Err(SimlabError::InvalidSpec("no levels declared".into()));
        }
        let mut labels: Vec<&str> = self.levels.iter().map(|l| l.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimlabError::InvalidSpec("duplicate level labels".into()));
        }
        let total: f64 = self.levels.iter().map(|l| l.probability).sum();
        if self.levels.iter().any(|l| l.probability.is_nan() || l.probability <= 0.0) {
            return Err(SimlabError::InvalidSpec(
                "level probabilities must be positive".into(),
            ));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(SimlabError::InvalidSpec(format!(
                "level probabilities sum to {total}, expected 1"
            )));
        }
        for l in &self.levels {
            for (name, v) in [
                ("baseline_mean", l.baseline_mean),
                ("trend_deviation", l.trend_deviation),
                ("treatment_effect", l.treatment_effect),
            ] {
                if !v.is_finite() {
                    return Err(SimlabError::InvalidSpec(format!(
                        "level `{}` has non-finite {name}",
                        l.label
                    )));
                }
            }
        }
        if !self.common_trend.is_finite() || !self.post_shock.is_finite() {
            return Err(SimlabError::InvalidSpec(
                "common_trend and post_shock must be finite".into(),
            ));
        }
        if invalid_sd(self.noise.sd_pre) || invalid_sd(self.noise.sd_post) {
            return Err(SimlabError::InvalidSpec("noise SDs must be >= 0".into()));
        }
        self.noise.distribution.validate()?;
        if self.n < 1 {
            return Err(SimlabError::InvalidSpec("n must be >= 1".into()));
        }
        Ok(())
    }

    fn level(&self, label: &str) -> Result<&LevelSpec, SimlabError> {
        self.levels
            .iter()
            .find(|l| l.label == label)
            .ok_or_else(|| SimlabError::UnknownLevel {
                level: label.to_string(),
                available: self.levels.iter().map(|l| l.label.clone()).collect(),
            })
    }
}

/// Both potential outcomes of one simulated unit; retained for audit
/// only and never handed to estimators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialOutcomeRecord {
    pub unit_id: String,
    pub level: String,
    pub y_pre: f64,
    pub y_post_untreated: f64,
    pub y_post_treated: f64,
}

/// A generated dataset: the observable panel (all units treated, so the
/// observed post outcome is the treated potential outcome) plus the
/// audit ledger holding the counterfactual untreated path.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: PanelDataset,
    pub ledger: Vec<PotentialOutcomeRecord>,
}

/// Draws a panel from the generating process. Deterministic given the
/// spec (including its seed).
pub fn generate(spec: &DgpSpec) -> Result<SimulatedPanel, SimlabError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    let mut cumulative = Vec::with_capacity(spec.levels.len());
    let mut acc = 0.0;
    for l in &spec.levels {
        acc += l.probability;
        cumulative.push(acc);
    }

    let mut records = Vec::with_capacity(spec.n);
    let mut ledger = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let u: f64 = rng.random();
        let idx = cumulative.iter().position(|c| u < *c).unwrap_or(spec.levels.len() - 1);
        let level = &spec.levels[idx];

        let y_pre = level.baseline_mean + spec.noise.distribution.sample(&mut rng, spec.noise.sd_pre);
        let y_post_untreated = level.baseline_mean
            + spec.common_trend
            + level.trend_deviation
            + spec.post_shock
            + spec.noise.distribution.sample(&mut rng, spec.noise.sd_post);
        let y_post_treated = y_post_untreated + level.treatment_effect;

        let unit_id = format!("sim-{i:06}");
        records.push(UnitRecord {
            unit_id: unit_id.clone(),
            x: Covariate::label(&level.label),
            y_pre,
            y_post: y_post_treated,
        });
        ledger.push(PotentialOutcomeRecord {
            unit_id,
            level: level.label.clone(),
            y_pre,
            y_post_untreated,
            y_post_treated,
        });
    }

    let panel =
        PanelDataset::from_validated_records(records, CovariateKind::Categorical, "simulated")?;
    Ok(SimulatedPanel { panel, ledger })
}

/// Closed-form targets implied by a DGP for one contrast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTruth {
    /// Difference of treatment effects across the contrast.
    pub true_effect_modification: f64,
    /// Difference of trend deviations; zero iff subgroup parallel trends
    /// holds for this contrast.
    pub true_trend_gap: f64,
    /// Expectation of each level's naive pre-post mean change. Differs
    /// from the level's treatment effect by the common trend, the
    /// level's deviation, and the post shock.
    pub naive_expectations: BTreeMap<String, f64>,
}

pub fn oracle(spec: &DgpSpec, contrast: &SubgroupContrast) -> Result<OracleTruth, SimlabError> {
    spec.validate()?;
    let label_a = contrast
        .level_a
        .as_label()
        .ok_or_else(|| SimlabError::ContrastKindMismatch(contrast.level_a.to_string()))?;
    let label_b = contrast
        .level_b
        .as_label()
        .ok_or_else(|| SimlabError::ContrastKindMismatch(contrast.level_b.to_string()))?;
    let a = spec.level(label_a)?;
    let b = spec.level(label_b)?;

    let naive_expectations = spec
        .levels
        .iter()
        .map(|l| {
            (
                l.label.clone(),
                l.treatment_effect + spec.common_trend + l.trend_deviation + spec.post_shock,
            )
        })
        .collect();

    Ok(OracleTruth {
        true_effect_modification: a.treatment_effect - b.treatment_effect,
        true_trend_gap: a.trend_deviation - b.trend_deviation,
        naive_expectations,
    })
}

/// Optional bootstrap pass inside each Monte Carlo repetition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McBootstrap {
    pub b: usize,
    pub mode: ResamplingMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub ci_level: f64,
    pub alpha: f64,
    pub bootstrap: Option<McBootstrap>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            ci_level: 0.95,
            alpha: 0.05,
            bootstrap: None,
        }
    }
}

/// Monte Carlo summary of an estimator against the oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub reps: usize,
    pub n_failed: usize,
    pub oracle_effect_modification: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub empirical_sd: f64,
    /// Monte Carlo standard error of `mean_estimate`.
    pub mc_se: f64,
    pub ci_level: f64,
    pub coverage_normal: Option<f64>,
    pub coverage_bootstrap: Option<f64>,
    pub alpha: f64,
    /// Share of repetitions whose Wald test rejected zero effect
    /// modification; `None` when no repetition produced a usable test.
    pub rejection_rate: Option<f64>,
    /// Mean over repetitions of each level's naive pre-post mean change.
    pub naive_level_means: BTreeMap<String, f64>,
    pub master_seed: u64,
}

struct RepOutcome {
    estimate: f64,
    covered_normal: Option<bool>,
    covered_bootstrap: Option<bool>,
    rejected: Option<bool>,
    level_means: Vec<(String, f64)>,
}

/// Runs the estimator over `reps` independent draws of the DGP.
///
/// Repetition `r` regenerates the panel with a seed derived from
/// `(master_seed, r)`; the DGP's own seed field is ignored here. The
/// summary is a pure function of the arguments, whatever the thread
/// schedule.
pub fn monte_carlo(
    spec: &DgpSpec,
    contrast: &SubgroupContrast,
    estimator: &EstimatorSpec,
    reps: usize,
    master_seed: u64,
    opts: &McOptions,
) -> Result<McSummary, SimlabError> {
    spec.validate()?;
    if reps < 1 {
        return Err(SimlabError::InvalidSpec("reps must be >= 1".into()));
    }
    if !(opts.ci_level > 0.0 && opts.ci_level < 1.0) {
        return Err(SimlabError::InvalidSpec(format!(
            "ci_level must lie in (0, 1), got {}",
            opts.ci_level
        )));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(SimlabError::InvalidSpec(format!(
            "alpha must lie in (0, 1), got {}",
            opts.alpha
        )));
    }
    let truth = oracle(spec, contrast)?;
    let target = truth.true_effect_modification;

    let outcomes: Vec<Result<RepOutcome, String>> = (0..reps)
        .into_par_iter()
        .map(|r| run_rep(spec, contrast, estimator, master_seed, r as u64, target, opts))
        .collect();

    let mut successes: Vec<RepOutcome> = Vec::with_capacity(reps);
    let mut first_failure: Option<String> = None;
    for outcome in outcomes {
        match outcome {
            Ok(o) => successes.push(o),
            Err(e) => {
                first_failure.get_or_insert(e);
            }
        }
    }
    let n_failed = reps - successes.len();
    if n_failed as f64 > MAX_REP_FAILURE_RATE * reps as f64 {
        return Err(SimlabError::TooManyFailedReps {
            failed: n_failed,
            reps,
            first_failure: first_failure.unwrap_or_default(),
        });
    }

    let m = successes.len() as f64;
    let mean_estimate = successes.iter().map(|o| o.estimate).sum::<f64>() / m;
    let empirical_sd = if successes.len() >= 2 {
        (successes
            .iter()
            .map(|o| (o.estimate - mean_estimate).powi(2))
            .sum::<f64>()
            / (m - 1.0))
            .sqrt()
    } else {
        0.0
    };

    let rate = |pick: fn(&RepOutcome) -> Option<bool>| -> Option<f64> {
        let mut hits = 0usize;
        let mut total = 0usize;
        for o in &successes {
            if let Some(flag) = pick(o) {
                total += 1;
                hits += flag as usize;
            }
        }
        (total > 0).then(|| hits as f64 / total as f64)
    };

    let mut level_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for o in &successes {
        for (label, mean) in &o.level_means {
            let entry = level_sums.entry(label.clone()).or_insert((0.0, 0));
            entry.0 += mean;
            entry.1 += 1;
        }
    }
    let naive_level_means = level_sums
        .into_iter()
        .map(|(label, (sum, count))| (label, sum / count as f64))
        .collect();

    Ok(McSummary {
        reps,
        n_failed,
        oracle_effect_modification: target,
        mean_estimate,
        bias: mean_estimate - target,
        empirical_sd,
        mc_se: empirical_sd / m.sqrt(),
        ci_level: opts.ci_level,
        coverage_normal: rate(|o| o.covered_normal),
        coverage_bootstrap: rate(|o| o.covered_bootstrap),
        alpha: opts.alpha,
        rejection_rate: rate(|o| o.rejected),
        naive_level_means,
        master_seed,
    })
}

fn run_rep(
    spec: &DgpSpec,
    contrast: &SubgroupContrast,
    estimator: &EstimatorSpec,
    master_seed: u64,
    rep: u64,
    target: f64,
    opts: &McOptions,
) -> Result<RepOutcome, String> {
    let mut rep_spec = spec.clone();
    rep_spec.seed = derive_seed(master_seed, rep);
    let sim = generate(&rep_spec).map_err(|e| e.to_string())?;

    let est = estimator
        .estimate(&sim.panel, ExtrapolationPolicy::Warn)
        .map_err(|e| e.to_string())?;

    let stats = subgroup_stats(&sim.panel).map_err(|e| e.to_string())?;
    let level_means: Vec<(String, f64)> =
        stats.iter().map(|s| (s.level.clone(), s.mean_delta)).collect();

    // Normal-theory coverage and the Wald test need the analytic SE,
    // which exists for the categorical statistic.
    let mut covered_normal = None;
    let mut rejected = None;
    if matches!(estimator, EstimatorSpec::SubgroupMeans { .. }) {
        let (sa, sb) = contrast_stats(&sim.panel, contrast).map_err(|e| e.to_string())?;
        let se = analytic_se(&sa, &sb).map_err(|e| e.to_string())?;
        let ci = confidence_interval(est.point, se, opts.ci_level).map_err(|e| e.to_string())?;
        covered_normal = Some(ci.lower <= target && target <= ci.upper);
        if se > 0.0 {
            let test = wald_test(est.point, se).map_err(|e| e.to_string())?;
            rejected = Some(test.p_two_sided < opts.alpha);
        }
    }

    let mut covered_bootstrap = None;
    if let Some(boot) = &opts.bootstrap {
        let result = bootstrap_sdid(
            &sim.panel,
            estimator,
            &BootstrapOptions {
                b: boot.b,
                seed: derive_seed(rep_spec.seed, u64::MAX),
                ci_level: opts.ci_level,
                mode: boot.mode,
            },
        )
        .map_err(|e| e.to_string())?;
        covered_bootstrap = Some(
            result.ci_percentile.lower <= target && target <= result.ci_percentile.upper,
        );
    }

    Ok(RepOutcome {
        estimate: est.point,
        covered_normal,
        covered_bootstrap,
        rejected,
        level_means,
    })
}

/// One level of the multi-period generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLevelSpec {
    pub label: String,
    pub probability: f64,
    pub baseline_mean: f64,
    /// Per-interval deviation from the common trend, one entry per
    /// adjacent period pair.
    pub interval_deviations: Vec<f64>,
    pub treatment_effect: f64,
}

/// Multi-period extension of the generating process: the untreated path
/// accumulates a common trend plus per-level deviation over each
/// interval, with independent noise at every period and the treatment
/// effect added from the treatment time on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPeriodDgpSpec {
    pub levels: Vec<MultiLevelSpec>,
    pub times: Vec<i64>,
    pub treatment_time: i64,
    /// Common trend per interval (length `times.len() - 1`).
    pub interval_trends: Vec<f64>,
    #[serde(default)]
    pub noise_distribution: NoiseDistribution,
    pub noise_sd: f64,
    pub n: usize,
    pub seed: u64,
}

impl MultiPeriodDgpSpec {
    pub fn validate(&self) -> Result<(), SimlabError> {
        if self.levels.is_empty() {
            return Err(SimlabError::InvalidSpec("no levels declared".into()));
        }
        if self.times.len() < 2 {
            return Err(SimlabError::InvalidSpec("need at least two periods".into()));
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimlabError::InvalidSpec(
                "times must be strictly increasing".into(),
            ));
        }
        if !self.times.contains(&self.treatment_time) {
            return Err(SimlabError::InvalidSpec(format!(
                "treatment_time {} is not an observed period",
                self.treatment_time
            )));
        }
        if self.times[0] >= self.treatment_time {
            return Err(SimlabError::InvalidSpec(
                "no pre-treatment period before treatment_time".into(),
            ));
        }
        let n_intervals = self.times.len() - 1;
        if self.interval_trends.len() != n_intervals {
            return Err(SimlabError::InvalidSpec(format!(
                "interval_trends has {} entries, expected {n_intervals}",
                self.interval_trends.len()
            )));
        }
        let total: f64 = self.levels.iter().map(|l| l.probability).sum();
        if self
            .levels
            .iter()
            .any(|l| l.probability.is_nan() || l.probability <= 0.0)
            || (total - 1.0).abs() > 1e-12
        {
            return Err(SimlabError::InvalidSpec(
                "level probabilities must be positive and sum to 1".into(),
            ));
        }
        for l in &self.levels {
            if l.interval_deviations.len() != n_intervals {
                return Err(SimlabError::InvalidSpec(format!(
                    "level `{}` has {} interval deviations, expected {n_intervals}",
                    l.label,
                    l.interval_deviations.len()
                )));
            }
        }
        if invalid_sd(self.noise_sd) {
            return Err(SimlabError::InvalidSpec("noise_sd must be >= 0".into()));
        }
        self.noise_distribution.validate()?;
        if self.n < 1 {
            return Err(SimlabError::InvalidSpec("n must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draws a balanced multi-period panel from the extended process.
pub fn generate_multi(spec: &MultiPeriodDgpSpec) -> Result<MultiPeriodPanel, SimlabError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    let mut cumulative = Vec::with_capacity(spec.levels.len());
    let mut acc = 0.0;
    for l in &spec.levels {
        acc += l.probability;
        cumulative.push(acc);
    }

    let mut rows = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let u: f64 = rng.random();
        let idx = cumulative.iter().position(|c| u < *c).unwrap_or(spec.levels.len() - 1);
        let level = &spec.levels[idx];

        let mut outcomes = BTreeMap::new();
        let mut untreated_mean = level.baseline_mean;
        for (j, &t) in spec.times.iter().enumerate() {
            if j > 0 {
                untreated_mean += spec.interval_trends[j - 1] + level.interval_deviations[j - 1];
            }
            let effect = if t >= spec.treatment_time {
                level.treatment_effect
            } else {
                0.0
            };
            let noise = spec.noise_distribution.sample(&mut rng, spec.noise_sd);
            outcomes.insert(t, untreated_mean + effect + noise);
        }
        rows.push(MultiPeriodRow {
            unit_id: format!("sim-{i:06}"),
            x: Covariate::label(&level.label),
            outcomes,
        });
    }

    Ok(MultiPeriodPanel::from_rows(
        rows,
        spec.treatment_time,
        CovariateKind::Categorical,
    )?)
}
