//! Subgroup difference-in-differences (SDiD) toolkit.
//!
//! Estimates effect modification by a baseline covariate from pre-post
//! data on a fully treated population: the difference between two
//! subgroups' average outcome changes identifies the difference of the
//! subgroups' treatment effects whenever their untreated outcomes would
//! have moved in parallel — even though neither subgroup's own effect
//! is identified. The crate covers the data model, categorical and
//! regression-based estimators, analytic and bootstrap inference,
//! pre-trends diagnostics over multiple pre-periods, and a simulation
//! lab with closed-form oracle truth for verifying all of it.

pub mod dist;
pub mod estimators;
pub mod inference;
pub mod model;
pub mod pretrends;
pub mod rng;
pub mod simlab;

pub use estimators::{
    fit_delta_regression, quantile_knots, sdid_all_pairs, sdid_categorical, sdid_continuous,
    BasisRequest, BasisSpec, ConfidenceInterval, DeltaModel, EffectModEstimate, EstimationMethod,
    EstimatorError, ExtrapolationPolicy,
};
pub use inference::{
    analytic_estimate, analytic_se, bootstrap_sdid, confidence_interval, wald_test,
    BootstrapOptions, BootstrapResult, EstimatorSpec, InferenceError, ResamplingMode, WaldTest,
};
pub use model::{
    subgroup_stats, unit_deltas, validate_panel, Covariate, CovariateKind, LevelStats,
    MissingPolicy, ModelError, MultiPeriodPanel, MultiPeriodRow, PanelDataset, RawRow,
    SubgroupContrast, UnitRecord, ValidationReport,
};
pub use pretrends::{
    event_study_contrasts, interval_trend_contrasts, pretrends_joint_test, run_pretrends,
    EventStudyPoint, IntervalContrast, PretrendsError, PretrendsReport,
};
pub use simlab::{
    generate, generate_multi, monte_carlo, oracle, DgpSpec, LevelSpec, McBootstrap, McOptions,
    McSummary, MultiLevelSpec, MultiPeriodDgpSpec, NoiseDistribution, NoiseSpec, OracleTruth,
    SimlabError, SimulatedPanel,
};
