//! Data model, validation, and per-unit delta computation.
//!
//! A unit is observed once before and once after the intervention; the
//! per-unit change `d = y_post - y_pre` is the building block every
//! estimator consumes. All operations here are pure functions over
//! immutable inputs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dataset is empty after validation")]
    EmptyAfterValidation,
    #[error("duplicate unit_id `{0}`")]
    DuplicateUnitId(String),
    #[error("unit `{unit_id}` has a non-finite outcome")]
    NonFiniteOutcome { unit_id: String },
    #[error("unit `{unit_id}` is missing its covariate value")]
    MissingCovariate { unit_id: String },
    #[error("unit `{unit_id}` has covariate `{raw}` which is not a finite number")]
    NonNumericCovariate { unit_id: String, raw: String },
    #[error("operation requires a categorical covariate")]
    CategoricalRequired,
    #[error("unit `{unit_id}` is not observed at every period (unbalanced panel)")]
    UnbalancedPanel { unit_id: String },
    #[error("no period earlier than the treatment time {0}")]
    NoPreTreatmentPeriod(i64),
    #[error("treatment time {0} is not one of the observed periods")]
    TreatmentTimeNotObserved(i64),
    #[error("expected exactly two periods, found {0}")]
    NotTwoPeriods(usize),
}

/// Whether the baseline covariate is a label or a real number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Categorical,
    Continuous,
}

/// What to do with rows whose covariate is missing or whose outcomes are
/// not finite. `Strict` fails the whole validation; `Drop` excludes the
/// row and records it in the validation report. Rows are never lost
/// silently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Strict,
    Drop,
}

/// A baseline covariate value: a label for categorical data, a finite
/// real for continuous data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariate {
    Label(String),
    Value(f64),
}

impl Covariate {
    pub fn label(s: impl Into<String>) -> Self {
        Covariate::Label(s.into())
    }

    pub fn value(v: f64) -> Self {
        Covariate::Value(v)
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            Covariate::Label(s) => Some(s),
            Covariate::Value(_) => None,
        }
    }

    pub fn as_value(&self) -> Option<f64> {
        match self {
            Covariate::Label(_) => None,
            Covariate::Value(v) => Some(*v),
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Covariate::Label(s) => f.write_str(s),
            Covariate::Value(v) => write!(f, "{v}"),
        }
    }
}

/// One observed unit: covariate, pre outcome, post outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub unit_id: String,
    pub x: Covariate,
    pub y_pre: f64,
    pub y_post: f64,
}

/// An unvalidated input row, as parsed from a file or constructed by a
/// caller. `x = None` marks a missing covariate; outcomes may be NaN.
#[derive(Debug, Clone)]
pub struct RawRow {
    pub unit_id: String,
    pub x: Option<String>,
    pub y_pre: f64,
    pub y_post: f64,
}

/// Why a row was excluded under the `Drop` policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MissingCovariate,
    NonNumericCovariate,
    NonFiniteOutcome,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::MissingCovariate => f.write_str("missing covariate"),
            DropReason::NonNumericCovariate => f.write_str("non-numeric covariate"),
            DropReason::NonFiniteOutcome => f.write_str("non-finite outcome"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedRow {
    pub row_index: usize,
    pub unit_id: String,
    pub reason: DropReason,
}

/// What validation kept and what it excluded, and why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_input: usize,
    pub n_kept: usize,
    pub dropped: Vec<DroppedRow>,
}

/// A validated two-period panel.
///
/// Invariants (enforced by [`validate_panel`]): unit ids unique, outcomes
/// finite, covariates present and consistent with `covariate_kind`,
/// non-empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelDataset {
    records: Vec<UnitRecord>,
    covariate_kind: CovariateKind,
    provenance: String,
}

impl PanelDataset {
    pub fn records(&self) -> &[UnitRecord] {
        &self.records
    }

    pub fn covariate_kind(&self) -> CovariateKind {
        self.covariate_kind
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Builds a panel from records that are already known to satisfy the
    /// invariants (used by the simulation lab, which constructs its own
    /// clean data). Validates anyway; this is cheap relative to any use.
    pub fn from_validated_records(
        records: Vec<UnitRecord>,
        covariate_kind: CovariateKind,
        provenance: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let raw = records
            .iter()
            .map(|r| RawRow {
                unit_id: r.unit_id.clone(),
                x: Some(r.x.to_string()),
                y_pre: r.y_pre,
                y_post: r.y_post,
            })
            .collect();
        let (panel, _) = validate_panel(raw, covariate_kind, MissingPolicy::Strict, provenance)?;
        Ok(panel)
    }
}

/// Validates raw rows into a [`PanelDataset`] plus a report of anything
/// excluded. Duplicate unit ids and an empty result are always errors;
/// missing covariates and non-finite outcomes follow `policy`.
pub fn validate_panel(
    rows: Vec<RawRow>,
    covariate_kind: CovariateKind,
    policy: MissingPolicy,
    provenance: impl Into<String>,
) -> Result<(PanelDataset, ValidationReport), ModelError> {
    let n_input = rows.len();
    let mut seen: HashSet<String> = HashSet::with_capacity(n_input);
    let mut records = Vec::with_capacity(n_input);
    let mut dropped = Vec::new();

    for (row_index, row) in rows.into_iter().enumerate() {
        if !seen.insert(row.unit_id.clone()) {
            return Err(ModelError::DuplicateUnitId(row.unit_id));
        }

        let exclude = |reason: DropReason, dropped: &mut Vec<DroppedRow>| {
            dropped.push(DroppedRow {
                row_index,
                unit_id: row.unit_id.clone(),
                reason,
            });
        };

        let raw_x = match row.x.as_deref().map(str::trim) {
            Some(s) if !s.is_empty() => s.to_string(),
            _ => match policy {
                MissingPolicy::Strict => {
                    return Err(ModelError::MissingCovariate {
                        unit_id: row.unit_id,
                    })
                }
                MissingPolicy::Drop => {
                    exclude(DropReason::MissingCovariate, &mut dropped);
                    continue;
                }
            },
        };

        let x = match covariate_kind {
            CovariateKind::Categorical => Covariate::Label(raw_x),
            CovariateKind::Continuous => match raw_x.parse::<f64>() {
                Ok(v) if v.is_finite() => Covariate::Value(v),
                _ => match policy {
                    MissingPolicy::Strict => {
                        return Err(ModelError::NonNumericCovariate {
                            unit_id: row.unit_id,
                            raw: raw_x,
                        })
                    }
                    MissingPolicy::Drop => {
                        exclude(DropReason::NonNumericCovariate, &mut dropped);
                        continue;
                    }
                },
            },
        };

        if !row.y_pre.is_finite() || !row.y_post.is_finite() {
            match policy {
                MissingPolicy::Strict => {
                    return Err(ModelError::NonFiniteOutcome {
                        unit_id: row.unit_id,
                    })
                }
                MissingPolicy::Drop => {
                    exclude(DropReason::NonFiniteOutcome, &mut dropped);
                    continue;
                }
            }
        }

        records.push(UnitRecord {
            unit_id: row.unit_id,
            x,
            y_pre: row.y_pre,
            y_post: row.y_post,
        });
    }

    if records.is_empty() {
        return Err(ModelError::EmptyAfterValidation);
    }

    let report = ValidationReport {
        n_input,
        n_kept: records.len(),
        dropped,
    };
    let panel = PanelDataset {
        records,
        covariate_kind,
        provenance: provenance.into(),
    };
    Ok((panel, report))
}

/// One per-unit pre-post change.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDelta {
    pub unit_id: String,
    pub x: Covariate,
    pub delta: f64,
}

/// Per-unit deltas `d = y_post - y_pre`, in record order.
pub fn unit_deltas(panel: &PanelDataset) -> Vec<UnitDelta> {
    panel
        .records()
        .iter()
        .map(|r| UnitDelta {
            unit_id: r.unit_id.clone(),
            x: r.x.clone(),
            delta: r.y_post - r.y_pre,
        })
        .collect()
}

/// Summary of one covariate level's deltas.
///
/// `var_delta` is the unbiased (n-1) sample variance; `None` flags the
/// undefined single-observation case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: String,
    pub n: usize,
    pub mean_delta: f64,
    pub var_delta: Option<f64>,
}

/// Per-level delta summaries for a categorical panel, sorted by level
/// label. Levels with no observations are never emitted.
pub fn subgroup_stats(panel: &PanelDataset) -> Result<Vec<LevelStats>, ModelError> {
    if panel.covariate_kind() != CovariateKind::Categorical {
        return Err(ModelError::CategoricalRequired);
    }

    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in panel.records() {
        let label = r.x.as_label().expect("categorical panel invariant");
        groups.entry(label).or_default().push(r.y_post - r.y_pre);
    }

    Ok(groups
        .into_iter()
        .map(|(level, deltas)| {
            let n = deltas.len();
            let mean = deltas.iter().sum::<f64>() / n as f64;
            let var = if n >= 2 {
                let ss = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>();
                Some(ss / (n - 1) as f64)
            } else {
                None
            };
            LevelStats {
                level: level.to_string(),
                n,
                mean_delta: mean,
                var_delta: var,
            }
        })
        .collect())
}

/// The ordered pair of covariate values being compared.
///
/// Equal values are permitted (the contrast is identically zero) so the
/// self-contrast identity stays testable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupContrast {
    pub level_a: Covariate,
    pub level_b: Covariate,
}

impl SubgroupContrast {
    pub fn new(level_a: Covariate, level_b: Covariate) -> Self {
        Self { level_a, level_b }
    }

    pub fn labels(a: impl Into<String>, b: impl Into<String>) -> Self {
        Self::new(Covariate::label(a), Covariate::label(b))
    }

    pub fn values(a: f64, b: f64) -> Self {
        Self::new(Covariate::value(a), Covariate::value(b))
    }

    /// The same contrast with the two levels swapped.
    pub fn reversed(&self) -> Self {
        Self::new(self.level_b.clone(), self.level_a.clone())
    }
}

impl fmt::Display for SubgroupContrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.level_a, self.level_b)
    }
}

/// One unit observed at several periods; `outcomes` is aligned to the
/// panel's shared time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPeriodUnit {
    pub unit_id: String,
    pub x: Covariate,
    pub outcomes: Vec<f64>,
}

/// An unvalidated multi-period row.
#[derive(Debug, Clone)]
pub struct MultiPeriodRow {
    pub unit_id: String,
    pub x: Covariate,
    pub outcomes: BTreeMap<i64, f64>,
}

/// A balanced panel observed at several periods, treated from
/// `treatment_time` on.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPeriodPanel {
    times: Vec<i64>,
    treatment_time: i64,
    covariate_kind: CovariateKind,
    units: Vec<MultiPeriodUnit>,
}

impl MultiPeriodPanel {
    /// Validates rows into a balanced multi-period panel.
    ///
    /// Every unit must be observed at exactly the same set of periods;
    /// an unbalanced input is an error, not a silent drop.
    pub fn from_rows(
        rows: Vec<MultiPeriodRow>,
        treatment_time: i64,
        covariate_kind: CovariateKind,
    ) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::EmptyAfterValidation);
        }

        let times: Vec<i64> = rows[0].outcomes.keys().copied().collect();
        if !times.contains(&treatment_time) {
            return Err(ModelError::TreatmentTimeNotObserved(treatment_time));
        }
        if times[0] >= treatment_time {
            return Err(ModelError::NoPreTreatmentPeriod(treatment_time));
        }

        let mut seen = HashSet::with_capacity(rows.len());
        let mut units = Vec::with_capacity(rows.len());
        for row in rows {
            if !seen.insert(row.unit_id.clone()) {
                return Err(ModelError::DuplicateUnitId(row.unit_id));
            }
            let row_times: Vec<i64> = row.outcomes.keys().copied().collect();
            if row_times != times {
                return Err(ModelError::UnbalancedPanel {
                    unit_id: row.unit_id,
                });
            }
            let outcomes: Vec<f64> = row.outcomes.values().copied().collect();
            if outcomes.iter().any(|y| !y.is_finite()) {
                return Err(ModelError::NonFiniteOutcome {
                    unit_id: row.unit_id,
                });
            }
            units.push(MultiPeriodUnit {
                unit_id: row.unit_id,
                x: row.x,
                outcomes,
            });
        }

        Ok(Self {
            times,
            treatment_time,
            covariate_kind,
            units,
        })
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn treatment_time(&self) -> i64 {
        self.treatment_time
    }

    pub fn covariate_kind(&self) -> CovariateKind {
        self.covariate_kind
    }

    pub fn units(&self) -> &[MultiPeriodUnit] {
        &self.units
    }

    pub fn is_pre_treatment(&self, time: i64) -> bool {
        time < self.treatment_time
    }

    /// The observed periods strictly before the treatment time.
    pub fn pre_times(&self) -> Vec<i64> {
        self.times
            .iter()
            .copied()
            .filter(|t| *t < self.treatment_time)
            .collect()
    }

    pub fn time_index(&self, time: i64) -> Option<usize> {
        self.times.iter().position(|t| *t == time)
    }

    /// Flattens an exactly-two-period panel into pre/post form.
    pub fn to_two_period(&self, provenance: impl Into<String>) -> Result<PanelDataset, ModelError> {
        if self.times.len() != 2 {
            return Err(ModelError::NotTwoPeriods(self.times.len()));
        }
        let records = self
            .units
            .iter()
            .map(|u| UnitRecord {
                unit_id: u.unit_id.clone(),
                x: u.x.clone(),
                y_pre: u.outcomes[0],
                y_post: u.outcomes[1],
            })
            .collect();
        Ok(PanelDataset {
            records,
            covariate_kind: self.covariate_kind,
            provenance: provenance.into(),
        })
    }
}
