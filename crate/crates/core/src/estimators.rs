//! Point estimation of effect modification between covariate subgroups.
//!
//! The estimand is the difference between two subgroups' average
//! pre-post outcome changes. For categorical covariates it is a plain
//! difference of subgroup delta means; for continuous covariates a
//! regression of the per-unit delta on a basis expansion of the
//! covariate is evaluated at the two contrast values.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    subgroup_stats, Covariate, CovariateKind, LevelStats, ModelError, PanelDataset,
    SubgroupContrast,
};

/// Relative floor below which the smallest R diagonal of the QR
/// factorization marks the design as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown level `{level}`; available levels: {}", available.join(", "))]
    UnknownLevel {
        level: String,
        available: Vec<String>,
    },
    #[error("contrast value kind does not match the covariate kind: {0}")]
    ContrastKindMismatch(String),
    #[error("design matrix is rank deficient (condition indicator {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("need more observations than basis columns: n = {n}, basis dimension = {dim}")]
    InsufficientData { n: usize, dim: usize },
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error(
        "contrast value {value} lies outside the observed covariate range \
         [{lo}, {hi}]; rerun with the warn extrapolation policy to evaluate anyway"
    )]
    OutOfRange { value: f64, lo: f64, hi: f64 },
}

/// How the point estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMethod {
    SubgroupMeans,
    DeltaRegression,
}

/// A symmetric normal-theory confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Point estimate of effect modification for one contrast, with optional
/// uncertainty attached by the inference layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectModEstimate {
    pub contrast: SubgroupContrast,
    pub point: f64,
    pub se: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    pub n_a: Option<usize>,
    pub n_b: Option<usize>,
    pub method: EstimationMethod,
    /// Set when a contrast value fell outside the observed covariate
    /// range and the warn policy let the evaluation proceed.
    pub extrapolated: bool,
}

/// What to do when a continuous contrast value falls outside the
/// observed covariate range. Evaluating a fitted curve off-support is
/// indefensible by default, so `Strict` errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationPolicy {
    #[default]
    Strict,
    Warn,
}

fn require_label<'c>(x: &'c Covariate, what: &str) -> Result<&'c str, EstimatorError> {
    x.as_label().ok_or_else(|| {
        EstimatorError::ContrastKindMismatch(format!(
            "{what} must be a categorical label, got numeric value {x}"
        ))
    })
}

fn require_value(x: &Covariate, what: &str) -> Result<f64, EstimatorError> {
    x.as_value().ok_or_else(|| {
        EstimatorError::ContrastKindMismatch(format!(
            "{what} must be a numeric value, got label `{x}`"
        ))
    })
}

fn find_level<'s>(
    stats: &'s [LevelStats],
    level: &str,
) -> Result<&'s LevelStats, EstimatorError> {
    stats.iter().find(|s| s.level == level).ok_or_else(|| {
        EstimatorError::UnknownLevel {
            level: level.to_string(),
            available: stats.iter().map(|s| s.level.clone()).collect(),
        }
    })
}

/// Subgroup delta summaries for the two sides of a categorical contrast.
pub fn contrast_stats(
    panel: &PanelDataset,
    contrast: &SubgroupContrast,
) -> Result<(LevelStats, LevelStats), EstimatorError> {
    let stats = subgroup_stats(panel)?;
    let a = require_label(&contrast.level_a, "contrast level")?;
    let b = require_label(&contrast.level_b, "contrast level")?;
    let sa = find_level(&stats, a)?.clone();
    let sb = find_level(&stats, b)?.clone();
    Ok((sa, sb))
}

/// Difference of subgroup delta means: `mean(d | x = a) - mean(d | x = b)`.
///
/// The standard error is left unset; the inference module attaches it.
pub fn sdid_categorical(
    panel: &PanelDataset,
    contrast: &SubgroupContrast,
) -> Result<EffectModEstimate, EstimatorError> {
    let (sa, sb) = contrast_stats(panel, contrast)?;
    Ok(EffectModEstimate {
        contrast: contrast.clone(),
        point: sa.mean_delta - sb.mean_delta,
        se: None,
        ci: None,
        n_a: Some(sa.n),
        n_b: Some(sb.n),
        method: EstimationMethod::SubgroupMeans,
        extrapolated: false,
    })
}

/// One estimate per non-reference level, each contrasted against
/// `reference`, in level order.
///
/// Each returned contrast stands on its own parallel-trends assumption
/// for that specific pair of levels; none is implied by the others.
pub fn sdid_all_pairs(
    panel: &PanelDataset,
    reference: &str,
) -> Result<Vec<EffectModEstimate>, EstimatorError> {
    let stats = subgroup_stats(panel)?;
    find_level(&stats, reference)?;
    stats
        .iter()
        .filter(|s| s.level != reference)
        .map(|s| sdid_categorical(panel, &SubgroupContrast::labels(&s.level, reference)))
        .collect()
}

/// Basis family for the delta regression.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSpec {
    /// One indicator column per level; categorical covariates only.
    SaturatedIndicators,
    /// Monomials up to the given degree in the centered/scaled covariate.
    Polynomial(usize),
    /// Intercept, identity, and a hinge `max(0, x - k)` per knot.
    LinearSpline(Vec<f64>),
}

/// The basis actually fitted, with any covariate transform baked in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FittedBasis {
    Saturated {
        levels: Vec<String>,
    },
    Polynomial {
        degree: usize,
        /// Covariate transform `t = (x - center) / half_range` mapping the
        /// observed range onto [-1, 1] for conditioning.
        center: f64,
        half_range: f64,
        range: (f64, f64),
    },
    LinearSpline {
        knots: Vec<f64>,
        range: (f64, f64),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub residual_variance: f64,
    /// Ratio of the largest to smallest R diagonal of the QR
    /// factorization; a cheap lower bound on the design condition number.
    pub condition: f64,
}

/// A least-squares fit of the per-unit delta on a basis expansion of the
/// covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaModel {
    basis: FittedBasis,
    coefficients: Vec<f64>,
    diagnostics: FitDiagnostics,
}

impl DeltaModel {
    pub fn basis(&self) -> &FittedBasis {
        &self.basis
    }

    /// Coefficients in the fitted (transformed) basis.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// Polynomial coefficients mapped back to raw-covariate monomials
    /// `1, x, x^2, ...`. Only meaningful for the polynomial basis.
    pub fn power_basis_coefficients(&self) -> Option<Vec<f64>> {
        let FittedBasis::Polynomial {
            degree,
            center,
            half_range,
            ..
        } = &self.basis
        else {
            return None;
        };
        // Expand sum a_k ((x - c)/h)^k into raw monomials by repeated
        // multiplication with (x - c)/h = (-c/h) + (1/h) x.
        let mut raw = vec![0.0; degree + 1];
        let mut power = vec![0.0; degree + 1];
        power[0] = 1.0;
        let b0 = -center / half_range;
        let b1 = 1.0 / half_range;
        for (k, &a) in self.coefficients.iter().enumerate() {
            for j in 0..=*degree {
                raw[j] += a * power[j];
            }
            if k < *degree {
                let mut next = vec![0.0; degree + 1];
                for j in 0..=*degree {
                    next[j] += power[j] * b0;
                    if j < *degree {
                        next[j + 1] += power[j] * b1;
                    }
                }
                power = next;
            }
        }
        Some(raw)
    }

    /// Observed covariate range the model was fitted on, when continuous.
    pub fn covariate_range(&self) -> Option<(f64, f64)> {
        match &self.basis {
            FittedBasis::Saturated { .. } => None,
            FittedBasis::Polynomial { range, .. } | FittedBasis::LinearSpline { range, .. } => {
                Some(*range)
            }
        }
    }

    /// The fitted conditional-mean function of the delta, evaluated at a
    /// covariate value. Range policy is the caller's concern.
    pub fn predict(&self, x: &Covariate) -> Result<f64, EstimatorError> {
        match &self.basis {
            FittedBasis::Saturated { levels } => {
                let label = require_label(x, "prediction point")?;
                let idx = levels.iter().position(|l| l == label).ok_or_else(|| {
                    EstimatorError::UnknownLevel {
                        level: label.to_string(),
                        available: levels.clone(),
                    }
                })?;
                Ok(self.coefficients[idx])
            }
            FittedBasis::Polynomial {
                center, half_range, ..
            } => {
                let v = require_value(x, "prediction point")?;
                let t = (v - center) / half_range;
                let mut acc = 0.0;
                for &c in self.coefficients.iter().rev() {
                    acc = acc * t + c;
                }
                Ok(acc)
            }
            FittedBasis::LinearSpline { knots, .. } => {
                let v = require_value(x, "prediction point")?;
                let mut acc = self.coefficients[0] + self.coefficients[1] * v;
                for (j, &k) in knots.iter().enumerate() {
                    acc += self.coefficients[2 + j] * (v - k).max(0.0);
                }
                Ok(acc)
            }
        }
    }
}

/// A basis request as written on a command line or in a config:
/// quantile-knot splines stay unresolved until data is available.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisRequest {
    Saturated,
    Polynomial(usize),
    SplineQuantile(usize),
    SplineKnots(Vec<f64>),
}

impl BasisRequest {
    /// Parses `saturated`, `poly:D`, `spline:K` (K quantile knots), or
    /// `spline:k1,k2,...` (explicit knots).
    pub fn parse(raw: &str) -> Result<Self, EstimatorError> {
        if raw == "saturated" {
            return Ok(BasisRequest::Saturated);
        }
        if let Some(deg) = raw.strip_prefix("poly:") {
            let degree: usize = deg.parse().map_err(|_| {
                EstimatorError::InvalidBasis(format!("invalid polynomial degree `{deg}`"))
            })?;
            return Ok(BasisRequest::Polynomial(degree));
        }
        if let Some(spec) = raw.strip_prefix("spline:") {
            if !spec.contains(',') && !spec.contains('.') {
                if let Ok(k) = spec.parse::<usize>() {
                    if k == 0 {
                        return Err(EstimatorError::InvalidBasis(
                            "spline needs at least one knot".to_string(),
                        ));
                    }
                    return Ok(BasisRequest::SplineQuantile(k));
                }
            }
            let knots = spec
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        EstimatorError::InvalidBasis(format!("invalid spline knot `{s}`"))
                    })
                })
                .collect::<Result<Vec<f64>, EstimatorError>>()?;
            return Ok(BasisRequest::SplineKnots(knots));
        }
        Err(EstimatorError::InvalidBasis(format!(
            "unrecognized basis `{raw}`; expected saturated, poly:D, spline:K, or spline:k1,k2,..."
        )))
    }

    /// Resolves the request against the panel's covariate values.
    pub fn resolve(&self, panel: &PanelDataset) -> BasisSpec {
        match self {
            BasisRequest::Saturated => BasisSpec::SaturatedIndicators,
            BasisRequest::Polynomial(d) => BasisSpec::Polynomial(*d),
            BasisRequest::SplineKnots(knots) => BasisSpec::LinearSpline(knots.clone()),
            BasisRequest::SplineQuantile(k) => {
                let xs: Vec<f64> = panel
                    .records()
                    .iter()
                    .filter_map(|r| r.x.as_value())
                    .collect();
                BasisSpec::LinearSpline(quantile_knots(&xs, *k))
            }
        }
    }
}

/// Interior knots at the `1/(k+1), ..., k/(k+1)` quantiles of the data
/// (linear-interpolation quantiles on the sorted sample).
pub fn quantile_knots(xs: &[f64], k: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    (1..=k)
        .map(|j| {
            let q = j as f64 / (k + 1) as f64;
            let h = q * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect()
}

/// Fits the delta regression by QR with column pivoting.
///
/// The saturated basis is solved by its closed form (the projection onto
/// disjoint indicators is the per-level mean), keeping the equivalence
/// with `subgroup_stats` exact.
pub fn fit_delta_regression(
    panel: &PanelDataset,
    spec: &BasisSpec,
) -> Result<DeltaModel, EstimatorError> {
    match spec {
        BasisSpec::SaturatedIndicators => fit_saturated(panel),
        BasisSpec::Polynomial(degree) => fit_polynomial(panel, *degree),
        BasisSpec::LinearSpline(knots) => fit_linear_spline(panel, knots),
    }
}

fn fit_saturated(panel: &PanelDataset) -> Result<DeltaModel, EstimatorError> {
    let stats = subgroup_stats(panel)?;
    let n: usize = stats.iter().map(|s| s.n).sum();
    let dim = stats.len();
    if n <= dim {
        return Err(EstimatorError::InsufficientData { n, dim });
    }

    let levels: Vec<String> = stats.iter().map(|s| s.level.clone()).collect();
    let coefficients: Vec<f64> = stats.iter().map(|s| s.mean_delta).collect();

    let mut rss = 0.0;
    for r in panel.records() {
        let label = r.x.as_label().expect("categorical panel invariant");
        let idx = levels.iter().position(|l| l == label).unwrap();
        let resid = (r.y_post - r.y_pre) - coefficients[idx];
        rss += resid * resid;
    }
    let n_max = stats.iter().map(|s| s.n).max().unwrap() as f64;
    let n_min = stats.iter().map(|s| s.n).min().unwrap() as f64;

    Ok(DeltaModel {
        basis: FittedBasis::Saturated { levels },
        coefficients,
        diagnostics: FitDiagnostics {
            n,
            residual_variance: rss / (n - dim) as f64,
            condition: (n_max / n_min).sqrt(),
        },
    })
}

fn continuous_xs_and_deltas(panel: &PanelDataset) -> Result<(Vec<f64>, Vec<f64>), EstimatorError> {
    if panel.covariate_kind() != CovariateKind::Continuous {
        return Err(EstimatorError::InvalidBasis(
            "this basis requires a continuous covariate".to_string(),
        ));
    }
    let xs: Vec<f64> = panel
        .records()
        .iter()
        .map(|r| r.x.as_value().expect("continuous panel invariant"))
        .collect();
    let deltas: Vec<f64> = panel.records().iter().map(|r| r.y_post - r.y_pre).collect();
    Ok((xs, deltas))
}

/// Fits a continuous basis directly from covariate/delta columns.
///
/// Bootstrap resamples are multisets of units, so they cannot round-trip
/// through panel validation (unit ids repeat); replicates refit through
/// this entry point instead.
pub(crate) fn fit_continuous_from(
    xs: &[f64],
    deltas: &[f64],
    spec: &BasisSpec,
) -> Result<DeltaModel, EstimatorError> {
    match spec {
        BasisSpec::SaturatedIndicators => Err(EstimatorError::InvalidBasis(
            "saturated indicators are not a continuous basis".to_string(),
        )),
        BasisSpec::Polynomial(degree) => fit_polynomial_from(xs, deltas, *degree),
        BasisSpec::LinearSpline(knots) => fit_linear_spline_from(xs, deltas, knots),
    }
}

fn fit_polynomial(panel: &PanelDataset, degree: usize) -> Result<DeltaModel, EstimatorError> {
    let (xs, deltas) = continuous_xs_and_deltas(panel)?;
    fit_polynomial_from(&xs, &deltas, degree)
}

fn fit_polynomial_from(
    xs: &[f64],
    deltas: &[f64],
    degree: usize,
) -> Result<DeltaModel, EstimatorError> {
    let n = xs.len();
    let dim = degree + 1;
    if n <= dim {
        return Err(EstimatorError::InsufficientData { n, dim });
    }

    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (lo + hi);
    // A zero-width range leaves every non-constant column degenerate; the
    // rank check below reports it rather than dividing by zero here.
    let half_range = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };

    let mut design = DMatrix::zeros(n, dim);
    for (i, &x) in xs.iter().enumerate() {
        let t = (x - center) / half_range;
        let mut p = 1.0;
        for j in 0..dim {
            design[(i, j)] = p;
            p *= t;
        }
    }

    let (coefficients, diagnostics) = solve_least_squares(design, deltas)?;
    Ok(DeltaModel {
        basis: FittedBasis::Polynomial {
            degree,
            center,
            half_range,
            range: (lo, hi),
        },
        coefficients,
        diagnostics,
    })
}

fn fit_linear_spline(panel: &PanelDataset, knots: &[f64]) -> Result<DeltaModel, EstimatorError> {
    let (xs, deltas) = continuous_xs_and_deltas(panel)?;
    fit_linear_spline_from(&xs, &deltas, knots)
}

fn fit_linear_spline_from(
    xs: &[f64],
    deltas: &[f64],
    knots: &[f64],
) -> Result<DeltaModel, EstimatorError> {
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EstimatorError::InvalidBasis(
            "spline knots must be strictly increasing".to_string(),
        ));
    }
    let n = xs.len();
    let dim = 2 + knots.len();
    if n <= dim {
        return Err(EstimatorError::InsufficientData { n, dim });
    }

    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut design = DMatrix::zeros(n, dim);
    for (i, &x) in xs.iter().enumerate() {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = x;
        for (j, &k) in knots.iter().enumerate() {
            design[(i, 2 + j)] = (x - k).max(0.0);
        }
    }

    let (coefficients, diagnostics) = solve_least_squares(design, deltas)?;
    Ok(DeltaModel {
        basis: FittedBasis::LinearSpline {
            knots: knots.to_vec(),
            range: (lo, hi),
        },
        coefficients,
        diagnostics,
    })
}

/// Least squares via QR with column pivoting; rank deficiency is an
/// error carrying the condition indicator.
fn solve_least_squares(
    design: DMatrix<f64>,
    y: &[f64],
) -> Result<(Vec<f64>, FitDiagnostics), EstimatorError> {
    let n = design.nrows();
    let dim = design.ncols();
    let y_vec = DVector::from_column_slice(y);

    let qr = design.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..dim).map(|i| r[(i, i)].abs()).collect();
    let d_max = diag.iter().copied().fold(0.0, f64::max);
    let d_min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if d_min > 0.0 { d_max / d_min } else { f64::INFINITY };
    if d_max == 0.0 || d_min <= RANK_TOL * d_max {
        return Err(EstimatorError::RankDeficient { condition });
    }

    // R z = Q^T y by back substitution, then undo the column pivot.
    let qty = qr.q().transpose() * &y_vec;
    let mut z = DVector::zeros(dim);
    for i in (0..dim).rev() {
        let mut acc = qty[i];
        for j in (i + 1)..dim {
            acc -= r[(i, j)] * z[j];
        }
        z[i] = acc / r[(i, i)];
    }
    qr.p().inv_permute_rows(&mut z);

    let residuals = &y_vec - design * &z;
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    Ok((
        z.iter().copied().collect(),
        FitDiagnostics {
            n,
            residual_variance: rss / (n - dim) as f64,
            condition,
        },
    ))
}

/// Effect modification from a fitted delta regression:
/// `m(a) - m(b)` for the fitted conditional-mean function `m`.
pub fn sdid_continuous(
    model: &DeltaModel,
    contrast: &SubgroupContrast,
    policy: ExtrapolationPolicy,
) -> Result<EffectModEstimate, EstimatorError> {
    let mut extrapolated = false;
    if let Some((lo, hi)) = model.covariate_range() {
        for side in [&contrast.level_a, &contrast.level_b] {
            let v = require_value(side, "contrast value")?;
            if v < lo || v > hi {
                match policy {
                    ExtrapolationPolicy::Strict => {
                        return Err(EstimatorError::OutOfRange { value: v, lo, hi })
                    }
                    ExtrapolationPolicy::Warn => extrapolated = true,
                }
            }
        }
    }

    let point = model.predict(&contrast.level_a)? - model.predict(&contrast.level_b)?;
    Ok(EffectModEstimate {
        contrast: contrast.clone(),
        point,
        se: None,
        ci: None,
        n_a: None,
        n_b: None,
        method: EstimationMethod::DeltaRegression,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_panel, MissingPolicy, RawRow};

    fn categorical_panel(rows: &[(&str, &str, f64, f64)]) -> PanelDataset {
        let raw = rows
            .iter()
            .map(|&(id, x, y0, y1)| RawRow {
                unit_id: id.to_string(),
                x: Some(x.to_string()),
                y_pre: y0,
                y_post: y1,
            })
            .collect();
        validate_panel(raw, CovariateKind::Categorical, MissingPolicy::Strict, "test")
            .unwrap()
            .0
    }

    fn continuous_panel(points: &[(f64, f64)]) -> PanelDataset {
        let raw = points
            .iter()
            .enumerate()
            .map(|(i, &(x, d))| RawRow {
                unit_id: format!("u{i}"),
                x: Some(x.to_string()),
                y_pre: 0.0,
                y_post: d,
            })
            .collect();
        validate_panel(raw, CovariateKind::Continuous, MissingPolicy::Strict, "test")
            .unwrap()
            .0
    }

    fn hand_panel() -> PanelDataset {
        // A deltas {2, 2}; B deltas {1, 1}.
        categorical_panel(&[
            ("u1", "A", 0.0, 2.0),
            ("u2", "A", 3.0, 5.0),
            ("u3", "B", 0.0, 1.0),
            ("u4", "B", 2.0, 3.0),
        ])
    }

    #[test]
    fn categorical_hand_fixture() {
        let est = sdid_categorical(&hand_panel(), &SubgroupContrast::labels("A", "B")).unwrap();
        assert_eq!(est.point, 1.0);
        assert_eq!(est.n_a, Some(2));
        assert_eq!(est.n_b, Some(2));
        assert_eq!(est.method, EstimationMethod::SubgroupMeans);
        assert!(est.se.is_none());
    }

    #[test]
    fn self_contrast_is_exactly_zero() {
        let est = sdid_categorical(&hand_panel(), &SubgroupContrast::labels("A", "A")).unwrap();
        assert_eq!(est.point, 0.0);
    }

    #[test]
    fn reversed_contrast_negates_exactly() {
        let est = sdid_categorical(&hand_panel(), &SubgroupContrast::labels("B", "A")).unwrap();
        assert_eq!(est.point, -1.0);
    }

    #[test]
    fn unknown_level_names_the_level_and_lists_available() {
        let err = sdid_categorical(&hand_panel(), &SubgroupContrast::labels("Z", "B")).unwrap_err();
        match err {
            EstimatorError::UnknownLevel { level, available } => {
                assert_eq!(level, "Z");
                assert_eq!(available, vec!["A".to_string(), "B".to_string()]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn all_pairs_against_reference() {
        let panel = categorical_panel(&[
            ("u1", "A", 0.0, 2.0),
            ("u2", "A", 0.0, 2.0),
            ("u3", "B", 0.0, 1.0),
            ("u4", "B", 0.0, 1.0),
            ("u5", "C", 0.0, 0.5),
            ("u6", "C", 0.0, 0.5),
        ]);
        let estimates = sdid_all_pairs(&panel, "C").unwrap();
        assert_eq!(estimates.len(), 2);
        assert_eq!(estimates[0].contrast, SubgroupContrast::labels("A", "C"));
        assert_eq!(estimates[0].point, 1.5);
        assert_eq!(estimates[1].contrast, SubgroupContrast::labels("B", "C"));
        assert_eq!(estimates[1].point, 0.5);

        assert!(sdid_all_pairs(&panel, "Z").is_err());
    }

    #[test]
    fn all_pairs_hand_fixture_and_degenerate() {
        let estimates = sdid_all_pairs(&hand_panel(), "B").unwrap();
        assert_eq!(estimates.len(), 1);
        assert_eq!(estimates[0].point, 1.0);

        let single = categorical_panel(&[("u1", "A", 0.0, 1.0), ("u2", "A", 0.0, 1.0)]);
        assert!(sdid_all_pairs(&single, "A").unwrap().is_empty());
    }

    #[test]
    fn saturated_fit_equals_subgroup_means_exactly() {
        let panel = categorical_panel(&[
            ("u1", "A", 0.0, 2.0),
            ("u2", "A", 0.0, 4.0),
            ("u3", "B", 0.0, 1.0),
            ("u4", "B", 0.0, 3.0),
            ("u5", "B", 0.0, 5.0),
        ]);
        let model = fit_delta_regression(&panel, &BasisSpec::SaturatedIndicators).unwrap();
        let stats = subgroup_stats(&panel).unwrap();
        for s in &stats {
            let fitted = model.predict(&Covariate::label(&s.level)).unwrap();
            assert_eq!(fitted, s.mean_delta);
        }
    }

    #[test]
    fn polynomial_exact_interpolation() {
        // d = 3 + 2x with no noise; degree-1 fit recovers it exactly.
        let pts: Vec<(f64, f64)> = [0.0, 1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&x| (x, 3.0 + 2.0 * x))
            .collect();
        let model = fit_delta_regression(&continuous_panel(&pts), &BasisSpec::Polynomial(1)).unwrap();
        let raw = model.power_basis_coefficients().unwrap();
        assert!((raw[0] - 3.0).abs() < 1e-10, "intercept {}", raw[0]);
        assert!((raw[1] - 2.0).abs() < 1e-10, "slope {}", raw[1]);
        assert!(model.diagnostics().residual_variance < 1e-20);
    }

    #[test]
    fn constant_delta_zeroes_higher_coefficients() {
        let pts: Vec<(f64, f64)> = [0.0, 0.5, 1.0, 2.0, 3.0].iter().map(|&x| (x, 5.0)).collect();
        let model = fit_delta_regression(&continuous_panel(&pts), &BasisSpec::Polynomial(2)).unwrap();
        let raw = model.power_basis_coefficients().unwrap();
        assert!((raw[0] - 5.0).abs() < 1e-10);
        assert!(raw[1].abs() < 1e-10);
        assert!(raw[2].abs() < 1e-10);
    }

    #[test]
    fn continuous_contrast_hand_fixture() {
        let pts: Vec<(f64, f64)> = [0.0, 1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&x| (x, 3.0 + 2.0 * x))
            .collect();
        let model = fit_delta_regression(&continuous_panel(&pts), &BasisSpec::Polynomial(1)).unwrap();

        let est = sdid_continuous(
            &model,
            &SubgroupContrast::values(2.0, 1.0),
            ExtrapolationPolicy::Strict,
        )
        .unwrap();
        assert!((est.point - 2.0).abs() < 1e-10);
        assert_eq!(est.method, EstimationMethod::DeltaRegression);

        let zero = sdid_continuous(
            &model,
            &SubgroupContrast::values(1.5, 1.5),
            ExtrapolationPolicy::Strict,
        )
        .unwrap();
        assert_eq!(zero.point, 0.0);

        let neg = sdid_continuous(
            &model,
            &SubgroupContrast::values(1.0, 2.0),
            ExtrapolationPolicy::Strict,
        )
        .unwrap();
        assert!((neg.point + 2.0).abs() < 1e-10);
    }

    #[test]
    fn extrapolation_policy_strict_errors_warn_flags() {
        let pts: Vec<(f64, f64)> = [0.0, 1.0, 2.0, 3.0].iter().map(|&x| (x, x)).collect();
        let model = fit_delta_regression(&continuous_panel(&pts), &BasisSpec::Polynomial(1)).unwrap();
        let outside = SubgroupContrast::values(5.0, 1.0);

        let err = sdid_continuous(&model, &outside, ExtrapolationPolicy::Strict).unwrap_err();
        assert!(matches!(err, EstimatorError::OutOfRange { value, .. } if value == 5.0));

        let est = sdid_continuous(&model, &outside, ExtrapolationPolicy::Warn).unwrap();
        assert!(est.extrapolated);
    }

    #[test]
    fn rank_deficient_design_is_an_error() {
        // Constant covariate: the linear column duplicates the intercept.
        let pts = [(2.0, 1.0), (2.0, 2.0), (2.0, 3.0), (2.0, 4.0)];
        let err =
            fit_delta_regression(&continuous_panel(&pts), &BasisSpec::Polynomial(1)).unwrap_err();
        assert!(matches!(err, EstimatorError::RankDeficient { .. }));
    }

    #[test]
    fn too_few_observations_is_an_error() {
        let pts = [(0.0, 1.0), (1.0, 2.0)];
        let err =
            fit_delta_regression(&continuous_panel(&pts), &BasisSpec::Polynomial(2)).unwrap_err();
        assert_eq!(err, EstimatorError::InsufficientData { n: 2, dim: 3 });
    }

    #[test]
    fn linear_spline_fits_piecewise_truth() {
        // Kinked truth: d = 1 + x for x <= 2, then slope 3 afterwards.
        let truth = |x: f64| 1.0 + x + 2.0 * (x - 2.0f64).max(0.0);
        let pts: Vec<(f64, f64)> = (0..=8).map(|i| (i as f64 * 0.5, truth(i as f64 * 0.5))).collect();
        let model =
            fit_delta_regression(&continuous_panel(&pts), &BasisSpec::LinearSpline(vec![2.0]))
                .unwrap();
        for &(x, d) in &pts {
            assert!((model.predict(&Covariate::value(x)).unwrap() - d).abs() < 1e-9);
        }

        let est = sdid_continuous(
            &model,
            &SubgroupContrast::values(3.0, 1.0),
            ExtrapolationPolicy::Strict,
        )
        .unwrap();
        // m(3) - m(1) = (1 + 3 + 2) - (1 + 1) = 4.
        assert!((est.point - 4.0).abs() < 1e-9);
    }

    #[test]
    fn spline_rejects_unsorted_knots() {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, i as f64)).collect();
        let err = fit_delta_regression(
            &continuous_panel(&pts),
            &BasisSpec::LinearSpline(vec![3.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, EstimatorError::InvalidBasis(_)));
    }

    #[test]
    fn basis_request_parsing() {
        assert_eq!(BasisRequest::parse("saturated").unwrap(), BasisRequest::Saturated);
        assert_eq!(BasisRequest::parse("poly:3").unwrap(), BasisRequest::Polynomial(3));
        assert_eq!(
            BasisRequest::parse("spline:4").unwrap(),
            BasisRequest::SplineQuantile(4)
        );
        assert_eq!(
            BasisRequest::parse("spline:1.5,3.0").unwrap(),
            BasisRequest::SplineKnots(vec![1.5, 3.0])
        );
        assert!(BasisRequest::parse("poly:x").is_err());
        assert!(BasisRequest::parse("fourier:2").is_err());
        assert!(BasisRequest::parse("spline:0").is_err());
    }

    #[test]
    fn quantile_knots_interpolate() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let knots = quantile_knots(&xs, 1);
        assert_eq!(knots, vec![2.0]);
        let knots = quantile_knots(&xs, 3);
        assert_eq!(knots, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn saturated_basis_rejects_continuous_panels() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)];
        let err = fit_delta_regression(&continuous_panel(&pts), &BasisSpec::SaturatedIndicators)
            .unwrap_err();
        assert_eq!(err, EstimatorError::Model(ModelError::CategoricalRequired));
    }
}
