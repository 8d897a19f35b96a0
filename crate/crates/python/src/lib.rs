//! Python bindings: the panel types and the main estimation, inference,
//! diagnostic, and simulation entry points, driven in-process.
//!
//! Results come back as plain dicts/lists so they compose with the
//! usual Python tooling without extra wrapper types.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde::Serialize;
use serde_json::Value;

use sdid_core::{
    analytic_se, bootstrap_sdid, confidence_interval, event_study_contrasts, fit_delta_regression,
    generate, generate_multi, monte_carlo, run_pretrends, sdid_all_pairs, sdid_categorical,
    sdid_continuous, subgroup_stats, unit_deltas, validate_panel, wald_test, BasisRequest,
    BootstrapOptions, Covariate, CovariateKind, DgpSpec, EffectModEstimate, EstimationMethod,
    EstimatorError, EstimatorSpec, ExtrapolationPolicy, McBootstrap, McOptions, MissingPolicy,
    MultiPeriodDgpSpec, MultiPeriodPanel, MultiPeriodRow, PanelDataset, RawRow, ResamplingMode,
    SubgroupContrast,
};

fn data_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn estimator_err(e: EstimatorError) -> PyErr {
    match e {
        EstimatorError::RankDeficient { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<CovariateKind> {
    match kind {
        "categorical" => Ok(CovariateKind::Categorical),
        "continuous" => Ok(CovariateKind::Continuous),
        other => Err(data_err(format!(
            "kind must be `categorical` or `continuous`, got `{other}`"
        ))),
    }
}

fn parse_missing(missing: &str) -> PyResult<MissingPolicy> {
    match missing {
        "strict" => Ok(MissingPolicy::Strict),
        "drop" => Ok(MissingPolicy::Drop),
        other => Err(data_err(format!(
            "missing policy must be `strict` or `drop`, got `{other}`"
        ))),
    }
}

fn parse_extrapolation(policy: &str) -> PyResult<ExtrapolationPolicy> {
    match policy {
        "strict" => Ok(ExtrapolationPolicy::Strict),
        "warn" => Ok(ExtrapolationPolicy::Warn),
        other => Err(data_err(format!(
            "extrapolation policy must be `strict` or `warn`, got `{other}`"
        ))),
    }
}

/// Accepts a str (categorical label) or a number (continuous value).
fn covariate_from_py(value: &Bound<'_, PyAny>) -> PyResult<Covariate> {
    if let Ok(label) = value.extract::<String>() {
        return Ok(Covariate::label(label));
    }
    if let Ok(v) = value.extract::<f64>() {
        return Ok(Covariate::value(v));
    }
    Err(data_err(
        "contrast values must be strings (labels) or numbers (continuous values)",
    ))
}

fn json_to_py(py: Python<'_>, value: &Value) -> PyResult<Py<PyAny>> {
    match value {
        Value::Null => Ok(py.None()),
        Value::Bool(b) => b.into_py_any(py),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)
            } else if let Some(u) = n.as_u64() {
                u.into_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)
            }
        }
        Value::String(s) => s.into_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn serialize_to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

/// A validated two-period panel.
#[pyclass]
pub struct Panel {
    inner: PanelDataset,
}

#[pymethods]
impl Panel {
    /// Builds a panel from `(unit_id, covariate, y_pre, y_post)` tuples.
    /// `covariate` may be None to exercise the missing-data policy.
    #[staticmethod]
    #[pyo3(signature = (records, kind="categorical", missing="strict"))]
    fn from_records(
        records: Vec<(String, Option<String>, f64, f64)>,
        kind: &str,
        missing: &str,
    ) -> PyResult<Self> {
        let rows = records
            .into_iter()
            .map(|(unit_id, x, y_pre, y_post)| RawRow {
                unit_id,
                x,
                y_pre,
                y_post,
            })
            .collect();
        let (panel, _) = validate_panel(rows, parse_kind(kind)?, parse_missing(missing)?, "python")
            .map_err(data_err)?;
        Ok(Panel { inner: panel })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn covariate_kind(&self) -> &'static str {
        match self.inner.covariate_kind() {
            CovariateKind::Categorical => "categorical",
            CovariateKind::Continuous => "continuous",
        }
    }

    /// Per-level delta summaries as a list of dicts.
    fn subgroup_stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let stats = subgroup_stats(&self.inner).map_err(data_err)?;
        serialize_to_py(py, &stats)
    }

    /// Per-unit `(unit_id, covariate, delta)` tuples in record order.
    fn unit_deltas(&self) -> Vec<(String, String, f64)> {
        unit_deltas(&self.inner)
            .into_iter()
            .map(|d| (d.unit_id, d.x.to_string(), d.delta))
            .collect()
    }
}

/// A balanced multi-period panel for pre-trends diagnostics.
#[pyclass]
pub struct MultiPanel {
    inner: MultiPeriodPanel,
}

#[pymethods]
impl MultiPanel {
    /// Builds a panel from `(unit_id, covariate, time, y)` rows.
    #[staticmethod]
    #[pyo3(signature = (records, treatment_time, kind="categorical"))]
    fn from_long_records(
        records: Vec<(String, String, i64, f64)>,
        treatment_time: i64,
        kind: &str,
    ) -> PyResult<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut units: std::collections::BTreeMap<String, MultiPeriodRow> = Default::default();
        let covariate_kind = parse_kind(kind)?;
        for (unit_id, x, time, y) in records {
            let covariate = match covariate_kind {
                CovariateKind::Categorical => Covariate::label(&x),
                CovariateKind::Continuous => Covariate::value(
                    x.parse::<f64>()
                        .map_err(|_| data_err(format!("covariate `{x}` is not a number")))?,
                ),
            };
            let entry = units.entry(unit_id.clone()).or_insert_with(|| {
                order.push(unit_id.clone());
                MultiPeriodRow {
                    unit_id,
                    x: covariate,
                    outcomes: Default::default(),
                }
            });
            if entry.outcomes.insert(time, y).is_some() {
                return Err(data_err(format!(
                    "unit `{}` observed twice at time {time}",
                    entry.unit_id
                )));
            }
        }
        let rows = order
            .into_iter()
            .map(|id| units.remove(&id).expect("tracked unit"))
            .collect();
        let inner =
            MultiPeriodPanel::from_rows(rows, treatment_time, covariate_kind).map_err(data_err)?;
        Ok(MultiPanel { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.units().len()
    }

    fn times(&self) -> Vec<i64> {
        self.inner.times().to_vec()
    }

    fn treatment_time(&self) -> i64 {
        self.inner.treatment_time()
    }
}

#[derive(Serialize)]
struct EstimateOut {
    contrast_a: String,
    contrast_b: String,
    point: f64,
    se: Option<f64>,
    ci_lower: Option<f64>,
    ci_upper: Option<f64>,
    level: Option<f64>,
    method: &'static str,
    n_a: Option<usize>,
    n_b: Option<usize>,
    z: Option<f64>,
    p_value: Option<f64>,
    extrapolated: bool,
}

fn estimate_out(est: &EffectModEstimate, z: Option<f64>, p: Option<f64>) -> EstimateOut {
    EstimateOut {
        contrast_a: est.contrast.level_a.to_string(),
        contrast_b: est.contrast.level_b.to_string(),
        point: est.point,
        se: est.se,
        ci_lower: est.ci.map(|c| c.lower),
        ci_upper: est.ci.map(|c| c.upper),
        level: est.ci.map(|c| c.level),
        method: match est.method {
            EstimationMethod::SubgroupMeans => "subgroup_means",
            EstimationMethod::DeltaRegression => "delta_regression",
        },
        n_a: est.n_a,
        n_b: est.n_b,
        z,
        p_value: p,
        extrapolated: est.extrapolated,
    }
}

/// Attaches the Welch SE, normal CI, and Wald test when group sizes
/// allow; leaves the fields None otherwise.
fn attach_inference(
    panel: &PanelDataset,
    est: &mut EffectModEstimate,
    ci: f64,
) -> PyResult<(Option<f64>, Option<f64>)> {
    let stats = subgroup_stats(panel).map_err(data_err)?;
    let find = |x: &Covariate| {
        stats
            .iter()
            .find(|s| Some(s.level.as_str()) == x.as_label())
            .cloned()
    };
    let (Some(sa), Some(sb)) = (find(&est.contrast.level_a), find(&est.contrast.level_b)) else {
        return Ok((None, None));
    };
    if sa.n < 2 || sb.n < 2 {
        return Ok((None, None));
    }
    let se = analytic_se(&sa, &sb).map_err(data_err)?;
    est.se = Some(se);
    est.ci = Some(confidence_interval(est.point, se, ci).map_err(data_err)?);
    if se > 0.0 {
        let test = wald_test(est.point, se).map_err(data_err)?;
        Ok((Some(test.z), Some(test.p_two_sided)))
    } else {
        Ok((None, None))
    }
}

/// Effect-modification estimate for one contrast.
///
/// Categorical panels default to the subgroup-means route with analytic
/// inference; continuous panels (or an explicit `basis`) go through the
/// delta regression.
#[pyfunction]
#[pyo3(signature = (panel, a, b, ci=0.95, basis=None, extrapolation="strict"))]
fn estimate(
    py: Python<'_>,
    panel: &Panel,
    a: &Bound<'_, PyAny>,
    b: &Bound<'_, PyAny>,
    ci: f64,
    basis: Option<&str>,
    extrapolation: &str,
) -> PyResult<Py<PyAny>> {
    let contrast = SubgroupContrast::new(covariate_from_py(a)?, covariate_from_py(b)?);
    let use_regression =
        basis.is_some() || panel.inner.covariate_kind() == CovariateKind::Continuous;

    let out = if use_regression {
        let request = BasisRequest::parse(basis.unwrap_or("poly:1")).map_err(estimator_err)?;
        let spec = request.resolve(&panel.inner);
        let model = fit_delta_regression(&panel.inner, &spec).map_err(estimator_err)?;
        let est = sdid_continuous(&model, &contrast, parse_extrapolation(extrapolation)?)
            .map_err(estimator_err)?;
        estimate_out(&est, None, None)
    } else {
        let mut est = sdid_categorical(&panel.inner, &contrast).map_err(estimator_err)?;
        let (z, p) = attach_inference(&panel.inner, &mut est, ci)?;
        estimate_out(&est, z, p)
    };
    serialize_to_py(py, &out)
}

/// One estimate per non-reference level, each against `reference`.
#[pyfunction]
#[pyo3(signature = (panel, reference, ci=0.95))]
fn estimate_all_pairs(
    py: Python<'_>,
    panel: &Panel,
    reference: &str,
    ci: f64,
) -> PyResult<Py<PyAny>> {
    let estimates = sdid_all_pairs(&panel.inner, reference).map_err(estimator_err)?;
    let mut out = Vec::with_capacity(estimates.len());
    for mut est in estimates {
        let (z, p) = attach_inference(&panel.inner, &mut est, ci)?;
        out.push(estimate_out(&est, z, p));
    }
    serialize_to_py(py, &out)
}

/// Nonparametric unit bootstrap of the estimator.
#[pyfunction]
#[pyo3(signature = (panel, a, b, b_replicates=1000, seed=0, ci=0.95, stratified=false, basis=None))]
#[allow(clippy::too_many_arguments)]
fn bootstrap(
    py: Python<'_>,
    panel: &Panel,
    a: &Bound<'_, PyAny>,
    b: &Bound<'_, PyAny>,
    b_replicates: usize,
    seed: u64,
    ci: f64,
    stratified: bool,
    basis: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let contrast = SubgroupContrast::new(covariate_from_py(a)?, covariate_from_py(b)?);
    let spec = match basis {
        None if panel.inner.covariate_kind() == CovariateKind::Categorical => {
            EstimatorSpec::SubgroupMeans { contrast }
        }
        raw => {
            let request =
                BasisRequest::parse(raw.unwrap_or("poly:1")).map_err(estimator_err)?;
            EstimatorSpec::DeltaRegression {
                basis: request.resolve(&panel.inner),
                contrast,
            }
        }
    };
    let result = bootstrap_sdid(
        &panel.inner,
        &spec,
        &BootstrapOptions {
            b: b_replicates,
            seed,
            ci_level: ci,
            mode: if stratified {
                ResamplingMode::StratifiedByLevel
            } else {
                ResamplingMode::Unit
            },
        },
    )
    .map_err(data_err)?;
    serialize_to_py(py, &result)
}

/// Draws an observable panel from a JSON DGP spec.
#[pyfunction]
fn simulate_panel(dgp_json: &str) -> PyResult<Panel> {
    let spec: DgpSpec = serde_json::from_str(dgp_json).map_err(data_err)?;
    let sim = generate(&spec).map_err(data_err)?;
    Ok(Panel { inner: sim.panel })
}

/// Draws a panel plus the audit ledger of both potential outcomes.
#[pyfunction]
fn simulate_with_ledger(py: Python<'_>, dgp_json: &str) -> PyResult<(Panel, Py<PyAny>)> {
    let spec: DgpSpec = serde_json::from_str(dgp_json).map_err(data_err)?;
    let sim = generate(&spec).map_err(data_err)?;
    let ledger = serialize_to_py(py, &sim.ledger)?;
    Ok((Panel { inner: sim.panel }, ledger))
}

/// Draws a balanced multi-period panel from a JSON multi-period DGP spec.
#[pyfunction]
fn simulate_multi_panel(dgp_json: &str) -> PyResult<MultiPanel> {
    let spec: MultiPeriodDgpSpec = serde_json::from_str(dgp_json).map_err(data_err)?;
    let inner = generate_multi(&spec).map_err(data_err)?;
    Ok(MultiPanel { inner })
}

/// Closed-form oracle truths implied by a DGP for one contrast.
#[pyfunction]
fn oracle(py: Python<'_>, dgp_json: &str, a: &str, b: &str) -> PyResult<Py<PyAny>> {
    let spec: DgpSpec = serde_json::from_str(dgp_json).map_err(data_err)?;
    let truth =
        sdid_core::oracle(&spec, &SubgroupContrast::labels(a, b)).map_err(data_err)?;
    serialize_to_py(py, &truth)
}

/// Monte Carlo study of the estimator against the oracle.
#[pyfunction]
#[pyo3(signature = (dgp_json, a, b, reps, seed, ci=0.95, alpha=0.05, bootstrap=None, stratified=false))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo_study(
    py: Python<'_>,
    dgp_json: &str,
    a: &str,
    b: &str,
    reps: usize,
    seed: u64,
    ci: f64,
    alpha: f64,
    bootstrap: Option<usize>,
    stratified: bool,
) -> PyResult<Py<PyAny>> {
    let spec: DgpSpec = serde_json::from_str(dgp_json).map_err(data_err)?;
    let contrast = SubgroupContrast::labels(a, b);
    let estimator = EstimatorSpec::SubgroupMeans {
        contrast: contrast.clone(),
    };
    let opts = McOptions {
        ci_level: ci,
        alpha,
        bootstrap: bootstrap.map(|b| McBootstrap {
            b,
            mode: if stratified {
                ResamplingMode::StratifiedByLevel
            } else {
                ResamplingMode::Unit
            },
        }),
    };
    let summary =
        monte_carlo(&spec, &contrast, &estimator, reps, seed, &opts).map_err(data_err)?;
    serialize_to_py(py, &summary)
}

/// Pre-trends diagnostic over the pre-treatment intervals.
#[pyfunction]
#[pyo3(signature = (mpanel, a, b, alpha=0.05))]
fn pretrends(
    py: Python<'_>,
    mpanel: &MultiPanel,
    a: &str,
    b: &str,
    alpha: f64,
) -> PyResult<Py<PyAny>> {
    let report = run_pretrends(&mpanel.inner, &SubgroupContrast::labels(a, b), alpha)
        .map_err(data_err)?;
    serialize_to_py(py, &report)
}

/// Event-study contrasts of every period against a pre-treatment base.
#[pyfunction]
#[pyo3(signature = (mpanel, a, b, base_period, include_base=false))]
fn event_study(
    py: Python<'_>,
    mpanel: &MultiPanel,
    a: &str,
    b: &str,
    base_period: i64,
    include_base: bool,
) -> PyResult<Py<PyAny>> {
    let points = event_study_contrasts(
        &mpanel.inner,
        &SubgroupContrast::labels(a, b),
        base_period,
        include_base,
    )
    .map_err(data_err)?;
    serialize_to_py(py, &points)
}

#[pymodule]
fn sdid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Panel>()?;
    m.add_class::<MultiPanel>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_all_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_with_ledger, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_multi_panel, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_study, m)?)?;
    m.add_function(wrap_pyfunction!(pretrends, m)?)?;
    m.add_function(wrap_pyfunction!(event_study, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
