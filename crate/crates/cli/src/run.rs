//! Subcommand implementations: load, estimate, diagnose, simulate,
//! validate, and assemble the report.

use serde::Serialize;
use serde_json::Value;

use sdid_core::{
    analytic_se, bootstrap_sdid, confidence_interval, event_study_contrasts, fit_delta_regression,
    monte_carlo, quantile_knots, run_pretrends, sdid_all_pairs, sdid_categorical, sdid_continuous,
    subgroup_stats, validate_panel, wald_test, BasisRequest, BasisSpec, BootstrapOptions,
    Covariate, CovariateKind, DgpSpec, EffectModEstimate, EstimationMethod, EstimatorSpec,
    ExtrapolationPolicy, McBootstrap, McOptions, MissingPolicy, PanelDataset, RawRow,
    ResamplingMode, SubgroupContrast,
};

use crate::cli::{
    CommonArgs, EstimateArgs, EstimatorArg, InputFormatArg, PretrendsArgs, SimulateArgs,
    ValidateArgs,
};
use crate::error::CliError;
use crate::io::{dump_panel, load_long_panel, load_wide_panel};
use crate::report::{
    event_study_rows, pretrends_section, tool_info, BootstrapSection, DroppedRowOut, EstimateRow,
    Report, ReportBody, ValidationSection,
};

fn timestamp(common: &CommonArgs) -> Option<String> {
    (!common.deterministic)
        .then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn config_value(args: &impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(args).map_err(|e| CliError::Usage(e.to_string()))
}

fn parallel_trends_note(a: &str, b: &str) -> String {
    format!(
        "Identification of the ({a}, {b}) contrast rests on the subgroup parallel trends \
         assumption: the average untreated outcome change must be equal across the two levels. \
         That assumption is strong and cannot be tested on the analyzed interval; pre-trends \
         diagnostics can support it but never establish it."
    )
}

fn parse_contrast_labels(raw: &str) -> Result<SubgroupContrast, CliError> {
    let (a, b) = split_contrast(raw)?;
    Ok(SubgroupContrast::labels(a, b))
}

fn parse_contrast_values(raw: &str) -> Result<SubgroupContrast, CliError> {
    let (a, b) = split_contrast(raw)?;
    let parse = |s: &str| {
        s.parse::<f64>().map_err(|_| {
            CliError::Usage(format!(
                "contrast value `{s}` is not a number; numeric values are required with \
                 --kind continuous"
            ))
        })
    };
    Ok(SubgroupContrast::values(parse(&a)?, parse(&b)?))
}

fn split_contrast(raw: &str) -> Result<(String, String), CliError> {
    match raw.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
            Ok((a.trim().to_string(), b.trim().to_string()))
        }
        _ => Err(CliError::Usage(format!(
            "--contrast expects two comma-separated values, got `{raw}`"
        ))),
    }
}

fn parse_basis(raw: &str) -> Result<BasisRequest, CliError> {
    BasisRequest::parse(raw).map_err(|e| CliError::Usage(format!("--basis: {e}")))
}

/// Quantile-bins a continuous panel into `k` labeled groups `q1..qk`.
/// Binning changes the estimand: the contrast becomes a comparison of
/// bin-level averages, not of two exact covariate values.
fn quantile_bin(panel: &PanelDataset, k: usize) -> Result<PanelDataset, CliError> {
    if k < 2 {
        return Err(CliError::Usage("--bin needs at least 2 groups".to_string()));
    }
    if panel.covariate_kind() != CovariateKind::Continuous {
        return Err(CliError::Usage(
            "--bin applies only to continuous covariates".to_string(),
        ));
    }
    let xs: Vec<f64> = panel
        .records()
        .iter()
        .map(|r| r.x.as_value().expect("continuous panel invariant"))
        .collect();
    let boundaries = quantile_knots(&xs, k - 1);
    let rows = panel
        .records()
        .iter()
        .map(|r| {
            let x = r.x.as_value().expect("continuous panel invariant");
            let bin = boundaries.partition_point(|b| *b < x);
            RawRow {
                unit_id: r.unit_id.clone(),
                x: Some(format!("q{}", bin + 1)),
                y_pre: r.y_pre,
                y_post: r.y_post,
            }
        })
        .collect();
    let (binned, _) = validate_panel(
        rows,
        CovariateKind::Categorical,
        MissingPolicy::Strict,
        panel.provenance(),
    )?;
    Ok(binned)
}

fn load_two_period(
    args: &EstimateArgs,
    kind: CovariateKind,
    policy: MissingPolicy,
) -> Result<(PanelDataset, Vec<String>), CliError> {
    match args.input_format {
        InputFormatArg::Wide => {
            let (panel, report) = load_wide_panel(&args.data, &args.covariate, kind, policy)?;
            let mut notes = Vec::new();
            if !report.dropped.is_empty() {
                notes.push(format!(
                    "{} of {} input rows were dropped during validation; run `sdid validate` \
                     for the full report",
                    report.dropped.len(),
                    report.n_input
                ));
            }
            Ok((panel, notes))
        }
        InputFormatArg::Long => {
            let treatment_time = args.treatment_time.ok_or_else(|| {
                CliError::Usage("--treatment-time is required with --input-format long".into())
            })?;
            let (mp, dropped) =
                load_long_panel(&args.data, &args.covariate, kind, policy, treatment_time)?;
            let panel = mp.to_two_period(args.data.display().to_string()).map_err(|_| {
                CliError::Data(format!(
                    "`estimate` needs exactly two periods, found {}; use `sdid pretrends` for \
                     multi-period diagnostics",
                    mp.times().len()
                ))
            })?;
            Ok((panel, dropped))
        }
    }
}

struct InferenceAttachment {
    z: Option<f64>,
    p_value: Option<f64>,
    notes: Vec<String>,
}

/// Attaches Welch SE, normal CI, and the Wald test to a categorical
/// estimate where group sizes allow it.
fn attach_categorical_inference(
    panel: &PanelDataset,
    est: &mut EffectModEstimate,
    ci_level: f64,
) -> Result<InferenceAttachment, CliError> {
    let mut att = InferenceAttachment {
        z: None,
        p_value: None,
        notes: Vec::new(),
    };
    let stats = subgroup_stats(panel)?;
    let find = |x: &Covariate| {
        stats
            .iter()
            .find(|s| Some(s.level.as_str()) == x.as_label())
            .cloned()
    };
    let (Some(sa), Some(sb)) = (find(&est.contrast.level_a), find(&est.contrast.level_b)) else {
        return Ok(att);
    };
    if sa.n < 2 || sb.n < 2 {
        let small = if sa.n < 2 { &sa } else { &sb };
        att.notes.push(format!(
            "no analytic standard error for contrast ({}, {}): level `{}` has a single \
             observation",
            est.contrast.level_a, est.contrast.level_b, small.level
        ));
        return Ok(att);
    }
    let se = analytic_se(&sa, &sb)?;
    est.se = Some(se);
    est.ci = Some(confidence_interval(est.point, se, ci_level)?);
    if se > 0.0 {
        let test = wald_test(est.point, se)?;
        att.z = Some(test.z);
        att.p_value = Some(test.p_two_sided);
    } else {
        att.notes.push(format!(
            "contrast ({}, {}) has zero sampling variance; the Wald test is degenerate and \
             omitted",
            est.contrast.level_a, est.contrast.level_b
        ));
    }
    Ok(att)
}

fn resampling_mode(stratified: bool) -> ResamplingMode {
    if stratified {
        ResamplingMode::StratifiedByLevel
    } else {
        ResamplingMode::Unit
    }
}

fn bootstrap_section(
    panel: &PanelDataset,
    spec: &EstimatorSpec,
    b: usize,
    seed: u64,
    ci_level: f64,
    mode: ResamplingMode,
) -> Result<BootstrapSection, CliError> {
    let result = bootstrap_sdid(
        panel,
        spec,
        &BootstrapOptions {
            b,
            seed,
            ci_level,
            mode,
        },
    )?;
    Ok(BootstrapSection {
        b: result.b,
        seed: result.seed,
        se_boot: result.se_boot,
        ci_lower: result.ci_percentile.lower,
        ci_upper: result.ci_percentile.upper,
        level: result.ci_percentile.level,
        n_failed: result.n_failed,
        mode: match mode {
            ResamplingMode::Unit => "unit".to_string(),
            ResamplingMode::StratifiedByLevel => "stratified_by_level".to_string(),
        },
    })
}

fn method_name(method: EstimationMethod) -> String {
    match method {
        EstimationMethod::SubgroupMeans => "subgroup_means".to_string(),
        EstimationMethod::DeltaRegression => "delta_regression".to_string(),
    }
}

pub fn run_estimate(args: &EstimateArgs) -> Result<Report, CliError> {
    if !(args.ci > 0.0 && args.ci < 1.0) {
        return Err(CliError::Usage(format!(
            "--ci must lie strictly in (0, 1), got {}",
            args.ci
        )));
    }
    let kind = args.kind.into();
    let policy: MissingPolicy = args.missing.into();
    let extrapolation: ExtrapolationPolicy = args.extrapolation.into();
    let mode = resampling_mode(args.stratified);

    let (mut panel, mut notes) = load_two_period(args, kind, policy)?;
    if let Some(k) = args.bin {
        panel = quantile_bin(&panel, k)?;
        notes.push(format!(
            "the continuous covariate was quantile-binned into {k} groups (q1..q{k}); the \
             reported contrast compares bin-level averages, which is a different estimand \
             from a contrast of two exact covariate values"
        ));
    }
    let effective_kind = panel.covariate_kind();

    let mut rows: Vec<EstimateRow> = Vec::new();
    if args.all_pairs {
        let reference = args.reference.as_deref().ok_or_else(|| {
            CliError::Usage("--all-pairs requires --reference LEVEL".to_string())
        })?;
        if effective_kind != CovariateKind::Categorical {
            return Err(CliError::Usage(
                "--all-pairs applies to categorical (or binned) covariates".to_string(),
            ));
        }
        let estimates = sdid_all_pairs(&panel, reference)?;
        notes.push(
            "each contrast row invokes its own subgroup parallel trends assumption for that \
             pair of levels"
                .to_string(),
        );
        notes.push(
            "p-values are reported raw, without any multiple-testing correction".to_string(),
        );
        for mut est in estimates {
            let mut att = attach_categorical_inference(&panel, &mut est, args.ci)?;
            notes.append(&mut att.notes);
            let boot = match args.bootstrap {
                Some(b) => Some(bootstrap_section(
                    &panel,
                    &EstimatorSpec::SubgroupMeans {
                        contrast: est.contrast.clone(),
                    },
                    b,
                    args.seed,
                    args.ci,
                    mode,
                )?),
                None => None,
            };
            rows.push(to_row(est, att, boot));
        }
        if let Some(reference) = args.reference.as_deref() {
            notes.insert(
                0,
                parallel_trends_note("each level", &format!("reference `{reference}`")),
            );
        }
    } else {
        let raw_contrast = args.contrast.as_deref().ok_or_else(|| {
            CliError::Usage("either --contrast A,B or --all-pairs --reference R is required".into())
        })?;
        let contrast = match effective_kind {
            CovariateKind::Categorical => parse_contrast_labels(raw_contrast)?,
            CovariateKind::Continuous => parse_contrast_values(raw_contrast)?,
        };
        notes.insert(
            0,
            parallel_trends_note(
                &contrast.level_a.to_string(),
                &contrast.level_b.to_string(),
            ),
        );

        let basis_arg = match (&args.basis, effective_kind) {
            (Some(raw), _) => Some(parse_basis(raw)?),
            (None, CovariateKind::Continuous) => Some(BasisRequest::Polynomial(1)),
            (None, CovariateKind::Categorical) => None,
        };

        match basis_arg {
            None => {
                let mut est = sdid_categorical(&panel, &contrast)?;
                let mut att = attach_categorical_inference(&panel, &mut est, args.ci)?;
                notes.append(&mut att.notes);
                let boot = match args.bootstrap {
                    Some(b) => Some(bootstrap_section(
                        &panel,
                        &EstimatorSpec::SubgroupMeans {
                            contrast: contrast.clone(),
                        },
                        b,
                        args.seed,
                        args.ci,
                        mode,
                    )?),
                    None => None,
                };
                rows.push(to_row(est, att, boot));
            }
            Some(arg) => {
                if matches!(arg, BasisRequest::Saturated)
                    && effective_kind != CovariateKind::Categorical
                {
                    return Err(CliError::Usage(
                        "--basis saturated requires a categorical covariate".to_string(),
                    ));
                }
                if !matches!(arg, BasisRequest::Saturated)
                    && effective_kind != CovariateKind::Continuous
                {
                    return Err(CliError::Usage(
                        "polynomial and spline bases require --kind continuous".to_string(),
                    ));
                }
                let basis = arg.resolve(&panel);
                let model = fit_delta_regression(&panel, &basis)?;
                let est = sdid_continuous(&model, &contrast, extrapolation)?;
                if est.extrapolated {
                    notes.push(
                        "a contrast value lies outside the observed covariate range; the \
                         estimate extrapolates the fitted curve"
                            .to_string(),
                    );
                }
                let boot = match args.bootstrap {
                    Some(b) => Some(bootstrap_section(
                        &panel,
                        &EstimatorSpec::DeltaRegression {
                            basis: basis.clone(),
                            contrast: contrast.clone(),
                        },
                        b,
                        args.seed,
                        args.ci,
                        mode,
                    )?),
                    None => None,
                };
                rows.push(to_row(
                    est,
                    InferenceAttachment {
                        z: None,
                        p_value: None,
                        notes: Vec::new(),
                    },
                    boot,
                ));
            }
        }
    }

    Ok(Report {
        tool: tool_info(),
        command: "estimate",
        timestamp: timestamp(&args.common),
        config: config_value(args)?,
        seed: args.bootstrap.map(|_| args.seed),
        body: ReportBody::Estimate { estimates: rows },
        assumption_notes: notes,
    })
}

fn to_row(
    est: EffectModEstimate,
    att: InferenceAttachment,
    bootstrap: Option<BootstrapSection>,
) -> EstimateRow {
    EstimateRow {
        contrast_a: est.contrast.level_a.to_string(),
        contrast_b: est.contrast.level_b.to_string(),
        point: est.point,
        se: est.se,
        ci_lower: est.ci.map(|c| c.lower),
        ci_upper: est.ci.map(|c| c.upper),
        level: est.ci.map(|c| c.level),
        method: method_name(est.method),
        n_a: est.n_a,
        n_b: est.n_b,
        z: att.z,
        p_value: att.p_value,
        extrapolated: est.extrapolated,
        bootstrap,
    }
}

pub fn run_pretrends_cmd(args: &PretrendsArgs) -> Result<Report, CliError> {
    let (mp, dropped) = load_long_panel(
        &args.data,
        &args.covariate,
        CovariateKind::Categorical,
        args.missing.into(),
        args.treatment_time,
    )?;
    let contrast = parse_contrast_labels(&args.contrast)?;
    let diagnostic = run_pretrends(&mp, &contrast, args.alpha)?;
    let event_study = match args.base_period {
        Some(base) => Some(event_study_rows(&event_study_contrasts(
            &mp, &contrast, base, false,
        )?)),
        None => None,
    };

    let mut notes = vec![
        format!(
            "the pre-period contrasts test an analog of subgroup parallel trends on earlier \
             intervals; the assumption needed for the ({}, {}) effect contrast concerns the \
             treatment interval itself and remains untestable",
            contrast.level_a, contrast.level_b
        ),
        "adjacent intervals share a period, so the joint chi-squared statistic relies on an \
         independence working approximation"
            .to_string(),
    ];
    notes.extend(dropped);

    Ok(Report {
        tool: tool_info(),
        command: "pretrends",
        timestamp: timestamp(&args.common),
        config: config_value(args)?,
        seed: None,
        body: ReportBody::Pretrends {
            pretrends: pretrends_section(&diagnostic),
            event_study,
        },
        assumption_notes: notes,
    })
}

pub fn run_simulate(args: &SimulateArgs) -> Result<Report, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Data(format!("cannot read `{}`: {e}", args.config.display()))
    })?;
    let dgp: DgpSpec = serde_json::from_str(&text).map_err(|e| {
        CliError::Data(format!("invalid DGP config `{}`: {e}", args.config.display()))
    })?;

    let contrast = match &args.contrast {
        Some(raw) => parse_contrast_labels(raw)?,
        None => {
            if dgp.levels.len() < 2 {
                return Err(CliError::Usage(
                    "the DGP declares fewer than two levels; pass --contrast explicitly".into(),
                ));
            }
            SubgroupContrast::labels(&dgp.levels[0].label, &dgp.levels[1].label)
        }
    };

    let estimator = match args.estimator {
        EstimatorArg::Means => EstimatorSpec::SubgroupMeans {
            contrast: contrast.clone(),
        },
        EstimatorArg::Saturated => EstimatorSpec::DeltaRegression {
            basis: BasisSpec::SaturatedIndicators,
            contrast: contrast.clone(),
        },
    };
    let opts = McOptions {
        ci_level: args.ci,
        alpha: args.alpha,
        bootstrap: args.bootstrap.map(|b| McBootstrap {
            b,
            mode: resampling_mode(args.stratified),
        }),
    };
    let summary = monte_carlo(&dgp, &contrast, &estimator, args.reps, args.seed, &opts)?;

    // The ledger of potential outcomes is written to its own file,
    // never mixed into the panel that estimators consume.
    if let Some(prefix) = &args.dump_draw {
        let mut draw_spec = dgp.clone();
        draw_spec.seed = sdid_core::rng::derive_seed(args.seed, 0);
        let sim = sdid_core::generate(&draw_spec)?;
        let panel_path = prefix.with_extension("panel.csv");
        let ledger_path = prefix.with_extension("ledger.json");
        std::fs::write(&panel_path, dump_panel(&sim.panel, "covariate")?)?;
        let ledger_json = serde_json::to_string_pretty(&sim.ledger)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        std::fs::write(&ledger_path, ledger_json)?;
    }

    let notes = vec![
        parallel_trends_note(
            &contrast.level_a.to_string(),
            &contrast.level_b.to_string(),
        ),
        "simulated data: the oracle effect modification is known by construction and bias, \
         coverage, and rejection rates are measured against it"
            .to_string(),
        "per-level naive mean changes estimate treatment effects plus the shared trend terms; \
         they are biased for the per-level effects even when the contrast is not"
            .to_string(),
    ];

    Ok(Report {
        tool: tool_info(),
        command: "simulate",
        timestamp: timestamp(&args.common),
        config: config_value(args)?,
        seed: Some(args.seed),
        body: ReportBody::Simulate { summary },
        assumption_notes: notes,
    })
}

pub fn run_validate(args: &ValidateArgs) -> Result<Report, CliError> {
    let kind = args.kind.into();
    let policy = args.missing.into();
    let validation = match args.input_format {
        InputFormatArg::Wide => {
            let (panel, report) = load_wide_panel(&args.data, &args.covariate, kind, policy)?;
            if let Some(path) = &args.dump_panel {
                std::fs::write(path, dump_panel(&panel, &args.covariate)?)?;
            }
            ValidationSection::Wide {
                n_input: report.n_input,
                n_kept: report.n_kept,
                dropped: report
                    .dropped
                    .iter()
                    .map(|d| DroppedRowOut {
                        row_index: d.row_index,
                        unit_id: d.unit_id.clone(),
                        reason: d.reason.to_string(),
                    })
                    .collect(),
            }
        }
        InputFormatArg::Long => {
            let treatment_time = args.treatment_time.ok_or_else(|| {
                CliError::Usage("--treatment-time is required with --input-format long".into())
            })?;
            if args.dump_panel.is_some() {
                return Err(CliError::Usage(
                    "--dump-panel is only available for wide input".into(),
                ));
            }
            let (mp, dropped) =
                load_long_panel(&args.data, &args.covariate, kind, policy, treatment_time)?;
            ValidationSection::Long {
                n_units: mp.units().len(),
                times: mp.times().to_vec(),
                treatment_time: mp.treatment_time(),
                dropped_units: dropped,
            }
        }
    };

    Ok(Report {
        tool: tool_info(),
        command: "validate",
        timestamp: timestamp(&args.common),
        config: config_value(args)?,
        seed: None,
        body: ReportBody::Validate { validation },
        assumption_notes: Vec::new(),
    })
}
