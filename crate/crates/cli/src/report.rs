//! Report assembly and serialization.
//!
//! Every report embeds the tool version, the fully resolved
//! configuration, and the seed, so any output can be reproduced exactly
//! from the report alone. A point estimate is never emitted without the
//! accompanying assumption notes.

use serde::Serialize;
use serde_json::Value;

use sdid_core::{EventStudyPoint, McSummary, PretrendsReport};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    PlainText,
}

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

pub fn tool_info() -> ToolInfo {
    ToolInfo {
        name: "sdid",
        version: env!("CARGO_PKG_VERSION"),
    }
}

#[derive(Debug, Serialize)]
pub struct BootstrapSection {
    pub b: usize,
    pub seed: u64,
    pub se_boot: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub n_failed: usize,
    pub mode: String,
}

#[derive(Debug, Serialize)]
pub struct EstimateRow {
    pub contrast_a: String,
    pub contrast_b: String,
    pub point: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub level: Option<f64>,
    pub method: String,
    pub n_a: Option<usize>,
    pub n_b: Option<usize>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub extrapolated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSection>,
}

#[derive(Debug, Serialize)]
pub struct IntervalRow {
    pub t_from: i64,
    pub t_to: i64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
}

#[derive(Debug, Serialize)]
pub struct PretrendsSection {
    pub contrast_a: String,
    pub contrast_b: String,
    pub per_interval: Vec<IntervalRow>,
    pub joint_stat: f64,
    pub joint_df: usize,
    pub joint_p: f64,
    pub alpha: f64,
    pub passed: bool,
    pub decision_note: String,
}

#[derive(Debug, Serialize)]
pub struct EventStudyRow {
    pub period: i64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub is_pre_treatment: bool,
}

#[derive(Debug, Serialize)]
pub struct DroppedRowOut {
    pub row_index: usize,
    pub unit_id: String,
    pub reason: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case", tag = "layout")]
pub enum ValidationSection {
    Wide {
        n_input: usize,
        n_kept: usize,
        dropped: Vec<DroppedRowOut>,
    },
    Long {
        n_units: usize,
        times: Vec<i64>,
        treatment_time: i64,
        dropped_units: Vec<String>,
    },
}

/// One fully assembled report, ready to render in any output format.
#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: ToolInfo,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub body: ReportBody,
    pub assumption_notes: Vec<String>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum ReportBody {
    Estimate {
        estimates: Vec<EstimateRow>,
    },
    Pretrends {
        pretrends: PretrendsSection,
        #[serde(skip_serializing_if = "Option::is_none")]
        event_study: Option<Vec<EventStudyRow>>,
    },
    Simulate {
        summary: McSummary,
    },
    Validate {
        validation: ValidationSection,
    },
}

pub fn pretrends_section(report: &PretrendsReport) -> PretrendsSection {
    PretrendsSection {
        contrast_a: report.contrast.level_a.to_string(),
        contrast_b: report.contrast.level_b.to_string(),
        per_interval: report
            .per_interval
            .iter()
            .map(|c| IntervalRow {
                t_from: c.interval.0,
                t_to: c.interval.1,
                estimate: c.estimate,
                se: c.se,
                z: c.z(),
                n_a: c.n_a,
                n_b: c.n_b,
            })
            .collect(),
        joint_stat: report.joint_stat,
        joint_df: report.joint_df,
        joint_p: report.joint_p,
        alpha: report.alpha,
        passed: report.passed,
        decision_note: report.decision_note.clone(),
    }
}

pub fn event_study_rows(points: &[EventStudyPoint]) -> Vec<EventStudyRow> {
    points
        .iter()
        .map(|p| EventStudyRow {
            period: p.period,
            estimate: p.estimate,
            se: p.se,
            is_pre_treatment: p.is_pre_treatment,
        })
        .collect()
}

impl Report {
    pub fn render(&self, format: OutputFormat) -> Result<String, CliError> {
        match format {
            OutputFormat::Json => {
                let mut json = serde_json::to_string_pretty(self)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                json.push('\n');
                Ok(json)
            }
            OutputFormat::Csv => self.render_csv(),
            OutputFormat::PlainText => Ok(self.render_text()),
        }
    }

    fn render_csv(&self) -> Result<String, CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let notes = self.assumption_notes.join(" | ");
        match &self.body {
            ReportBody::Estimate { estimates } => {
                writer.write_record([
                    "contrast_a",
                    "contrast_b",
                    "point",
                    "se",
                    "ci_lower",
                    "ci_upper",
                    "level",
                    "method",
                    "n_a",
                    "n_b",
                    "z",
                    "p_value",
                    "extrapolated",
                    "boot_b",
                    "boot_seed",
                    "boot_se",
                    "boot_ci_lower",
                    "boot_ci_upper",
                    "boot_level",
                    "boot_n_failed",
                    "assumption_notes",
                ])?;
                for e in estimates {
                    writer.write_record([
                        e.contrast_a.clone(),
                        e.contrast_b.clone(),
                        fmt(e.point),
                        opt(e.se),
                        opt(e.ci_lower),
                        opt(e.ci_upper),
                        opt(e.level),
                        e.method.clone(),
                        opt_usize(e.n_a),
                        opt_usize(e.n_b),
                        opt(e.z),
                        opt(e.p_value),
                        e.extrapolated.to_string(),
                        e.bootstrap.as_ref().map(|b| b.b.to_string()).unwrap_or_default(),
                        e.bootstrap.as_ref().map(|b| b.seed.to_string()).unwrap_or_default(),
                        e.bootstrap.as_ref().map(|b| fmt(b.se_boot)).unwrap_or_default(),
                        e.bootstrap.as_ref().map(|b| fmt(b.ci_lower)).unwrap_or_default(),
                        e.bootstrap.as_ref().map(|b| fmt(b.ci_upper)).unwrap_or_default(),
                        e.bootstrap.as_ref().map(|b| fmt(b.level)).unwrap_or_default(),
                        e.bootstrap
                            .as_ref()
                            .map(|b| b.n_failed.to_string())
                            .unwrap_or_default(),
                        notes.clone(),
                    ])?;
                }
            }
            ReportBody::Pretrends {
                pretrends,
                event_study,
            } => {
                writer.write_record([
                    "kind",
                    "t_from",
                    "t_to",
                    "estimate",
                    "se",
                    "z",
                    "n_a",
                    "n_b",
                    "joint_stat",
                    "joint_df",
                    "joint_p",
                    "alpha",
                    "passed",
                    "assumption_notes",
                ])?;
                for row in &pretrends.per_interval {
                    writer.write_record([
                        "interval".to_string(),
                        row.t_from.to_string(),
                        row.t_to.to_string(),
                        fmt(row.estimate),
                        opt(row.se),
                        opt(row.z),
                        row.n_a.to_string(),
                        row.n_b.to_string(),
                        fmt(pretrends.joint_stat),
                        pretrends.joint_df.to_string(),
                        fmt(pretrends.joint_p),
                        fmt(pretrends.alpha),
                        pretrends.passed.to_string(),
                        notes.clone(),
                    ])?;
                }
                for row in event_study.iter().flatten() {
                    writer.write_record([
                        "event_study".to_string(),
                        String::new(),
                        row.period.to_string(),
                        fmt(row.estimate),
                        opt(row.se),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        notes.clone(),
                    ])?;
                }
            }
            ReportBody::Simulate { summary } => {
                let mut header = vec![
                    "reps".to_string(),
                    "n_failed".to_string(),
                    "oracle_effect_modification".to_string(),
                    "mean_estimate".to_string(),
                    "bias".to_string(),
                    "empirical_sd".to_string(),
                    "mc_se".to_string(),
                    "ci_level".to_string(),
                    "coverage_normal".to_string(),
                    "coverage_bootstrap".to_string(),
                    "alpha".to_string(),
                    "rejection_rate".to_string(),
                    "master_seed".to_string(),
                ];
                for level in summary.naive_level_means.keys() {
                    header.push(format!("naive_mean_{level}"));
                }
                header.push("assumption_notes".to_string());
                writer.write_record(&header)?;

                let mut row = vec![
                    summary.reps.to_string(),
                    summary.n_failed.to_string(),
                    fmt(summary.oracle_effect_modification),
                    fmt(summary.mean_estimate),
                    fmt(summary.bias),
                    fmt(summary.empirical_sd),
                    fmt(summary.mc_se),
                    fmt(summary.ci_level),
                    opt(summary.coverage_normal),
                    opt(summary.coverage_bootstrap),
                    fmt(summary.alpha),
                    opt(summary.rejection_rate),
                    summary.master_seed.to_string(),
                ];
                for mean in summary.naive_level_means.values() {
                    row.push(fmt(*mean));
                }
                row.push(notes.clone());
                writer.write_record(&row)?;
            }
            ReportBody::Validate { validation } => match validation {
                ValidationSection::Wide {
                    n_input,
                    n_kept,
                    dropped,
                } => {
                    writer.write_record([
                        "n_input",
                        "n_kept",
                        "row_index",
                        "unit_id",
                        "reason",
                    ])?;
                    if dropped.is_empty() {
                        writer.write_record([
                            n_input.to_string(),
                            n_kept.to_string(),
                            String::new(),
                            String::new(),
                            String::new(),
                        ])?;
                    }
                    for d in dropped {
                        writer.write_record([
                            n_input.to_string(),
                            n_kept.to_string(),
                            d.row_index.to_string(),
                            d.unit_id.clone(),
                            d.reason.clone(),
                        ])?;
                    }
                }
                ValidationSection::Long {
                    n_units,
                    times,
                    treatment_time,
                    dropped_units,
                } => {
                    writer.write_record(["n_units", "times", "treatment_time", "dropped_unit"])?;
                    let times_str = times
                        .iter()
                        .map(|t| t.to_string())
                        .collect::<Vec<_>>()
                        .join(" ");
                    if dropped_units.is_empty() {
                        writer.write_record([
                            n_units.to_string(),
                            times_str.clone(),
                            treatment_time.to_string(),
                            String::new(),
                        ])?;
                    }
                    for unit in dropped_units {
                        writer.write_record([
                            n_units.to_string(),
                            times_str.clone(),
                            treatment_time.to_string(),
                            unit.clone(),
                        ])?;
                    }
                }
            },
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| CliError::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
    }

    fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "{} {} — {}", self.tool.name, self.tool.version, self.command);
        if let Some(ts) = &self.timestamp {
            let _ = writeln!(out, "generated: {ts}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed: {seed}");
        }
        let _ = writeln!(out);

        match &self.body {
            ReportBody::Estimate { estimates } => {
                for e in estimates {
                    let _ = writeln!(
                        out,
                        "contrast ({}, {}): point = {}",
                        e.contrast_a,
                        e.contrast_b,
                        fmt(e.point)
                    );
                    if let (Some(se), Some(lo), Some(hi), Some(level)) =
                        (e.se, e.ci_lower, e.ci_upper, e.level)
                    {
                        let _ = writeln!(
                            out,
                            "  se = {}, {:.0}% CI [{}, {}]",
                            fmt(se),
                            level * 100.0,
                            fmt(lo),
                            fmt(hi)
                        );
                    }
                    if let (Some(z), Some(p)) = (e.z, e.p_value) {
                        let _ = writeln!(out, "  z = {}, two-sided p = {}", fmt(z), fmt(p));
                    }
                    if let (Some(n_a), Some(n_b)) = (e.n_a, e.n_b) {
                        let _ = writeln!(out, "  n_a = {n_a}, n_b = {n_b}, method = {}", e.method);
                    } else {
                        let _ = writeln!(out, "  method = {}", e.method);
                    }
                    if e.extrapolated {
                        let _ = writeln!(out, "  NOTE: a contrast value lies outside the observed covariate range");
                    }
                    if let Some(b) = &e.bootstrap {
                        let _ = writeln!(
                            out,
                            "  bootstrap (B = {}, seed {}, {} resampling): se = {}, {:.0}% percentile CI [{}, {}], {} failed",
                            b.b,
                            b.seed,
                            b.mode,
                            fmt(b.se_boot),
                            b.level * 100.0,
                            fmt(b.ci_lower),
                            fmt(b.ci_upper),
                            b.n_failed
                        );
                    }
                    let _ = writeln!(out);
                }
            }
            ReportBody::Pretrends {
                pretrends,
                event_study,
            } => {
                let _ = writeln!(
                    out,
                    "pre-trends diagnostic for contrast ({}, {})",
                    pretrends.contrast_a, pretrends.contrast_b
                );
                for row in &pretrends.per_interval {
                    let _ = writeln!(
                        out,
                        "  interval ({}, {}): estimate = {}, se = {}, z = {}",
                        row.t_from,
                        row.t_to,
                        fmt(row.estimate),
                        opt_text(row.se),
                        opt_text(row.z)
                    );
                }
                let _ = writeln!(
                    out,
                    "joint: stat = {}, df = {}, p = {} (alpha = {}) -> {}",
                    fmt(pretrends.joint_stat),
                    pretrends.joint_df,
                    fmt(pretrends.joint_p),
                    fmt(pretrends.alpha),
                    if pretrends.passed { "PASS" } else { "REJECT" }
                );
                let _ = writeln!(out, "{}", pretrends.decision_note);
                if let Some(points) = event_study {
                    let _ = writeln!(out, "\nevent study (relative to base period):");
                    for p in points {
                        let _ = writeln!(
                            out,
                            "  period {}: estimate = {}, se = {}{}",
                            p.period,
                            fmt(p.estimate),
                            opt_text(p.se),
                            if p.is_pre_treatment { " [pre]" } else { "" }
                        );
                    }
                }
                let _ = writeln!(out);
            }
            ReportBody::Simulate { summary } => {
                let _ = writeln!(
                    out,
                    "Monte Carlo: {} reps ({} failed), master seed {}",
                    summary.reps, summary.n_failed, summary.master_seed
                );
                let _ = writeln!(
                    out,
                    "oracle effect modification = {}",
                    fmt(summary.oracle_effect_modification)
                );
                let _ = writeln!(
                    out,
                    "mean estimate = {} (bias = {}, empirical sd = {}, mc se = {})",
                    fmt(summary.mean_estimate),
                    fmt(summary.bias),
                    fmt(summary.empirical_sd),
                    fmt(summary.mc_se)
                );
                if let Some(c) = summary.coverage_normal {
                    let _ = writeln!(
                        out,
                        "normal-theory {:.0}% CI coverage = {}",
                        summary.ci_level * 100.0,
                        fmt(c)
                    );
                }
                if let Some(c) = summary.coverage_bootstrap {
                    let _ = writeln!(
                        out,
                        "bootstrap {:.0}% CI coverage = {}",
                        summary.ci_level * 100.0,
                        fmt(c)
                    );
                }
                if let Some(r) = summary.rejection_rate {
                    let _ = writeln!(out, "wald rejection rate at alpha = {} -> {}", summary.alpha, fmt(r));
                }
                let _ = writeln!(out, "naive per-level mean changes (biased for per-level effects):");
                for (level, mean) in &summary.naive_level_means {
                    let _ = writeln!(out, "  {level}: {}", fmt(*mean));
                }
                let _ = writeln!(out);
            }
            ReportBody::Validate { validation } => match validation {
                ValidationSection::Wide {
                    n_input,
                    n_kept,
                    dropped,
                } => {
                    let _ = writeln!(out, "validated panel: kept {n_kept} of {n_input} rows");
                    for d in dropped {
                        let _ = writeln!(
                            out,
                            "  dropped row {} (unit `{}`): {}",
                            d.row_index, d.unit_id, d.reason
                        );
                    }
                    let _ = writeln!(out);
                }
                ValidationSection::Long {
                    n_units,
                    times,
                    treatment_time,
                    dropped_units,
                } => {
                    let _ = writeln!(
                        out,
                        "validated balanced panel: {n_units} units at times {times:?}, treated from {treatment_time}"
                    );
                    for d in dropped_units {
                        let _ = writeln!(out, "  {d}");
                    }
                    let _ = writeln!(out);
                }
            },
        }

        if !self.assumption_notes.is_empty() {
            let _ = writeln!(out, "Assumptions and caveats:");
            for note in &self.assumption_notes {
                let _ = writeln!(out, "  - {note}");
            }
        }
        out
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|n| n.to_string()).unwrap_or_default()
}

fn opt_text(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_else(|| "n/a".to_string())
}
