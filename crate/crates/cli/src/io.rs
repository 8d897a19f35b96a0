//! CSV ingestion and the canonical panel dump.
//!
//! Wide format: `unit_id, <covariate>, y_pre, y_post` — one row per unit.
//! Long format: `unit_id, <covariate>, time, y` — one row per unit-period,
//! with the treatment time supplied on the command line.

use std::collections::BTreeMap;
use std::path::Path;

use sdid_core::{
    validate_panel, Covariate, CovariateKind, MissingPolicy, MultiPeriodPanel, MultiPeriodRow,
    PanelDataset, RawRow, ValidationReport,
};

use crate::error::CliError;

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", path.display())))
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, CliError> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        CliError::Data(format!(
            "`{}` is missing required column `{name}` (found: {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })
}

fn parse_float(raw: &str, column: &str, row: usize) -> Result<f64, CliError> {
    raw.parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "row {row}: cannot parse {column} value `{raw}` as a number"
        ))
    })
}

fn optional(raw: &str) -> Option<String> {
    let trimmed = raw.trim();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

/// Loads a wide CSV into a validated two-period panel.
pub fn load_wide_panel(
    path: &Path,
    covariate_column: &str,
    kind: CovariateKind,
    policy: MissingPolicy,
) -> Result<(PanelDataset, ValidationReport), CliError> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let idx_unit = column_index(&headers, "unit_id", path)?;
    let idx_x = column_index(&headers, covariate_column, path)?;
    let idx_pre = column_index(&headers, "y_pre", path)?;
    let idx_post = column_index(&headers, "y_post", path)?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_number = i + 2; // header is row 1
        rows.push(RawRow {
            unit_id: record.get(idx_unit).unwrap_or("").to_string(),
            x: optional(record.get(idx_x).unwrap_or("")),
            y_pre: parse_float(record.get(idx_pre).unwrap_or(""), "y_pre", row_number)?,
            y_post: parse_float(record.get(idx_post).unwrap_or(""), "y_post", row_number)?,
        });
    }

    Ok(validate_panel(rows, kind, policy, path.display().to_string())?)
}

/// Loads a long CSV into a balanced multi-period panel.
///
/// The missing-covariate policy applies per unit: under `Drop` a unit
/// without a usable covariate is excluded whole (and reported); outcomes
/// must parse at every period regardless.
pub fn load_long_panel(
    path: &Path,
    covariate_column: &str,
    kind: CovariateKind,
    policy: MissingPolicy,
    treatment_time: i64,
) -> Result<(MultiPeriodPanel, Vec<String>), CliError> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let idx_unit = column_index(&headers, "unit_id", path)?;
    let idx_x = column_index(&headers, covariate_column, path)?;
    let idx_time = column_index(&headers, "time", path)?;
    let idx_y = column_index(&headers, "y", path)?;

    // unit -> (covariate raw value, time -> outcome), in first-seen order
    let mut order: Vec<String> = Vec::new();
    let mut units: BTreeMap<String, (Option<String>, BTreeMap<i64, f64>)> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_number = i + 2;
        let unit_id = record.get(idx_unit).unwrap_or("").to_string();
        let x = optional(record.get(idx_x).unwrap_or(""));
        let time: i64 = record.get(idx_time).unwrap_or("").parse().map_err(|_| {
            CliError::Data(format!(
                "row {row_number}: cannot parse time value `{}` as an integer",
                record.get(idx_time).unwrap_or("")
            ))
        })?;
        let y = parse_float(record.get(idx_y).unwrap_or(""), "y", row_number)?;

        let entry = units.entry(unit_id.clone()).or_insert_with(|| {
            order.push(unit_id.clone());
            (x.clone(), BTreeMap::new())
        });
        match (&entry.0, &x) {
            (Some(seen), Some(now)) if seen != now => {
                return Err(CliError::Data(format!(
                    "row {row_number}: unit `{unit_id}` has conflicting covariate values \
                     `{seen}` and `{now}`"
                )));
            }
            (None, Some(_)) => entry.0 = x.clone(),
            _ => {}
        }
        if entry.1.insert(time, y).is_some() {
            return Err(CliError::Data(format!(
                "row {row_number}: unit `{unit_id}` observed twice at time {time}"
            )));
        }
    }

    let mut dropped = Vec::new();
    let mut rows = Vec::new();
    for unit_id in order {
        let (x_raw, outcomes) = units.remove(&unit_id).expect("tracked unit");
        let covariate = match resolve_covariate(x_raw.as_deref(), kind) {
            Ok(c) => c,
            Err(reason) => match policy {
                MissingPolicy::Strict => {
                    return Err(CliError::Data(format!("unit `{unit_id}`: {reason}")))
                }
                MissingPolicy::Drop => {
                    dropped.push(format!("unit `{unit_id}` dropped: {reason}"));
                    continue;
                }
            },
        };
        rows.push(MultiPeriodRow {
            unit_id,
            x: covariate,
            outcomes,
        });
    }

    let panel = MultiPeriodPanel::from_rows(rows, treatment_time, kind)?;
    Ok((panel, dropped))
}

fn resolve_covariate(raw: Option<&str>, kind: CovariateKind) -> Result<Covariate, String> {
    let raw = match raw {
        Some(s) if !s.is_empty() => s,
        _ => return Err("missing covariate value".to_string()),
    };
    match kind {
        CovariateKind::Categorical => Ok(Covariate::label(raw)),
        CovariateKind::Continuous => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Covariate::value(v)),
            _ => Err(format!("covariate `{raw}` is not a finite number")),
        },
    }
}

/// Writes the validated panel back out as canonical wide CSV. Numbers
/// are written in shortest round-trip form, so load -> dump -> load is
/// the identity.
pub fn dump_panel(panel: &PanelDataset, covariate_column: &str) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["unit_id", covariate_column, "y_pre", "y_post"])?;
    for r in panel.records() {
        // Rust's float Display is shortest-round-trip, so the dump
        // reloads bit-identically.
        writer.write_record([
            r.unit_id.as_str(),
            &r.x.to_string(),
            &format!("{}", r.y_pre),
            &format!("{}", r.y_post),
        ])?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
}
