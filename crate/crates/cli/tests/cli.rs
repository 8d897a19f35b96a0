//! End-to-end behavior of the `sdid` binary: exit codes, report
//! schemas, determinism, and the load/dump round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdid"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_with_env(args: &[&str], key: &str, value: &str) -> Output {
    bin().args(args).env(key, value).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).unwrap()
}

fn write_fixture(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

const HAND_WIDE: &str = "unit_id,covariate,y_pre,y_post\n\
                         u1,A,0,2\n\
                         u2,A,3,5\n\
                         u3,B,0,1\n\
                         u4,B,2,3\n";

const DGP_JSON: &str = r#"{
  "levels": [
    {"label": "A", "probability": 0.5, "baseline_mean": 1.0, "treatment_effect": 2.0},
    {"label": "B", "probability": 0.5, "baseline_mean": 0.0, "treatment_effect": 1.0}
  ],
  "common_trend": 3.0,
  "noise": {"distribution": "gaussian", "sd_pre": 1.0, "sd_post": 1.0},
  "n": 300,
  "seed": 0
}"#;

#[test]
fn estimate_hand_fixture_reports_point_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), "hand.csv", HAND_WIDE);

    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
        "--deterministic",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["estimates"][0]["point"], 1.0);
    assert_eq!(report["estimates"][0]["n_a"], 2);
    assert_eq!(report["estimates"][0]["n_b"], 2);
    assert_eq!(report["estimates"][0]["method"], "subgroup_means");
    assert!(report["assumption_notes"]
        .as_array()
        .unwrap()
        .iter()
        .any(|n| n.as_str().unwrap().contains("parallel trends")));
    // Reproducibility: the resolved config and tool version are embedded.
    assert_eq!(report["config"]["contrast"], "A,B");
    assert_eq!(report["tool"]["name"], "sdid");
}

#[test]
fn unknown_level_exits_2_and_lists_levels() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), "hand.csv", HAND_WIDE);

    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,Z",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("unknown level `Z`"), "stderr: {err}");
    assert!(err.contains("A, B"), "stderr: {err}");
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), "hand.csv", HAND_WIDE);

    let bad_ci = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
        "--ci",
        "1.5",
    ]);
    assert_eq!(bad_ci.status.code(), Some(1));

    let bad_flag = run(&["estimate", "--no-such-flag"]);
    assert_eq!(bad_flag.status.code(), Some(1));

    let missing_contrast = run(&["estimate", "--data", data.to_str().unwrap()]);
    assert_eq!(missing_contrast.status.code(), Some(1));
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(
        dir.path(),
        "bad.csv",
        "unit_id,covariate,y_pre\nu1,A,0\n",
    );
    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("y_post"));
}

#[test]
fn unparseable_numeric_is_row_numbered() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(
        dir.path(),
        "bad.csv",
        "unit_id,covariate,y_pre,y_post\nu1,A,0,2\nu2,A,zero,5\n",
    );
    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("row 3"), "stderr: {err}");
    assert!(err.contains("zero"), "stderr: {err}");
}

#[test]
fn long_input_flattens_two_periods() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(
        dir.path(),
        "long.csv",
        "unit_id,covariate,time,y\n\
         u1,A,0,0\nu1,A,1,2\n\
         u2,A,0,3\nu2,A,1,5\n\
         u3,B,0,0\nu3,B,1,1\n\
         u4,B,0,2\nu4,B,1,3\n",
    );
    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--input-format",
        "long",
        "--treatment-time",
        "1",
        "--contrast",
        "A,B",
        "--deterministic",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["estimates"][0]["point"], 1.0);
}

#[test]
fn unbalanced_long_input_names_the_unit() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(
        dir.path(),
        "long.csv",
        "unit_id,covariate,time,y\n\
         u1,A,0,0\nu1,A,1,2\n\
         u2,B,0,3\n",
    );
    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--input-format",
        "long",
        "--treatment-time",
        "1",
        "--contrast",
        "A,B",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("u2"), "stderr: {}", stderr(&out));
}

#[test]
fn deterministic_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), "hand.csv", HAND_WIDE);
    let args = [
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
        "--bootstrap",
        "200",
        "--seed",
        "42",
        "--deterministic",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(stdout(&first), stdout(&second));

    // Without --deterministic a timestamp appears.
    let stamped = run(&args[..args.len() - 1]);
    let report: Value = serde_json::from_str(&stdout(&stamped)).unwrap();
    assert!(report.get("timestamp").is_some());
}

#[test]
fn reports_are_invariant_to_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("unit_id,covariate,y_pre,y_post\n");
    for i in 0..40 {
        let level = if i % 2 == 0 { "A" } else { "B" };
        let wiggle = ((i * 13 + 5) % 17) as f64 / 17.0;
        csv.push_str(&format!("u{i},{level},{i},{}\n", i as f64 + 1.0 + wiggle));
    }
    let data = write_fixture(dir.path(), "panel.csv", &csv);
    let dgp = write_fixture(dir.path(), "dgp.json", DGP_JSON);

    let est_args = [
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
        "--bootstrap",
        "300",
        "--seed",
        "9",
        "--deterministic",
    ];
    let est_1 = run_with_env(&est_args, "SDID_THREADS", "1");
    let est_4 = run_with_env(&est_args, "SDID_THREADS", "4");
    assert!(est_1.status.success(), "stderr: {}", stderr(&est_1));
    assert_eq!(stdout(&est_1), stdout(&est_4));

    let sim_args = [
        "simulate",
        "--config",
        dgp.to_str().unwrap(),
        "--reps",
        "50",
        "--seed",
        "3",
        "--deterministic",
    ];
    let sim_1 = run_with_env(&sim_args, "SDID_THREADS", "1");
    let sim_4 = run_with_env(&sim_args, "SDID_THREADS", "4");
    assert!(sim_1.status.success(), "stderr: {}", stderr(&sim_1));
    assert_eq!(stdout(&sim_1), stdout(&sim_4));
}

#[test]
fn validate_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(
        dir.path(),
        "messy.csv",
        "unit_id,covariate,y_pre,y_post\n\
         u1,A,0.125,2.7182818284590452\n\
         u2,,3,5\n\
         u3,B,0,NaN\n\
         u4,B,2.5,3.141592653589793\n",
    );
    let dump1 = dir.path().join("dump1.csv");
    let dump2 = dir.path().join("dump2.csv");

    let first = run(&[
        "validate",
        "--data",
        data.to_str().unwrap(),
        "--missing",
        "drop",
        "--dump-panel",
        dump1.to_str().unwrap(),
        "--deterministic",
    ]);
    assert!(first.status.success(), "stderr: {}", stderr(&first));
    let report: Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(report["validation"]["n_input"], 4);
    assert_eq!(report["validation"]["n_kept"], 2);
    assert_eq!(report["validation"]["dropped"][0]["unit_id"], "u2");
    assert_eq!(report["validation"]["dropped"][1]["unit_id"], "u3");

    let second = run(&[
        "validate",
        "--data",
        dump1.to_str().unwrap(),
        "--dump-panel",
        dump2.to_str().unwrap(),
        "--deterministic",
    ]);
    assert!(second.status.success());
    assert_eq!(
        std::fs::read(&dump1).unwrap(),
        std::fs::read(&dump2).unwrap()
    );
}

#[test]
fn strict_policy_rejects_what_drop_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(
        dir.path(),
        "messy.csv",
        "unit_id,covariate,y_pre,y_post\nu1,A,0,2\nu2,A,1,NaN\nu3,B,0,1\n",
    );
    let strict = run(&["validate", "--data", data.to_str().unwrap()]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(stderr(&strict).contains("u2"));
}

#[test]
fn csv_and_text_formats_carry_assumption_notes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), "hand.csv", HAND_WIDE);
    let base = [
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
        "--deterministic",
        "--format",
    ];

    let csv_out = run(&[&base[..], &["csv"]].concat());
    assert!(csv_out.status.success());
    let text = stdout(&csv_out);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("contrast_a,contrast_b,point,"));
    assert!(header.ends_with("assumption_notes"));
    assert!(lines.next().unwrap().contains("parallel trends"));

    let text_out = run(&[&base[..], &["text"]].concat());
    assert!(text_out.status.success());
    let rendered = stdout(&text_out);
    assert!(rendered.contains("point = 1"));
    assert!(rendered.contains("Assumptions and caveats"));
    assert!(rendered.contains("untestable") || rendered.contains("cannot be tested"));
}

#[test]
fn all_pairs_emits_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(
        dir.path(),
        "three.csv",
        "unit_id,covariate,y_pre,y_post\n\
         u1,A,0,2\nu2,A,0,2\n\
         u3,B,0,1\nu4,B,0,1\n\
         u5,C,0,0.5\nu6,C,0,0.5\n",
    );
    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--all-pairs",
        "--reference",
        "C",
        "--deterministic",
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let body = stdout(&out);
    let rows: Vec<&str> = body.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("A,C,1.5"));
    assert!(rows[1].starts_with("B,C,0.5"));
}

#[test]
fn continuous_estimate_with_binning() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("unit_id,covariate,y_pre,y_post\n");
    for i in 0..30 {
        let x = i as f64 / 3.0;
        csv.push_str(&format!("u{i},{x},0,{}\n", 1.0 + 0.5 * x));
    }
    let data = write_fixture(dir.path(), "cont.csv", &csv);

    // Direct regression contrast.
    let direct = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "continuous",
        "--contrast",
        "8,2",
        "--basis",
        "poly:1",
        "--deterministic",
    ]);
    assert!(direct.status.success(), "stderr: {}", stderr(&direct));
    let report: Value = serde_json::from_str(&stdout(&direct)).unwrap();
    let point = report["estimates"][0]["point"].as_f64().unwrap();
    assert!((point - 3.0).abs() < 1e-9, "point = {point}");
    assert_eq!(report["estimates"][0]["method"], "delta_regression");
    // No analytic inference on the regression route: nulls, not absent.
    assert!(report["estimates"][0]["se"].is_null());
    assert!(report["estimates"][0]["ci_lower"].is_null());

    // Binned contrast compares bin labels instead.
    let binned = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "continuous",
        "--bin",
        "3",
        "--contrast",
        "q3,q1",
        "--deterministic",
    ]);
    assert!(binned.status.success(), "stderr: {}", stderr(&binned));
    let report: Value = serde_json::from_str(&stdout(&binned)).unwrap();
    assert!(report["assumption_notes"]
        .as_array()
        .unwrap()
        .iter()
        .any(|n| n.as_str().unwrap().contains("binned")));
    assert!(report["estimates"][0]["point"].as_f64().unwrap() > 0.0);
}

#[test]
fn strict_extrapolation_errors_warn_flags() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("unit_id,covariate,y_pre,y_post\n");
    for i in 0..12 {
        csv.push_str(&format!("u{i},{},0,{}\n", i, i));
    }
    let data = write_fixture(dir.path(), "cont.csv", &csv);

    let strict = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "continuous",
        "--contrast",
        "50,1",
    ]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(stderr(&strict).contains("outside the observed covariate range"));

    let warn = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "continuous",
        "--contrast",
        "50,1",
        "--extrapolation",
        "warn",
        "--deterministic",
    ]);
    assert!(warn.status.success());
    let report: Value = serde_json::from_str(&stdout(&warn)).unwrap();
    assert_eq!(report["estimates"][0]["extrapolated"], true);
}

#[test]
fn rank_deficient_design_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Constant covariate: the linear column duplicates the intercept.
    let mut csv = String::from("unit_id,covariate,y_pre,y_post\n");
    for i in 0..10 {
        csv.push_str(&format!("u{i},2.0,0,{}\n", i));
    }
    let data = write_fixture(dir.path(), "flat.csv", &csv);
    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "continuous",
        "--contrast",
        "2,2",
        "--basis",
        "poly:1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("rank deficient"), "stderr: {}", stderr(&out));
}

#[test]
fn simulate_dump_draw_separates_panel_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let dgp = write_fixture(dir.path(), "dgp.json", DGP_JSON);
    let prefix = dir.path().join("draw");
    let out = run(&[
        "simulate",
        "--config",
        dgp.to_str().unwrap(),
        "--reps",
        "5",
        "--seed",
        "3",
        "--dump-draw",
        prefix.to_str().unwrap(),
        "--deterministic",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let panel_csv = std::fs::read_to_string(dir.path().join("draw.panel.csv")).unwrap();
    assert!(panel_csv.starts_with("unit_id,covariate,y_pre,y_post"));
    // The observable file carries no counterfactual column.
    assert!(!panel_csv.contains("untreated"));

    let ledger: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("draw.ledger.json")).unwrap())
            .unwrap();
    let first = &ledger.as_array().unwrap()[0];
    assert!(first["y_post_untreated"].is_number());
    assert!(first["y_post_treated"].is_number());
    // Panel rows equal the ledger's treated outcomes, unit for unit.
    let first_panel_row = panel_csv.lines().nth(1).unwrap();
    let y_post: f64 = first_panel_row.rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(y_post, first["y_post_treated"].as_f64().unwrap());
}

#[test]
fn simulate_reads_config_and_embeds_seed() {
    let dir = tempfile::tempdir().unwrap();
    let dgp = write_fixture(dir.path(), "dgp.json", DGP_JSON);
    let out = run(&[
        "simulate",
        "--config",
        dgp.to_str().unwrap(),
        "--reps",
        "60",
        "--seed",
        "11",
        "--deterministic",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["seed"], 11);
    assert_eq!(report["summary"]["reps"], 60);
    assert_eq!(report["summary"]["oracle_effect_modification"], 1.0);
    let bias = report["summary"]["bias"].as_f64().unwrap();
    assert!(bias.abs() < 0.2, "bias = {bias}");

    let bad = run(&["simulate", "--config", dgp.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1)); // missing --reps
}

#[test]
fn pretrends_report_counts_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("unit_id,covariate,time,y\n");
    for u in 0..20 {
        let level = if u % 2 == 0 { "A" } else { "B" };
        let offset = if level == "A" { 5.0 } else { 0.0 };
        for t in 0..4 {
            let wiggle = ((u * 13 + t * 7) % 11) as f64 / 11.0;
            let effect = if level == "A" && t >= 3 { 2.0 } else { 0.0 };
            csv.push_str(&format!(
                "u{u},{level},{t},{}\n",
                offset + t as f64 + wiggle + effect
            ));
        }
    }
    let data = write_fixture(dir.path(), "long.csv", &csv);
    let out = run(&[
        "pretrends",
        "--data",
        data.to_str().unwrap(),
        "--treatment-time",
        "3",
        "--contrast",
        "A,B",
        "--deterministic",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let intervals = report["pretrends"]["per_interval"].as_array().unwrap();
    assert_eq!(intervals.len(), 2);
    assert_eq!(report["pretrends"]["joint_df"], 2);

    // A single pre-period is untestable.
    let short = write_fixture(
        dir.path(),
        "short.csv",
        "unit_id,covariate,time,y\nu1,A,0,0\nu1,A,1,1\nu2,B,0,0\nu2,B,1,1\n",
    );
    let err = run(&[
        "pretrends",
        "--data",
        short.to_str().unwrap(),
        "--treatment-time",
        "1",
        "--contrast",
        "A,B",
    ]);
    assert_eq!(err.status.code(), Some(2));
    assert!(stderr(&err).contains("single pre-period"));
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), "hand.csv", HAND_WIDE);
    let out_path = dir.path().join("report.json");

    let to_stdout = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
        "--deterministic",
    ]);
    let to_file = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--contrast",
        "A,B",
        "--deterministic",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(to_file.status.success());
    assert!(stdout(&to_file).is_empty());

    // The embedded config records the actual invocation (including
    // --out), so compare the result sections rather than raw bytes.
    let from_stdout: Value = serde_json::from_str(&stdout(&to_stdout)).unwrap();
    let from_file: Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(from_stdout["estimates"], from_file["estimates"]);
    assert_eq!(
        from_stdout["assumption_notes"],
        from_file["assumption_notes"]
    );
}
