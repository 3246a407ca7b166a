//! Command-level behavior: report consistency, critical-parameter
//! ordering, equivalence identities, calibration/contour agreement, and
//! the simulate → analyze round trip.

use std::path::Path;

use decomp_cli::{
    apply_overrides, cmd_calibrate, cmd_decompose, cmd_filter, cmd_sensitivity, cmd_simulate,
    Overrides,
};
use decomp_core::config::AnalysisConfig;

/// Base config: a confounded generating process whose reduction is clearly
/// positive, so critical parameters exist above 1.
fn config_text(dir: &Path, confounded: bool) -> String {
    let strength = if confounded { 0.8 } else { 0.0 };
    let gamma1 = if confounded {
        "[0.5, 0.4, 0.3, -0.2]"
    } else {
        // Same exposure policy as G=0 (nonallowable coefficients zero):
        // the true disparity reduction is exactly zero.
        "[-0.3, 0.5, 0.0, 0.0]"
    };
    format!(
        r#"
[data]
path = "{dir}/synthetic.csv"
outcome = "y"
group = "g"
exposure = "z"
allowable = ["a1"]
nonallowable = ["x1", "x2"]

[sensitivity]
lambda_max = 20.0
eta = [1.0, 0.5]

[bootstrap]
replicates = 120
seed = 12

[output]
dir = "{dir}/out"

[simulate]
n = 2500
p_allowable = 1
p_nonallowable = 2
group_prevalence = 0.4
gamma0 = [-0.3, 0.5]
gamma1 = {gamma1}
seed = 42
oracle_draws = 50000

[simulate.outcome]
beta_z = 1.0
f_coefficients = [0.5, -0.4, 0.3]
beta_u = 0.6
noise_sd = 0.6

[simulate.confounder]
strength_e1 = {strength}
"#,
        dir = dir.display(),
    )
}

fn prepared_config(dir: &Path, confounded: bool) -> AnalysisConfig {
    let cfg = AnalysisConfig::parse(&config_text(dir, confounded)).unwrap();
    let sim = cmd_simulate(&cfg).unwrap();
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("synthetic.csv"), sim.get("synthetic.csv").unwrap()).unwrap();
    std::fs::write(dir.join("truth.json"), sim.get("truth.json").unwrap()).unwrap();
    cfg
}

fn report_json(artifacts: &decomp_cli::Artifacts) -> serde_json::Value {
    serde_json::from_str(artifacts.get("report.json").unwrap()).unwrap()
}

#[test]
fn null_process_reduction_ci_covers_zero_and_table_is_additive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared_config(dir.path(), false);
    let artifacts = cmd_decompose(&cfg).unwrap();
    let report = report_json(&artifacts);
    let decomp = &report["decomposition"];

    let reduction = &decomp["reduction"];
    let (lo, hi) = (
        reduction["ci"][0].as_f64().unwrap(),
        reduction["ci"][1].as_f64().unwrap(),
    );
    assert!(lo <= 0.0 && 0.0 <= hi, "reduction CI [{lo}, {hi}] misses 0");

    let tau = decomp["tau"]["estimate"].as_f64().unwrap();
    let red = reduction["estimate"].as_f64().unwrap();
    let res = decomp["residual"]["estimate"].as_f64().unwrap();
    assert!((red + res - tau).abs() < 1e-12);
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared_config(dir.path(), true);
    let a = cmd_decompose(&cfg).unwrap();
    let b = cmd_decompose(&cfg).unwrap();
    assert_eq!(a, b);

    let mut other = cfg.clone();
    other.bootstrap.seed = 13;
    let c = cmd_decompose(&other).unwrap();
    assert_ne!(a.get("report.json").unwrap(), c.get("report.json").unwrap());
}

#[test]
fn sensitivity_orderings_and_equivalence_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared_config(dir.path(), true);
    let artifacts = cmd_sensitivity(&cfg).unwrap();
    let report = report_json(&artifacts);
    let sens = &report["sensitivity"];

    // CI crossing at or before the point crossing, for both estimands.
    for estimand in ["reduction", "residual"] {
        let point = sens["critical"][format!("{estimand}_point")]["value"]
            .as_f64()
            .unwrap();
        let ci = sens["critical"][format!("{estimand}_ci")]["value"]
            .as_f64()
            .unwrap();
        assert!(
            ci <= point + 2e-3,
            "{estimand}: CI crossing {ci} after point crossing {point}"
        );
    }

    // The eta = 1 equivalence row is the residual-disparity row, exactly.
    let eq = sens["equivalence"].as_array().unwrap();
    assert_eq!(eq[0]["eta"].as_f64().unwrap(), 1.0);
    assert_eq!(
        eq[0]["point"].as_f64().unwrap(),
        sens["critical"]["residual_point"]["value"]
            .as_f64()
            .unwrap()
    );
    assert_eq!(
        eq[0]["ci"].as_f64().unwrap(),
        sens["critical"]["residual_ci"]["value"].as_f64().unwrap()
    );

    // Grid widths are monotone in lambda.
    let grid_csv = artifacts.get("lambda_grid.csv").unwrap();
    let mut widths = Vec::new();
    for line in grid_csv.lines().skip(1) {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        widths.push(fields[2] - fields[1]);
    }
    assert!(!widths.is_empty());
    for pair in widths.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-12);
    }
}

#[test]
fn calibrate_labels_match_csv_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared_config(dir.path(), true);
    let artifacts = cmd_calibrate(&cfg).unwrap();

    // Rank covariates by pre-weighting bias from the CSV.
    let csv = artifacts.get("calibration.csv").unwrap();
    let mut rows: Vec<(String, f64)> = csv
        .lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            (fields[0].to_string(), fields[4].parse().unwrap())
        })
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top: Vec<&str> = rows.iter().take(3).map(|(n, _)| n.as_str()).collect();

    let report = report_json(&artifacts);
    let reported: Vec<&str> = report["calibration"]["top_covariates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(top, reported);

    // The SVG labels exactly the reported covariates.
    let svg = artifacts.get("contour.svg").unwrap();
    let labels: Vec<&str> = svg
        .lines()
        .filter(|l| l.contains("covariate-label"))
        .map(|l| {
            let start = l.find('>').unwrap() + 1;
            let end = l.rfind("</text>").unwrap();
            &l[start..end]
        })
        .collect();
    assert_eq!(labels.len(), reported.len().min(3));
    for name in &reported {
        assert!(labels.contains(name), "label {name} missing from SVG");
    }

    // Critical bias consistency: reported lambda* reproduces the bias.
    let critical_bias = report["calibration"]["critical_bias"].as_f64().unwrap();
    assert!(critical_bias > 0.0);
    assert!(svg.contains("<svg") && svg.ends_with("</svg>\n"));
}

#[test]
fn leave_one_out_calibration_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = prepared_config(dir.path(), true);
    cfg.amplification.leave_one_out = true;
    let artifacts = cmd_calibrate(&cfg).unwrap();
    let report = report_json(&artifacts);
    let points = report["calibration"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    for p in points {
        assert!(p["delta_post"].as_f64().unwrap().is_finite());
    }
    // Leave-one-out imbalances differ from the plug-in ones.
    let mut plug = cfg.clone();
    plug.amplification.leave_one_out = false;
    let plug_report = report_json(&cmd_calibrate(&plug).unwrap());
    let plug_points = plug_report["calibration"]["points"].as_array().unwrap();
    let any_differs = points.iter().zip(plug_points).any(|(a, b)| {
        (a["delta_post"].as_f64().unwrap() - b["delta_post"].as_f64().unwrap()).abs() > 1e-6
    });
    assert!(any_differs);
}

#[test]
fn simulate_roundtrip_recovers_truth_with_visible_confounder() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = AnalysisConfig::parse(&config_text(dir.path(), true)).unwrap();
    {
        let sim = cfg.simulate.as_mut().unwrap();
        sim.confounder.hidden = false;
        sim.n = 6000;
    }
    // The confounder lands in the nonallowable block as column `u`.
    cfg.data.as_mut().unwrap().nonallowable.push("u".into());

    let artifacts = cmd_simulate(&cfg).unwrap();
    std::fs::create_dir_all(dir.path()).unwrap();
    std::fs::write(
        dir.path().join("synthetic.csv"),
        artifacts.get("synthetic.csv").unwrap(),
    )
    .unwrap();
    let truth: serde_json::Value =
        serde_json::from_str(artifacts.get("truth.json").unwrap()).unwrap();
    let true_mu = truth["truth"]["true_mu_r0"].as_f64().unwrap();
    for key in [
        "true_mu_r0",
        "true_bias",
        "true_beta_u",
        "true_delta_u",
        "true_lambda_bound",
    ] {
        assert!(truth["truth"][key].as_f64().unwrap().is_finite());
    }

    let report = report_json(&cmd_decompose(&cfg).unwrap());
    let mu_r0 = report["decomposition"]["mu_r0"].as_f64().unwrap();
    let sd = report["decomposition"]["reduction"]["sd"].as_f64().unwrap();
    assert!(
        (mu_r0 - true_mu).abs() < 0.03 + 4.0 * sd,
        "estimate {mu_r0} vs truth {true_mu}"
    );
}

#[test]
fn filter_command_keeps_and_excludes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared_config(dir.path(), true);

    let kept = cmd_filter(&cfg, Some("g==1")).unwrap();
    let body = kept.get("filtered.csv").unwrap();
    for line in body.lines().skip(1) {
        assert!(line.starts_with("1,"), "non-G1 row survived: {line}");
    }

    let mut cfg_excl = cfg.clone();
    apply_overrides(
        &mut cfg_excl,
        &Overrides {
            exclude: Some("z==1".into()),
            ..Overrides::default()
        },
    )
    .unwrap();
    let excluded = cmd_filter(&cfg_excl, None).unwrap();
    for line in excluded.get("filtered.csv").unwrap().lines().skip(1) {
        let z = line.split(',').nth(1).unwrap();
        assert_eq!(z, "0");
    }
    let report: serde_json::Value =
        serde_json::from_str(excluded.get("filter_report.json").unwrap()).unwrap();
    assert!(report["rows_excluded"].as_u64().unwrap() > 0);

    // No expression at all is an error.
    assert!(cmd_filter(&cfg, None).is_err());
}

#[test]
fn exclude_override_changes_hash_and_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepared_config(dir.path(), true);
    let baseline_hash = cfg.sha256();

    let mut cfg_excl = cfg.clone();
    apply_overrides(
        &mut cfg_excl,
        &Overrides {
            exclude: Some("x1>1.5".into()),
            ..Overrides::default()
        },
    )
    .unwrap();
    assert_ne!(cfg_excl.sha256(), baseline_hash);

    let report = report_json(&cmd_decompose(&cfg_excl).unwrap());
    assert_eq!(report["load"]["exclude_filter"].as_str().unwrap(), "x1>1.5");
    assert!(report["load"]["rows_excluded"].as_u64().unwrap() > 0);
    assert_eq!(
        report["meta"]["config_sha256"].as_str().unwrap(),
        cfg_excl.sha256()
    );
}
