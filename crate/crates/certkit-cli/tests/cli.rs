//! End-to-end tests that drive the compiled binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn certkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_certkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(args: &[&str]) -> String {
    let out = certkit(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 output")
}

fn json_of(args: &[&str]) -> Value {
    serde_json::from_str(&stdout_of(args)).expect("json output")
}

fn exit_code(args: &[&str]) -> i32 {
    certkit(args).status.code().expect("exit code")
}

fn write_points(path: &Path, rows: &[&str]) {
    fs::write(path, rows.join("\n")).expect("write csv");
}

#[test]
fn divergence_prints_at_least_12_significant_digits() {
    let text = stdout_of(&[
        "divergence",
        "--kind",
        "renyi",
        "--beta",
        "2",
        "--p",
        "0.5,0.5",
        "--q",
        "0.25,0.75",
    ]);
    let value: f64 = text.trim().parse().expect("a decimal value");
    assert!((value - 0.287682072451781).abs() < 1e-12);
    let digits = text.chars().filter(|c| c.is_ascii_digit()).count();
    assert!(digits >= 12, "only {digits} digits in {text:?}");
}

#[test]
fn divergence_kind_aliases_match_renyi_orders() {
    let pq = ["--p", "0.7,0.3", "--q", "0.4,0.6"];
    let kl = stdout_of(&[&["divergence", "--kind", "kl"], &pq[..]].concat());
    let renyi1 = stdout_of(&[&["divergence", "--kind", "renyi", "--beta", "1"], &pq[..]].concat());
    assert_eq!(kl, renyi1);
    let max = stdout_of(&[&["divergence", "--kind", "max"], &pq[..]].concat());
    let renyi_inf =
        stdout_of(&[&["divergence", "--kind", "renyi", "--beta", "inf"], &pq[..]].concat());
    assert_eq!(max, renyi_inf);
}

#[test]
fn wasserstein_ground_distances_differ_on_ordered_labels() {
    let pq = ["--p", "0.9,0.0,0.1", "--q", "0.1,0.0,0.9"];
    let trivial = stdout_of(&[&["divergence", "--kind", "wasserstein"], &pq[..]].concat());
    let line = stdout_of(
        &[
            &["divergence", "--kind", "wasserstein", "--ground", "line"],
            &pq[..],
        ]
        .concat(),
    );
    let trivial: f64 = trivial.trim().parse().unwrap();
    let line: f64 = line.trim().parse().unwrap();
    assert!((trivial - 0.8).abs() < 1e-12);
    assert!((line - 1.6).abs() < 1e-12);
}

#[test]
fn divergence_missing_beta_is_a_validation_error() {
    let out = certkit(&[
        "divergence",
        "--kind",
        "renyi",
        "--p",
        "0.5,0.5",
        "--q",
        "0.3,0.7",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
}

#[test]
fn unknown_divergence_kind_is_a_validation_error() {
    assert_eq!(
        exit_code(&[
            "divergence",
            "--kind",
            "chi2",
            "--p",
            "0.5,0.5",
            "--q",
            "0.3,0.7"
        ]),
        2
    );
}

#[test]
fn certify_emits_the_closed_form_certificates() {
    let json = json_of(&["certify", "--sigma", "0.5", "--alpha", "0.25"]);
    assert!((json["radius"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    assert!((json["beta"].as_f64().unwrap() - 2.0).abs() < 1e-15);
    // beta * alpha^2 / (2 sigma^2) and 2 Phi(alpha / (2 sigma)) - 1
    assert!((json["renyi_eps"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    assert!((json["tv_eps"].as_f64().unwrap() - 0.197412651365847).abs() < 1e-12);
}

#[test]
fn bound_reproduces_the_worked_report() {
    let json = json_of(&[
        "bound",
        "--risk",
        "0.1",
        "--sigma",
        "0.5",
        "--alpha",
        "0.25",
        "--beta",
        "1",
        "--entropy-term",
        "0.9",
    ]);
    assert!(json["renyi_mult_bound"].is_null());
    assert!((json["renyi_add_gap"].as_f64().unwrap() - 0.205752787673865).abs() < 1e-12);
    assert!((json["best_adv_risk_bound"].as_f64().unwrap() - 0.297412651365847).abs() < 1e-12);
    assert!(!json["note"].as_str().unwrap().is_empty());
}

#[test]
fn cover_exact_counts_the_unit_square() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("points.csv");
    write_points(&csv, &["0,0", "1,0", "0,1", "1,1"]);
    let path = csv.to_str().unwrap();
    let four = json_of(&["cover", "--input", path, "--alpha", "0.5", "--exact"]);
    assert_eq!(four["n_balls"].as_u64(), Some(4));
    assert_eq!(four["exact"].as_bool(), Some(true));
    let two = json_of(&["cover", "--input", path, "--alpha", "1", "--exact"]);
    assert_eq!(two["n_balls"].as_u64(), Some(2));
    assert_eq!(two["centers"][0][0].as_f64(), Some(0.0));
}

#[test]
fn cover_greedy_handles_sizes_past_the_exhaustive_limit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("points.csv");
    let rows: Vec<String> = (0..13).map(|i| format!("{i},0")).collect();
    let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
    write_points(&csv, &refs);
    let path = csv.to_str().unwrap();
    assert_eq!(
        exit_code(&["cover", "--input", path, "--alpha", "0.5", "--exact"]),
        3
    );
    let greedy = json_of(&["cover", "--input", path, "--alpha", "1", "--norm", "1"]);
    assert_eq!(greedy["n_balls"].as_u64(), Some(5));
    assert_eq!(greedy["exact"].as_bool(), Some(false));
}

#[test]
fn invalid_norm_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("points.csv");
    write_points(&csv, &["0,0", "1,1"]);
    assert_eq!(
        exit_code(&[
            "cover",
            "--input",
            csv.to_str().unwrap(),
            "--alpha",
            "0.5",
            "--norm",
            "3"
        ]),
        2
    );
}

#[test]
fn evaluate_reports_certificates_and_a_clamped_bound() {
    let json = json_of(&[
        "evaluate",
        "--n",
        "60",
        "--sigma",
        "0.5",
        "--alpha",
        "0.25",
        "--samples",
        "100",
    ]);
    let clean = json["clean_risk"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&clean));
    assert!(json["attacked_risk"].is_null());
    let tv_eps = json["certificate"]["tv_eps"].as_f64().unwrap();
    assert!((tv_eps - 0.197412651365847).abs() < 1e-12);
    let best = json["report"]["best_adv_risk_bound"].as_f64().unwrap();
    assert!(best >= clean - 1e-12);
    assert!(best <= 1.0);
}

#[test]
fn evaluate_attack_stays_above_the_clean_risk() {
    let json = json_of(&[
        "evaluate",
        "--n",
        "40",
        "--sigma",
        "0.5",
        "--alpha",
        "0.25",
        "--samples",
        "80",
        "--attack",
        "--restarts",
        "2",
        "--refinements",
        "2",
    ]);
    let clean = json["clean_risk"]["mean"].as_f64().unwrap();
    let attacked = json["attacked_risk"]["mean"].as_f64().unwrap();
    assert!(attacked >= clean - 1e-12);
    assert!(attacked <= 1.0);
}

#[test]
fn curve_csv_is_deterministic_and_well_formed() {
    let args = [
        "curve",
        "--n",
        "40",
        "--sigma",
        "0.5",
        "--alphas",
        "0,0.25",
        "--samples",
        "50",
    ];
    let first = stdout_of(&args);
    let second = stdout_of(&args);
    assert_eq!(first, second);
    let mut lines = first.lines();
    assert_eq!(
        lines.next(),
        Some("alpha2,eps_tv,eps_renyi,clean_acc,guaranteed_acc,attacked_acc")
    );
    let zero: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(zero[0], "0");
    assert_eq!(zero[3], zero[4], "alpha 0 guarantees the clean accuracy");
    let quarter: Vec<&str> = lines.next().unwrap().split(',').collect();
    let eps_tv: f64 = quarter[1].parse().unwrap();
    assert!((eps_tv - 0.197412651365847).abs() < 1e-12);
    assert!(lines.next().is_none());
}

#[test]
fn sweep_csv_has_expected_shape() {
    let text = stdout_of(&["sweep", "--n", "40", "--sigmas", "0,0.5", "--samples", "50"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sigma,clean_acc");
    assert_eq!(lines.len(), 3);
    let zero: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(zero[0], "0");
    let acc: f64 = zero[1].parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn attack_finds_the_reachable_flip_and_respects_the_ball() {
    let json = json_of(&[
        "attack",
        "--point",
        "0.2,0",
        "--label",
        "0",
        "--alpha",
        "0.25",
        "--samples",
        "20",
    ]);
    assert_eq!(json["attacked_loss"].as_f64(), Some(1.0));
    let tau: Vec<f64> = json["tau"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let norm = tau.iter().map(|t| t * t).sum::<f64>().sqrt();
    assert!(norm <= 0.25 + 1e-9);

    let short = json_of(&[
        "attack",
        "--point",
        "0.2,0",
        "--label",
        "0",
        "--alpha",
        "0.1",
        "--samples",
        "20",
    ]);
    assert_eq!(short["attacked_loss"].as_f64(), Some(0.0));
}

#[test]
fn attack_with_out_of_range_label_is_a_validation_error() {
    assert_eq!(
        exit_code(&["attack", "--point", "0.2,0", "--label", "5"]),
        2
    );
}

#[test]
fn config_file_supplies_missing_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"sigma": 0.5, "alpha": 0.25}"#).unwrap();
    let json = json_of(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--alpha",
        "0.1",
    ]);
    assert!((json["radius"].as_f64().unwrap() - 0.1).abs() < 1e-15);
    assert!((json["tv_eps"].as_f64().unwrap() - 0.0796556745540580).abs() < 1e-12);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"sigm": 0.5}"#).unwrap();
    assert_eq!(
        exit_code(&[
            "certify",
            "--config",
            cfg.to_str().unwrap(),
            "--sigma",
            "0.5",
            "--alpha",
            "0.1"
        ]),
        2
    );
}

#[test]
fn out_writes_the_file_and_keeps_stdout_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cert.json");
    let out = certkit(&[
        "certify",
        "--sigma",
        "0.5",
        "--alpha",
        "0.25",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    let json: Value = serde_json::from_str(&text).unwrap();
    assert!((json["radius"].as_f64().unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn model_and_dataset_files_round_trip_through_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    fs::write(
        &model,
        r#"{"variant": "linear", "weights": [[1.0, 0.0], [0.0, 0.0]], "bias": [0.0, 0.0]}"#,
    )
    .unwrap();
    let json = json_of(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "40",
        "--sigma",
        "0.5",
        "--alpha",
        "0.1",
        "--samples",
        "50",
    ]);
    let clean = json["clean_risk"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&clean));
}
