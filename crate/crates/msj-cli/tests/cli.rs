//! End-to-end checks of the binary: exit codes, output schemas, and
//! byte-for-byte determinism across repeated invocations.

use std::process::{Command, Output};

fn msj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msj"))
        .args(args)
        .env("MSJ_THREADS", "2")
        .output()
        .expect("binary runs")
}

const SYSTEM_3_10_30: &[&str] = &[
    "--n1", "3", "--n2", "10", "--n", "30", "--mu1", "2", "--mu2", "1", "--p1", "0.5",
];

#[test]
fn analyze_emits_report_json() {
    let out = msj(&[&["analyze"], SYSTEM_3_10_30].concat());
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["params"]["n1"], 3);
    let lambda_star = json["lambda_star"].as_f64().unwrap();
    let lambda_naive = json["lambda_naive"].as_f64().unwrap();
    assert!(lambda_star > 0.0 && lambda_star <= lambda_naive);
    let wastage = json["limiting_wastage"].as_f64().unwrap();
    let gap = (lambda_naive - lambda_star) * json["mean_server_seconds"].as_f64().unwrap();
    assert!((wastage - gap).abs() < 1e-9);
}

#[test]
fn analyze_csv_has_header_row() {
    let out = msj(&[&["analyze"], SYSTEM_3_10_30, &["--format", "csv"]].concat());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n1,n2,n,mu1,mu2,p1,lambda_star,lambda_naive,mean_server_seconds,limiting_wastage,utilization"
    );
    assert_eq!(lines.next().unwrap().split(',').count(), 11);
}

#[test]
fn invalid_params_exit_1_with_machine_readable_error() {
    let out = msj(&[
        "analyze", "--n1", "5", "--n2", "5", "--n", "10", "--mu1", "1", "--mu2", "1", "--p1", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("n1"));
}

#[test]
fn unknown_flag_exits_2() {
    let out = msj(&["analyze", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_and_respects_tolerance_flag() {
    let out = msj(&[&["verify"], SYSTEM_3_10_30].concat());
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["passed"], true);

    // An absurdly tight tolerance must flip the exit code to 3.
    let out = msj(&[&["verify"], SYSTEM_3_10_30, &["--tol", "1e-18"]].concat());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_ratio_csv_schema() {
    let out = msj(&[
        "sweep-ratio",
        "--n1",
        "1",
        "--n2",
        "10",
        "--n",
        "30",
        "--p1",
        "0.5",
        "--ratios",
        "1e-2:1e2:log:9",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ratio,wastage");
    assert_eq!(lines.len(), 10);
    for line in &lines[1..] {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 2);
        assert!(fields[1] >= 0.0);
    }
}

#[test]
fn sweep_mix_csv_schema() {
    let out = msj(&[
        "sweep-mix",
        "--n1",
        "1",
        "--n2",
        "4",
        "--n",
        "8",
        "--mu1",
        "2",
        "--mu2",
        "1",
        "--p2s",
        "0:1:lin:5",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "p2,lambda1_star,lambda2_star,wastage,utilization,naive_lambda1,naive_lambda2"
    );
    assert_eq!(lines.len(), 6);
}

#[test]
fn sweep_json_embeds_parameters() {
    let out = msj(&[
        "sweep-ratio",
        "--n1",
        "1",
        "--n2",
        "10",
        "--n",
        "30",
        "--p1",
        "0.5",
        "--ratios",
        "1:10:log:3",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["n2"], 10);
    assert_eq!(json["p1"], 0.5);
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let args: Vec<&str> = [
        &["simulate"][..],
        SYSTEM_3_10_30,
        &["--mode", "saturated", "--horizon", "2000", "--seed", "17"][..],
    ]
    .concat();
    let a = msj(&args);
    let b = msj(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let sweep_args = [
        "sweep-ratio",
        "--n1",
        "1",
        "--n2",
        "10",
        "--n",
        "30",
        "--p1",
        "0.5",
        "--ratios",
        "1e-1:1e1:log:32",
    ];
    let a = msj(&sweep_args);
    let b = msj(&sweep_args);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_open_mode_reports_response_time() {
    let out = msj(&[
        "simulate",
        "--n1",
        "1",
        "--n2",
        "2",
        "--n",
        "2",
        "--mu1",
        "1",
        "--mu2",
        "1",
        "--p1",
        "0.5",
        "--mode",
        "open",
        "--lambda",
        "0.5",
        "--horizon",
        "20000",
        "--seed",
        "5",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(
        json["stats"]["mean_response_time"]["value"]
            .as_f64()
            .unwrap()
            > 0.0
    );
    assert!(json["stats"]["mean_queue_length"].as_f64().unwrap() >= 0.0);
    // Open mode without --lambda is a usage error from the model layer.
    let out = msj(&[
        "simulate",
        "--n1",
        "1",
        "--n2",
        "2",
        "--n",
        "2",
        "--mu1",
        "1",
        "--mu2",
        "1",
        "--p1",
        "0.5",
        "--mode",
        "open",
        "--horizon",
        "1000",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rm_reports_throughput_and_verdict() {
    let out = msj(&[
        "rm", "--n", "2", "--mu", "1", "--class", "1:0.5", "--class", "2:0.5", "--lambda", "1.2",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let x = json["throughput"].as_f64().unwrap();
    assert!((x - 8.0 / 7.0).abs() < 1e-12);
    assert_eq!(json["verdict"], "unstable");
    assert!((json["throughput_enumerated"].as_f64().unwrap() - x).abs() < 1e-12);
}

#[test]
fn output_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("msj-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let out = msj(&[
        &["analyze"],
        SYSTEM_3_10_30,
        &["--output", path.to_str().unwrap()],
    ]
    .concat());
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert!(json["lambda_star"].as_f64().unwrap() > 0.0);
    std::fs::remove_dir_all(&dir).ok();
}
