use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbi"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cbi-cli-test-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const CIR_PARAMS: &str = r#"{"c":0.5,"a":1.0,"b":0.3,"nu":{},"mu":{},"x0":2.0}"#;
const PURE_IMMIGRATION_PARAMS: &str =
    r#"{"c":0.0,"a":0.0,"b":0.2,"nu":{"atoms":[{"size":1.0,"mass":1.0}]},"mu":{},"x0":1.0}"#;

#[test]
fn derive_prints_constants() {
    let dir = tmp_dir("derive");
    let params = dir.join("params.json");
    std::fs::write(&params, CIR_PARAMS).unwrap();
    let out = bin()
        .args(["derive", "--config"])
        .arg(&params)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["growth_rate"].as_f64().unwrap() - 0.3).abs() < 1e-14);
    assert!((v["variance_activity"].as_f64().unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn simulate_then_estimate_round_trips_bit_exactly() {
    let dir = tmp_dir("roundtrip");
    let params = dir.join("params.json");
    std::fs::write(&params, PURE_IMMIGRATION_PARAMS).unwrap();
    let csv = dir.join("path.csv");
    let status = bin()
        .args([
            "simulate",
            "--n",
            "80",
            "--scheme",
            "exact_pure_immigration",
            "--seed",
            "42",
        ])
        .arg("--config")
        .arg(&params)
        .arg("--out")
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());

    let out = bin()
        .args(["estimate"])
        .arg("--path")
        .arg(&csv)
        .arg("--params")
        .arg(&params)
        .output()
        .unwrap();
    assert!(out.status.success());
    let cli_result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();

    // in-process reference: same seed, same scheme, same estimator
    let p: cbi::model::CbiParams = serde_json::from_str(PURE_IMMIGRATION_PARAMS).unwrap();
    let path = cbi::simulate::simulate(&p, cbi::simulate::Scheme::ExactPureImmigration, 80, 1, 42)
        .unwrap();
    let reference = cbi::estimate::estimate_all(&path, &p.derive());
    assert_eq!(
        cli_result["growth_rate"].as_f64().unwrap().to_bits(),
        reference.growth_rate.unwrap().to_bits(),
        "CSV round trip must be bit-exact"
    );
    assert_eq!(
        cli_result["step_growth"].as_f64().unwrap().to_bits(),
        reference.step_growth.unwrap().to_bits()
    );
}

#[test]
fn charfn_emits_a_grid() {
    let dir = tmp_dir("charfn");
    let params = dir.join("params.json");
    std::fs::write(&params, CIR_PARAMS).unwrap();
    let out = bin()
        .args([
            "charfn",
            "--t",
            "1.0",
            "--x",
            "2.0",
            "--theta-grid",
            "-3:3:7",
        ])
        .arg("--config")
        .arg(&params)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "theta,re,im");
    assert_eq!(lines.len(), 8);
    // theta = 0 row is exactly 1 + 0i
    assert!(lines[4].starts_with("0,1,0") || lines[4].starts_with("0,1.0,0"));
}

#[test]
fn experiment_outputs_are_reproducible() {
    let dir = tmp_dir("experiment");
    let cfg = dir.join("exp.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"params":{PURE_IMMIGRATION_PARAMS},"n":50,"replicates":120,"master_seed":7,
                "statistics":["growth_pure_immigration","immigration_pure_immigration"],
                "scheme":"exact_pure_immigration","reference_draws":2000,"series_tol":1e-3}}"#
        ),
    )
    .unwrap();
    let out1 = dir.join("r1.json");
    let out2 = dir.join("r2.json");
    let csv = dir.join("stats.csv");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["experiment"])
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .arg("--csv")
            .arg(&csv)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out2).unwrap(),
        "reports must be byte-identical"
    );
    let stats = std::fs::read_to_string(&csv).unwrap();
    assert!(stats.starts_with("replicate,statistic,value,defined\n"));
}

#[test]
fn validate_analytic_passes_quickly() {
    let dir = tmp_dir("validate");
    let summary_path = dir.join("summary.json");
    let start = std::time::Instant::now();
    let status = bin()
        .args(["validate", "--suite", "analytic"])
        .arg("--out")
        .arg(&summary_path)
        .status()
        .unwrap();
    assert!(status.success(), "analytic suite must pass with exit 0");
    assert!(
        start.elapsed().as_secs() < 10,
        "analytic suite budget is 10 s"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary_path).unwrap()).unwrap();
    assert_eq!(summary["all_passed"], serde_json::Value::Bool(true));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let out = bin()
        .args(["validate", "--suite", "bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_with_unknown_fields_is_rejected() {
    let dir = tmp_dir("badcfg");
    let params = dir.join("params.json");
    std::fs::write(&params, r#"{"c":0.5,"a":1.0,"b":0.3,"x0":2.0,"bogus":1}"#).unwrap();
    let out = bin()
        .args([
            "simulate",
            "--n",
            "5",
            "--scheme",
            "exact_cir",
            "--seed",
            "1",
        ])
        .arg("--config")
        .arg(&params)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn limits_sampler_is_seed_deterministic() {
    let dir = tmp_dir("limits");
    let params = dir.join("params.json");
    std::fs::write(&params, PURE_IMMIGRATION_PARAMS).unwrap();
    let run = || {
        bin()
            .args([
                "limits",
                "sample",
                "--kind",
                "series-c0",
                "--n",
                "64",
                "--seed",
                "5",
            ])
            .arg("--config")
            .arg(&params)
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8(a.stdout).unwrap().starts_with("draw\n"));
}
