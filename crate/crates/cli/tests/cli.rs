use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const PAPER: &str = "[scenario]\npreset = \"paper-default\"\n";

const NOISELESS: &str = r#"
[scenario]
sample_time = 0.05
turn_rate = 3.0
turn_rate_unit = "deg/s"
q = [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]
r = [[0, 0], [0, 0]]
x0 = [200, 200, 15, 15]
init_mean = [200, 200, 15, 15]
init_cov = [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]
horizon = 50

[attack]
alpha_a = 0.0
alpha_b = 1.0
alpha_c = 1.0
alpha_m = 0.0
mu_a = [0, 0]
sigma_a = [[0, 0], [0, 0]]
mu_m = 1.0
sigma_m_sq = 0.0

[execution]
runs = 1
"#;

fn attackkf(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attackkf"))
        .args(args)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn out_dir(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| {
        panic!(
            "stderr is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn numeric_rows(path: &Path) -> Vec<Vec<f64>> {
    read_rows(path)
        .into_iter()
        .map(|r| r.iter().map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn simulate(cfg: &Path, out: &Path, seed: &str) -> Output {
    attackkf(
        &["simulate", "--seed", seed, "--config"],
        &[cfg, Path::new("--out"), out],
    )
}

#[test]
fn simulate_writes_400_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, PAPER);
    let (a, b) = (out_dir(&dir, "a"), out_dir(&dir, "b"));
    for out in [&a, &b] {
        let o = simulate(&cfg, out, "7");
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["truth.csv", "measurements.csv", "attack_log.csv"] {
        let bytes = fs::read(a.join(name)).unwrap();
        assert_eq!(bytes, fs::read(b.join(name)).unwrap(), "{name} differs");
        let text = String::from_utf8(bytes).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 401, "{name}");
    }
    let header = fs::read_to_string(a.join("attack_log.csv")).unwrap();
    assert!(header.starts_with("step,xi_b,xi_c,xi_a,xi_m,attack_type\n"));
    assert!(fs::read_to_string(a.join("truth.csv"))
        .unwrap()
        .starts_with("step,x1,x2,x3,x4\n"));
}

#[test]
fn different_seeds_give_different_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, PAPER);
    let (a, b) = (out_dir(&dir, "a"), out_dir(&dir, "b"));
    assert!(simulate(&cfg, &a, "1").status.success());
    assert!(simulate(&cfg, &b, "2").status.success());
    assert_ne!(
        fs::read(a.join("measurements.csv")).unwrap(),
        fs::read(b.join("measurements.csv")).unwrap()
    );
}

#[test]
fn disabled_attack_logs_only_clean_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, &format!("{PAPER}[attack]\nalpha_b = 1.0\n"));
    let out = out_dir(&dir, "sim");
    assert!(simulate(&cfg, &out, "3").status.success());
    let rows = read_rows(&out.join("attack_log.csv"));
    assert_eq!(rows.len(), 400);
    assert!(rows.iter().all(|r| r[5] == "no_attack" && r[1] == "1"));
}

#[test]
fn estimate_preserves_length_and_matches_standard_without_attack() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, &format!("{PAPER}[attack]\nalpha_b = 1.0\n"));
    let sim = out_dir(&dir, "sim");
    assert!(simulate(&cfg, &sim, "11").status.success());
    let input = sim.join("measurements.csv");

    let (p, s) = (out_dir(&dir, "proposed"), out_dir(&dir, "standard"));
    for (out, est) in [(&p, "proposed"), (&s, "standard")] {
        let o = attackkf(
            &["estimate", "--estimator", est, "--full-cov", "--config"],
            &[&cfg, Path::new("--input"), &input, Path::new("--out"), out],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["filtered.csv", "smoothed.csv"] {
        let (a, b) = (numeric_rows(&p.join(name)), numeric_rows(&s.join(name)));
        assert_eq!(a.len(), 400);
        assert_eq!(b.len(), 400);
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() <= 1e-10, "{name}: {x} vs {y}");
            }
        }
    }
    let full: serde_json::Value =
        serde_json::from_slice(&fs::read(p.join("covariances.json")).unwrap()).unwrap();
    assert_eq!(full["filtered"].as_array().unwrap().len(), 400);
    assert_eq!(full["smoothed"][399]["cov"].as_array().unwrap().len(), 4);
}

#[test]
fn estimate_reports_line_of_malformed_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, PAPER);
    let mut text = String::from("step,y1,y2\n");
    for k in 1..=30 {
        if k == 16 {
            text.push_str("16,1.0,not-a-number\n");
        } else {
            text.push_str(&format!("{k},1.0,2.0\n"));
        }
    }
    let input = dir.path().join("bad.csv");
    fs::write(&input, text).unwrap();
    let o = attackkf(
        &["estimate", "--config"],
        &[
            &cfg,
            Path::new("--input"),
            &input,
            Path::new("--out"),
            &out_dir(&dir, "e"),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"]["line"], 17);
    assert_eq!(err["error"]["kind"], "data");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 17"));
}

#[test]
fn estimate_rejects_wrong_width() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, PAPER);
    let input = dir.path().join("wide.csv");
    fs::write(&input, "step,y1,y2,y3\n1,0,0,0\n").unwrap();
    let o = attackkf(
        &["estimate", "--config"],
        &[
            &cfg,
            Path::new("--input"),
            &input,
            Path::new("--out"),
            &out_dir(&dir, "e"),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn noiseless_benchmark_has_zero_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, NOISELESS);
    let out = out_dir(&dir, "bench");
    let o = attackkf(&["benchmark", "--config"], &[&cfg, Path::new("--out"), &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = numeric_rows(&out.join("rmse.csv"));
    assert_eq!(rows.len(), 50);
    for row in rows {
        assert!(row[2..].iter().all(|v| v.abs() < 1e-9), "{row:?}");
    }
}

#[test]
fn benchmark_summary_has_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, PAPER);
    let out = out_dir(&dir, "bench");
    let o = attackkf(
        &[
            "benchmark",
            "--runs",
            "5",
            "--seed",
            "9",
            "--methods",
            "proposed_kf,standard-kf",
            "--config",
        ],
        &[&cfg, Path::new("--out"), &out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 5);
    assert_eq!(summary["base_seed"], 9);
    assert_eq!(summary["trimmed_steps"], 40);
    let methods = summary["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    assert_eq!(methods[1]["method"], "standard_kf");
    let header = fs::read_to_string(out.join("rmse.csv")).unwrap();
    assert!(header.starts_with(
        "step,time_s,proposed_kf_position_rmse,proposed_kf_velocity_rmse,\
         standard_kf_position_rmse,standard_kf_velocity_rmse\n"
    ));
    assert!(out.join("timing.json").is_file());
}

#[test]
fn json_format_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &dir,
        &format!("{PAPER}[execution]\nformat = \"json\"\nruns = 2\n"),
    );
    let out = out_dir(&dir, "bench");
    let o = attackkf(&["benchmark", "--config"], &[&cfg, Path::new("--out"), &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rmse: serde_json::Value = serde_json::from_slice(&fs::read(out.join("rmse.json")).unwrap()).unwrap();
    assert_eq!(rmse.as_array().unwrap().len(), 400);
    assert_eq!(rmse[0]["step"], 1);
}

#[test]
fn validate_accepts_paper_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, PAPER);
    let o = attackkf(&["validate", "--config"], &[&cfg]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["valid"], true);
}

#[test]
fn validate_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &dir,
        &format!("{PAPER}[attack]\nalpha_c = 1.3\nsigma_a = [[1.0, 2.0], [2.0, 1.0]]\n"),
    );
    let o = attackkf(&["validate", "--config"], &[&cfg]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["valid"], false);
    let messages: Vec<String> = report["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["message"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(messages.len(), 2, "{messages:?}");
    assert!(messages
        .iter()
        .any(|m| m.contains("alpha_c") && m.contains("[0, 1]")));
    assert!(messages.iter().any(|m| m.contains("positive semidefinite")));
}

#[test]
fn validate_reports_toml_syntax_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "[scenario\npreset = 1\n");
    let o = attackkf(&["validate", "--config"], &[&cfg]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["violations"][0]["field"], "toml line 1");
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, &format!("{PAPER}[attack]\nalpha_b = 2.0\n"));
    let o = attackkf(&["benchmark", "--config"], &[&cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr_json(&o);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["violations"][0]["message"]
        .as_str()
        .unwrap()
        .contains("alpha_b"));
}

#[test]
fn usage_errors_exit_with_one() {
    let o = attackkf(&["benchmark", "--runs", "many"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"]["kind"], "usage");
    let o = attackkf(&["frobnicate"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_config_file_exits_with_one() {
    let o = attackkf(&["simulate", "--config", "/nonexistent/config.toml"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_json(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("cannot read config"));
}
