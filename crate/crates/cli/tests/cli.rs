//! End-to-end tests driving the built binary: every subcommand, output
//! schemas, exit codes, flag overrides and byte-level determinism.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU64, Ordering};

static CASE: AtomicU64 = AtomicU64::new(0);

fn work_dir() -> PathBuf {
    let n = CASE.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!(
        "nldiff-cli-test-{}-{n}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nldiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn base_config(extra: &str) -> String {
    format!(
        r#"{{
  "problem": {{
    "dimension": 1,
    "profile": {{"shape": "epanechnikov", "mass": 1.0}},
    "map": {{"kind": "linear", "matrix": [[2.0]]}}
  }},
  {extra},
  "seed": 7
}}"#
    )
}

#[test]
fn eigen_emits_both_conventions_and_bounds() {
    let dir = work_dir();
    let cfg = write_config(&dir, &base_config(r#""eigen": {"radius": 4.0, "spacing": 0.1}"#));
    let out_path = dir.join("eigen.json");
    let out = run(&[
        "eigen",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let lambda1 = doc["lambda1"].as_f64().unwrap();
    let lambda_t = doc["lambda_T"].as_f64().unwrap();
    assert!((lambda1 - 2.0 * lambda_t).abs() < 1e-15);
    assert!(doc["residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(doc["psi_mass"].as_f64().unwrap(), 1.0);
    assert!(doc["converged"].as_bool().unwrap());
    // Bounds block for cross-reference, with the exact linear value.
    let bounds = &doc["bounds"];
    for key in ["lower", "lower_case", "upper_sup", "upper_candidate", "exact_linear", "psi_mass"] {
        assert!(!bounds[key].is_null() || key == "upper_candidate", "missing key {key}");
    }
    assert_eq!(bounds["lower_case"].as_str().unwrap(), "M<1");
    let exact = bounds["exact_linear"].as_f64().unwrap();
    assert!((exact - 0.171_572_875_253_809_9).abs() < 1e-12);
    assert!(lambda1 >= exact - 0.002 && lambda1 <= bounds["upper_sup"].as_f64().unwrap());
}

#[test]
fn sweep_csv_schema_and_monotonicity() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(r#""sweep": {"radii": [2.0, 4.0, 8.0], "spacing": {"proportional": 80.0}}"#),
    );
    let out_path = dir.join("sweep.csv");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "R,h,lambda1,lambda_T,iterations,residual,converged");
    let rows: Vec<Vec<String>> =
        lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 3);
    let mut prev = f64::INFINITY;
    for row in &rows {
        assert_eq!(row.len(), 7);
        let lambda1: f64 = row[2].parse().unwrap();
        let lambda_t: f64 = row[3].parse().unwrap();
        assert!((lambda1 - 2.0 * lambda_t).abs() < 1e-15);
        assert!(lambda1 <= prev + 1e-8);
        assert_eq!(row[6], "true");
        prev = lambda1;
    }
}

#[test]
fn sweep_json_carries_limit_estimate() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(r#""sweep": {"radii": [2.0, 4.0, 8.0], "spacing": {"fixed": 0.05}}"#),
    );
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
    assert!(doc["limit"]["estimate"].as_f64().is_some());
    assert!(doc["limit"]["method"].is_string());
    assert_eq!(doc["psi_mass"].as_f64().unwrap(), 1.0);
}

#[test]
fn bounds_report_schema() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(
            r#""bounds": {"candidate": {"kind": "box", "lo": [0.0], "hi": [1.0]},
                          "finite_radius": {"radius": 100.0, "delta": 2.0}}"#,
        ),
    );
    // finite_radius needs gradient data, which the box indicator lacks.
    let out = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(
        &dir,
        &base_config(
            r#""bounds": {"candidate": {"kind": "bump"},
                          "finite_radius": {"radius": 100.0, "delta": 2.0}}"#,
        ),
    );
    let out = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let lower = doc["lower"].as_f64().unwrap();
    let exact = doc["exact_linear"].as_f64().unwrap();
    let upper_sup = doc["upper_sup"].as_f64().unwrap();
    let upper_candidate = doc["upper_candidate"].as_f64().unwrap();
    assert!(lower <= exact && exact <= upper_sup.min(upper_candidate) + 1e-10);
    assert_eq!(doc["lower_case"].as_str().unwrap(), "M<1");
    let fr = &doc["finite_radius"];
    assert!(fr["value"].as_f64().unwrap() >= upper_candidate * 2.0 - 1e-10);
    assert_eq!(fr["delta"].as_f64().unwrap(), 2.0);
}

#[test]
fn witness_report_schema_and_determinism() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(
            r#""witness": {"family": "expansive_geometric", "matrix": [[2.0]],
                           "sigma": 1.0, "samples": 50000}"#,
        ),
    );
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    for path in [&a, &b] {
        let out = run(&[
            "witness",
            "--config",
            cfg.to_str().unwrap(),
            "--output",
            path.to_str().unwrap(),
            "--seed",
            "123",
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let ta = std::fs::read(&a).unwrap();
    let tb = std::fs::read(&b).unwrap();
    assert_eq!(ta, tb, "same config + seed must be byte-identical");

    let doc: Value = serde_json::from_slice(&ta).unwrap();
    for key in ["family", "params", "analytic_ratio", "measured_ratio", "stderr", "samples", "seed"] {
        assert!(doc.get(key).is_some(), "missing key {key}");
    }
    assert_eq!(doc["seed"].as_u64().unwrap(), 123);
    let analytic = doc["analytic_ratio"].as_f64().unwrap();
    assert!((analytic - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
    let measured = doc["measured_ratio"].as_f64().unwrap();
    let stderr = doc["stderr"].as_f64().unwrap();
    assert!((measured - analytic).abs() <= 3.0 * stderr.max(1e-4));

    // A different seed changes the measurement.
    let c = dir.join("c.json");
    let out = run(&[
        "witness",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        c.to_str().unwrap(),
        "--seed",
        "124",
    ]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(&c).unwrap(), ta);
}

#[test]
fn witness_jordan_shear_via_cli() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(
            r#""witness": {"family": "jordan_shear", "k": 9, "lambda": 1.0,
                           "dimension": 2, "samples": 20000}"#,
        ),
    );
    let out = run(&["witness", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["analytic_ratio"].as_f64().unwrap(), 0.9);
    assert!((doc["measured_ratio"].as_f64().unwrap() - 0.9).abs() < 1e-3);
}

#[test]
fn evolve_csv_and_json() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(
            r#""evolve": {"radius": 4.0, "spacing": 0.1, "t_end": 20.0,
                          "dt_factor": 0.5, "window_fraction": 0.5}"#,
        ),
    );
    let out = run(&["evolve", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,l2sq");
    let mut prev = f64::INFINITY;
    let mut count = 0;
    for line in lines.filter(|l| !l.is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        assert_eq!(parts.len(), 2);
        let v: f64 = parts[1].parse().unwrap();
        assert!(v <= prev && v > 0.0);
        prev = v;
        count += 1;
    }
    assert!(count > 10);

    let out = run(&["evolve", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["rate", "window", "r_squared"] {
        assert!(doc.get(key).is_some(), "missing key {key}");
    }
    assert!(doc["rate"].as_f64().unwrap() > 0.0);
    assert!(doc["r_squared"].as_f64().unwrap() > 0.99);
}

#[test]
fn eigen_matrix_dump_triplets() {
    let dir = work_dir();
    let dump = dir.join("matrix.txt");
    let cfg = write_config(
        &dir,
        &base_config(&format!(
            r#""eigen": {{"radius": 2.0, "spacing": 0.25, "dump_matrix": "{}"}}"#,
            dump.display()
        )),
    );
    let out = run(&["eigen", "--config", cfg.to_str().unwrap(), "--output", dir.join("o.json").to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&dump).unwrap();
    for line in text.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(parts.len(), 3);
        let _: usize = parts[0].parse().unwrap();
        let _: usize = parts[1].parse().unwrap();
        let _: f64 = parts[2].parse().unwrap();
    }
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = work_dir();
    // Negative tolerance is rejected at validation time.
    let cfg = write_config(
        &dir,
        &base_config(r#""eigen": {"radius": 4.0, "spacing": 0.1, "tol": -1.0}"#),
    );
    let out_path = dir.join("never.json");
    let out = run(&[
        "eigen",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists(), "no output file may be written on validation failure");
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_config_keys_rejected() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(r#""eigen": {"radius": 4.0, "spacing": 0.1, "surprise": 1}"#),
    );
    let out = run(&["eigen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_2() {
    let out = run(&["eigen", "--config", "/nonexistent/nldiff.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_task_section_exits_2() {
    let dir = work_dir();
    let cfg = write_config(&dir, &base_config(r#""eigen": {"radius": 4.0, "spacing": 0.1}"#));
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonconvergence_exits_3_with_flagged_output() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(r#""eigen": {"radius": 4.0, "spacing": 0.05, "tol": 1e-15, "maxiter": 3}"#),
    );
    let out_path = dir.join("eigen.json");
    let out = run(&[
        "eigen",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    // The best iterate is still written, flagged non-converged.
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(!doc["converged"].as_bool().unwrap());
}

#[test]
fn csv_format_rejected_for_json_only_tasks() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(r#""bounds": {"candidate": null, "finite_radius": null}"#),
    );
    let out = run(&["bounds", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_flag_overrides_config_path() {
    let dir = work_dir();
    let config_target = dir.join("from_config.json");
    let flag_target = dir.join("from_flag.json");
    let cfg = write_config(
        &dir,
        &format!(
            r#"{{
  "problem": {{
    "dimension": 1,
    "profile": {{"shape": "epanechnikov"}},
    "map": {{"kind": "linear", "matrix": [[2.0]]}}
  }},
  "eigen": {{"radius": 2.0, "spacing": 0.1}},
  "output": {{"path": "{}", "format": "json"}}
}}"#,
            config_target.display()
        ),
    );
    let out = run(&[
        "eigen",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        flag_target.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(flag_target.exists());
    assert!(!config_target.exists());
}

#[test]
fn scaled_sine_problem_end_to_end() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &format!(
            r#"{{
  "problem": {{
    "dimension": 1,
    "profile": {{"shape": "epanechnikov", "mass": 1.0}},
    "map": {{"kind": "scaled_sine", "alpha": 2.0, "beta": 0.25}}
  }},
  "bounds": {{"candidate": null, "finite_radius": null}}
}}"#
        ),
    );
    let out = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["exact_linear"].is_null());
    let lower = doc["lower"].as_f64().unwrap();
    assert!((lower - 0.11914).abs() < 5e-5);
}

#[test]
fn jordan_block_data_accepted_and_validated() {
    let dir = work_dir();
    // A = C J C^{-1} with a 2x2 shear block at eigenvalue 2 and
    // C = [[1,1],[0,1]]: A = [[2,1],[0,2]].
    let good = write_config(
        &dir,
        r#"{
  "problem": {
    "dimension": 2,
    "profile": {"shape": "epanechnikov"},
    "map": {"kind": "linear", "matrix": [[2.0, 1.0], [0.0, 2.0]],
            "jordan": {"transform": [[1.0, 1.0], [0.0, 1.0]],
                       "blocks": [{"type": "real", "eigenvalue": 2.0, "size": 2}]}}
  },
  "bounds": {"candidate": null, "finite_radius": null}
}"#,
    );
    let out = run(&["bounds", "--config", good.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    // |det A| = 4: exact value 2 (1 - 1/2)^2 = 0.5.
    assert!((doc["exact_linear"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    // Wrong block data is rejected at validation time.
    let bad = write_config(
        &dir,
        r#"{
  "problem": {
    "dimension": 2,
    "profile": {"shape": "epanechnikov"},
    "map": {"kind": "linear", "matrix": [[2.0, 1.0], [0.0, 2.0]],
            "jordan": {"transform": [[1.0, 0.0], [0.0, 1.0]],
                       "blocks": [{"type": "real", "eigenvalue": 3.0, "size": 2}]}}
  },
  "bounds": {"candidate": null, "finite_radius": null}
}"#,
    );
    let out = run(&["bounds", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn composed_witness_via_cli() {
    let dir = work_dir();
    let cfg = write_config(
        &dir,
        &base_config(
            r#""witness": {"family": "composed", "transform": [[1.0, 0.0], [0.0, 1.0]],
                           "blocks": [
                             {"family": "power_law", "alphas": [2.0], "sigma": 0.49, "eps": 1.0},
                             {"family": "power_law", "alphas": [1.0], "sigma": 0.49, "eps": 1.0}
                           ]}"#,
        ),
    );
    let out = run(&["witness", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["family"].as_str().unwrap(), "composed");
    // Product of per-block ratios: 2^{-0.01} * 1.
    assert!((doc["analytic_ratio"].as_f64().unwrap() - 2.0f64.powf(-0.01)).abs() < 1e-12);
}

#[test]
fn eigen_runs_are_deterministic() {
    let dir = work_dir();
    let cfg = write_config(&dir, &base_config(r#""eigen": {"radius": 4.0, "spacing": 0.1}"#));
    let a = run(&["eigen", "--config", cfg.to_str().unwrap()]);
    let b = run(&["eigen", "--config", cfg.to_str().unwrap()]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}
