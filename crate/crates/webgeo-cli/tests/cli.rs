//! End-to-end tests of the binary: exit codes, file outputs, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_webgeo")
}

struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    fn new(tag: &str) -> Workspace {
        let dir =
            std::env::temp_dir().join(format!("webgeo-cli-test-{}-{}", tag, std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        Workspace { dir }
    }

    fn write_config(&self, name: &str, body: &str) -> PathBuf {
        let path = self.dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn out_dir(&self) -> PathBuf {
        self.dir.join("out")
    }

    fn run(&self, config: &Path, args: &[&str]) -> Output {
        Command::new(bin())
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.out_dir())
            .args(args)
            .output()
            .expect("binary runs")
    }

    fn json(&self, name: &str) -> serde_json::Value {
        let text = fs::read_to_string(self.out_dir().join(name)).unwrap();
        serde_json::from_str(&text).unwrap()
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn analyze_flat_web_passes_with_zero_grids() {
    let ws = Workspace::new("analyze-flat");
    let cfg = ws.write_config("job.cfg", "[web]\nbuiltin = flat\n[grids]\ncurvature = 8\n");
    let out = ws.run(&cfg, &["analyze"]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let summary = ws.json("analyze.json");
    assert_eq!(summary["checks_pass"], true);
    assert_eq!(summary["max_rho_disagreement"], 0.0);

    let csv = fs::read_to_string(ws.out_dir().join("curvature.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# webgeo "));
    assert_eq!(lines.next().unwrap(), "x,y,rho_direct,rho_compact");
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[2], 0.0);
        assert_eq!(cols[3], 0.0);
    }
}

#[test]
fn analyze_constant_curvature_rho_grid() {
    let ws = Workspace::new("analyze-cc");
    let cfg = ws.write_config(
        "job.cfg",
        "[web]\nbuiltin = constant_curvature:1.0\n[grids]\ncurvature = 8\n",
    );
    let out = ws.run(&cfg, &["analyze"]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(ws.out_dir().join("curvature.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[2] - 1.0).abs() < 1e-8, "rho_direct = {}", cols[2]);
        assert!((cols[3] - 1.0).abs() < 1e-8, "rho_compact = {}", cols[3]);
    }
}

#[test]
fn analyze_transversality_violation_exits_3() {
    let ws = Workspace::new("analyze-xy");
    let cfg = ws.write_config(
        "job.cfg",
        "[web]\nw = x*y\n[domain]\nx_min = 0.1\nx_max = 1.0\ny_min = -1.0\ny_max = 1.0\n",
    );
    let out = ws.run(&cfg, &["analyze"]);
    assert_eq!(code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("transversality"), "stderr: {stderr}");
}

#[test]
fn missing_or_malformed_config_exits_2() {
    let ws = Workspace::new("bad-config");
    let out = ws.run(Path::new("/nonexistent/job.cfg"), &["analyze"]);
    assert_eq!(code(&out), 2);

    let cfg = ws.write_config("job.cfg", "[web]\nbuiltin = flat\nw = x+y\n");
    let out = ws.run(&cfg, &["analyze"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("exactly one"));
}

#[test]
fn verify_flat_passes_and_is_deterministic() {
    let ws = Workspace::new("verify-flat");
    let cfg = ws.write_config(
        "job.cfg",
        "[web]\nbuiltin = flat\n[domain]\ny_min = -1.0\ny_max = 2.0\n",
    );
    let out = ws.run(&cfg, &["verify"]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let first = fs::read_to_string(ws.out_dir().join("verify.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(summary["all_pass"], true);

    let out = ws.run(&cfg, &["verify"]);
    assert_eq!(code(&out), 0);
    let second = fs::read_to_string(ws.out_dir().join("verify.json")).unwrap();
    assert_eq!(first, second, "verify report must be deterministic");
}

#[test]
fn verify_with_fault_injection_exits_1() {
    let ws = Workspace::new("verify-perturbed");
    let cfg = ws.write_config("job.cfg", "[web]\nbuiltin = constant_curvature:1.0\n");
    let out = ws.run(&cfg, &["--perturb-gamma", "0.1", "verify"]);
    assert_eq!(
        code(&out),
        1,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let summary = ws.json("verify.json");
    assert_eq!(summary["all_pass"], false);
    let records = summary["records"].as_array().unwrap();
    let failed: Vec<&str> = records
        .iter()
        .filter(|r| r["pass"] == false)
        .map(|r| r["name"].as_str().unwrap())
        .collect();
    assert!(
        failed.contains(&"conn.ricci_skewness"),
        "failed: {failed:?}"
    );
    assert!(failed.contains(&"conn.geodesy_cross"), "failed: {failed:?}");
}

#[test]
fn dual_flat_k0_small() {
    let ws = Workspace::new("dual-flat");
    let cfg = ws.write_config(
        "job.cfg",
        "[web]\nbuiltin = flat\n[domain]\ny_min = -1.0\ny_max = 2.0\n\
         [grids]\ndual_t = 3\ndual_x = 3\ndual_y = 3\n\
         dual_t_min = 0.2\ndual_t_max = 0.6\ndual_x_min = 0.3\ndual_x_max = 0.7\n\
         dual_y_min = 0.3\ndual_y_max = 0.7\n",
    );
    let out = ws.run(&cfg, &["dual"]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = ws.json("dual.json");
    assert_eq!(summary["failures"], 0);
    assert!(summary["max_abs_k0"].as_f64().unwrap() < 1e-5);
    assert!(summary["max_abs_f"].as_f64().unwrap() < 1e-6);
}

#[test]
fn dual_box_mode_reports_partial_failures() {
    let ws = Workspace::new("dual-box");
    // z range straddles the image of the domain: some points solvable, the
    // far ones not
    let cfg = ws.write_config(
        "job.cfg",
        "[web]\nbuiltin = flat\n[domain]\ny_min = -1.0\ny_max = 2.0\n\
         [grids]\ndual_mode = box\ndual_t = 2\ndual_z = 4\ndual_p = 2\n\
         dual_t_min = 0.3\ndual_t_max = 0.5\ndual_z_min = 0.4\ndual_z_max = 40.0\n\
         dual_p_min = 0.3\ndual_p_max = 0.6\n",
    );
    let out = ws.run(&cfg, &["dual"]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = ws.json("dual.json");
    let failures = summary["failures"].as_u64().unwrap();
    let points = summary["points"].as_u64().unwrap();
    assert!(failures > 0, "expected out-of-image failures");
    assert!(points > 0, "expected a partial grid");
}

#[test]
fn geodesics_continue_past_bad_initial_condition() {
    let ws = Workspace::new("geodesics-bad-ic");
    let cfg = ws.write_config(
        "job.cfg",
        "[web]\nw = x + y + x*y\n[geodesics]\nic = 0.1 0.6 0.25\nic = 7.0 7.0 0.0\n",
    );
    let out = ws.run(&cfg, &["geodesics"]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = ws.json("geodesics.json");
    assert_eq!(summary["succeeded"], 1);
    assert_eq!(summary["failed"], 1);
    let curves = summary["curves"].as_array().unwrap();
    assert_eq!(curves[1]["status"], "error");
    assert!(curves[1]["error"].as_str().unwrap().contains("domain"));
    // the good curve cross-checks against its leaf
    assert!(curves[0]["max_leaf_defect"].as_f64().unwrap() < 1e-8);
}

#[test]
fn geodesics_ic_flag_and_csv_output() {
    let ws = Workspace::new("geodesics-flag");
    let cfg = ws.write_config("job.cfg", "[web]\nbuiltin = flat\n");
    let out = ws.run(&cfg, &["geodesics", "--ic", "0.1,0.5,0.3"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(ws.out_dir().join("geodesic_00.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let cols: Vec<f64> = last.split(',').map(|c| c.parse().unwrap()).collect();
    // flat geodesic: straight line y = 0.5 + 0.3 (x - 0.1)
    assert!((cols[1] - (0.5 + 0.3 * (cols[0] - 0.1))).abs() < 1e-10);
}
