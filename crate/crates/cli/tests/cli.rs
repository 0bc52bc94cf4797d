use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

struct Case {
    dir: tempfile::TempDir,
}

impl Case {
    fn new(config: Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.json"), config.to_string()).unwrap();
        Self { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn run(&self, cmd: &str, sets: &[&str]) -> Output {
        let mut c = Command::new(env!("CARGO_BIN_EXE_finchord"));
        c.arg(cmd)
            .arg("--config")
            .arg(self.dir.path().join("run.json"))
            .arg("--out")
            .arg(self.out());
        for s in sets {
            c.arg("--set").arg(s);
        }
        c.output().unwrap()
    }

    fn json(&self, name: &str) -> Value {
        read_json(&self.out().join(name))
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ellipse() -> Value {
    json!({
        "metric": {"type": "euclidean", "dimension": 2},
        "domain": {"type": "ellipsoid", "semi_axes": [2.0, 1.0], "delta0": 0.25},
        "solve": {"a": [0.3, 0.99], "b": [-0.2, -0.99]},
        "search": {"boundary_grid": 16},
        "sweep": {"boundary_grid": 8}
    })
}

fn ball(radius: f64) -> Value {
    // the strip must not reach the center
    let delta0 = 0.25 * radius * radius;
    json!({
        "metric": {"type": "euclidean", "dimension": 2},
        "domain": {"type": "ball", "center": [0.0, 0.0], "radius": radius, "delta0": delta0},
        "sweep": {"boundary_grid": 16}
    })
}

#[test]
fn solve_ellipse_near_minor_axis() {
    let case = Case::new(ellipse());
    let o = case.run("solve", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = case.json("report.json");
    assert_eq!(rep["chord"]["classification"], "ofgc");
    assert!((rep["chord"]["energy"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    let csv = std::fs::read_to_string(case.out().join("chord.csv")).unwrap();
    assert!(csv.starts_with("s,q1,q2\n"));
    assert_eq!(csv.lines().count(), 66);
}

#[test]
fn solve_output_is_byte_identical() {
    let case = Case::new(ellipse());
    case.run("solve", &[]);
    let first = std::fs::read(case.out().join("report.json")).unwrap();
    case.run("solve", &[]);
    assert_eq!(
        first,
        std::fs::read(case.out().join("report.json")).unwrap()
    );
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("\"energy\": 2.0000000000000"), "{text}");
}

#[test]
fn missing_metric_file_is_a_config_error() {
    let mut cfg = ellipse();
    cfg["metric"] = json!("no_such_metric.json");
    let o = Case::new(cfg).run("solve", &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_metric.json"));
}

#[test]
fn malformed_config_and_usage_errors_exit_one() {
    let case = Case::new(json!({"metric": {"type": "warp"}}));
    assert_eq!(code(&case.run("solve", &[])), 1);
    assert_eq!(code(&Case::new(ellipse()).run("solve", &["n=4"])), 1);
    assert_eq!(code(&Case::new(ball(1.0)).run("solve", &[])), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_finchord"))
        .arg("frobnicate")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn iteration_cap_gives_unconverged() {
    let case = Case::new(ellipse());
    let o = case.run("solve", &["penalty.max_iters=1"]);
    assert_eq!(code(&o), 2);
    assert_eq!(
        case.json("report.json")["chord"]["classification"],
        "unconverged"
    );
}

#[test]
fn search_ellipse_finds_both_axes() {
    let case = Case::new(ellipse());
    let o = case.run("search", &[]);
    assert_eq!(code(&o), 0);
    let rep = case.json("search.json");
    assert_eq!(rep["distinct"].as_array().unwrap().len(), 2);
    let summary = std::fs::read_to_string(case.out().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 121);
    for d in rep["distinct"].as_array().unwrap() {
        assert!(case.out().join(d["curve_csv"].as_str().unwrap()).exists());
    }
}

#[test]
fn search_randers_ball_finds_two_values() {
    let case = Case::new(json!({
        "metric": {"type": "randers", "drift": [0.3333333333333333, 0.0]},
        "domain": {"type": "ball", "center": [0.0, 0.0], "radius": 0.5, "delta0": 0.1},
        "search": {"boundary_grid": 12}
    }));
    let o = case.run("search", &[]);
    assert_eq!(code(&o), 0);
    assert!(
        case.json("search.json")["critical_values"]
            .as_array()
            .unwrap()
            .len()
            >= 2
    );
}

#[test]
fn coarse_grid_is_a_shortfall() {
    let case = Case::new(ellipse());
    let o = case.run("search", &["search.boundary_grid=2"]);
    assert_eq!(code(&o), 3);
    assert_eq!(case.json("search.json")["meets_expected_count"], false);
}

#[test]
fn verify_passes_and_reports_corruption() {
    let case = Case::new(json!({
        "metric": {"type": "randers", "drift": [0.2, 0.1]},
        "domain": {"type": "ball", "center": [0.0, 0.0], "radius": 1.0, "delta0": 0.25}
    }));
    assert_eq!(code(&case.run("verify", &[])), 0);
    let o = case.run("verify", &["verify.euler_tolerance=1e-300"]);
    assert_eq!(code(&o), 4);
    let table = String::from_utf8_lossy(&o.stdout);
    let line = table.lines().find(|l| l.contains("FAIL")).unwrap();
    assert!(line.starts_with("euler_identities"));
}

#[test]
fn verify_pnorm_counts_skips() {
    let case = Case::new(json!({
        "metric": {"type": "pnorm", "dimension": 3, "p": 3.0},
        "domain": {"type": "ball", "center": [0.0, 0.0, 0.0], "radius": 1.0, "delta0": 0.25}
    }));
    assert_eq!(code(&case.run("verify", &[])), 0);
    let rep = case.json("verify.json");
    let euler = rep
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == "euler_identities")
        .unwrap();
    assert!(euler["skipped"].as_u64().unwrap() > 0);
}

#[test]
fn sweep_unit_ball_constants() {
    let case = Case::new(ball(1.0));
    assert_eq!(code(&case.run("sweep", &[])), 0);
    let rep = case.json("sweep.json");
    assert!((rep["delta_M"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((rep["delta_m"].as_f64().unwrap() - 0.0625 / 3.0).abs() < 1e-3);
    let csv = std::fs::read_to_string(case.out().join("sweep.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("theta_a,theta_b,energy"));
    let mut diagonal = 0;
    for row in rows {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        if v[0] == v[1] {
            assert_eq!(v[2], 0.0);
            diagonal += 1;
        }
    }
    assert_eq!(diagonal, 16);
}

#[test]
fn sweep_scales_with_radius_squared() {
    let case = Case::new(ball(0.5));
    assert_eq!(code(&case.run("sweep", &[])), 0);
    assert!((case.json("sweep.json")["delta_M"].as_f64().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn sweep_rejects_dimension_four() {
    let case = Case::new(json!({
        "metric": {"type": "euclidean", "dimension": 4},
        "domain": {"type": "ball", "center": [0.0, 0.0, 0.0, 0.0], "radius": 1.0, "delta0": 0.25},
        "sweep": {"boundary_grid": 4}
    }));
    let o = case.run("sweep", &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported"));
}
