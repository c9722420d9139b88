use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use psforge_core::loops::{multiply, LaurentLoop};
use psforge_core::{algebra, Mat3};
use serde_json::Value;
use tempfile::TempDir;

fn psforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psforge")).current_dir(dir).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solve_soliton(dir: &Path, h: &str) {
    let o = psforge(dir, &["solve", "--soliton", "1.0", "--domain", "-2", "2", "-2", "2", "--h", h, "--out", "."]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn solve_writes_header_and_summary() {
    let t = TempDir::new().unwrap();
    solve_soliton(t.path(), "0.02");
    let phi = fs::read_to_string(t.path().join("phi.csv")).unwrap();
    assert_eq!(phi.lines().next().unwrap(), "# 201 201 -2 -2 0.02 0.02");
    assert_eq!(phi.lines().count(), 202);
    let s = json(&t.path().join("solve_summary.json"));
    assert!(s["sg_residual_sup"].as_f64().unwrap() < 1e-4);
    assert!(t.path().join("phi_x.csv").exists());
}

#[test]
fn goursat_mode_and_incompatible_corner() {
    let t = TempDir::new().unwrap();
    let xs: Vec<String> = (0..=20).map(|i| format!("{}", 4.0 * (0.05 * i as f64).exp().atan())).collect();
    let ys: Vec<String> = (0..=20).map(|j| format!("{}", 4.0 * (0.05 * j as f64).exp().atan())).collect();
    fs::write(t.path().join("x.txt"), xs.join("\n")).unwrap();
    fs::write(t.path().join("y.txt"), ys.join("\n")).unwrap();
    let args = ["solve", "--x-data", "x.txt", "--y-data", "y.txt", "--domain", "0", "1", "0", "1", "--h", "0.05"];
    let o = psforge(t.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&t.path().join("solve_summary.json"))["mode"], "goursat");

    let mut bad = ys.clone();
    bad[0] = "0.5".into();
    fs::write(t.path().join("y.txt"), bad.join("\n")).unwrap();
    let o = psforge(t.path(), &args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("IncompatibleCorner"));
}

#[test]
fn surface_reports_curvature_and_metric() {
    let t = TempDir::new().unwrap();
    solve_soliton(t.path(), "0.02");
    let o = psforge(t.path(), &["surface", "--input", "phi.csv", "--lambda", "1,2", "--out", "surf"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&t.path().join("surf/surface_summary.json"));
    let one = &s["surfaces"][0];
    let two = &s["surfaces"][1];
    assert!((one["K_mean"].as_f64().unwrap() + 1.0).abs() < 1e-3);
    assert!((two["metricA_mean"].as_f64().unwrap() - 2.0).abs() < 1e-3);
    assert!((two["metricB_mean"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert_eq!(one["origin_point"], serde_json::json!([0.0, 0.0, 0.0]));
    let obj = fs::read_to_string(t.path().join("surf/surface_lambda_1.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 201 * 201);
    assert!(t.path().join("surf/geometry_lambda_2.csv").exists());
}

#[test]
fn missing_input_is_a_usage_error() {
    let t = TempDir::new().unwrap();
    for cmd in ["surface", "potentials", "verify"] {
        let o = psforge(t.path(), &[cmd, "--input", "absent.csv"]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("absent.csv"));
    }
    let o = psforge(t.path(), &["solve", "--soliton", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn potentials_files() {
    let t = TempDir::new().unwrap();
    solve_soliton(t.path(), "0.05");
    let o = psforge(t.path(), &["potentials", "-i", "phi.csv", "-o", "pot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!t.path().join("pot/eta_x_su2.csv").exists());

    let ex = fs::read_to_string(t.path().join("pot/eta_x.csv")).unwrap();
    let origin = ex
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[1].parse::<f64>().unwrap() == 0.0)
        .unwrap();
    let entries: Vec<f64> = origin[2..].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(entries, vec![0.0, 0.0, 0.0, -1.0, 0.0, 1.0]);

    let ey = fs::read_to_string(t.path().join("pot/eta_y.csv")).unwrap();
    assert_eq!(ey.lines().filter(|l| !l.starts_with('#')).count(), 81);

    let o = psforge(t.path(), &["potentials", "-i", "phi.csv", "-o", "pot", "--su2"]);
    assert!(o.status.success());
    let su2 = fs::read_to_string(t.path().join("pot/eta_x_su2.csv")).unwrap();
    assert!(su2.starts_with("# axis,coord,re12,im12,re21,im21"));
    assert!(t.path().join("pot/eta_y_su2.csv").exists());
}

#[test]
fn verify_soliton_passes_and_constant_fails() {
    let t = TempDir::new().unwrap();
    solve_soliton(t.path(), "0.05");
    let o = psforge(t.path(), &["verify", "-i", "phi.csv", "--out", "ok"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&t.path().join("ok/report.json"));
    for c in r["checks"].as_array().unwrap() {
        for key in ["sup", "mean", "tolerance", "pass"] {
            assert!(c.get(key).is_some(), "{key} missing from {c}");
        }
    }

    let o = psforge(t.path(), &["solve", "--constant", "1.5707963267948966", "--domain", "-1", "1", "-1", "1", "--h", "0.05", "-o", "c"]);
    assert!(o.status.success());
    let o = psforge(t.path(), &["verify", "-i", "c/phi.csv", "--report", "c/report.json"]);
    assert_eq!(o.status.code(), Some(1));
    let r = json(&t.path().join("c/report.json"));
    let failures: Vec<&str> = r["failures"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(failures.contains(&"flatness") && failures.contains(&"conditions_K"), "{failures:?}");
}

#[test]
fn config_file_and_flag_override() {
    let t = TempDir::new().unwrap();
    fs::write(
        t.path().join("run.cfg"),
        "# verify a coarse soliton\nsoliton = 1\ndomain = -1 1 -1 1\nh = 0.05\nonly = flatness\nout = cfgout\n",
    )
    .unwrap();
    let o = psforge(t.path(), &["verify", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&t.path().join("cfgout/report.json"))["checks"].as_array().unwrap().len(), 1);

    let o = psforge(t.path(), &["verify", "--config", "run.cfg", "--tol", "flatness=1e-14"]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(t.path().join("bad.cfg"), "colour = red\n").unwrap();
    let o = psforge(t.path(), &["verify", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

fn write_loop(dir: &Path, name: &str, g: &LaurentLoop) {
    g.write_json(&dir.join(name)).unwrap();
}

fn factor(dir: &Path, name: &str) -> LaurentLoop {
    LaurentLoop::read_json(&dir.join(name)).unwrap()
}

fn max_diff(a: &LaurentLoop, b: &LaurentLoop) -> f64 {
    psforge_core::loops::loop_norm(&a.sub(b))
}

#[test]
fn split_identity_product_and_direction() {
    let t = TempDir::new().unwrap();
    write_loop(t.path(), "id.json", &LaurentLoop::identity());
    let o = psforge(t.path(), &["split", "--loop", "id.json", "-o", "id"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let id = LaurentLoop::identity();
    assert!(max_diff(&factor(t.path(), "id/factor1.json"), &id) < 1e-14);
    assert!(max_diff(&factor(t.path(), "id/factor2.json"), &id) < 1e-14);

    let mut minus = BTreeMap::new();
    minus.insert(0, Mat3::identity());
    minus.insert(-1, algebra::e13() * 0.2 + algebra::e23() * -0.1);
    let mut plus = BTreeMap::new();
    plus.insert(0, algebra::gauge_rotation(0.3));
    plus.insert(1, algebra::e13() * 0.15);
    let gm = LaurentLoop::from_map(&minus).with_twisted(true);
    let gp = LaurentLoop::from_map(&plus).with_twisted(true);
    let g = multiply(&gm, &gp);
    write_loop(t.path(), "g.json", &g);

    let o = psforge(t.path(), &["split", "--loop", "g.json", "-o", "mf"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&t.path().join("mf/split_summary.json"));
    assert!(s["residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(s["factor1"], "minus");
    let f1 = factor(t.path(), "mf/factor1.json");
    assert!(f1.kmax() <= 0 && max_diff(&f1, &gm) < 1e-8);
    assert!(factor(t.path(), "mf/factor2.json").kmin() >= 0);

    let o = psforge(t.path(), &["split", "--loop", "g.json", "--direction", "plus-first", "-o", "pf"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&t.path().join("pf/split_summary.json"))["factor1"], "plus");
    assert!(factor(t.path(), "pf/factor1.json").kmin() >= 0);
    assert!(factor(t.path(), "pf/factor2.json").kmax() <= 0);
}

#[test]
fn winding_loop_exits_with_big_cell_code() {
    let t = TempDir::new().unwrap();
    let mut map = BTreeMap::new();
    map.insert(2, Mat3::from_diagonal(&psforge_core::Vec3::new(1.0, 0.0, 0.0)));
    map.insert(-2, Mat3::from_diagonal(&psforge_core::Vec3::new(0.0, 1.0, 0.0)));
    map.insert(0, Mat3::from_diagonal(&psforge_core::Vec3::new(0.0, 0.0, 1.0)));
    write_loop(t.path(), "w.json", &LaurentLoop::from_map(&map));
    let o = psforge(t.path(), &["split", "--loop", "w.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("BigCellViolation"));
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let t = TempDir::new().unwrap();
    solve_soliton(t.path(), "0.05");
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_psforge"))
            .current_dir(t.path())
            .env("PSFORGE_THREADS", threads)
            .args(["verify", "-i", "phi.csv", "-o", out])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(t.path().join(out).join("report.json")).unwrap()
    };
    assert_eq!(run("1", "a"), run("4", "b"));

    let o = Command::new(env!("CARGO_BIN_EXE_psforge"))
        .current_dir(t.path())
        .env("PSFORGE_THREADS", "0")
        .args(["verify", "-i", "phi.csv"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
