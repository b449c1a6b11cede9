use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lagflow_core::flow::Snapshot;
use lagflow_core::hodge::gradient;
use lagflow_core::{Field, ImmersionField, ParamGrid, Scenario, Scheme, TensorField};
use serde_json::Value;

fn lagflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lagflow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LAGFLOW_OUT")
        .output()
        .expect("spawn lagflow")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn verify_identities_default_library_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagflow(&["verify-identities"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports = read_json(&dir.path().join("identities.json"));
    let reports = reports.as_array().unwrap();
    assert!(reports.len() > 30);
    for r in reports {
        assert_eq!(r["passed"], true);
        assert!(r["max_residual"].as_f64().unwrap() >= r["mean_residual"].as_f64().unwrap());
    }
    let m = read_json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "verify-identities");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["grid"], serde_json::json!([64]));
}

#[test]
fn flipped_omega_convention_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagflow(&["verify-identities", "--flip-omega-raising"], dir.path());
    assert_eq!(code(&o), 2);
    let m = read_json(&dir.path().join("manifest.json"));
    let gates = m["summary"]["consistency_gate"].as_array().unwrap();
    assert!(gates.iter().any(|g| g["passed"] == false));
}

#[test]
fn curves_skip_rank_four_identities() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagflow(
        &["verify-identities", "--scenario", "ellipse(1,2)"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let m = read_json(&dir.path().join("manifest.json"));
    let skipped: Vec<&str> = m["summary"]["skipped"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for id in ["P1_3c", "L1_4", "P2_8"] {
        assert!(
            skipped.iter().any(|s| s.ends_with(id)),
            "{id} not skipped: {skipped:?}"
        );
    }
}

#[test]
fn circle_flow_follows_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagflow(
        &[
            "flow",
            "--scenario",
            "circle",
            "--n-grid",
            "128",
            "--dt",
            "1e-4",
            "--t-end",
            "0.375",
            "--stride",
            "250",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&dir.path().join("diagnostics.csv"));
    assert_eq!(
        header,
        [
            "t",
            "area",
            "omega_max",
            "H_sq_max",
            "min_eig_g",
            "period_1"
        ]
    );
    assert_eq!(rows.len(), 16);
    assert!((rows.last().unwrap()[0] - 0.375).abs() < 1e-12);
    for row in &rows {
        let r = row[1] / std::f64::consts::TAU;
        let want = (1.0 - 2.0 * row[0]).sqrt();
        assert!((r / want - 1.0).abs() <= 1e-5);
    }
    assert!(dir.path().join("snapshots/snapshot_00015.svg").exists());
    assert!(dir.path().join("snapshots/snapshot_00015.json").exists());
}

#[test]
fn clifford_torus_periods_are_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagflow(
        &[
            "flow",
            "--scenario",
            "product_torus(1,1)",
            "--n-grid",
            "32",
            "--t-end",
            "0.05",
            "--stride",
            "50",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&dir.path().join("diagnostics.csv"));
    assert_eq!(header.len(), 7);
    for row in &rows {
        for p in &row[5..] {
            assert!((p + std::f64::consts::TAU).abs() <= 1e-8);
        }
    }
    assert!(!dir.path().join("snapshots/snapshot_00000.svg").exists());
}

#[test]
fn flat_plane_does_not_move() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagflow(
        &[
            "flow",
            "--scenario",
            "flat_plane",
            "--n-grid",
            "16",
            "--t-end",
            "0.01",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let (_, rows) = csv_rows(&dir.path().join("diagnostics.csv"));
    for row in &rows {
        assert_eq!(row[1..], rows[0][1..]);
    }
}

#[test]
fn serial_runs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "flow",
        "--serial",
        "--scenario",
        "lagrangian_graph",
        "--n-grid",
        "32",
        "--t-end",
        "0.005",
        "--stride",
        "10",
    ];
    assert_eq!(code(&lagflow(&args, a.path())), 0);
    assert_eq!(code(&lagflow(&args, b.path())), 0);
    let files = [
        "diagnostics.csv",
        "snapshots/snapshot_00000.json",
        "snapshots/snapshot_00005.json",
    ];
    for f in files {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_echo_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(
        &cfg,
        r#"{"scenario": "ellipse", "params": {"a": 1.0, "b": 1.5},
            "grid": {"n": 32}, "flow": {"t_end": 0.01, "snapshot_stride": 20}}"#,
    )
    .unwrap();
    let first = dir.path().join("first");
    let o = lagflow(
        &[
            "flow",
            "--serial",
            "--config",
            cfg.to_str().unwrap(),
            "--dt",
            "2e-4",
        ],
        &first,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echo = dir.path().join("echo.json");
    let m = read_json(&first.join("manifest.json"));
    assert_eq!(m["config"]["flow"]["dt"].as_f64(), Some(2e-4));
    fs::write(&echo, m["config"].to_string()).unwrap();
    let second = dir.path().join("second");
    let o = lagflow(
        &["flow", "--serial", "--config", echo.to_str().unwrap()],
        &second,
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(first.join("diagnostics.csv")).unwrap(),
        fs::read(second.join("diagnostics.csv")).unwrap()
    );
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lagflow"))
        .args([
            "flow",
            "--scenario",
            "circle",
            "--n-grid",
            "16",
            "--t-end",
            "0.001",
        ])
        .env("LAGFLOW_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("diagnostics.csv").exists());
}

#[test]
fn bad_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&lagflow(&["hodge", missing.to_str().unwrap()], dir.path())),
        1
    );
    assert_eq!(
        code(&lagflow(&["flow", "--scenario", "sphere"], dir.path())),
        1
    );
    assert_eq!(code(&lagflow(&["flow"], dir.path())), 1);
    assert_eq!(
        code(&lagflow(
            &["flow", "--scenario", "circle", "--dt", "-1"],
            dir.path()
        )),
        1
    );
    assert_eq!(
        code(&lagflow(&["flow", "--theta", "grad:nothing"], dir.path())),
        1
    );
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"grid": {"size": 3}}"#).unwrap();
    assert_eq!(
        code(&lagflow(
            &["flow", "--config", cfg.to_str().unwrap()],
            dir.path()
        )),
        1
    );
}

fn hodge_on(snap: &Snapshot, dir: &Path, basepoint: usize) -> Value {
    let path = dir.join("snap.json");
    fs::write(&path, lagflow_core::json::to_string_precise(snap).unwrap()).unwrap();
    let out = dir.join("hodge");
    let o = lagflow(
        &[
            "hodge",
            path.to_str().unwrap(),
            "--basepoint",
            &basepoint.to_string(),
        ],
        &out,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("periods.csv").exists());
    read_json(&out.join("hodge.json"))
}

/// Node values of a serialized `Field` or `TensorField`.
fn values(v: &Value) -> Vec<f64> {
    let data = if v["data"].is_array() {
        &v["data"]
    } else {
        &v["field"]["data"]
    };
    data.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn max_abs(v: &Value) -> f64 {
    values(v).iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn synthetic(theta: TensorField) -> Snapshot {
    let grid = *theta.grid();
    let immersion = Scenario::ProductTorus { r: 1.0, s: 1.0 }
        .immersion(&grid)
        .unwrap();
    Snapshot {
        t: 0.0,
        immersion,
        mean_curvature: theta.clone(),
        theta: Some(theta),
    }
}

#[test]
fn hodge_of_graph_flow_snapshot_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = lagflow(
        &[
            "flow",
            "--scenario",
            "lagrangian_graph",
            "--n-grid",
            "64",
            "--t-end",
            "0.002",
            "--stride",
            "10",
        ],
        &run,
    );
    assert_eq!(code(&o), 0);
    let out = dir.path().join("hodge");
    let snap = run.join("snapshots/snapshot_00002.json");
    let o = lagflow(&["hodge", snap.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let split = read_json(&out.join("hodge.json"));
    assert!(max_abs(&split["psi"]) <= 1e-7);
    let (header, rows) = csv_rows(&out.join("periods.csv"));
    assert_eq!(header, ["axis", "theta_period", "psi_period"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn hodge_of_constant_form_has_no_potential() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ParamGrid::cube(2, 16, Scheme::Spectral).unwrap();
    let theta = TensorField::new(Field::constant(grid, &[0.4, -1.1]), 1).unwrap();
    let split = hodge_on(&synthetic(theta), dir.path(), 0);
    assert!(max_abs(&split["phi"]) <= 1e-14);
}

#[test]
fn hodge_recovers_potential() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ParamGrid::cube(2, 32, Scheme::Spectral).unwrap();
    let phi0 = Field::scalar_from_fn(grid, |x| x[0].sin() * x[1].cos() + 0.3 * (2.0 * x[1]).sin());
    let split = hodge_on(&synthetic(gradient(&phi0).unwrap()), dir.path(), 7);
    let phi = values(&split["phi"]);
    let shift = phi0.node(7)[0];
    for (p, v) in phi.iter().enumerate() {
        assert!((v - (phi0.node(p)[0] - shift)).abs() <= 1e-9);
    }
}

#[test]
fn immersion_json_round_trips_through_snapshot() {
    let grid = ParamGrid::cube(1, 8, Scheme::Central4).unwrap();
    let f: ImmersionField = Scenario::Ellipse { a: 1.0, b: 2.0 }
        .immersion(&grid)
        .unwrap();
    let text = lagflow_core::json::to_string_precise(&f).unwrap();
    let back: ImmersionField = serde_json::from_str(&text).unwrap();
    assert_eq!(back, f);
}
