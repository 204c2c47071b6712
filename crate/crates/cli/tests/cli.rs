use dmesh::geometry::WeightedPoint;
use dmesh::io::{mesh_to_obj, pointcloud_to_xyz, DMeshFile, PointCloudData};
use dmesh::mesh::{icosphere, sphere_samples};
use std::path::Path;
use std::process::{Command, Output};

fn dmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmesh")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn arg(key: &str, p: &Path) -> String {
    format!("--{key}={}", p.display())
}

fn triangle_dmesh(dir: &Path) -> std::path::PathBuf {
    let points = vec![
        WeightedPoint::planar(0.2, 0.2, 0.0),
        WeightedPoint::planar(0.8, 0.2, 0.0),
        WeightedPoint::planar(0.5, 0.8, 0.0),
    ];
    let p = dir.join("tri.dmesh");
    DMeshFile { dim: 2, points }.write(&p).unwrap();
    p
}

#[test]
fn probe_reports_an_existing_edge() {
    let dir = tempfile::tempdir().unwrap();
    let input = triangle_dmesh(dir.path());
    let o = dmesh(&["probe", &arg("input", &input), "--face=0,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("exists true"));
    let lambda: f64 = out.lines().find_map(|l| l.strip_prefix("lambda ")).unwrap().parse().unwrap();
    assert!(lambda > 0.5);
}

#[test]
fn convert_recovers_an_icosphere() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("ico.obj");
    std::fs::write(&obj, mesh_to_obj(&icosphere(2))).unwrap();
    let out = dir.path().join("run");
    let o = dmesh(&["convert", &arg("input", &obj), &arg("output", &out), "--steps=50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(row[0] >= 0.99, "{csv}");
    for f in ["config.json", "dmesh.txt", "mesh.obj", "report.json", "report.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["opt"]["steps"], 50);
    assert_eq!(cfg["mode"], "convert");
}

#[test]
fn bench_oracle_prints_csv() {
    let o = dmesh(&["bench-oracle", "--n=100", "--d=2", "--k=1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("method,d,k,n,queries,build_ms,eval_ms,fp_pct,fn_pct"));
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["ours", "prior"]);
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let input = triangle_dmesh(dir.path());
    assert_eq!(dmesh(&["probe", &arg("input", &input), "--face=0,1", "--no-such-key=1"]).status.code(), Some(1));
    assert_eq!(dmesh(&["frobnicate"]).status.code(), Some(1));
    let missing = dmesh(&["probe", "--input=/nonexistent/x.dmesh", "--face=0,1"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("x.dmesh"));
    let flat = dir.path().join("flat.obj");
    std::fs::write(&flat, "v 0 0 0\nv 1 0 0\nv 0 1 0\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(dmesh(&["convert", &arg("input", &flat), &arg("output", &out)]).status.code(), Some(3));
}

#[test]
fn config_file_and_overrides_are_layered() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 5, "opt": {"steps": 7}}"#).unwrap();
    let obj = dir.path().join("ico.obj");
    std::fs::write(&obj, mesh_to_obj(&icosphere(0))).unwrap();
    let out = dir.path().join("run");
    let o = dmesh(&["convert", cfg.to_str().unwrap(), &arg("input", &obj), &arg("output", &out), "--steps=3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 5);
    assert_eq!(echo["opt"]["steps"], 3);
}

fn small_reconstruction(dir: &Path, name: &str, normals: bool) -> (Output, std::path::PathBuf) {
    let (points, n) = sphere_samples(600, [0.0; 3], 1.0, 3);
    let pc = PointCloudData { points, normals: normals.then_some(n) };
    let xyz = dir.join(format!("{name}.xyz"));
    std::fs::write(&xyz, pointcloud_to_xyz(&pc)).unwrap();
    let out = dir.join(name);
    let o = dmesh(&[
        "reconstruct-pc",
        &arg("input", &xyz),
        &arg("output", &out),
        "--init-samples=100",
        "--n-samples=1000",
        "--phase1-steps=3",
        "--phase2-steps=2",
        "--epochs=1",
        "--eval-samples=2000",
        "--lambda-normal=0.1",
        "--seed=11",
    ]);
    (o, out)
}

#[test]
fn seeded_reconstruction_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out_a) = small_reconstruction(dir.path(), "a", true);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let (b, out_b) = small_reconstruction(dir.path(), "b", true);
    assert!(b.status.success());
    for f in ["mesh.obj", "dmesh.txt", "trace.csv", "eval.csv"] {
        assert_eq!(std::fs::read(out_a.join(f)).unwrap(), std::fs::read(out_b.join(f)).unwrap(), "{f}");
    }
    let header = stdout(&a).lines().next().unwrap().to_string();
    assert!(header.starts_with("cd,f1,precision,recall"));
}

#[test]
fn missing_normals_disable_the_normal_term() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = small_reconstruction(dir.path(), "bare", false);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda_normal set to 0"));
}
