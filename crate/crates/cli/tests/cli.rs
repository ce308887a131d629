use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use primsdf::io::{self, TriangleMesh};
use primsdf::{Point3, Superquadric};
use serde_json::Value;
use tempfile::TempDir;

fn primsdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_primsdf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_primitives(dir: &TempDir, name: &str, prims: &[Superquadric]) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, io::primitives_to_json(prims)).unwrap();
    p
}

fn sphere(c: [f64; 3], r: f64) -> Superquadric {
    Superquadric::sphere(Point3::new(c[0], c[1], c[2]), r).unwrap()
}

fn report(out: &Output) -> Value {
    assert_eq!(code(out), 0, "{}", stderr(out));
    serde_json::from_str(&stdout(out)).unwrap()
}

#[test]
fn print_config_shows_defaults() {
    let out = primsdf(&["--print-config"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["truncation_ratio"], 1.3);
    assert_eq!(v["alpha"], 0.8);
    assert_eq!(v["n_c"], 5);
    assert_eq!(v["gamma"], 0.1);
    assert_eq!(v["termination_ratio"], 0.01);
    assert_eq!(v["p0"], 0.01);
    assert_eq!(v["activation_ratio"], 3.5);
    assert_eq!(v["seed"], 0);

    let out = primsdf(&["--alpha", "0.5", "--nc", "9", "--print-config"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["alpha"], 0.5);
    assert_eq!(v["n_c"], 9);
}

#[test]
fn invalid_flags_exit_2() {
    assert_eq!(code(&primsdf(&["--alpha", "1.5", "--print-config"])), 2);
    assert_eq!(code(&primsdf(&["frobnicate"])), 2);
    assert_eq!(code(&primsdf(&[])), 2);
}

#[test]
fn gen_sphere_loads_back() {
    let dir = TempDir::new().unwrap();
    let spec = write_primitives(&dir, "s.json", &[sphere([0.0; 3], 0.5)]);
    let sdf = dir.path().join("s.mpsf");
    let out = primsdf(&["gen", path_str(&spec), "--dims", "33", "-o", path_str(&sdf)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let g = io::load_sdf(&sdf).unwrap();
    assert_eq!(g.dims(), [33; 3]);
    let min = g.values().iter().copied().fold(f64::INFINITY, f64::min);
    assert!((min + 0.5).abs() < 1e-9, "{min}");
}

#[test]
fn gen_rejects_empty_and_invalid_specs() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("e.json");
    std::fs::write(&empty, "[]").unwrap();
    let out_path = dir.path().join("x.mpsf");
    let out = primsdf(&["gen", path_str(&empty), "-o", path_str(&out_path)]);
    assert_eq!(code(&out), 2);
    assert!(!out_path.exists());

    let bad = dir.path().join("b.json");
    std::fs::write(
        &bad,
        r#"[{"eps":[3.0,1.0],"scale":[1,1,1],"euler_zyx":[0,0,0],"translation":[0,0,0]}]"#,
    )
    .unwrap();
    assert_eq!(code(&primsdf(&["gen", path_str(&bad), "-o", path_str(&out_path)])), 2);
}

#[test]
fn abstract_sphere_gives_one_primitive() {
    let dir = TempDir::new().unwrap();
    let spec = write_primitives(&dir, "s.json", &[sphere([0.1, 0.0, -0.1], 0.45)]);
    let sdf = dir.path().join("s.mpsf");
    assert_eq!(code(&primsdf(&["gen", path_str(&spec), "--dims", "40", "-o", path_str(&sdf)])), 0);
    let diag = dir.path().join("d.json");
    let out = primsdf(&["abstract", path_str(&sdf), "--diagnostics", path_str(&diag)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let prims = io::parse_primitives(&stdout(&out)).unwrap();
    assert_eq!(prims.len(), 1);
    for a in prims[0].scale() {
        assert!((a - 0.45).abs() < 0.02, "{:?}", prims[0]);
    }
    let d: Value = serde_json::from_str(&std::fs::read_to_string(&diag).unwrap()).unwrap();
    assert_eq!(d["primitives"].as_array().unwrap().len(), 1);
    assert_eq!(d["diagnostics"].as_array().unwrap().len(), 1);
    assert!(d["rounds"].as_u64().unwrap() >= 1);
}

#[test]
fn abstract_all_positive_is_empty_with_warning() {
    let dir = TempDir::new().unwrap();
    let spec = write_primitives(&dir, "s.json", &[sphere([5.0, 0.0, 0.0], 0.5)]);
    let sdf = dir.path().join("far.txt");
    let out = primsdf(&["gen", path_str(&spec), "--dims", "8", "-o", path_str(&sdf), "--text"]);
    assert_eq!(code(&out), 0);
    let out = primsdf(&["abstract", path_str(&sdf)]);
    assert_eq!(code(&out), 0);
    assert_eq!(serde_json::from_str::<Value>(&stdout(&out)).unwrap(), Value::Array(vec![]));
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn abstract_corrupt_or_missing_input() {
    let dir = TempDir::new().unwrap();
    let corrupt = dir.path().join("c.mpsf");
    let mut bytes = b"MPSF".to_vec();
    bytes.extend_from_slice(&[1, 0, 0]);
    std::fs::write(&corrupt, bytes).unwrap();
    let out = primsdf(&["abstract", path_str(&corrupt)]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).is_empty());
    assert!(stderr(&out).contains("byte"));

    assert_eq!(code(&primsdf(&["abstract", path_str(&dir.path().join("none.mpsf"))])), 1);
    // output directory checked before any work
    let spec = write_primitives(&dir, "s.json", &[sphere([0.0; 3], 0.5)]);
    let out = primsdf(&["gen", path_str(&spec), "-o", path_str(&dir.path().join("no/such/dir.mpsf"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn abstract_is_thread_count_invariant() {
    let dir = TempDir::new().unwrap();
    let spec = write_primitives(
        &dir,
        "pair.json",
        &[
            sphere([-0.45, 0.0, 0.0], 0.35),
            Superquadric::new([0.4, 0.6], [0.2, 0.3, 0.25], [0.3, 0.1, 0.0], Point3::new(0.5, 0.1, 0.0)).unwrap(),
        ],
    );
    let sdf = dir.path().join("pair.mpsf");
    assert_eq!(code(&primsdf(&["gen", path_str(&spec), "--dims", "36", "-o", path_str(&sdf)])), 0);
    let one = primsdf(&["--threads", "1", "abstract", path_str(&sdf)]);
    let four = primsdf(&["abstract", path_str(&sdf), "--threads", "4"]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn gen_abstract_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    let truth = [Superquadric::new([0.5, 0.8], [0.4, 0.3, 0.25], [0.4, -0.2, 0.3], Point3::new(0.05, 0.0, 0.0)).unwrap()];
    let spec = write_primitives(&dir, "t.json", &truth);
    let sdf = dir.path().join("t.mpsf");
    let pred = dir.path().join("p.json");
    assert_eq!(code(&primsdf(&["gen", path_str(&spec), "--dims", "48", "-o", path_str(&sdf)])), 0);
    assert_eq!(code(&primsdf(&["abstract", path_str(&sdf), "-o", path_str(&pred)])), 0);

    let by_prims = report(&primsdf(&["eval", path_str(&pred), "--truth-primitives", path_str(&spec)]));
    assert!(by_prims["iou"].as_f64().unwrap() >= 0.9, "{by_prims}");
    let by_sdf = report(&primsdf(&["eval", path_str(&pred), "--truth-sdf", path_str(&sdf)]));
    assert!(by_sdf["iou"].as_f64().unwrap() >= 0.9, "{by_sdf}");
}

#[test]
fn eval_identity_disjoint_and_schema() {
    let dir = TempDir::new().unwrap();
    let a = write_primitives(&dir, "a.json", &[sphere([0.0; 3], 0.4)]);
    let b = write_primitives(&dir, "b.json", &[sphere([2.0, 0.0, 0.0], 0.4)]);

    let same = report(&primsdf(&["eval", path_str(&a), "--truth-primitives", path_str(&a), "--spacing", "0.02"]));
    let keys: Vec<&String> = same.as_object().unwrap().keys().collect();
    let mut expected = ["chamfer_l1", "iou", "n_pred_points", "n_gt_points", "grid_n"];
    expected.sort_unstable();
    let mut keys: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(keys, expected);
    assert_eq!(same["iou"], 1.0);
    assert!(same["chamfer_l1"].as_f64().unwrap() < 0.02);
    assert_eq!(same["grid_n"], 100);

    let apart = report(&primsdf(&["eval", path_str(&a), "--truth-primitives", path_str(&b), "--grid-n", "40"]));
    assert_eq!(apart["iou"], 0.0);
    assert_eq!(apart["grid_n"], 40);
}

#[test]
fn eval_empty_prediction_exits_3() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("e.json");
    std::fs::write(&empty, "[]").unwrap();
    let a = write_primitives(&dir, "a.json", &[sphere([0.0; 3], 0.4)]);
    assert_eq!(code(&primsdf(&["eval", path_str(&empty), "--truth-primitives", path_str(&a)])), 3);
    // exactly one reference
    assert_eq!(code(&primsdf(&["eval", path_str(&a)])), 2);
}

#[test]
fn mesh2sdf_cube_and_open_mesh() {
    let dir = TempDir::new().unwrap();
    let obj = dir.path().join("cube.obj");
    std::fs::write(&obj, TriangleMesh::unit_cube().to_obj()).unwrap();
    let sdf = dir.path().join("cube.mpsf");
    let out = primsdf(&["mesh2sdf", path_str(&obj), "--dims", "21", "-o", path_str(&sdf)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let g = io::load_sdf(&sdf).unwrap();
    let center = g.value(g.linear_index([10; 3]));
    assert!((center + 0.5).abs() < 1e-9, "{center}");

    let open = dir.path().join("quad.obj");
    std::fs::write(&open, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n").unwrap();
    let out = primsdf(&["mesh2sdf", path_str(&open), "--dims", "12", "-o", path_str(&dir.path().join("q.mpsf"))]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn icosphere_pipeline_recovers_a_sphere() {
    let dir = TempDir::new().unwrap();
    let obj = dir.path().join("ico.obj");
    std::fs::write(&obj, TriangleMesh::icosphere(0.5, 3).to_obj()).unwrap();
    let sdf = dir.path().join("ico.mpsf");
    let out = primsdf(&["mesh2sdf", path_str(&obj), "--dims", "40", "--origin", "-0.7", "--spacing", "0.036", "-o", path_str(&sdf)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = primsdf(&["abstract", path_str(&sdf)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let prims = io::parse_primitives(&stdout(&out)).unwrap();
    assert_eq!(prims.len(), 1, "{prims:?}");
    for a in prims[0].scale() {
        assert!((a - 0.5).abs() < 0.03, "{:?}", prims[0]);
    }
}

fn sample_points(out: &Output) -> Vec<Point3> {
    assert_eq!(code(out), 0, "{}", stderr(out));
    stdout(out)
        .lines()
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            Point3::new(v[0], v[1], v[2])
        })
        .collect()
}

#[test]
fn sample_sphere_points_on_surface() {
    let dir = TempDir::new().unwrap();
    let s = write_primitives(&dir, "s.json", &[sphere([0.2, -0.1, 0.0], 0.3)]);
    let pts = sample_points(&primsdf(&["sample", path_str(&s), "--spacing", "0.02"]));
    assert!(pts.len() > 100);
    let c = Point3::new(0.2, -0.1, 0.0);
    for p in &pts {
        assert!(((p - c).norm() - 0.3).abs() <= 1e-6);
    }
}

#[test]
fn sample_nested_drops_inner_surface_and_is_seeded() {
    let dir = TempDir::new().unwrap();
    let s = write_primitives(&dir, "n.json", &[sphere([0.0; 3], 0.5), sphere([0.0; 3], 0.2)]);
    let pts = sample_points(&primsdf(&["sample", path_str(&s), "--spacing", "0.05"]));
    assert!(!pts.is_empty());
    assert!(pts.iter().all(|p| (p.norm() - 0.5).abs() <= 1e-6));

    // dense enough to trigger downsampling
    let big = write_primitives(&dir, "b.json", &[sphere([0.0; 3], 0.9)]);
    let file = dir.path().join("a.xyz");
    let a = primsdf(&["sample", path_str(&big), "--spacing", "0.005", "--seed", "7", "-o", path_str(&file)]);
    assert_eq!(code(&a), 0);
    let b = primsdf(&["sample", path_str(&big), "--spacing", "0.005", "--seed", "7"]);
    let c = primsdf(&["sample", path_str(&big), "--spacing", "0.005", "--seed", "8"]);
    let from_file = std::fs::read_to_string(&file).unwrap();
    assert_eq!(from_file.trim_end(), stdout(&b).trim_end());
    assert_eq!(from_file.lines().count(), primsdf::metrics::MAX_POINTS);
    assert_ne!(stdout(&b), stdout(&c));
}

#[test]
fn sample_empty_exits_3() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("e.json");
    std::fs::write(&empty, "[]").unwrap();
    assert_eq!(code(&primsdf(&["sample", path_str(&empty)])), 3);
}
