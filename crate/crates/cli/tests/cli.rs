use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use vsem_core::complex::io::{format_map, format_mesh, read_mesh};
use vsem_core::{PiecewiseAffineMap, SimplicialComplex};

fn vsem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsem"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("vsem runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stage<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["stages"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["stage"] == name)
        .unwrap_or_else(|| panic!("no stage {name}"))
}

#[test]
fn gen_ellipsoid_writes_a_valid_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsem(dir.path(), &["gen", "ellipsoid", "--axes", "0.8,1,1.2", "--res", "4", "-o", "e.nsc"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    let mesh = read_mesh(dir.path().join("e.nsc")).unwrap();
    assert_eq!(mesh.flipped, 0);
    let c = mesh.complex;
    assert_eq!(
        line.trim(),
        format!("N={} m={} dim=3 ambient=3", c.num_vertices(), c.num_simplices())
    );
    let max_z = (0..c.num_vertices()).map(|i| c.vertex(i)[2]).fold(0.0, f64::max);
    assert!((max_z - 1.2).abs() < 1e-12);
}

#[test]
fn gen_four_ball() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsem(dir.path(), &["gen", "ball", "--dim", "4", "--res", "3", "-o", "b4.nsc"]);
    assert_eq!(code(&out), 0);
    let c = read_mesh(dir.path().join("b4.nsc")).unwrap().complex;
    assert_eq!((c.top_dim(), c.ambient_dim()), (4, 4));
}

#[test]
fn gen_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["gen", "ellipsoid", "--axes", "0,1,1"][..],
        &["gen", "ellipsoid"],
        &["gen", "ball", "--dim", "1"],
        &["gen", "blob", "--amplitude", "0.7"],
        &["gen", "ball", "--bogus"],
        &["gen", "cube"],
    ] {
        let out = vsem(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn gen_disk_twist_demo_writes_the_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsem(
        dir.path(),
        &["gen", "disk-twist-demo", "--res", "4", "--twist", "2", "-o", "d.nsc", "--map-out", "d.map"],
    );
    assert_eq!(code(&out), 0);
    let out = vsem(dir.path(), &["metrics", "d.nsc", "d.map"]);
    assert_eq!(code(&out), 0);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["summary"]["epsilon"].as_f64().unwrap() > 0.0);
    assert_eq!(r["flipped_simplices"], 0);
}

#[test]
fn missing_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vsem(dir.path(), &["sphere", "nope.nsc"])), 2);
    assert_eq!(code(&vsem(dir.path(), &["ball", "nope.nsc"])), 2);
    assert_eq!(code(&vsem(dir.path(), &["metrics", "nope.nsc", "nope.map"])), 2);
}

#[test]
fn sphere_with_huge_tolerance_reports_the_initial_map() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vsem(dir.path(), &["gen", "ball", "--res", "3", "-o", "b.nsc"])), 0);
    let out = vsem(
        dir.path(),
        &["sphere", "b.nsc", "--init", "dirac", "--tol", "1e308", "--report", "r.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(dir.path().join("r.json"));
    assert_eq!(r["report_version"], 1);
    assert!(stage(&r, "newton")["iterations"].as_array().unwrap().is_empty());
    let s = &r["sphere"];
    assert!(s["epsilon"].as_f64().unwrap() > 0.0);
    assert!(s.get("normalized_epsilon").is_some());
}

#[test]
fn sphere_ellipsoid_protocol() {
    let dir = tempfile::tempdir().unwrap();
    vsem(dir.path(), &["gen", "ellipsoid", "--axes", "0.8,1,1.2", "--res", "6", "-o", "e.nsc"]);
    let out = vsem(
        dir.path(),
        &[
            "sphere", "e.nsc", "--measure", "ellipsoid-exact", "--axes", "0.8,1,1.2", "-o", "s.map",
            "--boundary-out", "s.nsc", "--report", "r.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(dir.path().join("r.json"));
    let eps = r["sphere"]["epsilon"].as_f64().unwrap();
    assert!(eps.abs() < 1e-12, "{eps}");
    assert!(stage(&r, "newton")["iterations"].as_array().unwrap().len() <= 20);

    // The boundary mesh carries the measure, so metrics agree with the run.
    let out = vsem(dir.path(), &["metrics", "s.nsc", "s.map", "--csv", "d.csv"]);
    assert_eq!(code(&out), 0);
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    let energy = r["sphere"]["energy"].as_f64().unwrap();
    assert!((m["summary"]["epsilon"].as_f64().unwrap() - eps).abs() < 1e-14 * energy);
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("simplex_id,delta_plus_1"));
    for (i, l) in lines.enumerate() {
        let (id, v) = l.split_once(',').unwrap();
        assert_eq!(id.parse::<usize>().unwrap(), i);
        assert!((v.parse::<f64>().unwrap() - 1.0).abs() < 1e-6, "{l}");
    }
    // All of it in the two bins that meet at 1.
    let counts = m["histogram"]["counts"].as_array().unwrap();
    assert_eq!(counts.len(), 64);
    let total = m["simplices"].as_u64().unwrap();
    assert_eq!(counts[31].as_u64().unwrap() + counts[32].as_u64().unwrap(), total);
}

#[test]
fn sphere_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    vsem(dir.path(), &["gen", "ball", "--res", "3", "-o", "b.nsc"]);
    for args in [
        &["sphere", "b.nsc", "--measure", "ellipsoid-exact"][..],
        &["sphere", "b.nsc", "--init", "file"],
        &["sphere", "b.nsc", "--tol", "-1"],
        &["sphere", "b.nsc", "--measure", "file"],
        &["sphere", "b.nsc", "--axes", "1,1,1"],
    ] {
        assert_eq!(code(&vsem(dir.path(), args)), 2, "{args:?}");
    }
}

#[test]
fn ball_ellipsoid_protocol_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    vsem(dir.path(), &["gen", "ellipsoid", "--axes", "0.8,1,1.2", "--res", "6", "-o", "e.nsc"]);
    let args = [
        "ball", "e.nsc", "--no-pca", "--init-exact", "0.8,1,1.2", "--seed", "4", "-o", "m.map", "--report",
    ];
    let run = |report: &str| {
        let mut a = args.to_vec();
        a.push(report);
        let out = vsem(dir.path(), &a);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(dir.path().join(report)).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a, b);
    let r: Value = serde_json::from_slice(&a).unwrap();
    assert!(r["ball"]["epsilon"].as_f64().unwrap().abs() <= 1e-10);
    assert_eq!(r["flipped_simplices"], 0);
    assert!(stage(&r, "newton").get("seconds").is_none());

    let out = vsem(dir.path(), &["metrics", "e.nsc", "m.map"]);
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    let target = m["target_measure"].as_f64().unwrap();
    assert!((target - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
}

#[test]
fn ball_default_on_a_blob() {
    let dir = tempfile::tempdir().unwrap();
    vsem(dir.path(), &["gen", "blob", "--res", "6", "--amplitude", "0.3", "-o", "blob.nsc"]);
    let out = vsem(dir.path(), &["ball", "blob.nsc", "--timings", "-o", "m.map", "--report", "r.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(dir.path().join("r.json"));
    assert_eq!(r["flipped_simplices"], 0);
    assert!(stage(&r, "newton")["seconds"].as_f64().is_some());
    assert!(r["values"].as_array().unwrap().iter().any(|v| v[0] == "pca_eigenvalue_0"));
}

#[test]
fn ball_rejects_non_ball_topology() {
    let dir = tempfile::tempdir().unwrap();
    // Two tetrahedra that share nothing.
    let v = vec![
        0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 0., 1., 5., 0., 0., 6., 0., 0., 5., 1., 0., 5., 0., 1.,
    ];
    let c = SimplicialComplex::new(3, 3, v, vec![0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
    fs::write(dir.path().join("two.nsc"), format_mesh(&c, None)).unwrap();
    let out = vsem(dir.path(), &["ball", "two.nsc"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("topology"));
}

/// Unit square split along its diagonal, both triangles of area 1/2.
fn square() -> SimplicialComplex {
    let v = vec![0., 0., 1., 0., 1., 1., 0., 1.];
    SimplicialComplex::new(2, 2, v, vec![0, 1, 2, 0, 2, 3]).unwrap()
}

#[test]
fn metrics_identity_map() {
    let dir = tempfile::tempdir().unwrap();
    let c = square();
    fs::write(dir.path().join("sq.nsc"), format_mesh(&c, None)).unwrap();
    fs::write(dir.path().join("id.map"), format_map(&PiecewiseAffineMap::identity(&c))).unwrap();
    let out = vsem(dir.path(), &["metrics", "sq.nsc", "id.map", "--csv", "d.csv", "--json", "m.json"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(csv, "simplex_id,delta_plus_1\n0,1\n1,1\n");
    let m = json(dir.path().join("m.json"));
    assert_eq!(m["summary"]["epsilon"].as_f64().unwrap(), 0.0);
}

#[test]
fn metrics_two_simplex_hand_case() {
    let dir = tempfile::tempdir().unwrap();
    let c = square();
    // Density 2 gives masses 1 and 1; moving the last vertex to (-1, 2)
    // gives image areas 1/2 and 3/2.
    fs::write(dir.path().join("sq.nsc"), format_mesh(&c, Some(&[2.0, 2.0]))).unwrap();
    let f = PiecewiseAffineMap::new(2, vec![0., 0., 1., 0., 1., 1., -1., 2.]).unwrap();
    fs::write(dir.path().join("f.map"), format_map(&f)).unwrap();
    let out = vsem(
        dir.path(),
        &["metrics", "sq.nsc", "f.map", "--csv", "d.csv", "--bins", "4", "--range", "0,2"],
    );
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(csv, "simplex_id,delta_plus_1\n0,0.5\n1,1.5\n");
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((m["summary"]["epsilon"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(m["histogram"]["counts"], serde_json::json!([0, 1, 0, 1]));
    // Sandwich is tight with equal masses.
    assert!((m["sandwich_lower"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    assert!((m["sandwich_upper"].as_f64().unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn metrics_row_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sq.nsc"), format_mesh(&square(), None)).unwrap();
    let f = PiecewiseAffineMap::new(2, vec![0., 0., 1., 0., 1., 1.]).unwrap();
    fs::write(dir.path().join("f.map"), format_map(&f)).unwrap();
    let out = vsem(dir.path(), &["metrics", "sq.nsc", "f.map"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&vsem(dir.path(), &["metrics", "sq.nsc", "f.map", "--bins", "0"])), 2);
    assert_eq!(code(&vsem(dir.path(), &["metrics", "sq.nsc", "f.map", "--range", "0,1,2"])), 2);
}

#[test]
fn help_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsem(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["gen", "sphere", "ball", "metrics"] {
        assert!(text.contains(cmd));
    }
}
