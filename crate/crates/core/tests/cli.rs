use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn kwgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn unit_edge(dir: &TempDir, name: &str, h: &str, c: Option<f64>) -> PathBuf {
    let c = c.map(|c| format!(", \"c\": {c}")).unwrap_or_default();
    let text = format!(
        r#"{{"vertices": ["a", "b"], "edges": [{{"id": "e0", "tail": "a", "head": "b", "length": 1.0}}], "h": "{h}"{c}}}"#
    );
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_u(path: &Path) -> Vec<(String, f64, f64)> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["edge_id", "s", "u"]);
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn solve_constant_negative() {
    let dir = TempDir::new().unwrap();
    let problem = unit_edge(&dir, "p.json", "−1", Some(-2.0));
    let out = kwgraph(&["solve", s(&problem)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_u(&dir.path().join("p.solution.csv"));
    assert_eq!(rows.len(), 33);
    assert_eq!(rows[0].1, 0.0);
    assert!((rows[32].1 - 1.0).abs() < 1e-15);
    for (id, _, u) in &rows {
        assert_eq!(id, "e0");
        assert!((u - 2f64.ln()).abs() <= 1e-10);
    }
    let rep = report(&dir.path().join("p.report"));
    assert_eq!(rep["status"], "Converged");
}

#[test]
fn solve_zero_requires_sign_change() {
    let dir = TempDir::new().unwrap();
    let problem = unit_edge(&dir, "p.json", "-1", Some(0.0));
    let out = kwgraph(&["solve", s(&problem), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 2);
    let rep = report(&dir.path().join("run.report"));
    assert_eq!(rep["status"], "NotSolvable");
    assert!(rep.to_string().contains("HDoesNotChangeSign"));
}

#[test]
fn malformed_file_is_input_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"vertices\": [").unwrap();
    let out = kwgraph(&["solve", s(&path), "--c", "-1"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed problem file"));
}

#[test]
fn c_override_and_negative_flag_values() {
    let dir = TempDir::new().unwrap();
    let problem = unit_edge(&dir, "p.json", "-2", None);
    let out = kwgraph(&["solve", s(&problem), "--c", "-1", "--cells", "8", "--tol", "1e-10"]);
    assert_eq!(code(&out), 0);
    let rows = read_u(&dir.path().join("p.solution.csv"));
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|(_, _, u)| (u - 0.5f64.ln()).abs() <= 1e-9));
    assert_eq!(code(&kwgraph(&["solve", s(&problem)])), 1);
}

#[test]
fn threshold_reports() {
    let dir = TempDir::new().unwrap();
    let nonpositive = unit_edge(&dir, "neg.json", "-1", None);
    assert_eq!(code(&kwgraph(&["threshold", s(&nonpositive)])), 0);
    assert_eq!(report(&dir.path().join("neg.threshold.report"))["minus_infinity"], true);

    let signed = unit_edge(&dir, "cos.json", "cos(3.14159265*s) - 0.1", None);
    assert_eq!(code(&kwgraph(&["threshold", s(&signed), "--bracket-tol", "1e-3"])), 0);
    let rep = report(&dir.path().join("cos.threshold.report"));
    assert_eq!(rep["minus_infinity"], false);
    let (lo, hi, bound) = (
        rep["c_lo"].as_f64().unwrap(),
        rep["c_hi"].as_f64().unwrap(),
        rep["analytic_upper_bound"].as_f64().unwrap(),
    );
    assert!(lo < hi && hi - lo <= 1e-3 && hi <= bound && bound < 0.0);

    let positive = unit_edge(&dir, "pos.json", "1", None);
    assert_eq!(code(&kwgraph(&["threshold", s(&positive)])), 2);
}

#[test]
fn verify_round_trip_and_perturbation() {
    let dir = TempDir::new().unwrap();
    let problem = unit_edge(&dir, "p.json", "cos(pi*s) - 0.1", Some(-0.02));
    assert_eq!(code(&kwgraph(&["solve", s(&problem), "--tol", "1e-10"])), 0);
    let solution = dir.path().join("p.solution.csv");
    let out = kwgraph(&["verify", s(&problem), s(&solution)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(&dir.path().join("p.solution.verify.report"))["passed"], true);

    let mut rows = read_u(&solution);
    rows[10].2 += 0.1;
    let perturbed = dir.path().join("perturbed.csv");
    let mut writer = csv::Writer::from_path(&perturbed).unwrap();
    writer.write_record(["edge_id", "s", "u"]).unwrap();
    for (id, s, u) in &rows {
        writer.write_record([id.clone(), s.to_string(), u.to_string()]).unwrap();
    }
    writer.flush().unwrap();
    assert_eq!(code(&kwgraph(&["verify", s(&problem), s(&perturbed)])), 4);
    let rep = report(&dir.path().join("perturbed.verify.report"));
    let at = rep["worst"]["s"].as_f64().unwrap();
    assert!((at - rows[10].1).abs() < 1e-12);

    let out = kwgraph(&["verify", s(&problem), s(&solution), "--cells", "16"]);
    assert_eq!(code(&out), 1);
}
