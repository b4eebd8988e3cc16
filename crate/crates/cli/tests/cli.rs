use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const T5: &str = "query_id,model,cost,quality,score
q1,A,1,1,0.9
q2,A,1,0,0.2
q3,A,1,1,0.8
q4,A,1,0,0.4
q5,A,1,0,0.6
q1,B,10,1,
q2,B,10,1,
q3,B,10,1,
q4,B,10,1,
q5,B,10,0,
";

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn t5_file(dir: &Path) -> String {
    let p = dir.join("t5.csv");
    std::fs::write(&p, T5).unwrap();
    p.to_str().unwrap().to_string()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn envelope_on_t5_contains_hand_points() {
    let tmp = TempDir::new().unwrap();
    let table = t5_file(tmp.path());
    let out = tmp.path().join("env");
    let o = cascade(&["envelope", "--table", &table, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pts: Vec<(f64, f64)> = data_rows(&out.join("pairs.csv"))
        .iter()
        .map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap()))
        .collect();
    for want in [(1.0, 0.4), (3.0, 0.6), (5.0, 0.8)] {
        assert!(
            pts.iter().any(|p| (p.0 - want.0).abs() < 1e-9 && (p.1 - want.1).abs() < 1e-9),
            "missing {want:?} in {pts:?}"
        );
    }
    for f in ["envelope.csv", "switching.csv", "provenance.txt"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with("# config_hash: "), "{f}");
    }
}

#[test]
fn synth_concave_reports_no_violation() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("s");
    let o = cascade(&["synth", "concave", "--n", "2000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("synth_report.txt")).unwrap();
    let v: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("concavity_violation: "))
        .expect("violation line")
        .parse()
        .unwrap();
    assert!(v <= 1e-6, "{v}");
}

#[test]
fn missing_input_fails_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("none");
    let missing = tmp.path().join("absent.csv");
    let o = cascade(&["pool", "--table", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("table"));
    assert!(!out.exists());
}

#[test]
fn invalid_split_fraction_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let table = t5_file(tmp.path());
    let o = cascade(&["experiment", "--table", &table, "--calib-fraction", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cascade(&["bogus"]).status.code(), Some(2));
    assert_eq!(cascade(&["pool", "--n-tau", "many"]).status.code(), Some(2));
    assert_eq!(cascade(&["--help"]).status.code(), Some(0));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let synth = tmp.path().join("s");
    let o = cascade(&["synth", "threestage", "--n", "600", "--seed", "3", "--out", synth.to_str().unwrap()]);
    assert!(o.status.success());
    let table = synth.join("synth_table.csv");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = cascade(&[
            "experiment",
            "--table",
            table.to_str().unwrap(),
            "--splits",
            "3",
            "--trials",
            "100",
            "--population",
            "20",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 5);
    for n in names {
        let x = std::fs::read_to_string(a.join(&n)).unwrap();
        let y = std::fs::read_to_string(b.join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = TempDir::new().unwrap();
    let table = t5_file(tmp.path());
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, format!("table = {table:?}\nn_tau = 50\n[plan]\nn_splits = 2\n")).unwrap();
    let out = tmp.path().join("p");
    let o = cascade(&["pool", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out.join("pool.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "A");

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = cascade(&["pool", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
