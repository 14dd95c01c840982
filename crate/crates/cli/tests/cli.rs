use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn whet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn line_matrix(xs: &[f64]) -> String {
    let mut s = format!("{}\n", xs.len());
    for x in xs {
        let row: Vec<String> = xs.iter().map(|y| (x - y).abs().to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[test]
fn estimate_interval_is_estimate_plus_minus_z_se() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.csv", &line_matrix(&[0.0, 1.0, 1.5, 3.0, 4.2, 7.0, 7.5]));
    let out = dir.path().join("out");
    let o = whet(&["estimate", "--distances", &m, "--psi", "power:2", "--level", ".95", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("U_n") && text.contains("SE") && text.contains("95% CI") && text.contains("degenerate"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    let r = &v["payload"]["report"];
    let (u, se) = (r["u_stat"].as_f64().unwrap(), r["std_error"].as_f64().unwrap());
    let z = v["provenance"]["z_quantile"].as_f64().unwrap();
    assert!((z - 1.959963984540054).abs() < 1e-12);
    assert!((r["ci"][0].as_f64().unwrap() - (u - z * se)).abs() < 1e-12);
    assert!((r["ci"][1].as_f64().unwrap() - (u + z * se)).abs() < 1e-12);
    assert_eq!(v["provenance"]["transform"], "power:2");
    assert_eq!(v["provenance"]["level"], 0.95);
}

#[test]
fn compare_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "g.csv", &line_matrix(&[0.0, 2.0, 3.0, 9.0, 10.0]));
    let out = dir.path().join("out");
    let o = whet(&["compare", "--group-a", &m, "--group-b", &m, "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(v["payload"]["z"], 0.0);
    assert_eq!(v["payload"]["p_value"], 1.0);
}

const SIM_SPEC: &str = r#"{
  "study": "coverage",
  "model": {"kind": "translation",
            "template": {"family": "gaussian_diag", "mean": [0, 0], "std": [1, 1]},
            "shift_cov": [[1, 0], [0, 1]]},
  "transform": "power:2",
  "n_grid": [10, 20],
  "replications": 30
}"#;

#[test]
fn simulate_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "cov.json", SIM_SPEC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, workers) in [(&a, "1"), (&b, "2")] {
        let o = whet(&["simulate", "--spec", &spec, "--seed", "5", "--workers", workers, "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["simulate.json", "simulate.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_seed_is_drawn_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "cov.json", SIM_SPEC);
    let out = dir.path().join("out");
    let o = whet(&["simulate", "--spec", &spec, "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let line = stdout(&o).lines().find(|l| l.starts_with("seed: ")).map(str::to_owned).unwrap();
    let seed: u64 = line["seed: ".len()..].parse().unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("simulate.json")).unwrap()).unwrap();
    assert_eq!(v["provenance"]["seed"].as_u64(), Some(seed));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "2\n0,1\n2,0\n");
    let out = dir.path().join("out");
    let o = whet(&["estimate", "--distances", &bad, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(0, 1)"));
    assert_eq!(whet(&["estimate", "--no-such-flag"]).status.code(), Some(1));
    let good = write(dir.path(), "good.csv", &line_matrix(&[0.0, 1.0, 2.0]));
    let o = whet(&["estimate", "--distances", &good, "--measures", &good]);
    assert_eq!(o.status.code(), Some(1), "measures and distances are exclusive");
    let o = whet(&["plugin-check", "--truth", &good, "--approx", &good, "--psi", "power:2"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(whet(&["--help"]).status.code(), Some(0));
}

#[test]
fn outputs_stay_under_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/out");
    let o = whet(&["reproduce-synthetic", "--seed", "3", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut top: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["nested"]);
    for f in ["synthetic_measures.csv", "synthetic_estimates.csv", "synthetic_eccentricity.csv", "synthetic_transforms.csv", "groups/C.json", "distances/B.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let estimates_t = fs::read_to_string(out.join("synthetic_estimates.csv")).unwrap();
    assert_eq!(estimates_t.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn table1_over_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mats = dir.path().join("mats");
    fs::create_dir(&mats).unwrap();
    write(&mats, "digit0.csv", &line_matrix(&[0.0, 1.0, 2.0, 3.0]));
    write(&mats, "digit1.csv", &line_matrix(&[0.0, 5.0, 10.0, 15.0]));
    write(&mats, "digit2.csv", &line_matrix(&[0.0, 1.0, 2.0, 3.0]));
    let out = dir.path().join("out");
    let o = whet(&["table1", "--dir", mats.to_str().unwrap(), "--format", "csv", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("table1.csv")).unwrap();
    let ranks: Vec<&str> = csv
        .lines()
        .filter(|l| l.starts_with("digit"))
        .map(|l| l.split(',').nth(6).unwrap())
        .collect();
    assert_eq!(ranks, ["2", "1", "2"]);
}

#[test]
fn distances_then_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(
        dir.path(),
        "m.json",
        r#"{"family":"discrete","dimension":2,"items":[
            {"support":[[0,0],[1,0]],"weights":[0.5,0.5]},
            {"support":[[0,1]],"weights":[1]},
            {"support":[[3,3],[2,2],[1,1]],"weights":[0.2,0.3,0.5]}]}"#,
    );
    let out = dir.path().join("out");
    let o = whet(&["distances", "--measures", &m, "--format", "csv", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = out.join("distances.csv");
    let a = whet(&["estimate", "--distances", d.to_str().unwrap(), "-o", out.join("a").to_str().unwrap()]);
    let b = whet(&["estimate", "--measures", &m, "-o", out.join("b").to_str().unwrap()]);
    assert!(a.status.success() && b.status.success());
    let u = |p: &Path| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("estimate.json")).unwrap()).unwrap();
        v["payload"]["report"]["u_stat"].as_f64().unwrap()
    };
    assert_eq!(u(&out.join("a")), u(&out.join("b")));
}
