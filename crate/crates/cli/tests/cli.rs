use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qnewton(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnewton")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SHORT: &str = r#"{"potential":{"kind":"free"},"physics":{"hbar":1,"mu":1,"energy":0.5},
"quantum":{"a":1,"b":0},"run":{"law":"velocity","x_start":0,"t0":0,"t1":20,"samples":5,"domain":[-1,1]}}"#;

#[test]
fn classical_line_in_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("free.csv");
    let o = qnewton(&["trajectory", "--config", &config("free_a1.json"), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,xdot,xddot,xdddot,H,P,Q,s0p"));
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(v.len(), 9);
        assert!((v[1] - v[0]).abs() < 1e-9, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 201);
}

#[test]
fn csv_numbers_carry_seventeen_digits() {
    let o =
        qnewton(&["--quiet", "trajectory", "--config", &config("harmonic.json"), "--output", "-", "--samples", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row = text.lines().nth(2).unwrap();
    for cell in row.split(',') {
        let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "{cell}");
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o =
            qnewton(&["--quiet", "trajectory", "--config", &config("harmonic.json"), "--output", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(p).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));

    let sweep = || {
        let o = qnewton(&[
            "--quiet",
            "sweep",
            "--config",
            &config("harmonic.json"),
            "--a",
            "0.5,1.5",
            "--b",
            "-0.3,0.3",
            "--energy",
            "0.8",
        ]);
        assert_eq!(o.status.code(), Some(0));
        o.stdout
    };
    assert_eq!(sweep(), sweep());

    let master = |seed: &str| stdout(&qnewton(&["--seed", seed, "verify", "master", "--samples", "50"]));
    assert_eq!(master("9"), master("9"));
}

#[test]
fn coefficients_levels_two() {
    let o = qnewton(&["coefficients", "--levels", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for line in ["alpha00 = 0.5", "alpha20 = 0.625", "beta20 = -0.25"] {
        assert!(s.contains(line), "{s}");
    }
    assert!(s.contains("roots [0.0, 0.5]"), "{s}");
    let listed = s.lines().filter(|l| l.starts_with("  alpha") || l.starts_with("  beta")).count();
    assert_eq!(listed, 3, "{s}");
}

#[test]
fn master_verification_detects_perturbation() {
    let o = qnewton(&["verify", "master", "--samples", "1000", "--perturb", "alpha20=0.7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("max term-scaled residual"));
    let o = qnewton(&["verify", "master", "--samples", "1000"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn built_in_verification_suites_pass() {
    assert_eq!(qnewton(&["--quiet", "verify", "qshje"]).status.code(), Some(0));
    assert_eq!(qnewton(&["--quiet", "verify", "conservation", "--states", "2"]).status.code(), Some(0));
    let o = qnewton(&["verify", "qshje", "--config", &config("harmonic.json"), "--points", "101"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn tolerance_scale_tightens_verdicts() {
    // the canonical residual sits near 1e-16; a 1e-8 scale puts the bar below it
    let o = qnewton(&["--tol-scale", "1e-8", "verify", "master", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn quiet_prints_only_the_verdict() {
    let o = qnewton(&["--quiet", "verify", "master", "--samples", "20"]);
    assert_eq!(stdout(&o).trim(), "verify master: PASS");
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "unknown.json", &SHORT.replace("\"b\":0", "\"b\":0,\"c\":1"));
    assert_eq!(qnewton(&["trajectory", "--config", &unknown]).status.code(), Some(2));
    let bad_a = write(dir.path(), "bad_a.json", &SHORT.replace("\"a\":1", "\"a\":0"));
    assert_eq!(qnewton(&["trajectory", "--config", &bad_a]).status.code(), Some(2));
    assert_eq!(qnewton(&["trajectory", "--config", "/no/such/file.json"]).status.code(), Some(2));
    assert_eq!(qnewton(&["coefficients", "--levels", "9"]).status.code(), Some(2));
    assert_eq!(qnewton(&["verify", "master", "--perturb", "gamma1=2"]).status.code(), Some(2));
    assert_eq!(qnewton(&["--tol-scale", "0", "verify", "master"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.json", SHORT);
    let out = dir.path().join("x.csv");
    let o = qnewton(&["trajectory", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside pair domain"));
}

#[test]
fn json_output_holds_summary_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("harmonic.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["output"] = serde_json::json!({"path": dir.path().join("run.json"), "format": "json"});
    let cfg = write(dir.path(), "cfg.json", &doc.to_string());
    let o = qnewton(&["--quiet", "trajectory", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(v["samples"].as_array().unwrap().len(), 201);
    assert_eq!(v["summary"]["energy_ok"], serde_json::Value::Bool(true));
}

#[test]
fn sweep_rows_follow_grid_order() {
    let o = qnewton(&["sweep", "--config", &config("free_a1.json"), "--a", "1,2", "--b", "0", "--energy", "0.5,2"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let rows: Vec<Vec<&str>> = s.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    let keys: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].parse().unwrap(), r[2].parse().unwrap())).collect();
    assert_eq!(keys, vec![(1.0, 0.5), (1.0, 2.0), (2.0, 0.5), (2.0, 2.0)]);
    assert!(rows.iter().all(|r| r[4] == "pass"));
}

#[test]
fn demos_report() {
    let o = qnewton(&["demo", "legacy-stall"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("legacy law stalled: true") && s.contains("crossed turning point: true"), "{s}");

    let o = qnewton(&["demo", "appendix1", "--power", "1", "--potential", "harmonic:1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("naive inconsistency: true"));
    let o = qnewton(&["demo", "appendix1", "--power", "1", "--potential", "free", "--lambda", "1e-3"]);
    assert!(stdout(&o).contains("naive inconsistency: false"));
    assert_eq!(qnewton(&["demo", "appendix1", "--power", "0"]).status.code(), Some(2));
}
