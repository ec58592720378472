use std::path::Path;
use std::process::{Command, Output};

fn ssn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn generate(dir: &Path) {
    let o = ssn(dir, &["gen", "--n", "400", "--p", "8", "--condition", "30", "--seed", "3", "-o", "d.svm"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_then_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    assert!(dir.path().join("d.svm.meta.json").exists());
    let o = ssn(
        dir.path(),
        &["run", "--data", "d.svm", "--solver", "ssn-hessian", "--sample-frac-h", "0.25", "-o", "t.csv", "--json", "t.json"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.starts_with("# argv: run --data d.svm"));
    assert!(csv.contains("\n# config: {"));
    let rows: Vec<&str> = csv.lines().filter(|l| l.starts_with("ssn-hessian,")).collect();
    assert!(rows.len() > 1);
    assert!(rows.last().unwrap().ends_with("grad_tol"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(json["trace"]["solver"], "ssn-hessian");
}

#[test]
fn omit_timing_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    for out in ["a.csv", "b.csv"] {
        let o = ssn(dir.path(), &["run", "--data", "d.svm", "--solver", "lbfgs", "--omit-timing", "-o", out]);
        assert_eq!(code(&o), 0);
    }
    let read = |f: &str| {
        // the argv line names the output file
        std::fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .skip(1)
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(read("a.csv"), read("b.csv"));
}

#[test]
fn every_solver_name_runs() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    for s in ["ssn-hessian", "ssn-spectral", "ssn-ridge", "ssn-full", "gd", "agd", "bfgs", "lbfgs:4", "newton"] {
        let o = ssn(dir.path(), &["run", "--data", "d.svm", "--solver", s, "--sample-frac-h", "0.5", "--sample-frac-g", "0.5", "-o", "t.csv"]);
        assert_eq!(code(&o), 0, "{s}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn out_of_range_theta1_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssn(dir.path(), &["run", "--theta1", "1.5"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta1"));
}

#[test]
fn unknown_flag_and_solver_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ssn(dir.path(), &["run", "--no-such-flag"])), 1);
    assert_eq!(code(&ssn(dir.path(), &["run", "--solver", "sgd"])), 1);
    assert_eq!(code(&ssn(dir.path(), &["run"])), 1);
    assert_eq!(code(&ssn(dir.path(), &["run", "--data", "missing.svm"])), 1);
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ssn(dir.path(), &["--help"])), 0);
}

#[test]
fn verify_passes_on_the_default_problem() {
    let dir = tempfile::tempdir().unwrap();
    for lemma in ["hessian", "gradient"] {
        let o = ssn(dir.path(), &["verify", "--lemma", lemma, "--resamples", "200"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    }
}

#[test]
fn inspect_and_rates_print_json() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let o = ssn(dir.path(), &["inspect", "--data", "d.svm"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["p"], 8);
    assert!((v["gram"]["condition"].as_f64().unwrap() - 30.0).abs() < 1e-6);

    let o = ssn(dir.path(), &["rates", "--data", "d.svm", "--solver", "ssn-full"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["diagnostics"]["rate"]["rho"].as_f64().unwrap() > 0.0);

    assert_eq!(code(&ssn(dir.path(), &["rates", "--data", "d.svm", "--solver", "gd"])), 1);
}

#[test]
fn compare_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
        "dataset": {"kind": "synthetic", "n": 300, "p": 6, "condition_target": 10.0, "family": "logistic"},
        "family": "logistic",
        "reg": 0.001,
        "solvers": [{"variant": {"kind": "newton"}}, {"variant": {"kind": "bfgs"}}],
        "repetitions": 2
    }"#;
    std::fs::write(dir.path().join("exp.json"), spec).unwrap();
    let o = ssn(dir.path(), &["compare", "--spec", "exp.json", "-o", "out", "--threads", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("bfgs,1,")));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.json")).unwrap()).unwrap();
    assert_eq!(json["header"]["reference"]["solver"], "newton");
    assert!(json["header"]["echo"]["argv"].as_str().unwrap().starts_with("compare"));
}
