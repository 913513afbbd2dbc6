use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gamma-glm"));
    c.env_remove("GAMMA_GLM_THREADS").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in {out}"))
        .parse()
        .unwrap()
}

fn simulated(dir: &Path, n: &str, seed: &str, name: &str) {
    let o = run(&["simulate", "--n", n, "--p", "15", "--eps", "0.2", "--seed", seed, "--out", name], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn simulate_writes_data_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), "100", "4", "d.csv");
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(csv.starts_with("x1,x2,"));
    assert_eq!(csv.lines().count(), 101);
    let truth = fs::read_to_string(dir.path().join("d.csv.truth")).unwrap();
    assert!(truth.contains("beta = 1,2,0,4,0,0,7,0,0,0,11,0,0,0,0"));
    assert_eq!(truth.lines().find(|l| l.starts_with("contaminated")).unwrap().split(',').count(), 20);
}

#[test]
fn fit_evaluate_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated(d, "600", "1", "train.csv");
    simulated(d, "1200", "2", "test.csv");
    let o = run(&["fit", "--family", "linear", "--data", "train.csv", "--seed", "5", "--out", "m.model"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(value(&stdout(&o), "emp_risk") < 0.0);

    let model = fs::read_to_string(d.join("m.model")).unwrap();
    for key in ["family = linear", "gamma = 0.1", "lambda = 0.01", "stop_index = ", "pg_norm = ", "run.seed = 5"] {
        assert!(model.contains(key), "missing {key}");
    }

    let o = run(&["evaluate", "--model", "m.model", "--test", "test.csv", "--metric", "exprisk"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let risk = value(&stdout(&o), "exp_risk");
    assert!(risk < -0.3, "exp_risk {risk}");

    let o = run(&["replay", "--manifest", "m.model.manifest", "--out", "again.model"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(d.join("m.model")).unwrap(), fs::read(d.join("again.model")).unwrap());
}

#[test]
fn manifest_records_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated(d, "300", "3", "train.csv");
    let o = run(&["fit", "--family", "linear", "--data", "train.csv", "--out", "m.model", "--manifest", "run.txt"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = fs::read_to_string(d.join("run.txt")).unwrap();
    for key in ["command = fit", "arg.n-total = 300", "arg.n-post = 30", "arg.optimizer = 2rspg", "arg.d-tilde = 1", "elapsed_seconds = "] {
        assert!(m.contains(key), "missing {key} in\n{m}");
    }
}

#[test]
fn cv_reports_a_grid_entry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulated(d, "400", "6", "train.csv");
    let o = run(
        &["cv", "--family", "linear", "--data", "train.csv", "--grid", "1e-1,1e-2", "--folds", "3", "--out", "cv.txt"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let star = value(&stdout(&o), "lambda_star");
    assert!(star == 0.1 || star == 0.01);
    assert!(fs::read_to_string(d.join("cv.txt")).unwrap().contains("rocv = "));
}

#[test]
fn poisson_fit_with_offset_and_rtmspe() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("x1,exposure,y\n");
    for i in 0..300 {
        let x = ((i * 37) % 100) as f64 / 100.0 - 0.5;
        let t = 1.0 + (i % 4) as f64;
        let y = (t * (0.5 + 0.8 * x).exp()).floor() + (i % 3) as f64;
        csv.push_str(&format!("{x},{t},{y}\n"));
    }
    fs::write(d.join("counts.csv"), csv).unwrap();
    let o = run(
        &["fit", "--family", "poisson", "--data", "counts.csv", "--offset", "exposure", "--log-offset", "--out", "p.model"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["evaluate", "--model", "p.model", "--test", "counts.csv", "--metric", "rtmspe", "--trim", "0.1"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(value(&stdout(&o), "rtmspe") >= 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let o = run(&["fit", "--bogus"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));

    let o = run(&["fit", "--family", "linear", "--data", "missing.csv", "--out", "m"], d);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim().lines().count(), 1);

    fs::write(d.join("bad.csv"), "x1,y\n1,2\nfoo,3\n").unwrap();
    let o = run(&["fit", "--family", "linear", "--data", "bad.csv", "--out", "m"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3"), "{}", stderr(&o));

    let mut big = String::from("x1,y\n");
    for i in 0..50 {
        big.push_str(&format!("{},{}\n", i as f64 / 50.0, 40_000 + i));
    }
    fs::write(d.join("big.csv"), big).unwrap();
    let o = run(
        &["fit", "--family", "poisson", "--data", "big.csv", "--series-max-terms", "10", "--out", "m"],
        d,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("gamma-glm: numerical failure"));

    simulated(d, "50", "1", "lin.csv");
    let o = run(&["fit", "--family", "linear", "--data", "lin.csv", "--out", "lin.model"], d);
    assert!(o.status.success());
    let o = run(&["evaluate", "--model", "lin.model", "--test", "lin.csv", "--metric", "rtmspe"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_count_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = bin()
        .args(["simulate", "--n", "20", "--p", "11", "--out", "x.csv"])
        .current_dir(d)
        .env("GAMMA_GLM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    simulated(d, "300", "8", "t.csv");
    let fit_with = |threads: &str, out: &str| {
        let o = bin()
            .args(["fit", "--family", "linear", "--data", "t.csv", "--out", out])
            .current_dir(d)
            .env("GAMMA_GLM_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(d.join(out)).unwrap()
    };
    assert_eq!(fit_with("1", "one.model"), fit_with("4", "four.model"));
}
