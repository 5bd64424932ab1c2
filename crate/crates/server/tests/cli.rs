use std::process::{Command, Output};

fn sparsebo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsebo")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bench_run_writes_regret_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("regret.csv");
    let o = sparsebo(&["bench", "run", "--fn", "branin", "--strategy", "standard", "--iters", "3", "--seeds", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iter,seed,metric,value,wallclock_ms");
    assert!(lines[1].starts_with("0,0,regret,"));
    assert!(lines.iter().any(|l| l.starts_with("0,1,regret,")));
    for l in &lines[1..] {
        let value: f64 = l.split(',').nth(3).unwrap().parse().unwrap();
        assert!(value >= 0.0);
    }

    let again = sparsebo(&["bench", "run", "--fn", "branin", "--strategy", "standard", "--iters", "3", "--seeds", "2"]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn usage_errors_exit_two_with_help() {
    let o = sparsebo(&["bench", "run", "--strategy", "standard"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage:"));
    let o = sparsebo(&["regress", "--table1-case", "5d"]);
    assert_eq!(o.status.code(), Some(2));
    let o = sparsebo(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Commands:"));
}

#[test]
fn runtime_errors_exit_one() {
    let o = sparsebo(&["bench", "run", "--fn", "nosuch", "--iters", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nosuch"));
    let o = sparsebo(&["campaign", "status", "--file", "/nonexistent/c.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("NotFound"));
}

#[test]
fn campaign_file_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    let f = file.to_str().unwrap();
    let o = sparsebo(&["campaign", "new", "--file", f, "--bounds", "-5:10,0:15", "--sense", "minimize", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = sparsebo(&["campaign", "new", "--file", f, "--bounds", "0:1"]);
    assert_eq!(o.status.code(), Some(1));

    let o = sparsebo(&["campaign", "ask", "--file", f]);
    assert!(o.status.success(), "{}", stderr(&o));
    let suggestion: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let point = suggestion["point"].as_array().unwrap().clone();
    assert_eq!(point.len(), 2);

    let o = sparsebo(&["campaign", "ask", "--file", f]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Conflict"), "{}", stderr(&o));

    let o = sparsebo(&["campaign", "tell", "--file", f, "--y", "-1.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = sparsebo(&["campaign", "tell", "--file", f, "--y", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Conflict"));
    let o = sparsebo(&["campaign", "tell", "--file", f, "--y", "4", "--x", "1,2", "--out-of-band"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = sparsebo(&["campaign", "status", "--file", f]);
    let status: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(status["observations"], 2);
    assert_eq!(status["incumbent"]["y"], -1.5);
    assert_eq!(status["incumbent"]["x"], serde_json::Value::Array(point));
}

#[test]
fn regress_one_dimensional_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mse.csv");
    let o = sparsebo(&["regress", "--table1-case", "1d", "--trials", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,seed,metric,value,wallclock_ms"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.contains(",mse_")));
    assert!(rows.iter().all(|r| r.split(',').nth(3).unwrap().parse::<f64>().unwrap() >= 0.0));
    assert!(stderr(&o).contains("median mse"));
}

#[test]
fn gmd_methods_emit_probability_tables() {
    for (method, model) in [("ts", "full"), ("smc", "full"), ("ei", "full"), ("ts", "ssgp")] {
        let o = sparsebo(&["gmd", "--method", method, "--model", model, "--samples", "50"]);
        assert!(o.status.success(), "{method}/{model}: {}", stderr(&o));
        let text = stdout(&o);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bin,x0,probability"));
        let total: f64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{method}/{model}: {total}");
        assert!(stderr(&o).contains("entropy"));
    }
}
