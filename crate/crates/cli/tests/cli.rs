use std::process::{Command, Output};

use serde_json::Value;

fn forestbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forestbound"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&stdout(&forestbound(args))).unwrap()
}

#[test]
fn table_json_schema() {
    let v = json(&["table", "--r-min", "3", "--r-max", "10", "--json"]);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for (k, row) in rows.iter().enumerate() {
        for key in ["r", "p0", "xi", "Xi", "subcritical"] {
            assert!(row.get(key).is_some(), "missing {key}");
        }
        assert_eq!(row["r"], k as u64 + 3);
    }
    let xi: Vec<f64> = rows.iter().map(|r| r["xi"].as_f64().unwrap()).collect();
    assert!(xi.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn bound_text_reports_xi() {
    let text = stdout(&forestbound(&["bound", "--r", "3"]));
    let line = text.lines().find(|l| l.starts_with("xi = ")).unwrap();
    let xi: f64 = line["xi = ".len()..].parse().unwrap();
    assert!((xi - 0.7268).abs() <= 1e-3);
}

#[test]
fn bound_at_fixed_p0() {
    let v = json(&["bound", "--r", "4", "--p0", "0.2", "--json"]);
    assert_eq!(v["p0"], 0.2);
    let terms = &v["terms"];
    let sum = terms["root"].as_f64().unwrap()
        + terms["integral"].as_f64().unwrap()
        + terms["white"].as_f64().unwrap();
    assert!((sum - v["xi"].as_f64().unwrap()).abs() < 1e-5);
    assert!(v.get("grid_local_maxima").is_none());
}

#[test]
fn exit_codes() {
    assert_eq!(forestbound(&["bound", "--r", "2"]).status.code(), Some(2));
    assert_eq!(
        forestbound(&["bound", "--r", "3", "--p0", "1.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(forestbound(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        forestbound(&["simulate", "--n", "5", "--r", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        forestbound(&["simulate", "--graph", "/nonexistent/graph.txt"])
            .status
            .code(),
        Some(2)
    );
    // independence at i = 2 has no sampling fallback
    let out = forestbound(&["oracle", "--check", "independence", "--i", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    assert!(out.stdout.is_empty());
}

#[test]
fn precision_flag() {
    let v = json(&[
        "bound",
        "--r",
        "3",
        "--p0",
        "0.2",
        "--json",
        "--precision",
        "3",
    ]);
    let xi = v["xi"].as_f64().unwrap();
    assert!(format!("{xi}").trim_start_matches("0.").len() <= 3);
    assert_eq!(
        forestbound(&["table", "--precision", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn recurrence_trace_csv() {
    let text = stdout(&forestbound(&[
        "trace", "--mode", "exact", "--r", "3", "--p0", "0.2", "--p", "0.1", "--steps", "4",
    ]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,w,b,q,s,t");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[1], "0,0.4096,0.3072,0.262144,0.131072,0.065536");
    let defaulted = stdout(&forestbound(&[
        "trace",
        "--mode",
        "linearized",
        "--r",
        "3",
        "--p0",
        "0.2",
        "--p",
        "0.5",
    ]));
    assert_eq!(defaulted.lines().count(), 1 + 11);
}

#[test]
fn ode_trace_csv() {
    let text = stdout(&forestbound(&[
        "trace", "--mode", "ode", "--r", "4", "--p0", "0.1", "--dx", "0.5",
    ]));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,w,b,q,s,t,b_integral_so_far");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows[1][0], 0.5);
    assert!(rows.windows(2).all(|w| w[1][6] >= w[0][6]));
    assert_eq!(
        forestbound(&["trace", "--mode", "exact", "--r", "3", "--p0", "0.2"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_json_schema() {
    let v = json(&[
        "simulate", "--n", "500", "--r", "3", "--seed", "11", "--json",
    ]);
    for key in [
        "n",
        "r",
        "params",
        "forest_size",
        "pbar_size",
        "wbar_size",
        "repairs",
        "fraction",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["params"]["seed"], 11);
    assert_eq!(v["params"]["steps"], 250);
    let size = v["forest_size"].as_u64().unwrap();
    assert_eq!(
        size,
        v["pbar_size"].as_u64().unwrap() + v["wbar_size"].as_u64().unwrap()
            - v["repairs"].as_u64().unwrap()
    );
}

#[test]
fn simulate_on_supplied_graph() {
    let dir = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let path = dir.join("cube.txt");
    // 3-cube
    std::fs::write(
        &path,
        "8 12\n0 1\n0 2\n0 4\n1 3\n1 5\n2 3\n2 6\n3 7\n4 5\n4 6\n5 7\n6 7\n",
    )
    .unwrap();
    let v = json(&[
        "simulate",
        "--graph",
        path.to_str().unwrap(),
        "--runs",
        "4",
        "--json",
    ]);
    assert_eq!(v["n"], 8);
    assert_eq!(v["r"], 3);
    assert_eq!(v["per_run"].as_array().unwrap().len(), 4);

    let fixture = json(&["simulate", "--fixture", "petersen", "--p", "0", "--json"]);
    assert_eq!(fixture["n"], 10);
    assert_eq!(fixture["params"]["steps"], 0);
}

#[test]
fn oracle_checks_report_pass() {
    for check in ["initial", "step", "cor41", "cor42", "cor43", "cor44"] {
        let v = json(&["oracle", "--check", check, "--json"]);
        assert_eq!(v["passed"], true, "{check}: {v}");
        assert_eq!(v["method"], "exact");
    }
    let v = json(&[
        "oracle",
        "--check",
        "cor41",
        "--i",
        "2",
        "--samples",
        "20000",
        "--seed",
        "4",
        "--json",
    ]);
    assert_eq!(v["method"], "monte-carlo");
    assert_eq!(v["fallback"], true);
    assert_eq!(v["seed"], 4);
}

#[test]
fn output_is_reproducible() {
    for args in [
        &[
            "simulate", "--n", "300", "--r", "4", "--seed", "3", "--runs", "2", "--format", "csv",
        ][..],
        &[
            "oracle",
            "--check",
            "cor44",
            "--monte-carlo",
            "--samples",
            "5000",
            "--seed",
            "1",
            "--json",
        ][..],
    ] {
        assert_eq!(forestbound(args).stdout, forestbound(args).stdout);
    }
}
