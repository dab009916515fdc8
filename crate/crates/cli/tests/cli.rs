use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Command, Output, Stdio};

use dynsched_core::reference;

fn dynsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynsched")).args(args).env_remove("DYNSCHED_ARCHIVE_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn cost_line(s: &str) -> f64 {
    s.lines().find_map(|l| l.strip_prefix("cost: ")).unwrap().trim().parse().unwrap()
}

#[test]
fn solve_prints_unit_scv_matrix() {
    let o = dynsched(&["solve", "--scv", "1", "--omega", "0.5", "--n", "15"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<Vec<f64>> = out
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("cost"))
        .map(|l| l.split_whitespace().skip(1).map(|x| x.parse().unwrap()).collect())
        .collect();
    let expected = reference::tau_table_hom15();
    assert_eq!(rows.len(), 14);
    for (i, (got, want)) in rows.iter().zip(&expected).enumerate() {
        assert_eq!(got.len(), i + 1);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= 0.01, "row {}: {g} vs {w}", i + 1);
        }
    }
    assert!((cost_line(&out) - 6.05).abs() <= 0.02);
}

#[test]
fn solve_single_client_costs_nothing() {
    let o = dynsched(&["solve", "--n", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(cost_line(&stdout(&o)), 0.0);
}

#[test]
fn solve_between_neighbouring_variabilities() {
    let o = dynsched(&["solve", "--scv", "0.5", "--omega", "0.5", "--n", "15", "--delta", "0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = cost_line(&stdout(&o));
    let row = |s: f64| reference::PHASE_COSTS.iter().find(|r| r.0 == s).unwrap().1[4];
    assert!(c > row(0.25) && c < row(0.75), "{c}");
}

#[test]
fn solve_writes_archive_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cell.dsa");
    let o = dynsched(&["solve", "--scv", "1.5", "--n", "4", "--delta", "0.1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let arc = dynsched_core::store::ScheduleArchive::load(&out).unwrap();
    assert_eq!(arc.solution.n, 4);
    assert!((arc.solution.cost - cost_line(&stdout(&o))).abs() < 1e-4);
    assert!(std::fs::read_to_string(out.with_extension("csv")).unwrap().starts_with("i,k,age,tau,xi"));
}

#[test]
fn reproduce_stationary_table_passes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tab2a.csv");
    let o = dynsched(&["reproduce", "--table", "tab2a", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    assert_eq!(err.lines().filter(|l| l.starts_with("PASS")).count(), 54);
    assert!(err.contains("tab2a: 54 checks, 0 failed"));
    assert!(std::fs::read_to_string(csv).unwrap().starts_with("# table=tab2a"));
}

#[test]
fn reproduce_mismatch_exits_one() {
    // the ordering table carries one inconsistent published cell
    let o = dynsched(&["reproduce", "--table", "het3"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL"));
}

#[test]
fn unknown_table_is_usage_error() {
    let o = dynsched(&["reproduce", "--table", "tab9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown table"));
}

#[test]
fn bad_flag_is_usage_error() {
    assert_eq!(dynsched(&["solve", "--omega", "1.5"]).status.code(), Some(2));
    assert_eq!(dynsched(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn serve_without_archives_fails_clearly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let o = dynsched(&["serve", "--dir", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
}

fn http_get(addr: &str, path: &str) -> (u16, serde_json::Value) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let status = raw.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = raw.split("\r\n\r\n").nth(1).unwrap();
    (status, serde_json::from_str(body).unwrap())
}

#[test]
fn precompute_then_serve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = dynsched(&["precompute", "--dir", d, "--n", "15", "--scvs", "1", "--omegas", "0.5,0.9", "--coarsen", "2", "--jobs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["cells"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("scv=1.00/omega=0.9/n=15.dsa").is_file());

    let mut child = Command::new(env!("CARGO_BIN_EXE_dynsched"))
        .args(["serve", "--port", "0"])
        .env("DYNSCHED_ARCHIVE_DIR", d)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_string();
    let (status, v) = http_get(&addr, "/v1/next-appointment?scv=1&omega=0.5&n=15&i=1&k=1&u=0");
    let (missing, _) = http_get(&addr, "/v1/next-appointment?scv=1&omega=0.3&n=15&i=1&k=1");
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(status, 200);
    assert!((v["tau"].as_f64().unwrap() - 0.88).abs() <= 0.01, "{v}");
    assert_eq!(missing, 404);
}
