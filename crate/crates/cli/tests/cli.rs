use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use shellforge::bench::{run_bench, BenchOptions, WARN_EMPTY};

const BIN: &str = env!("CARGO_BIN_EXE_shellforge");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/levels")
}

fn fixture(name: &str) -> PathBuf {
    fixtures().join(format!("{name}.aaspkg"))
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("SHELLFORGE_PORT").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("not JSON ({e}): {}", stdout(o)))
}

#[test]
fn classify_prints_the_level() {
    for (name, level) in [("lvl0_pump", 0), ("lvl1_press", 1), ("lvl2_mill", 2), ("lvl3_avg", 3), ("lvl4_avg", 4), ("lvl5_avg", 5)] {
        let out = run(&["classify", fixture(name).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(stdout(&out).lines().next(), Some(format!("level: {level}").as_str()));
    }
}

#[test]
fn invoking_a_file_is_refused() {
    let out = run(&["invoke", fixture("lvl3_avg").to_str().unwrap(), "AvgTemp", "--args", r#"{"samples":[1,2,3,4]}"#]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NotExecutableInPassiveRuntime"));
}

#[test]
fn assess_row_for_level_five() {
    let out = run(&["assess", "--level", "5", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let row = json(&out);
    let want = [
        ("reliability", "R"),
        ("usability", "R"),
        ("performance", "R"),
        ("security", "R"),
        ("supportability", "R"),
        ("transferability", "G"),
    ];
    for (criterion, symbol) in want {
        assert_eq!(row[criterion], symbol, "{criterion}");
    }
    assert_eq!(row["level"], 5);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["assess", "--level", "6"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["classify", "/nonexistent.aaspkg"]).status.code(), Some(1));
    let bad_args = run(&["invoke", fixture("lvl3_avg").to_str().unwrap(), "AvgTemp", "--args", "[1"]);
    assert_eq!(bad_args.status.code(), Some(2));
    let bad_strategy = run(&["convert", fixture("lvl0_pump").to_str().unwrap(), "--to", "cloud"]);
    assert_eq!(bad_strategy.status.code(), Some(2));
}

#[test]
fn json_output_carries_the_text_data() {
    let file = fixture("lvl2_mill");
    let file = file.to_str().unwrap();
    let text = stdout(&run(&["classify", file]));
    let j = json(&run(&["classify", file, "--json"]));
    assert!(text.contains(&format!("level: {}", j["level"])));
    assert!(text.contains(j["dataFlow"].as_str().unwrap()));
    assert!(text.contains(j["shells"][0].as_str().unwrap()));
    assert!(text.contains(&format!("parameterized requests: {}", j["capabilities"]["parameterized_requests"])));

    let text = stdout(&run(&["recommend", "--target", "research", "--visibility", "white-box", "--complexity", "simple", "--fleet", "single"]));
    let j = json(&run(&["recommend", "--target", "research", "--visibility", "white-box", "--complexity", "simple", "--fleet", "single", "--json"]));
    for r in j["recommendations"].as_array().unwrap() {
        assert!(text.contains(&format!("Lvl {}", r["level"])));
        assert!(text.contains(r["rationale"].as_str().unwrap()));
    }
}

#[test]
fn convert_to_passive_writes_the_canonical_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.aaspkg");
    let o = run(&["convert", fixture("lvl4_avg").to_str().unwrap(), "--to", "passive", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("lvl4_avg")).unwrap());
    assert!(stdout(&o).lines().any(|l| l.starts_with("dropped:") && l.contains("service execution")));
}

#[test]
fn convert_to_standalone_builds_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    let o = run(&["convert", fixture("lvl3_avg").to_str().unwrap(), "--to", "standalone", "--out", bundle.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(bundle.join("launch.json").is_file());
    assert!(bundle.join("package.aaspkg").is_file());
    assert!(bundle.join("shellforge").is_file(), "launcher copied");

    let o = run(&["convert", fixture("lvl0_pump").to_str().unwrap(), "--to", "standalone", "--features", "api,sync", "--dry-run"]);
    assert_eq!(o.status.code(), Some(1));
}

/// Spawn `serve`, read its first line, then kill it.
fn first_serve_line(args: &[&str], env_port: Option<u16>) -> String {
    let mut cmd = Command::new(BIN);
    cmd.arg("serve").args(args).stdout(Stdio::piped()).stderr(Stdio::null()).env_remove("SHELLFORGE_PORT");
    if let Some(p) = env_port {
        cmd.env("SHELLFORGE_PORT", p.to_string());
    }
    let mut child = cmd.spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    line
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn serve_port_precedence() {
    let dir = fixtures();
    let dir = dir.to_str().unwrap();
    let env = free_port();
    assert_eq!(first_serve_line(&["--dir", dir], Some(env)).trim(), format!("listening on http://127.0.0.1:{env}"));
    let flag = free_port();
    let line = first_serve_line(&["--dir", dir, "--port", &flag.to_string()], Some(env));
    assert_eq!(line.trim(), format!("listening on http://127.0.0.1:{flag}"));
}

#[test]
fn serve_reports_a_busy_port() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let o = run(&["serve", "--port", &port]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("PortInUse"));
}

fn model_lines(o: &Output) -> Vec<String> {
    stdout(o).lines().filter(|l| !l.starts_with("simulator on") && !l.starts_with("server on")).map(String::from).collect()
}

#[test]
fn demo_passes_and_repeats() {
    let first = run(&["demo"]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let text = stdout(&first);
    assert!(text.contains("cross-level max |Δ| < 1e-9: PASS"), "{text}");
    assert!(text.contains("Telemetry.temp = 25 at t=15"));
    assert!(text.contains("asset cooling = 1"));
    assert!(text.contains("Transferability     G    R    R    O    O    G"));
    assert_eq!(model_lines(&first), model_lines(&run(&["demo"])));
}

#[test]
fn demo_without_simulator_reports_unreachable_endpoints() {
    let o = run(&["demo", "--no-sim"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("shadow sync (Lvl 1): EndpointUnreachable"), "{text}");
    assert!(text.contains("PASS"));
}

#[tokio::test]
async fn bench_rows_and_faults() {
    let report = run_bench(&BenchOptions { requests: 10, ..BenchOptions::default() }).await.unwrap();
    let levels: Vec<u8> = report.rows.iter().map(|r| r.level).collect();
    assert_eq!(levels, vec![0, 1, 2, 3, 4, 5]);
    assert!(report.rows.iter().filter(|r| r.level >= 3).all(|r| r.invoke_p50_ms.is_some()));
    assert_eq!(report.faults.len(), 2, "{:?}", report.warnings);
    let crash = &report.faults[0];
    assert_eq!(crash.status, Some(500));
    assert!(crash.others_unaffected);
    let corrupt = &report.faults[1];
    assert!(corrupt.detail.starts_with("error:"), "{}", corrupt.detail);
    assert!(corrupt.others_unaffected);
}

#[tokio::test]
async fn bench_against_an_empty_server() {
    let empty = tempfile::tempdir().unwrap();
    let report = run_bench(&BenchOptions { fixtures: empty.path().to_path_buf(), ..BenchOptions::default() }).await.unwrap();
    assert!(report.rows.is_empty());
    assert_eq!(report.warnings, vec![WARN_EMPTY.to_string()]);
}

#[tokio::test]
async fn bench_against_nothing_is_unreachable() {
    let port = free_port();
    let opts = BenchOptions { server: Some(format!("http://127.0.0.1:{port}")), ..BenchOptions::default() };
    let err = run_bench(&opts).await.unwrap_err();
    assert!(err.to_string().starts_with("TargetUnreachable"), "{err}");
}
