//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRunner};
use serde_json::{json, Value};
use shellforge_conformance::{
    add_service, artifact, executable_package, fixture_path, fixtures_dir, AVG_C_PATH, AVG_EXE_PATH, AVG_PIPELINE_PATH,
    AVG_RS_PATH,
};
use shellforge_core::asset::{sim_run, start_sync, PropertySink, PropertyUpdate, QueryAgg, QueryFilter, QueryResult, QuerySpec, Sample, Session, SimConfig, SyncError};
use shellforge_core::classify::{
    classify_data_flow, classify_level, full_quality_table, DataFlowClass, FlowError, HeavinessLevel, QualityRating,
    RuntimeStrategy,
};
use shellforge_core::engine::{self, Cmp, EngineError, ServiceDoc};
use shellforge_core::model::{
    parse_package, serialize_package, validate, AasPackage, ArtifactKind, Identifier, ResourceBudget, SubmodelElement, SyncConfig,
    SyncMode,
};
use shellforge_core::packager::{
    build_standalone, conversion_report_with, load_bundle, RuntimeFeature, RuntimeState, StandaloneConfig,
};
use shellforge_core::passive::{PassiveContext, PassiveError};
use shellforge_core::server::{encode_id, serve, serve_bundle, ServerConfig};

/// Cross-level agreement with the analytic oracle.
const SERVICE_TOLERANCE: f64 = 1e-9;
/// Slack allowed past a budget before the service must be gone.
const KILL_SLACK: Duration = Duration::from_millis(500);
const CRASH_ITERATIONS: usize = 50;
const QUERY_CASES: u32 = 200;
const AUGMENTATIONS: u32 = 100;
const BENCH_REQUESTS: usize = 100;
const BENCH_P50_LIMIT_MS: f64 = 50.0;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixture(level: u8) -> AasPackage {
    parse_package(&std::fs::read(fixture_path(&fixtures_dir(), level)).expect("fixture readable")).expect("fixture valid")
}

// ---------------------------------------------------------------- 1

fn table_one() -> Outcome {
    use QualityRating::{PartlyConsider as O, StronglyConsider as R, WithoutHesitation as G};
    // Rows: reliability, usability, performance, security, supportability, transferability.
    let want = [
        [G, G, O, R, R, R],
        [G, O, O, R, R, R],
        [G, O, O, R, R, R],
        [G, O, O, R, R, R],
        [G, G, G, O, O, R],
        [G, R, R, O, O, G],
    ];
    let table = full_quality_table();
    let mut cells = 0;
    for (criterion, row) in want.iter().enumerate() {
        for (level, rating) in row.iter().enumerate() {
            let got = table[level].ratings()[criterion];
            ensure!(got == *rating, "criterion {criterion} at Lvl {level}: {got:?}, want {rating:?}");
            cells += 1;
        }
    }
    Ok(format!("{cells}/36 cells"))
}

// ---------------------------------------------------------------- 2

fn level_fixtures() -> Outcome {
    for level in 0..6u8 {
        let got = classify_level(&fixture(level));
        ensure!(got.value() == level, "fixture {level} classifies as Lvl {got}");
    }
    let mut runner = TestRunner::new(Config { cases: AUGMENTATIONS, failure_persistence: None, ..Config::default() });
    let strategy = (0u8..6, prop::collection::vec(any::<u8>(), 1..64), "[a-z]{1,8}");
    let count = std::cell::Cell::new(0u32);
    runner
        .run(&strategy, |(level, bytes, name)| {
            count.set(count.get() + 1);
            let base = fixture(level);
            let path = format!("artifacts/extra_{name}.exe.bin");
            prop_assume!(base.artifact(&path).is_none());
            let pkg = add_service(base, &format!("Extra{}", name.to_uppercase()), artifact(ArtifactKind::Executable, &path), bytes);
            let violations = validate(&pkg);
            prop_assert!(violations.is_empty(), "augmented Lvl {level} invalid: {violations:?}");
            prop_assert_eq!(classify_level(&pkg), HeavinessLevel::EXECUTABLE);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("6 fixtures at Lvl 0-5; {} executable augmentations all Lvl 5", count.get()))
}

// ---------------------------------------------------------------- 3

fn data_flow() -> Outcome {
    use SyncMode::{Automatic as A, Manual as M};
    let base = fixture(2).sync_config.expect("twin fixture has sync");
    let cfg = |inbound, outbound| SyncConfig { inbound, outbound, ..base.clone() };
    let expect: [((SyncMode, SyncMode), Result<DataFlowClass, FlowError>); 4] = [
        ((M, M), Ok(DataFlowClass::DigitalModel)),
        ((A, M), Ok(DataFlowClass::DigitalShadow)),
        ((A, A), Ok(DataFlowClass::DigitalTwin)),
        ((M, A), Err(FlowError::UnclassifiedFlow)),
    ];
    let mut rows = 0;
    for ((i, o), want) in expect {
        for strategy in RuntimeStrategy::ALL {
            let got = classify_data_flow(&cfg(i, o), strategy);
            let want = if strategy == RuntimeStrategy::Passive { Ok(DataFlowClass::DigitalModel) } else { want };
            ensure!(got == want, "({i:?}, {o:?}) under {strategy}: {got:?}, want {want:?}");
            rows += 1;
        }
    }
    Ok(format!("{rows} (inbound, outbound, strategy) combinations"))
}

// ---------------------------------------------------------------- 4

fn temp(t: f64) -> f64 {
    20.0 + 5.0 * (2.0 * PI * t / 60.0).sin()
}

/// Mean of temp over the four samples ending at `t`, via the sum-of-sines identity.
fn analytic_mean(t: f64) -> f64 {
    let w = 2.0 * PI / 60.0;
    20.0 + 5.0 * (w * t - 1.5 * w).sin() * (2.0 * w).sin() / (4.0 * (w / 2.0).sin())
}

fn avg_of(doc: &ServiceDoc) -> Result<f64, String> {
    doc.get("avg").and_then(Value::as_f64).ok_or_else(|| format!("no avg in {}", doc.values_json()))
}

fn samples_doc(samples: &[f64]) -> ServiceDoc {
    ServiceDoc::from_object(json!({ "samples": samples })).expect("object")
}

fn cross_level() -> Outcome {
    let series: Vec<f64> = (0..1000).map(|t| temp(t as f64)).collect();
    let services = [(3u8, AVG_PIPELINE_PATH), (4, AVG_RS_PATH), (4, AVG_C_PATH), (5, AVG_EXE_PATH)];
    let mut worst = 0.0f64;
    let mut calls = 0;
    for (level, entry) in services {
        let pkg = fixture(level);
        let art = pkg.artifact(entry).ok_or_else(|| format!("Lvl {level} lacks {entry}"))?.clone();
        let service = engine::load_artifact(&art, &pkg).map_err(|e| format!("Lvl {level} {entry}: {e}"))?;
        // The pipeline is cheap enough to check every window; processes every 37th.
        let stride = if level == 3 { 1 } else { 37 };
        let mut ends: Vec<usize> = (3..series.len()).step_by(stride).collect();
        if ends.last() != Some(&(series.len() - 1)) {
            ends.push(series.len() - 1);
        }
        for end in ends {
            let out = engine::invoke(&service, &samples_doc(&series[..=end]), &art.budget)
                .map_err(|e| format!("Lvl {level} {entry} at {end}: {e}"))?;
            let delta = (avg_of(&out)? - analytic_mean(end as f64)).abs();
            ensure!(delta < SERVICE_TOLERANCE, "Lvl {level} {entry} window ending {end}: |Δ| = {delta:e}");
            worst = worst.max(delta);
            calls += 1;
        }
    }

    let pkg = fixture(3);
    let art = pkg.artifact(AVG_PIPELINE_PATH).unwrap().clone();
    let run = || -> Result<(u64, Value), String> {
        let service = engine::load_artifact(&art, &pkg).map_err(|e| e.to_string())?;
        let out = engine::invoke(&service, &samples_doc(&series), &art.budget).map_err(|e| e.to_string())?;
        Ok((avg_of(&out)?.to_bits(), out.values_json()))
    };
    let (a, b) = (run()?, run()?);
    ensure!(a == b, "pipeline runs differ: {a:?} vs {b:?}");
    Ok(format!("{calls} invocations over 1000 samples, max |Δ| = {worst:e} (< {SERVICE_TOLERANCE:e}); pipeline bit-identical"))
}

// ---------------------------------------------------------------- 5

const VARS: [&str; 3] = ["temp", "rpm", "jobs"];

/// The generators, written out independently of the simulator.
fn signal(var: &str, t: f64) -> f64 {
    match var {
        "temp" => temp(t),
        "rpm" => 1000.0 + 50.0 * t.rem_euclid(10.0),
        "jobs" => (t / 30.0).floor(),
        other => panic!("no generator {other}"),
    }
}

fn brute_force(q: &QuerySpec) -> QueryResult {
    let mut times = Vec::new();
    let mut k = 0.0;
    loop {
        let t = q.from + k * q.step;
        if t > q.to {
            break;
        }
        times.push(t);
        k += 1.0;
    }
    let kept: Vec<f64> = times
        .into_iter()
        .filter(|&t| q.filter.as_ref().is_none_or(|f| f.cmp.holds(signal(&f.var, t), f.literal)))
        .collect();
    let fold = |var: &str, f: &dyn Fn(f64, f64) -> f64, init: f64| kept.iter().fold(init, |acc, &t| f(acc, signal(var, t)));
    match q.agg {
        QueryAgg::None => QueryResult::Set(
            kept.iter()
                .flat_map(|&t| q.vars.iter().map(move |v| Sample { var: v.clone(), value: signal(v, t), ts: t }))
                .collect(),
        ),
        agg => {
            let Some(&last) = kept.last() else { return QueryResult::Aggregate(Vec::new()) };
            QueryResult::Aggregate(
                q.vars
                    .iter()
                    .map(|v| {
                        let value = match agg {
                            QueryAgg::Mean => fold(v, &|a, b| a + b, 0.0) / kept.len() as f64,
                            QueryAgg::Min => fold(v, &f64::min, f64::INFINITY),
                            _ => fold(v, &f64::max, f64::NEG_INFINITY),
                        };
                        Sample { var: v.clone(), value, ts: last }
                    })
                    .collect(),
            )
        }
    }
}

fn arb_query() -> impl Strategy<Value = QuerySpec> {
    let vars = prop::sample::subsequence(VARS.to_vec(), 1..=3).prop_shuffle();
    let filter = prop::option::of((
        prop::sample::select(VARS.to_vec()),
        prop::sample::select(vec![Cmp::Lt, Cmp::Le, Cmp::Eq, Cmp::Ge, Cmp::Gt]),
        prop_oneof![15.0..25.0f64, 1000.0..1500.0f64, (0i32..8).prop_map(f64::from)],
    ));
    let agg = prop::sample::select(vec![QueryAgg::None, QueryAgg::Mean, QueryAgg::Min, QueryAgg::Max]);
    (vars, 0.0..600.0f64, 0.0..120.0f64, prop_oneof![0.1..10.0f64, prop::sample::select(vec![0.5, 1.0, 2.5, 5.0])], filter, agg)
        .prop_map(|(vars, from, span, step, filter, agg)| QuerySpec {
            vars: vars.into_iter().map(String::from).collect(),
            from,
            to: from + span,
            step,
            filter: filter.map(|(var, cmp, literal)| QueryFilter { var: var.into(), cmp, literal }),
            agg,
        })
}

async fn query_oracle() -> Outcome {
    let sim = sim_run(&SimConfig::default()).await.map_err(|e| e.to_string())?;
    let mut session = Session::connect(&sim.endpoint(true)).await.map_err(|e| e.to_string())?;
    let mut runner = TestRunner::new(Config { cases: QUERY_CASES, failure_persistence: None, ..Config::default() });
    let mut queries = Vec::new();
    for _ in 0..QUERY_CASES {
        queries.push(arb_query().new_tree(&mut runner).map_err(|e| e.to_string())?.current());
    }
    let mut points = 0;
    for q in &queries {
        let got = session.query(q).await.map_err(|e| format!("{q:?}: {e}"))?;
        let want = brute_force(q);
        ensure!(got == want, "query {q:?} disagrees with the generators");
        points += match &want {
            QueryResult::Set(s) | QueryResult::Aggregate(s) => s.len(),
        };
    }
    sim.stop().await;
    Ok(format!("{} queries, {points} samples, exact", queries.len()))
}

// ---------------------------------------------------------------- 6

/// Drop every `ts` field: timestamps are the one thing allowed to differ.
fn without_ts(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.iter().filter(|(k, _)| *k != "ts").map(|(k, v)| (k.clone(), without_ts(v))).collect()),
        Value::Array(a) => Value::Array(a.iter().map(without_ts).collect()),
        other => other.clone(),
    }
}

#[derive(Debug, PartialEq)]
struct Answer {
    status: u16,
    body: Result<Value, Vec<u8>>,
}

async fn ask(http: &reqwest::Client, base: &str, method: &str, path: &str, body: Option<Value>) -> Result<Answer, String> {
    let url = format!("{base}{path}");
    let mut req = match method {
        "GET" => http.get(&url),
        "POST" => http.post(&url),
        "PATCH" => http.patch(&url),
        "DELETE" => http.delete(&url),
        other => return Err(format!("method {other}")),
    };
    if let Some(b) = body {
        req = req.json(&b);
    }
    let resp = req.send().await.map_err(|e| format!("{method} {path}: {e}"))?;
    let status = resp.status().as_u16();
    let bytes = resp.bytes().await.map_err(|e| e.to_string())?.to_vec();
    let body = serde_json::from_slice::<Value>(&bytes).map(|v| without_ts(&v)).map_err(|_| bytes);
    Ok(Answer { status, body })
}

/// Every route a single-shell runtime answers, as (method, path, body).
fn route_table(pkg: &AasPackage) -> Vec<(&'static str, String, Option<Value>)> {
    let shell = &pkg.shells[0].id;
    let id = encode_id(shell);
    let mut routes = vec![
        ("GET", "/health".to_string(), None),
        ("GET", "/shells".to_string(), None),
        ("GET", format!("/packages/{id}"), None),
        ("GET", format!("/packages/{}", encode_id(&Identifier::new("urn:none"))), None),
        ("GET", format!("/shells/{id}/sync"), None),
        ("GET", format!("/shells/{id}/elements/Telemetry.nope/value"), None),
    ];
    for path in pkg.property_paths(shell) {
        routes.push(("GET", format!("/shells/{id}/elements/{path}/value"), None));
    }
    for sm in pkg.shells[0].submodel_refs.iter().filter_map(|r| pkg.submodel(r)) {
        for e in &sm.elements {
            let path = format!("{}.{}", sm.id_short, e.id_short());
            if matches!(e, SubmodelElement::Operation(_)) {
                routes.push(("POST", format!("/shells/{id}/elements/{path}/invoke"), Some(json!({ "samples": [1.5, 2, 3, 4, 5.25] }))));
                routes.push(("POST", format!("/shells/{id}/elements/{path}/invoke"), Some(json!({ "samples": [1] }))));
                routes.push(("POST", format!("/shells/{id}/elements/{path}/invoke"), Some(json!({}))));
            } else {
                routes.push(("POST", format!("/shells/{id}/elements/{path}/invoke"), Some(json!({}))));
            }
        }
    }
    routes.extend([
        ("PATCH", format!("/shells/{id}/elements/Nameplate.SerialNumber/value"), Some(json!({ "value": "SN-PATCHED" }))),
        ("PATCH", format!("/shells/{id}/elements/Telemetry.rpm/value"), Some(json!({ "value": "fast" }))),
        ("GET", format!("/shells/{id}/elements/Nameplate.SerialNumber/value"), None),
        ("POST", "/subscriptions".to_string(), Some(json!({ "callbackUrl": "http://127.0.0.1:9/hook", "filter": {} }))),
        ("GET", "/subscriptions".to_string(), None),
        ("DELETE", "/subscriptions/sub-1".to_string(), None),
        ("DELETE", "/subscriptions/sub-1".to_string(), None),
        ("GET", format!("/packages/{id}"), None),
    ]);
    routes
}

fn bundle_features(pkg: &AasPackage) -> std::collections::BTreeSet<RuntimeFeature> {
    let mut f = RuntimeFeature::all();
    if pkg.endpoints.is_empty() {
        f.remove(&RuntimeFeature::Sync);
    }
    f
}

async fn strategy_round_trip() -> Outcome {
    let http = reqwest::Client::new();

    // Upload then export: byte-identical canonical files.
    let server = serve(ServerConfig { auto_sync: false, ..ServerConfig::default() }).await.map_err(|e| e.to_string())?;
    for level in 0..6u8 {
        let bytes = std::fs::read(fixture_path(&fixtures_dir(), level)).map_err(|e| e.to_string())?;
        let resp = http.post(format!("{}/packages", server.url())).body(bytes.clone()).send().await.map_err(|e| e.to_string())?;
        ensure!(resp.status().as_u16() == 201, "upload Lvl {level}: {}", resp.status());
        let id = encode_id(&fixture(level).shells[0].id);
        let back = http.get(format!("{}/packages/{id}", server.url())).send().await.map_err(|e| e.to_string())?;
        let back = back.bytes().await.map_err(|e| e.to_string())?;
        ensure!(back.as_ref() == bytes.as_slice(), "export of Lvl {level} differs from the upload");
    }
    server.stop().await;

    // Standalone against server-hosted, same package and features.
    let mut compared = 0;
    for level in 0..6u8 {
        let pkg = fixture(level);
        let features = bundle_features(&pkg);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = StandaloneConfig { target_dir: dir.path().to_path_buf(), include_build_cache: level == 4, features: features.clone() };
        build_standalone(&pkg, &cfg, None).map_err(|e| format!("Lvl {level} bundle: {e}"))?;
        let standalone = serve_bundle(dir.path(), Some(0)).await.map_err(|e| format!("Lvl {level} bundle: {e}"))?;
        let hosted = serve(ServerConfig { features, ..ServerConfig::default() }).await.map_err(|e| e.to_string())?;
        hosted.repo().host(pkg.clone(), None).await.map_err(|e| e.to_string())?;

        for (method, path, body) in route_table(&pkg) {
            let a = ask(&http, &hosted.url(), method, &path, body.clone()).await?;
            let b = ask(&http, &standalone.url(), method, &path, body).await?;
            ensure!(a == b, "Lvl {level} {method} {path}: server-hosted {a:?} vs standalone {b:?}");
            compared += 1;
        }
        hosted.stop().await;
        standalone.stop().await;
    }

    // Dropped features fail after conversion.
    let mut dropped_checked = 0;
    for level in 0..6u8 {
        let pkg = fixture(level);
        let ctx = PassiveContext::new(pkg.clone());
        for from in RuntimeStrategy::ALL {
            let state = RuntimeState { subscriptions: 2, build_cache: level == 4 };
            let report = conversion_report_with(from, RuntimeStrategy::Passive, &pkg, &state);
            ensure!(report.retained.is_empty(), "passive retains {:?}", report.retained);
            for feature in &report.dropped {
                ensure!(ctx.exercise(feature).is_err(), "Lvl {level} from {from}: {feature} still works in passive");
                dropped_checked += 1;
            }
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pkg = fixture(3);
    let cfg = StandaloneConfig { target_dir: dir.path().to_path_buf(), include_build_cache: false, features: [RuntimeFeature::Api].into() };
    let (_, report) = build_standalone(&pkg, &cfg, None).map_err(|e| e.to_string())?;
    let bundle = serve_bundle(dir.path(), Some(0)).await.map_err(|e| e.to_string())?;
    let id = encode_id(&pkg.shells[0].id);
    for feature in &report.dropped {
        let (method, path, body) = match feature.to_string().as_str() {
            "service execution" => ("POST", format!("/shells/{id}/elements/SoftwareServices.AvgTemp/invoke"), Some(json!({ "samples": [1, 2, 3, 4] }))),
            "eventing" => ("POST", "/subscriptions".into(), Some(json!({ "callbackUrl": "http://127.0.0.1:9/hook" }))),
            other => return Err(format!("unexpected dropped feature {other}")),
        };
        let answer = ask(&http, &bundle.url(), method, &path, body).await?;
        ensure!(answer.status == 501, "{feature} dropped but {method} {path} answered {}", answer.status);
        dropped_checked += 1;
    }
    let (loaded, launch) = load_bundle(dir.path()).map_err(|e| e.to_string())?;
    ensure!(serialize_package(&loaded) == serialize_package(&pkg), "bundle package differs");
    ensure!(launch.strategy == RuntimeStrategy::Standalone, "bundle strategy {}", launch.strategy);
    bundle.stop().await;
    Ok(format!("6 uploads byte-identical; {compared} routes equal across strategies; {dropped_checked} dropped features fail"))
}

// ---------------------------------------------------------------- 7

fn test_exe(name: &str) -> Vec<u8> {
    let path = match name {
        "sf-spin" => env!("CARGO_BIN_EXE_sf-spin"),
        "sf-sleep" => env!("CARGO_BIN_EXE_sf-sleep"),
        "sf-crash" => env!("CARGO_BIN_EXE_sf-crash"),
        "sf-net" => env!("CARGO_BIN_EXE_sf-net"),
        other => panic!("no test executable {other}"),
    };
    std::fs::read(path).expect("test executable built")
}

fn run_exe(name: &str, budget: ResourceBudget) -> (Result<ServiceDoc, EngineError>, Duration) {
    let pkg = executable_package(&format!("urn:test:{name}"), &test_exe(name), budget);
    let art = pkg.artifact(AVG_EXE_PATH).unwrap().clone();
    let service = engine::load_artifact(&art, &pkg).expect("executable loads");
    let start = Instant::now();
    let out = engine::invoke(&service, &samples_doc(&[1.0, 2.0, 3.0, 4.0]), &art.budget);
    (out, start.elapsed())
}

async fn sandbox() -> Outcome {
    let budget = ResourceBudget { cpu_time: 1.0, wall_time: 1.5, ..ResourceBudget::default() };
    let mut notes = Vec::new();

    let (out, took) = tokio::task::spawn_blocking(move || run_exe("sf-spin", budget)).await.unwrap();
    ensure!(matches!(out, Err(EngineError::ResourceExceeded(_))), "spin: {out:?}");
    let limit = Duration::from_secs_f64(budget.cpu_time.min(budget.wall_time)) + KILL_SLACK;
    ensure!(took <= limit, "spin ran {took:?}, limit {limit:?}");
    notes.push(format!("spin killed after {:.2}s", took.as_secs_f64()));

    let (out, took) = tokio::task::spawn_blocking(move || run_exe("sf-sleep", budget)).await.unwrap();
    ensure!(matches!(out, Err(EngineError::ResourceExceeded(_))), "sleep: {out:?}");
    let limit = Duration::from_secs_f64(budget.wall_time) + KILL_SLACK;
    ensure!(took <= limit, "sleep ran {took:?}, limit {limit:?}");
    notes.push(format!("sleep killed after {:.2}s", took.as_secs_f64()));

    let (out, _) = tokio::task::spawn_blocking(|| run_exe("sf-net", ResourceBudget::default())).await.unwrap();
    match out {
        Err(EngineError::SandboxViolation(what)) => notes.push(format!("network: SandboxViolation ({what})")),
        Err(EngineError::ServiceCrashed { code: Some(4), .. }) => notes.push("network: connection failed".into()),
        other => return Err(format!("network attempt was not stopped: {other:?}")),
    }

    // A crashing package next to healthy ones.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for level in [3u8, 5] {
        std::fs::copy(fixture_path(&fixtures_dir(), level), dir.path().join(format!("lvl{level}.aaspkg"))).map_err(|e| e.to_string())?;
    }
    let server = serve(ServerConfig { dir: Some(dir.path().to_path_buf()), auto_sync: false, ..ServerConfig::default() })
        .await
        .map_err(|e| e.to_string())?;
    let crash = executable_package("urn:test:crash", &test_exe("sf-crash"), ResourceBudget::default());
    server.repo().host(crash, None).await.map_err(|e| e.to_string())?;
    let http = reqwest::Client::new();
    let healthy: Vec<Identifier> = [3u8, 5].iter().map(|l| fixture(*l).shells[0].id.clone()).collect();
    let samples = json!({ "samples": [1.0, 2.0, 3.0, 4.0, 10.0] });
    let crash_id = encode_id(&Identifier::new("urn:test:crash"));
    for i in 0..CRASH_ITERATIONS {
        let a = ask(&http, &server.url(), "POST", &format!("/shells/{crash_id}/elements/SoftwareServices.Run/invoke"), Some(samples.clone())).await?;
        ensure!(a.status == 500, "iteration {i}: crash answered {}", a.status);
        for shell in &healthy {
            let id = encode_id(shell);
            let v = ask(&http, &server.url(), "GET", &format!("/shells/{id}/elements/Telemetry.temp/value"), None).await?;
            ensure!(v.status == 200 && v.body.as_ref().ok().map(|b| &b["value"]) == Some(&json!(20.0)), "iteration {i}: {shell} value {v:?}");
            let r = ask(&http, &server.url(), "POST", &format!("/shells/{id}/elements/SoftwareServices.AvgTemp/invoke"), Some(samples.clone())).await?;
            let avg = r.body.as_ref().ok().and_then(|b| b["outputs"]["avg"].as_f64());
            ensure!(r.status == 200 && avg == Some(4.75), "iteration {i}: {shell} invoke {r:?}");
        }
    }
    server.stop().await;
    notes.push(format!("{CRASH_ITERATIONS} crashes isolated"));
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- 8

struct NoSink;

impl PropertySink for NoSink {
    fn apply<'a>(&'a self, _: Vec<PropertyUpdate>) -> Pin<Box<dyn Future<Output = ()> + Send + 'a>> {
        Box::pin(async {})
    }
}

async fn passive_confinement() -> Outcome {
    let mut refused = 0;
    for level in 3..6u8 {
        let pkg = fixture(level);
        let ctx = PassiveContext::new(pkg.clone());
        let shell = pkg.shells[0].id.clone();
        for op in ["SoftwareServices.AvgTemp", "SoftwareServices.AvgTempC"] {
            if level != 4 && op.ends_with('C') {
                continue;
            }
            let got = ctx.invoke(&shell, op, &json!({ "samples": [1, 2, 3, 4] }));
            ensure!(matches!(got, Err(PassiveError::NotExecutableInPassiveRuntime(_))), "Lvl {level} {op}: {got:?}");
            refused += 1;
        }
        ensure!(ctx.start_sync() == Err(PassiveError::StrategyForbidsSync), "Lvl {level} sync allowed");
        refused += 1;
    }
    for level in [1u8, 2] {
        let pkg = fixture(level);
        let sync = pkg.sync_config.clone().unwrap();
        let got = start_sync(&pkg, &sync, RuntimeStrategy::Passive, Arc::new(NoSink)).await;
        ensure!(matches!(got, Err(SyncError::StrategyForbidsSync)), "Lvl {level} passive sync: {:?}", got.err());
        refused += 1;
    }
    let file = fixture_path(&fixtures_dir(), 3);
    let code = tokio::task::spawn_blocking(move || {
        shellforge::run_cli(["shellforge", "invoke", file.to_str().unwrap(), "AvgTemp", "--args", r#"{"samples":[1,2,3,4]}"#])
    })
    .await
    .unwrap();
    ensure!(code == 1, "cli invoke on a file exited {code}");
    Ok(format!("{refused} library refusals; cli invoke exit 1"))
}

// ---------------------------------------------------------------- 9

async fn bench_smoke() -> Outcome {
    let opts = shellforge::bench::BenchOptions { requests: BENCH_REQUESTS, ..Default::default() };
    let report = shellforge::bench::run_bench(&opts).await.map_err(|e| e.to_string())?;
    let summary: Vec<String> = report.rows.iter().map(|r| format!("Lvl {} p50 {:.2}ms", r.level, r.get_p50_ms)).collect();
    ensure!(report.rows.len() == 6, "{} latency rows: {}", report.rows.len(), summary.join(", "));
    for r in &report.rows {
        ensure!(r.get_p50_ms < BENCH_P50_LIMIT_MS, "Lvl {} p50 {:.2}ms >= {BENCH_P50_LIMIT_MS}ms; {}", r.level, r.get_p50_ms, summary.join(", "));
    }
    Ok(summary.join(", "))
}

// ----------------------------------------------------------------

type Criterion = Pin<Box<dyn Future<Output = Outcome> + Send>>;

fn blocking(f: fn() -> Outcome) -> Criterion {
    Box::pin(async move { tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| Err(format!("panicked: {e}"))) })
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let criteria: Vec<(u8, &str, Criterion)> = vec![
        (1, "Table 1 golden", blocking(table_one)),
        (2, "level fixtures", blocking(level_fixtures)),
        (3, "data-flow truth table", blocking(data_flow)),
        (4, "cross-level service equivalence", blocking(cross_level)),
        (5, "Lvl 2 query oracle", Box::pin(query_oracle())),
        (6, "strategy round trip", Box::pin(strategy_round_trip())),
        (7, "sandbox", Box::pin(sandbox())),
        (8, "passive confinement", Box::pin(passive_confinement())),
        (9, "bench smoke", Box::pin(bench_smoke())),
    ];
    let mut results = BTreeMap::new();
    for (n, name, check) in criteria {
        let start = Instant::now();
        let outcome = rt.block_on(async { tokio::spawn(check).await.unwrap_or_else(|e| Err(format!("panicked: {e}"))) });
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(detail) => println!("criterion {n} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(why) => println!("criterion {n} {name}: FAIL ({why}) [{secs:.1}s]"),
        }
        results.insert(n, outcome.is_ok());
    }
    let failed: Vec<u8> = results.iter().filter(|(_, ok)| !**ok).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
