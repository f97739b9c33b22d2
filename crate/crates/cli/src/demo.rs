//! Scripted end-to-end run: simulator, server, the six level fixtures.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};
use shellforge_core::asset::{sim_run, SimConfig, SimHandle};
use shellforge_core::classify::{assess_quality, render_table, HeavinessLevel, CRITERIA};
use shellforge_core::model::{parse_package, AasPackage, Identifier};
use shellforge_core::server::{encode_id, serve, ServerConfig, ServerHandle};

use crate::{default_fixtures, domain, CliError, DemoArgs, Report};

/// The simulator clock is frozen here: temp(15) = 25, above the cooling threshold.
pub const DEMO_T: f64 = 15.0;
pub const TOLERANCE: f64 = 1e-9;
const WINDOW: usize = 4;

/// (level, operation) pairs that compute the same moving average.
const SERVICES: [(u8, &str); 4] =
    [(3, "SoftwareServices.AvgTemp"), (4, "SoftwareServices.AvgTemp"), (4, "SoftwareServices.AvgTempC"), (5, "SoftwareServices.AvgTemp")];

fn temp(t: f64) -> f64 {
    20.0 + 5.0 * (2.0 * PI * t / 60.0).sin()
}

/// Closed-form mean of temp over t-3..=t.
fn oracle(t_end: usize) -> f64 {
    (0..WINDOW).map(|k| temp((t_end - k) as f64)).sum::<f64>() / WINDOW as f64
}

pub fn fixture_file(dir: &Path, level: u8) -> Result<PathBuf, CliError> {
    let prefix = format!("lvl{level}_");
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Domain(format!("fixtures {}: {e}", dir.display())))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "aaspkg")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(&prefix))
        })
        .collect();
    found.sort();
    found.into_iter().next().ok_or_else(|| CliError::Domain(format!("no lvl{level}_*.aaspkg in {}", dir.display())))
}

/// A port nothing listens on.
async fn closed_port() -> Result<u16, CliError> {
    let l = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(domain)?;
    Ok(l.local_addr().map_err(domain)?.port())
}

struct Demo {
    server: ServerHandle,
    sim: Option<SimHandle>,
    http: reqwest::Client,
    shells: Vec<(u8, Identifier)>,
    text: String,
    json: serde_json::Map<String, Value>,
}

impl Demo {
    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    fn shell(&self, level: u8) -> &Identifier {
        &self.shells.iter().find(|(l, _)| *l == level).expect("every level is hosted").1
    }

    fn element_url(&self, level: u8, path: &str, action: &str) -> String {
        format!("{}/shells/{}/elements/{path}/{action}", self.server.url(), encode_id(self.shell(level)))
    }

    async fn value(&self, level: u8, path: &str) -> Result<Value, CliError> {
        let resp = self.http.get(self.element_url(level, path, "value")).send().await.map_err(domain)?;
        resp.json().await.map_err(domain)
    }

    async fn invoke(&self, level: u8, op: &str, samples: &[f64]) -> Result<f64, CliError> {
        let resp = self
            .http
            .post(self.element_url(level, op, "invoke"))
            .json(&json!({ "samples": samples }))
            .send()
            .await
            .map_err(domain)?;
        let status = resp.status();
        let body: Value = resp.json().await.map_err(domain)?;
        match body["outputs"]["avg"].as_f64() {
            Some(avg) if status.is_success() => Ok(avg),
            _ => Err(CliError::Domain(format!("Lvl {level} {op}: HTTP {status}: {body}"))),
        }
    }

    async fn sync_state(&self, level: u8) -> Value {
        let diag: Value = match self.http.get(format!("{}/diagnostics", self.server.url())).send().await {
            Ok(r) => r.json().await.unwrap_or(Value::Null),
            Err(_) => Value::Null,
        };
        let shell = self.shell(level).as_str();
        diag["packages"]
            .as_array()
            .and_then(|ps| ps.iter().find(|p| p["shells"].as_array().is_some_and(|s| s.iter().any(|s| s == shell))))
            .map(|p| p["sync"].clone())
            .unwrap_or(Value::Null)
    }

    async fn wait_value(&self, level: u8, path: &str, want: f64) -> Option<f64> {
        let mut last = None;
        for _ in 0..100 {
            last = self.value(level, path).await.ok().and_then(|v| v["value"].as_f64());
            if last == Some(want) {
                break;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        last
    }

    async fn shadow(&mut self) {
        if self.sim.is_none() {
            let state = self.sync_state(1).await;
            let err = state["error"].as_str().unwrap_or("sync not running").to_string();
            self.line(format!("shadow sync (Lvl 1): {err}"));
            self.json.insert("shadow".into(), json!({ "error": err }));
            return;
        }
        let got = self.wait_value(1, "Telemetry.temp", temp(DEMO_T)).await;
        let shown = got.map(|v| format!("{v}")).unwrap_or_else(|| "unavailable".into());
        self.line(format!("shadow sync (Lvl 1): Telemetry.temp = {shown} at t={DEMO_T}"));
        self.json.insert("shadow".into(), json!({ "t": DEMO_T, "temp": got }));
    }

    async fn twin(&mut self) {
        let Some(sim) = &self.sim else {
            let state = self.sync_state(2).await;
            let err = state["error"].as_str().unwrap_or("sync not running").to_string();
            self.line(format!("twin sync (Lvl 2): {err}"));
            self.json.insert("twin".into(), json!({ "error": err }));
            return;
        };
        for _ in 0..100 {
            if sim.cooling() == 1 {
                break;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        let (cooling, commands) = (sim.cooling(), sim.set_log().len());
        let model = self.wait_value(2, "Telemetry.cooling", 1.0).await;
        self.line(format!(
            "twin sync (Lvl 2): temp {} > 24 -> asset cooling = {cooling} ({commands} command), model cooling = {}",
            temp(DEMO_T),
            model.map(|v| v.to_string()).unwrap_or_else(|| "unavailable".into())
        ));
        self.json.insert("twin".into(), json!({ "temp": temp(DEMO_T), "assetCooling": cooling, "commands": commands, "modelCooling": model }));
    }

    async fn services(&mut self) -> Result<bool, CliError> {
        // Sliding windows over one simulated minute.
        let ends: Vec<usize> = (WINDOW - 1..60).step_by(7).collect();
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        for (level, op) in SERVICES {
            let mut max = 0.0f64;
            for &end in &ends {
                let samples: Vec<f64> = (0..=end).map(|t| temp(t as f64)).collect();
                let got = self.invoke(level, op, &samples).await?;
                max = max.max((got - oracle(end)).abs());
            }
            worst = worst.max(max);
            self.line(format!("Lvl {level} {op}: {} windows, max |Δ| = {max:e}", ends.len()));
            rows.push(json!({ "level": level, "operation": op, "windows": ends.len(), "maxAbsDelta": max }));
        }
        let pass = worst < TOLERANCE;
        self.line(format!("cross-level max |Δ| < 1e-9: {}", if pass { "PASS" } else { "FAIL" }));
        self.json.insert("services".into(), Value::Array(rows));
        self.json.insert("crossLevel".into(), json!({ "maxAbsDelta": worst, "tolerance": TOLERANCE, "pass": pass }));
        Ok(pass)
    }

    fn table(&mut self) {
        let table = render_table(&HeavinessLevel::ALL);
        self.text.push_str(&table);
        let rows: Vec<Value> = HeavinessLevel::ALL
            .iter()
            .map(|l| {
                let r = assess_quality(*l).ratings();
                let mut obj = serde_json::Map::new();
                obj.insert("level".into(), json!(l));
                for (name, rating) in CRITERIA.iter().zip(r) {
                    obj.insert((*name).into(), json!(rating.symbol().to_string()));
                }
                Value::Object(obj)
            })
            .collect();
        self.json.insert("table".into(), Value::Array(rows));
    }
}

fn retarget(mut pkg: AasPackage, port: u16) -> AasPackage {
    for e in &mut pkg.endpoints {
        e.port = port.into();
    }
    pkg
}

pub async fn run(args: &DemoArgs) -> Result<Report, CliError> {
    let dir = args.fixtures.clone().unwrap_or_else(default_fixtures);
    let mut packages = Vec::new();
    for level in 0..6u8 {
        let file = fixture_file(&dir, level)?;
        let bytes = std::fs::read(&file).map_err(domain)?;
        let pkg = parse_package(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))?;
        packages.push((level, file, pkg));
    }

    let sim = if args.no_sim {
        None
    } else {
        let sim = sim_run(&SimConfig::default()).await.map_err(domain)?;
        sim.clock().freeze(DEMO_T);
        Some(sim)
    };
    let port = match &sim {
        Some(s) => s.port(),
        None => closed_port().await?,
    };
    let server = serve(ServerConfig::default()).await.map_err(domain)?;

    let mut demo = Demo {
        server,
        sim,
        http: reqwest::Client::new(),
        shells: Vec::new(),
        text: String::new(),
        json: serde_json::Map::new(),
    };
    match &demo.sim {
        Some(s) => demo.line(format!("simulator on {} (clock frozen at t={DEMO_T})", s.addr())),
        None => demo.line("simulator disabled; asset endpoints point at a closed port"),
    }
    demo.line(format!("server on {}", demo.server.url()));

    let mut hosted = Vec::new();
    for (level, file, pkg) in packages {
        let infos = demo
            .server
            .repo()
            .host(retarget(pkg, port), Some(file.display().to_string()))
            .await
            .map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))?;
        let id = infos[0].id.clone();
        demo.line(format!("hosted Lvl {level}: {id}"));
        hosted.push(json!({ "level": level, "shell": id }));
        demo.shells.push((level, id));
    }
    demo.json.insert("hosted".into(), Value::Array(hosted));

    demo.shadow().await;
    demo.twin().await;
    let pass = demo.services().await;
    demo.table();

    let Demo { server, sim, text, json, .. } = demo;
    server.stop().await;
    if let Some(sim) = sim {
        sim.stop().await;
    }
    match pass {
        Ok(true) => Ok(Report::new(text, Value::Object(json))),
        Ok(false) => {
            print!("{text}");
            Err(CliError::Domain("cross-level equivalence failed".into()))
        }
        Err(e) => {
            print!("{text}");
            Err(e)
        }
    }
}
