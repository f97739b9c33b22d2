//! Request latency per level, plus fault injection.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Value};
use shellforge_core::model::{
    parse_package, serialize_package, AasPackage, ArtifactKind, Identifier, OperationElement, SubmodelElement, ValueType,
    QUALIFIER_ARTIFACT,
};
use shellforge_core::server::{encode_id, serve, ServerConfig, ServerHandle, ShellInfo};

use crate::{default_fixtures, domain, BenchArgs, CliError, Report};

pub const WARN_EMPTY: &str = "no shells hosted; nothing to measure";

/// Shell script that kills its own process: a service crash.
pub const CRASH_SCRIPT: &[u8] = b"#!/bin/sh\nkill -9 $$\n";
const GARBAGE_PIPELINE: &[u8] = b"{\"steps\": [{\"op\": \"no-such-step\"}]";

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Running server; an in-process one hosting `fixtures` when unset.
    pub server: Option<String>,
    pub fixtures: PathBuf,
    pub requests: usize,
    /// Inject faults. Always on for the in-process server.
    pub faults: bool,
    pub token: Option<String>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { server: None, fixtures: default_fixtures(), requests: 100, faults: false, token: None }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyRow {
    pub level: u8,
    pub shell: String,
    pub path: String,
    pub requests: usize,
    pub get_p50_ms: f64,
    pub get_p95_ms: f64,
    pub operation: Option<String>,
    pub invoke_p50_ms: Option<f64>,
    pub invoke_p95_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FaultOutcome {
    pub name: String,
    /// Status of the faulty request, when the fault is hit through a request.
    pub status: Option<u16>,
    /// Whether every other shell still answered with its earlier value.
    pub others_unaffected: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub target: String,
    pub rows: Vec<LatencyRow>,
    pub faults: Vec<FaultOutcome>,
    pub warnings: Vec<String>,
}

impl BenchReport {
    pub fn render_text(&self) -> String {
        let mut out = format!("target: {}\n", self.target);
        if !self.rows.is_empty() {
            out.push_str("level  shell                 get p50 ms  get p95 ms  invoke p50 ms  invoke p95 ms\n");
        }
        let ms = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            out.push_str(&format!(
                "Lvl {}  {:<20}  {:>10.3}  {:>10.3}  {:>13}  {:>13}\n",
                r.level,
                r.shell,
                r.get_p50_ms,
                r.get_p95_ms,
                ms(r.invoke_p50_ms),
                ms(r.invoke_p95_ms)
            ));
        }
        for f in &self.faults {
            let status = f.status.map(|s| format!(" -> {s}")).unwrap_or_default();
            let others = if f.others_unaffected { "others unaffected" } else { "OTHERS AFFECTED" };
            out.push_str(&format!("fault {}{status}: {others}; {}\n", f.name, f.detail));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * s.len() as f64).ceil().max(1.0) as usize;
    s[rank.min(s.len()) - 1]
}

struct Target {
    url: String,
    http: reqwest::Client,
    token: Option<String>,
}

impl Target {
    fn shell_url(&self, shell: &Identifier) -> String {
        format!("{}/shells/{}", self.url, encode_id(shell))
    }

    async fn get(&self, url: &str) -> Result<reqwest::Response, CliError> {
        self.http.get(url).send().await.map_err(|e| CliError::Domain(format!("TargetUnreachable: {}: {e}", self.url)))
    }

    async fn value(&self, shell: &Identifier, path: &str) -> Result<(u16, Value), CliError> {
        let resp = self.get(&format!("{}/elements/{path}/value", self.shell_url(shell))).await?;
        let status = resp.status().as_u16();
        Ok((status, resp.json().await.unwrap_or(Value::Null)))
    }

    async fn invoke(&self, shell: &Identifier, path: &str, args: &Value) -> Result<(u16, Value), CliError> {
        let mut req = self.http.post(format!("{}/elements/{path}/invoke", self.shell_url(shell))).json(args);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.map_err(|e| CliError::Domain(format!("TargetUnreachable: {}: {e}", self.url)))?;
        let status = resp.status().as_u16();
        Ok((status, resp.json().await.unwrap_or(Value::Null)))
    }

    async fn package(&self, shell: &Identifier) -> Result<AasPackage, CliError> {
        let resp = self.get(&format!("{}/packages/{}", self.url, encode_id(shell))).await?;
        if !resp.status().is_success() {
            return Err(CliError::Domain(format!("export of {shell} failed: HTTP {}", resp.status())));
        }
        let bytes = resp.bytes().await.map_err(domain)?;
        parse_package(&bytes).map_err(domain)
    }

    async fn upload(&self, pkg: &AasPackage) -> Result<(), CliError> {
        let mut req = self.http.post(format!("{}/packages", self.url)).body(serialize_package(pkg));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.map_err(domain)?;
        if !resp.status().is_success() {
            let status = resp.status();
            let body = resp.text().await.unwrap_or_default();
            return Err(CliError::Domain(format!("upload failed: HTTP {status}: {body}")));
        }
        Ok(())
    }

    async fn timed<F, Fut>(n: usize, mut call: F) -> Result<Vec<f64>, CliError>
    where
        F: FnMut() -> Fut,
        Fut: std::future::Future<Output = Result<(u16, Value), CliError>>,
    {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let start = Instant::now();
            let (status, body) = call().await?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            if !(200..300).contains(&status) {
                return Err(CliError::Domain(format!("HTTP {status}: {body}")));
            }
            out.push(elapsed);
        }
        Ok(out)
    }
}

/// Arguments that satisfy an operation's input schema.
fn sample_args(op: &OperationElement) -> Value {
    let mut args = serde_json::Map::new();
    for v in &op.input_vars {
        let one = match v.value_type.base {
            ValueType::Double => json!(20.5),
            ValueType::Int64 => json!(1),
            ValueType::String => json!("x"),
            ValueType::Bool => json!(true),
        };
        let value = if v.value_type.list { json!([one, one, one, one]) } else { one };
        args.insert(v.id_short.clone(), value);
    }
    Value::Object(args)
}

fn shell_operations(pkg: &AasPackage, shell: &Identifier) -> Vec<(String, OperationElement)> {
    let Some(s) = pkg.shell(shell) else { return Vec::new() };
    s.submodel_refs
        .iter()
        .filter_map(|r| pkg.submodel(r))
        .flat_map(|sm| {
            sm.elements.iter().filter_map(move |e| match e {
                SubmodelElement::Operation(op) => Some((format!("{}.{}", sm.id_short, op.id_short), op.clone())),
                _ => None,
            })
        })
        .collect()
}

/// Copy of a package under fresh identifiers, so it can be hosted next to the original.
fn renamed(pkg: &AasPackage, tag: &str) -> AasPackage {
    let mut pkg = pkg.clone();
    let re = |id: &Identifier| Identifier::new(format!("{id}#{tag}"));
    for s in &mut pkg.shells {
        s.id = re(&s.id);
        s.asset_id = re(&s.asset_id);
        s.submodel_refs = s.submodel_refs.iter().map(re).collect();
    }
    for sm in &mut pkg.submodels {
        sm.id = re(&sm.id);
    }
    pkg
}

fn tampered(pkg: &AasPackage, tag: &str, kind: ArtifactKind, bytes: &[u8]) -> Option<(AasPackage, String)> {
    let art = pkg.artifacts().iter().find(|a| a.kind == kind)?;
    let entrypoint = art.entrypoint.clone();
    let mut out = renamed(pkg, tag).with_file(entrypoint.clone(), bytes.to_vec());
    out.refresh_checksums();
    Some((out, entrypoint))
}

fn op_for(pkg: &AasPackage, shell: &Identifier, entrypoint: &str) -> Option<(String, OperationElement)> {
    shell_operations(pkg, shell).into_iter().find(|(_, op)| op.qualifier(QUALIFIER_ARTIFACT) == Some(entrypoint))
}

struct Probe {
    shell: Identifier,
    path: String,
    value: Value,
}

async fn probes_intact(target: &Target, probes: &[Probe]) -> Result<bool, CliError> {
    for p in probes {
        let (status, body) = target.value(&p.shell, &p.path).await?;
        if status != 200 || body["value"] != p.value {
            return Ok(false);
        }
    }
    Ok(true)
}

async fn crash_fault(target: &Target, pkgs: &[(ShellInfo, AasPackage)], probes: &[Probe]) -> Result<Option<FaultOutcome>, CliError> {
    let Some((info, pkg)) = pkgs.iter().find(|(i, _)| i.level.value() == 5) else { return Ok(None) };
    let tag = format!("crash{}", std::process::id());
    let Some((bad, entrypoint)) = tampered(pkg, &tag, ArtifactKind::Executable, CRASH_SCRIPT) else { return Ok(None) };
    let shell = Identifier::new(format!("{}#{tag}", info.id));
    let Some((path, op)) = op_for(&bad, &shell, &entrypoint) else { return Ok(None) };
    target.upload(&bad).await?;
    let (status, body) = target.invoke(&shell, &path, &sample_args(&op)).await?;
    let intact = probes_intact(target, probes).await?;
    Ok(Some(FaultOutcome {
        name: "service crash".into(),
        status: Some(status),
        others_unaffected: intact,
        detail: body["error"].as_str().unwrap_or("no error reported").to_string(),
    }))
}

async fn corrupt_fault(target: &Target, pkgs: &[(ShellInfo, AasPackage)], probes: &[Probe]) -> Result<Option<FaultOutcome>, CliError> {
    let Some((info, pkg)) = pkgs.iter().find(|(i, _)| i.level.value() == 3) else { return Ok(None) };
    let tag = format!("corrupt{}", std::process::id());
    let Some((bad, entrypoint)) = tampered(pkg, &tag, ArtifactKind::PipelineScript, GARBAGE_PIPELINE) else { return Ok(None) };
    target.upload(&bad).await?;
    let shell = format!("{}#{tag}", info.id);
    let diag: Value = target.get(&format!("{}/diagnostics", target.url)).await?.json().await.map_err(domain)?;
    let status = diag["packages"]
        .as_array()
        .and_then(|ps| ps.iter().find(|p| p["shells"].as_array().is_some_and(|s| s.iter().any(|s| s == shell.as_str()))))
        .and_then(|p| p["services"].as_array()?.iter().find(|s| s["entrypoint"] == entrypoint.as_str()).cloned())
        .and_then(|s| s["status"].as_str().map(str::to_string))
        .unwrap_or_else(|| "no diagnostic".into());
    let intact = probes_intact(target, probes).await?;
    Ok(Some(FaultOutcome { name: "corrupt artifact".into(), status: None, others_unaffected: intact, detail: status }))
}

pub async fn run_bench(opts: &BenchOptions) -> Result<BenchReport, CliError> {
    let mut local: Option<ServerHandle> = None;
    let url = match &opts.server {
        Some(u) => u.trim_end_matches('/').to_string(),
        None => {
            if !opts.fixtures.is_dir() {
                return Err(CliError::Domain(format!("fixtures {} not found", opts.fixtures.display())));
            }
            let cfg = ServerConfig { dir: Some(opts.fixtures.clone()), auto_sync: false, ..ServerConfig::default() };
            let handle = serve(cfg).await.map_err(domain)?;
            let url = handle.url();
            local = Some(handle);
            url
        }
    };
    let http = reqwest::Client::builder().timeout(Duration::from_secs(30)).build().map_err(domain)?;
    let target = Target { url: url.clone(), http, token: opts.token.clone() };
    let result = measure(&target, opts, local.is_some() || opts.faults).await;
    if let Some(h) = local {
        h.stop().await;
    }
    result
}

async fn measure(target: &Target, opts: &BenchOptions, faults: bool) -> Result<BenchReport, CliError> {
    let health = target.get(&format!("{}/health", target.url)).await?;
    if !health.status().is_success() {
        return Err(CliError::Domain(format!("TargetUnreachable: {} answered {}", target.url, health.status())));
    }
    let mut shells: Vec<ShellInfo> = Vec::new();
    let listed: Value = target.get(&format!("{}/shells", target.url)).await?.json().await.map_err(domain)?;
    for s in listed.as_array().into_iter().flatten() {
        if let Ok(info) = serde_json::from_value::<ShellInfoWire>(s.clone()) {
            shells.push(info.into());
        }
    }
    shells.sort_by(|a, b| (a.level, &a.id).cmp(&(b.level, &b.id)));

    let mut report = BenchReport { target: target.url.clone(), rows: Vec::new(), faults: Vec::new(), warnings: Vec::new() };
    if shells.is_empty() {
        report.warnings.push(WARN_EMPTY.into());
        return Ok(report);
    }

    let mut pkgs = Vec::new();
    let mut probes = Vec::new();
    for info in shells {
        let pkg = target.package(&info.id).await?;
        let Some(path) = pkg.property_paths(&info.id).into_iter().next() else {
            report.warnings.push(format!("{}: no property to read", info.id));
            continue;
        };
        let (_, first) = target.value(&info.id, &path).await?;
        let gets = Target::timed(opts.requests, || target.value(&info.id, &path)).await?;

        let runnable: Vec<(String, OperationElement)> = shell_operations(&pkg, &info.id)
            .into_iter()
            .filter(|(_, op)| op.qualifier(QUALIFIER_ARTIFACT).is_some())
            .collect();
        let (operation, invokes) = match runnable.first() {
            Some((op_path, op)) => {
                let args = sample_args(op);
                match Target::timed(opts.requests, || target.invoke(&info.id, op_path, &args)).await {
                    Ok(t) => (Some(op_path.clone()), Some(t)),
                    Err(e) => {
                        report.warnings.push(format!("{} {op_path}: {e}", info.id));
                        (Some(op_path.clone()), None)
                    }
                }
            }
            None => (None, None),
        };
        report.rows.push(LatencyRow {
            level: info.level.value(),
            shell: info.id.to_string(),
            path: path.clone(),
            requests: opts.requests,
            get_p50_ms: percentile(&gets, 50.0),
            get_p95_ms: percentile(&gets, 95.0),
            operation,
            invoke_p50_ms: invokes.as_ref().map(|t| percentile(t, 50.0)),
            invoke_p95_ms: invokes.as_ref().map(|t| percentile(t, 95.0)),
        });
        probes.push(Probe { shell: info.id.clone(), path, value: first["value"].clone() });
        pkgs.push((info, pkg));
    }

    if faults {
        match crash_fault(target, &pkgs, &probes).await? {
            Some(f) => report.faults.push(f),
            None => report.warnings.push("no Lvl 5 executable hosted; crash fault skipped".into()),
        }
        match corrupt_fault(target, &pkgs, &probes).await? {
            Some(f) => report.faults.push(f),
            None => report.warnings.push("no Lvl 3 pipeline hosted; corrupt-artifact fault skipped".into()),
        }
    }
    Ok(report)
}

#[derive(serde::Deserialize)]
#[serde(rename_all = "camelCase")]
struct ShellInfoWire {
    id: String,
    id_b64: String,
    asset_id: String,
    level: u8,
}

impl From<ShellInfoWire> for ShellInfo {
    fn from(w: ShellInfoWire) -> Self {
        ShellInfo {
            id: Identifier::new(w.id),
            id_b64: w.id_b64,
            asset_id: Identifier::new(w.asset_id),
            level: shellforge_core::classify::HeavinessLevel::new(w.level).unwrap_or(shellforge_core::classify::HeavinessLevel::MODEL),
        }
    }
}

pub async fn run(args: &BenchArgs) -> Result<Report, CliError> {
    let opts = BenchOptions {
        server: args.server.clone(),
        fixtures: args.fixtures.clone().unwrap_or_else(default_fixtures),
        requests: args.requests.max(1),
        faults: args.faults,
        token: args.token.clone(),
    };
    let report = run_bench(&opts).await?;
    Ok(Report::new(report.render_text(), serde_json::to_value(&report).expect("report serializes")))
}
