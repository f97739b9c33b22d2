use std::collections::{BTreeMap, BTreeSet};
use std::future::Future;
use std::path::{Path, PathBuf};
use std::pin::Pin;
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

use super::error::ApiError;
use super::events::{EventBus, RetryPolicy, Subscription, SubscriptionFilter};
use crate::asset::{start_sync, PropertySink, PropertyUpdate, SyncHandle};
use crate::classify::{classify_level, HeavinessLevel, RuntimeStrategy};
use crate::engine::{self, BuildCache, LoadedService, ServiceDoc};
use crate::model::{
    parse_package, resolve_element, AasPackage, Identifier, OperationElement, ResourceBudget,
    SubmodelElement, QUALIFIER_ARTIFACT, QUALIFIER_DELEGATION,
};
use crate::packager::{self, build_cache_present, ConversionReport, RuntimeFeature, RuntimeState};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Every `.aaspkg` file here is hosted at startup.
    pub dir: Option<PathBuf>,
    /// Used for delegation timeouts.
    pub default_budget: ResourceBudget,
    pub retry: RetryPolicy,
    /// When set, mutating routes require `Authorization: Bearer <token>`.
    pub token: Option<String>,
    pub strategy: RuntimeStrategy,
    pub features: BTreeSet<RuntimeFeature>,
    /// Build cache directory; the shared default when unset.
    pub build_cache: Option<PathBuf>,
    /// Start sync loops for packages configured for automatic sync.
    pub auto_sync: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 0,
            dir: None,
            default_budget: ResourceBudget::default(),
            retry: RetryPolicy::default(),
            token: None,
            strategy: RuntimeStrategy::ServerHosted,
            features: RuntimeFeature::all(),
            build_cache: None,
            auto_sync: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ShellInfo {
    pub id: Identifier,
    pub id_b64: String,
    pub asset_id: Identifier,
    pub level: HeavinessLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceStatus {
    pub entrypoint: String,
    pub kind: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PackageDiagnostic {
    pub source: Option<String>,
    pub shells: Vec<Identifier>,
    pub level: HeavinessLevel,
    pub services: Vec<ServiceStatus>,
    pub sync: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadError {
    pub file: String,
    pub error: String,
}

pub fn encode_id(id: &Identifier) -> String {
    use base64::Engine;
    base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(id.as_str())
}

pub fn decode_id(b64: &str) -> Result<Identifier, ApiError> {
    use base64::Engine;
    base64::engine::general_purpose::URL_SAFE_NO_PAD
        .decode(b64.trim_end_matches('='))
        .ok()
        .and_then(|b| String::from_utf8(b).ok())
        .map(Identifier::new)
        .ok_or_else(|| ApiError::NotFound(format!("shell {b64}")))
}

pub fn now_ts() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// One hosted package. Reads take a snapshot; writes replace the whole
/// value under the write lock.
pub struct Hosted {
    source: Option<String>,
    shells: Vec<Identifier>,
    level: HeavinessLevel,
    pkg: tokio::sync::RwLock<Arc<AasPackage>>,
    services: BTreeMap<String, Result<LoadedService, String>>,
    sync: Mutex<Option<SyncHandle>>,
    sync_error: Mutex<Option<String>>,
}

impl Hosted {
    pub async fn snapshot(&self) -> Arc<AasPackage> {
        self.pkg.read().await.clone()
    }
}

#[derive(Default)]
struct Registry {
    packages: Vec<Arc<Hosted>>,
    by_shell: BTreeMap<Identifier, Arc<Hosted>>,
}

/// A multi-package repository: the state behind the HTTP surface.
pub struct Repository {
    cfg: ServerConfig,
    registry: RwLock<Registry>,
    events: EventBus,
    cache: BuildCache,
    http: reqwest::Client,
    load_errors: Mutex<Vec<LoadError>>,
}

struct RepoSink {
    repo: Weak<Repository>,
    hosted: Weak<Hosted>,
}

impl PropertySink for RepoSink {
    fn apply<'a>(&'a self, updates: Vec<PropertyUpdate>) -> Pin<Box<dyn Future<Output = ()> + Send + 'a>> {
        Box::pin(async move {
            let (Some(repo), Some(hosted)) = (self.repo.upgrade(), self.hosted.upgrade()) else { return };
            for u in updates {
                let raw = if u.value.fract() == 0.0 && u.value.abs() < 9.0e15 { json!(u.value as i64) } else { json!(u.value) };
                if let Err(e) = repo.write_value(&hosted, &u.shell, &u.path, &raw).await {
                    tracing::warn!(shell = %u.shell, path = %u.path, "sync update rejected: {e}");
                }
            }
        })
    }
}

fn check_args(op: &OperationElement, args: &Value) -> Result<(), ApiError> {
    let Value::Object(map) = args else {
        return Err(ApiError::SchemaMismatch("arguments must be a JSON object".into()));
    };
    for var in &op.input_vars {
        match map.get(&var.id_short) {
            None => return Err(ApiError::SchemaMismatch(format!("missing input `{}`", var.id_short))),
            Some(v) if !var.value_type.accepts(v) => {
                return Err(ApiError::SchemaMismatch(format!("input `{}` is not {}", var.id_short, var.value_type)))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = map.keys().find(|k| !op.input_vars.iter().any(|v| &v.id_short == *k)) {
        return Err(ApiError::SchemaMismatch(format!("undeclared input `{extra}`")));
    }
    Ok(())
}

impl Repository {
    pub fn new(cfg: ServerConfig) -> std::io::Result<Arc<Self>> {
        let cache = BuildCache::new(cfg.build_cache.clone().unwrap_or_else(|| BuildCache::global().root().to_path_buf()))?;
        Ok(Arc::new(Self {
            events: EventBus::new(cfg.retry),
            http: reqwest::Client::builder().build().expect("http client"),
            cfg,
            registry: RwLock::new(Registry::default()),
            cache,
            load_errors: Mutex::new(Vec::new()),
        }))
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    pub fn events(&self) -> &EventBus {
        &self.events
    }

    fn has(&self, f: RuntimeFeature) -> bool {
        self.cfg.features.contains(&f)
    }

    fn require(&self, f: RuntimeFeature, what: &str) -> Result<(), ApiError> {
        if self.has(f) {
            Ok(())
        } else {
            Err(ApiError::FeatureUnavailable(what.to_string()))
        }
    }

    pub fn check_token(&self, header: Option<&str>) -> Result<(), ApiError> {
        match &self.cfg.token {
            None => Ok(()),
            Some(t) if header.and_then(|h| h.strip_prefix("Bearer ")) == Some(t.as_str()) => Ok(()),
            Some(_) => Err(ApiError::Unauthorized),
        }
    }

    fn hosted(&self, shell: &Identifier) -> Result<Arc<Hosted>, ApiError> {
        self.registry
            .read()
            .unwrap()
            .by_shell
            .get(shell)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("shell {shell}")))
    }

    /// Load every `.aaspkg` in `dir`, in file-name order. Files that fail
    /// are recorded and skipped.
    pub async fn load_dir(self: &Arc<Self>, dir: &Path) -> std::io::Result<()> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "aaspkg"))
            .collect();
        files.sort();
        for file in files {
            let name = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let result = match std::fs::read(&file) {
                Ok(bytes) => match parse_package(&bytes) {
                    Ok(pkg) => self.host(pkg, Some(name.clone())).await.map(|_| ()),
                    Err(e) => Err(ApiError::InvalidPackage(e.to_string())),
                },
                Err(e) => Err(ApiError::InvalidPackage(e.to_string())),
            };
            if let Err(e) = result {
                tracing::warn!(file = %name, "package not loaded: {e}");
                self.load_errors.lock().unwrap().push(LoadError { file: name, error: e.to_string() });
            }
        }
        Ok(())
    }

    /// Host a package: load its services, register its shells and start
    /// its sync loop.
    pub async fn host(self: &Arc<Self>, pkg: AasPackage, source: Option<String>) -> Result<Vec<ShellInfo>, ApiError> {
        if pkg.shells.is_empty() {
            return Err(ApiError::InvalidPackage("package has no shell".into()));
        }
        let shells: Vec<Identifier> = pkg.shells.iter().map(|s| s.id.clone()).collect();
        let duplicate = |reg: &Registry| shells.iter().find(|s| reg.by_shell.contains_key(*s)).cloned();
        if let Some(dup) = duplicate(&self.registry.read().unwrap()) {
            return Err(ApiError::Duplicate(dup.to_string()));
        }

        let pkg = Arc::new(pkg);
        let services = if self.has(RuntimeFeature::ServiceEngine) {
            let (pkg2, repo) = (pkg.clone(), self.clone());
            tokio::task::spawn_blocking(move || {
                pkg2.artifacts()
                    .iter()
                    .map(|a| {
                        let loaded = engine::load_artifact_in(a, &pkg2, &repo.cache).map_err(|e| e.to_string());
                        if let Err(e) = &loaded {
                            tracing::warn!(artifact = %a.entrypoint, "service not loaded: {e}");
                        }
                        (a.entrypoint.clone(), loaded)
                    })
                    .collect()
            })
            .await
            .expect("service loading does not panic")
        } else {
            BTreeMap::new()
        };

        let hosted = Arc::new(Hosted {
            source,
            shells: shells.clone(),
            level: classify_level(&pkg),
            pkg: tokio::sync::RwLock::new(pkg.clone()),
            services,
            sync: Mutex::new(None),
            sync_error: Mutex::new(None),
        });
        {
            let mut reg = self.registry.write().unwrap();
            if let Some(dup) = duplicate(&reg) {
                return Err(ApiError::Duplicate(dup.to_string()));
            }
            for s in &shells {
                reg.by_shell.insert(s.clone(), hosted.clone());
            }
            reg.packages.push(hosted.clone());
        }

        if let Some(sync) = pkg.sync_config.as_ref().filter(|s| s.any_automatic()) {
            if self.has(RuntimeFeature::Sync) && self.cfg.auto_sync {
                let sink = Arc::new(RepoSink { repo: Arc::downgrade(self), hosted: Arc::downgrade(&hosted) });
                match start_sync(&pkg, sync, self.cfg.strategy, sink).await {
                    Ok(handle) => *hosted.sync.lock().unwrap() = Some(handle),
                    Err(e) => {
                        tracing::warn!(shell = %shells[0], "sync not started: {e}");
                        *hosted.sync_error.lock().unwrap() = Some(e.to_string());
                    }
                }
            }
        }
        Ok(self.shell_infos(&hosted, &pkg))
    }

    fn shell_infos(&self, hosted: &Hosted, pkg: &AasPackage) -> Vec<ShellInfo> {
        pkg.shells
            .iter()
            .map(|s| ShellInfo { id: s.id.clone(), id_b64: encode_id(&s.id), asset_id: s.asset_id.clone(), level: hosted.level })
            .collect()
    }

    pub async fn upload(self: &Arc<Self>, bytes: &[u8]) -> Result<Vec<ShellInfo>, ApiError> {
        let pkg = parse_package(bytes).map_err(|e| ApiError::InvalidPackage(e.to_string()))?;
        self.host(pkg, None).await
    }

    pub fn packages(&self) -> Vec<Arc<Hosted>> {
        self.registry.read().unwrap().packages.clone()
    }

    pub async fn shells(&self) -> Vec<ShellInfo> {
        let mut out = Vec::new();
        for hosted in self.packages() {
            let pkg = hosted.snapshot().await;
            out.extend(self.shell_infos(&hosted, &pkg));
        }
        out
    }

    pub async fn get_value(&self, shell: &Identifier, path: &str) -> Result<Value, ApiError> {
        let pkg = self.hosted(shell)?.snapshot().await;
        match resolve_element(&pkg, shell, path) {
            Ok(SubmodelElement::Property(p)) => {
                Ok(json!({ "value": p.value.to_json(), "valueType": p.value_type.as_str(), "ts": now_ts() }))
            }
            Ok(_) => Err(ApiError::NotAProperty(path.to_string())),
            Err(e) => Err(ApiError::NotFound(e.to_string())),
        }
    }

    /// Replace a property value and publish the change once stored.
    async fn write_value(&self, hosted: &Hosted, shell: &Identifier, path: &str, raw: &Value) -> Result<Value, ApiError> {
        let mut guard = hosted.pkg.write().await;
        let (old, value_type) = match resolve_element(&guard, shell, path) {
            Ok(SubmodelElement::Property(p)) => (p.value.clone(), p.value_type),
            Ok(_) => return Err(ApiError::NotAProperty(path.to_string())),
            Err(e) => return Err(ApiError::NotFound(e.to_string())),
        };
        let new = value_type
            .coerce(raw)
            .ok_or_else(|| ApiError::TypeMismatch(format!("{raw} is not a valid {value_type}")))?;
        if new != old {
            let next = guard.with_property_value(shell, path, new.clone()).map_err(|e| ApiError::NotFound(e.to_string()))?;
            *guard = Arc::new(next);
        }
        drop(guard);
        let ts = now_ts();
        if self.has(RuntimeFeature::Eventing) {
            self.events.publish(shell, path, old.to_json(), new.to_json(), ts.clone());
        }
        Ok(json!({ "value": new.to_json(), "valueType": value_type.as_str(), "ts": ts }))
    }

    pub async fn patch_value(&self, shell: &Identifier, path: &str, body: &Value) -> Result<Value, ApiError> {
        let hosted = self.hosted(shell)?;
        let raw = body.get("value").ok_or_else(|| ApiError::BadRequest("body must be {\"value\": ...}".into()))?;
        let pkg = hosted.snapshot().await;
        if pkg.manifest.read_only {
            // Still distinguish missing paths from read-only ones.
            match resolve_element(&pkg, shell, path) {
                Ok(SubmodelElement::Property(_)) => return Err(ApiError::ReadOnly),
                Ok(_) => return Err(ApiError::NotAProperty(path.to_string())),
                Err(e) => return Err(ApiError::NotFound(e.to_string())),
            }
        }
        self.write_value(&hosted, shell, path, raw).await
    }

    pub async fn invoke(&self, shell: &Identifier, path: &str, args: Value) -> Result<Value, ApiError> {
        let hosted = self.hosted(shell)?;
        let pkg = hosted.snapshot().await;
        let op = match resolve_element(&pkg, shell, path) {
            Ok(SubmodelElement::Operation(op)) => op.clone(),
            Ok(_) => return Err(ApiError::NotAnOperation(path.to_string())),
            Err(e) => return Err(ApiError::NotFound(e.to_string())),
        };
        self.require(RuntimeFeature::ServiceEngine, "service execution")?;
        check_args(&op, &args)?;

        if let Some(url) = op.qualifier(QUALIFIER_DELEGATION) {
            let outputs = self.delegate(url, &args).await?;
            return Ok(json!({ "outputs": outputs, "meta": { "ts": now_ts(), "source": "delegation" } }));
        }
        let Some(entrypoint) = op.qualifier(QUALIFIER_ARTIFACT) else {
            return Err(ApiError::Unbound(op.id_short.clone()));
        };
        let service = match hosted.services.get(entrypoint) {
            Some(Ok(s)) => s.clone(),
            Some(Err(e)) => return Err(ApiError::ServiceFailed(format!("{entrypoint} failed to load: {e}"))),
            None => return Err(ApiError::Unbound(op.id_short.clone())),
        };
        let input = ServiceDoc::from_object(args).expect("checked object").with_meta(Some(now_ts()), "api");
        let budget = service.artifact().budget;
        let out = tokio::task::spawn_blocking(move || engine::invoke(&service, &input, &budget))
            .await
            .map_err(|e| ApiError::ServiceCrashed(e.to_string()))??;
        Ok(json!({ "outputs": out.values_json(), "meta": { "ts": now_ts(), "source": out.meta.source } }))
    }

    /// Forward arguments to an external service and return its answer.
    pub async fn delegate(&self, url: &str, args: &Value) -> Result<Value, ApiError> {
        let timeout = Duration::from_secs_f64(self.cfg.default_budget.wall_time);
        let resp = self
            .http
            .post(url)
            .timeout(timeout)
            .json(args)
            .send()
            .await
            .map_err(|e| ApiError::DelegationFailed(format!("network: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ApiError::DelegationFailed(format!("status {}", status.as_u16())));
        }
        let bytes = resp.bytes().await.map_err(|e| ApiError::DelegationFailed(format!("network: {e}")))?;
        match serde_json::from_slice::<Value>(&bytes) {
            Ok(v @ Value::Object(_)) => Ok(v),
            _ => Err(ApiError::DelegationFailed("protocol: response is not a JSON object".into())),
        }
    }

    pub fn subscribe(&self, body: &Value) -> Result<Subscription, ApiError> {
        self.require(RuntimeFeature::Eventing, "eventing")?;
        let url = body
            .get("callbackUrl")
            .and_then(Value::as_str)
            .ok_or_else(|| ApiError::BadRequest("callbackUrl is required".into()))?;
        let filter: SubscriptionFilter = match body.get("filter") {
            None | Some(Value::Null) => SubscriptionFilter::default(),
            Some(f) => serde_json::from_value(f.clone()).map_err(|e| ApiError::BadRequest(format!("filter: {e}")))?,
        };
        self.events.subscribe(url.to_string(), filter)
    }

    pub fn subscriptions(&self) -> Result<Vec<Subscription>, ApiError> {
        self.require(RuntimeFeature::Eventing, "eventing")?;
        Ok(self.events.list())
    }

    pub fn unsubscribe(&self, id: &str) -> Result<(), ApiError> {
        self.require(RuntimeFeature::Eventing, "eventing")?;
        self.events.unsubscribe(id)
    }

    async fn runtime_state(&self, hosted: &Hosted) -> (Arc<AasPackage>, RuntimeState) {
        let pkg = hosted.snapshot().await;
        let state = RuntimeState {
            subscriptions: self.events.count_for(&hosted.shells),
            build_cache: build_cache_present(&pkg, &self.cache),
        };
        (pkg, state)
    }

    /// Current package as a file, with what the file cannot carry.
    pub async fn export(&self, shell: &Identifier) -> Result<(Vec<u8>, ConversionReport), ApiError> {
        let hosted = self.hosted(shell)?;
        let (pkg, state) = self.runtime_state(&hosted).await;
        Ok(packager::export_file(&pkg, self.cfg.strategy, &state))
    }

    pub async fn conversion_report(&self, shell: &Identifier, to: RuntimeStrategy) -> Result<ConversionReport, ApiError> {
        let hosted = self.hosted(shell)?;
        let (pkg, state) = self.runtime_state(&hosted).await;
        Ok(packager::conversion_report_with(self.cfg.strategy, to, &pkg, &state))
    }

    fn sync_status(&self, hosted: &Hosted) -> Value {
        if let Some(h) = hosted.sync.lock().unwrap().as_ref() {
            return json!({ "active": h.is_active(), "class": h.class(), "stats": h.stats() });
        }
        match hosted.sync_error.lock().unwrap().as_ref() {
            Some(e) => json!({ "active": false, "error": e }),
            None => json!({ "active": false }),
        }
    }

    pub async fn sync(&self, shell: &Identifier) -> Result<Value, ApiError> {
        let hosted = self.hosted(shell)?;
        self.require(RuntimeFeature::Sync, "sync")?;
        if hosted.snapshot().await.sync_config.is_none() {
            return Err(ApiError::NotFound(format!("sync configuration for {shell}")));
        }
        Ok(self.sync_status(&hosted))
    }

    pub async fn extension(&self, name: &str) -> Result<Value, ApiError> {
        if self.cfg.strategy != RuntimeStrategy::Standalone {
            return Err(ApiError::FeatureUnavailable(format!("extension {name}")));
        }
        for hosted in self.packages() {
            let pkg = hosted.snapshot().await;
            if pkg.manifest.standalone_extensions.iter().any(|e| e == name) {
                return Ok(json!({ "extension": name, "shells": hosted.shells, "level": hosted.level }));
            }
        }
        Err(ApiError::NotFound(format!("extension {name}")))
    }

    pub async fn diagnostics(&self) -> Value {
        let mut packages = Vec::new();
        for hosted in self.packages() {
            let services = hosted
                .services
                .iter()
                .map(|(entrypoint, s)| ServiceStatus {
                    entrypoint: entrypoint.clone(),
                    kind: s.as_ref().map(|s| s.kind().to_string()).unwrap_or_else(|_| "unknown".into()),
                    status: match s {
                        Ok(s) if s.freshly_built() => "built".into(),
                        Ok(_) => "ready".into(),
                        Err(e) => format!("error: {e}"),
                    },
                })
                .collect();
            packages.push(PackageDiagnostic {
                source: hosted.source.clone(),
                shells: hosted.shells.clone(),
                level: hosted.level,
                services,
                sync: self.sync_status(&hosted),
            });
        }
        let caps = engine::capabilities();
        let mut notes = Vec::new();
        if !caps.memory_limit {
            notes.push("memory limits are not enforced on this platform; cpu and wall limits still apply");
        }
        if !caps.network_filter {
            notes.push("network filtering is unavailable; services run with an empty environment only");
        }
        json!({
            "strategy": self.cfg.strategy,
            "features": self.cfg.features,
            "sandbox": caps,
            "notes": notes,
            "packages": packages,
            "errors": *self.load_errors.lock().unwrap(),
            "events": self.events.stats(),
        })
    }

    pub fn load_errors(&self) -> Vec<LoadError> {
        self.load_errors.lock().unwrap().clone()
    }

    /// Stop every sync loop.
    pub async fn shutdown(&self) {
        for hosted in self.packages() {
            let handle = hosted.sync.lock().unwrap().take();
            if let Some(h) = handle {
                h.stop().await;
            }
        }
    }
}
