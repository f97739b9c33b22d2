//! Polling synchronization between an asset and a hosted package.
//!
//! Inbound automatic sync writes mapped variables into properties on every
//! poll. Outbound automatic sync evaluates write-back rules over the mean of
//! each variable's last `window` polls and sends the rule's command to the
//! asset when the trigger holds.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use super::session::{AssetError, Sample, Session};
use crate::classify::{classify_data_flow, DataFlowClass, RuntimeStrategy};
use crate::engine::Condition;
use crate::model::{resolve_element, AasPackage, EndpointDescriptor, Identifier, SubmodelElement, SyncConfig, SyncMode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyncError {
    #[error("StrategyForbidsSync: the passive runtime strategy cannot synchronize with an asset")]
    StrategyForbidsSync,
    #[error("EndpointUnreachable: endpoint {0} unreachable")]
    EndpointUnreachable(String),
    #[error("UnclassifiedFlow: manual inbound with automatic outbound")]
    UnclassifiedFlow,
    #[error("invalid sync configuration: {0}")]
    InvalidConfig(String),
}

/// One mapped value written by inbound sync.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyUpdate {
    pub shell: Identifier,
    pub path: String,
    pub var: String,
    pub value: f64,
    pub t: f64,
}

/// Receives inbound updates, typically a hosted package store.
pub trait PropertySink: Send + Sync + 'static {
    fn apply<'a>(&'a self, updates: Vec<PropertyUpdate>) -> Pin<Box<dyn Future<Output = ()> + Send + 'a>>;
}

/// A write-back rule that fired.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerRecord {
    pub rule: usize,
    /// Simulated time of the poll that satisfied the trigger.
    pub t: f64,
    pub means: BTreeMap<String, f64>,
    pub command: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SyncStats {
    pub polls: u64,
    pub errors: u64,
    pub last_error: Option<String>,
    pub triggers: Vec<TriggerRecord>,
}

/// A running sync loop. Dropping the handle stops it.
#[derive(Debug)]
pub struct SyncHandle {
    class: DataFlowClass,
    stats: Arc<Mutex<SyncStats>>,
    stop: watch::Sender<bool>,
    task: Option<JoinHandle<()>>,
}

impl SyncHandle {
    pub fn class(&self) -> DataFlowClass {
        self.class
    }

    pub fn is_active(&self) -> bool {
        self.task.as_ref().is_some_and(|t| !t.is_finished())
    }

    pub fn stats(&self) -> SyncStats {
        self.stats.lock().unwrap().clone()
    }

    pub async fn stop(mut self) {
        let _ = self.stop.send(true);
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for SyncHandle {
    fn drop(&mut self) {
        let _ = self.stop.send(true);
    }
}

struct Rule {
    index: usize,
    condition: Condition,
    fields: Vec<String>,
    window: usize,
    var: String,
    value: f64,
}

struct Mapping {
    var: String,
    shell: Identifier,
    path: String,
}

struct SyncLoop {
    endpoint: EndpointDescriptor,
    inbound: bool,
    outbound: bool,
    poll_vars: Vec<String>,
    mappings: Vec<Mapping>,
    rules: Vec<Rule>,
    sink: Arc<dyn PropertySink>,
    stats: Arc<Mutex<SyncStats>>,
}

impl SyncLoop {
    fn record_error(&self, e: &AssetError) {
        tracing::warn!(endpoint = %self.endpoint.address(), "sync poll failed: {e}");
        let mut s = self.stats.lock().unwrap();
        s.errors += 1;
        s.last_error = Some(e.to_string());
    }

    async fn run(self, mut session: Option<Session>, interval: Duration, mut stop: watch::Receiver<bool>) {
        let mut ticker = tokio::time::interval(interval);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let max_window = self.rules.iter().map(|r| r.window).max().unwrap_or(1);
        let mut history: BTreeMap<String, VecDeque<f64>> = BTreeMap::new();
        let mut last_sent: BTreeMap<usize, f64> = BTreeMap::new();
        loop {
            tokio::select! {
                _ = ticker.tick() => {}
                _ = stop.changed() => return,
            }
            let current = match session.as_mut() {
                Some(s) => s,
                None => match Session::connect(&self.endpoint).await {
                    Ok(s) => session.insert(s),
                    Err(e) => {
                        self.record_error(&e);
                        continue;
                    }
                },
            };
            let mut samples: BTreeMap<&str, Sample> = BTreeMap::new();
            let mut failed = None;
            for var in &self.poll_vars {
                match current.fetch_simple(var).await {
                    Ok(sample) => {
                        samples.insert(var, sample);
                    }
                    Err(e) => {
                        failed = Some(e);
                        break;
                    }
                }
            }
            if let Some(e) = failed {
                self.record_error(&e);
                if matches!(e, AssetError::Disconnected | AssetError::Protocol(_)) {
                    session = None;
                }
                continue;
            }
            self.stats.lock().unwrap().polls += 1;

            if self.inbound {
                let updates = self
                    .mappings
                    .iter()
                    .map(|m| {
                        let s = &samples[m.var.as_str()];
                        PropertyUpdate { shell: m.shell.clone(), path: m.path.clone(), var: m.var.clone(), value: s.value, t: s.ts }
                    })
                    .collect();
                self.sink.apply(updates).await;
            }

            if self.outbound {
                for (var, s) in &samples {
                    let h = history.entry(var.to_string()).or_default();
                    h.push_back(s.value);
                    if h.len() > max_window {
                        h.pop_front();
                    }
                }
                let t = samples.values().map(|s| s.ts).fold(f64::NEG_INFINITY, f64::max);
                for rule in &self.rules {
                    let means: Option<BTreeMap<String, f64>> = rule
                        .fields
                        .iter()
                        .map(|f| {
                            let h = history.get(f)?;
                            (h.len() >= rule.window).then(|| {
                                let tail = h.iter().skip(h.len() - rule.window);
                                (f.clone(), tail.fold(0.0, |a, v| a + v) / rule.window as f64)
                            })
                        })
                        .collect();
                    let Some(means) = means else { continue };
                    if !rule.condition.eval(&|f| means.get(f).copied()).unwrap_or(false) {
                        continue;
                    }
                    if last_sent.get(&rule.index) == Some(&rule.value) {
                        continue;
                    }
                    let Some(session) = session.as_mut() else { break };
                    match session.set(&rule.var, rule.value).await {
                        Ok(()) => {
                            last_sent.insert(rule.index, rule.value);
                            self.stats.lock().unwrap().triggers.push(TriggerRecord {
                                rule: rule.index,
                                t,
                                means,
                                command: format!("{}={}", rule.var, rule.value),
                            });
                        }
                        Err(e) => self.record_error(&e),
                    }
                }
            }
        }
    }
}

/// Start synchronizing `pkg` with its asset. Updates flow into `sink`.
pub async fn start_sync(
    pkg: &AasPackage,
    sync: &SyncConfig,
    strategy: RuntimeStrategy,
    sink: Arc<dyn PropertySink>,
) -> Result<SyncHandle, SyncError> {
    if strategy == RuntimeStrategy::Passive {
        return Err(SyncError::StrategyForbidsSync);
    }
    let class = classify_data_flow(sync, strategy).map_err(|_| SyncError::UnclassifiedFlow)?;
    let invalid = |m: String| SyncError::InvalidConfig(m);
    let endpoint = pkg
        .endpoints
        .get(sync.endpoint)
        .ok_or_else(|| invalid(format!("endpoint index {} out of range", sync.endpoint)))?
        .clone();
    let interval = match sync.poll_interval {
        Some(p) if p > 0.0 && p.is_finite() => Duration::from_secs_f64(p),
        _ if !sync.any_automatic() => Duration::from_secs(1),
        _ => return Err(invalid("poll interval must be positive".into())),
    };

    let default_shell = pkg.shells.first().map(|s| s.id.clone());
    let mut mappings = Vec::new();
    for m in &sync.mappings {
        let shell = m.shell.clone().or_else(|| default_shell.clone()).ok_or_else(|| invalid("package has no shell".into()))?;
        match resolve_element(pkg, &shell, &m.path) {
            Ok(SubmodelElement::Property(_)) => {}
            _ => return Err(invalid(format!("mapping target {shell}/{} is not a property", m.path))),
        }
        mappings.push(Mapping { var: m.var.clone(), shell, path: m.path.clone() });
    }
    let mut rules = Vec::new();
    for (index, r) in sync.write_back_rules.iter().enumerate() {
        let condition: Condition = r.trigger.parse().map_err(|e| invalid(format!("rule {index}: {e}")))?;
        if r.window == 0 {
            return Err(invalid(format!("rule {index}: window must be at least 1")));
        }
        let fields: Vec<String> = condition.fields().into_iter().map(str::to_string).collect();
        rules.push(Rule { index, window: r.window, fields, var: r.command.var.clone(), value: r.command.value, condition });
    }
    let mut poll_vars: BTreeSet<String> = mappings.iter().map(|m| m.var.clone()).collect();
    if sync.outbound == SyncMode::Automatic {
        poll_vars.extend(rules.iter().flat_map(|r| r.fields.iter().cloned()));
    }
    if let Some(unknown) = poll_vars.iter().find(|v| endpoint.variable(v).is_none()) {
        return Err(invalid(format!("variable `{unknown}` is not on the endpoint")));
    }

    let session = Session::connect(&endpoint).await.map_err(|_| SyncError::EndpointUnreachable(endpoint.address()))?;
    let stats = Arc::new(Mutex::new(SyncStats::default()));
    let (stop, stop_rx) = watch::channel(false);
    let task = if sync.any_automatic() {
        let sync_loop = SyncLoop {
            endpoint,
            inbound: sync.inbound == SyncMode::Automatic,
            outbound: sync.outbound == SyncMode::Automatic,
            poll_vars: poll_vars.into_iter().collect(),
            mappings,
            rules,
            sink,
            stats: stats.clone(),
        };
        Some(tokio::spawn(sync_loop.run(Some(session), interval, stop_rx)))
    } else {
        None
    };
    Ok(SyncHandle { class, stats, stop, task })
}
