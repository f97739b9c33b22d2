//! Webhook subscriptions with at-least-once delivery.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::error::ApiError;
use crate::model::Identifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_backoff_ms: 200 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubscriptionFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell_id: Option<Identifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Subscription {
    pub id: String,
    pub callback_url: String,
    #[serde(default)]
    pub filter: SubscriptionFilter,
}

impl Subscription {
    pub fn matches(&self, shell: &Identifier, path: &str) -> bool {
        self.filter.shell_id.as_ref().is_none_or(|s| s == shell)
            && self.filter.path_prefix.as_ref().is_none_or(|p| path.starts_with(p.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Event {
    pub subscription: String,
    pub shell_id: Identifier,
    pub path: String,
    pub old: Value,
    pub new: Value,
    pub ts: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeliveryStats {
    pub delivered: u64,
    pub failed_attempts: u64,
    pub dropped: u64,
}

#[derive(Debug, Default)]
struct Counters {
    delivered: AtomicU64,
    failed_attempts: AtomicU64,
    dropped: AtomicU64,
}

#[derive(Debug)]
pub struct EventBus {
    subscriptions: RwLock<BTreeMap<String, Subscription>>,
    next_id: AtomicU64,
    policy: RetryPolicy,
    client: reqwest::Client,
    counters: Arc<Counters>,
}

impl EventBus {
    pub fn new(policy: RetryPolicy) -> Self {
        Self {
            subscriptions: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            policy,
            client: reqwest::Client::builder().timeout(Duration::from_secs(5)).build().expect("http client"),
            counters: Arc::default(),
        }
    }

    pub fn subscribe(&self, callback_url: String, filter: SubscriptionFilter) -> Result<Subscription, ApiError> {
        match reqwest::Url::parse(&callback_url) {
            Ok(u) if matches!(u.scheme(), "http" | "https") && u.host().is_some() => {}
            _ => return Err(ApiError::BadRequest(format!("invalid callback url `{callback_url}`"))),
        }
        let id = format!("sub-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let sub = Subscription { id: id.clone(), callback_url, filter };
        self.subscriptions.write().unwrap().insert(id, sub.clone());
        Ok(sub)
    }

    pub fn unsubscribe(&self, id: &str) -> Result<(), ApiError> {
        self.subscriptions
            .write()
            .unwrap()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::NotFound(format!("subscription {id}")))
    }

    pub fn list(&self) -> Vec<Subscription> {
        self.subscriptions.read().unwrap().values().cloned().collect()
    }

    /// Subscriptions that would receive events for any of `shells`.
    pub fn count_for(&self, shells: &[Identifier]) -> usize {
        self.subscriptions
            .read()
            .unwrap()
            .values()
            .filter(|s| s.filter.shell_id.as_ref().is_none_or(|id| shells.contains(id)))
            .count()
    }

    pub fn stats(&self) -> DeliveryStats {
        DeliveryStats {
            delivered: self.counters.delivered.load(Ordering::Relaxed),
            failed_attempts: self.counters.failed_attempts.load(Ordering::Relaxed),
            dropped: self.counters.dropped.load(Ordering::Relaxed),
        }
    }

    /// Queue a value change for every matching subscription. Delivery runs
    /// in the background; the caller never waits for it.
    pub fn publish(&self, shell: &Identifier, path: &str, old: Value, new: Value, ts: String) {
        if old == new {
            return;
        }
        let targets: Vec<Subscription> =
            self.subscriptions.read().unwrap().values().filter(|s| s.matches(shell, path)).cloned().collect();
        for sub in targets {
            let event = Event {
                subscription: sub.id.clone(),
                shell_id: shell.clone(),
                path: path.to_string(),
                old: old.clone(),
                new: new.clone(),
                ts: ts.clone(),
            };
            tokio::spawn(deliver(self.client.clone(), self.policy, self.counters.clone(), sub.callback_url, event));
        }
    }
}

async fn deliver(client: reqwest::Client, policy: RetryPolicy, counters: Arc<Counters>, url: String, event: Event) {
    let mut backoff = Duration::from_millis(policy.base_backoff_ms);
    for attempt in 1..=policy.attempts.max(1) {
        match client.post(&url).json(&event).send().await {
            Ok(resp) if resp.status().is_success() => {
                counters.delivered.fetch_add(1, Ordering::Relaxed);
                return;
            }
            Ok(resp) => tracing::debug!(%url, attempt, status = %resp.status(), "event delivery rejected"),
            Err(e) => tracing::debug!(%url, attempt, "event delivery failed: {e}"),
        }
        counters.failed_attempts.fetch_add(1, Ordering::Relaxed);
        if attempt < policy.attempts {
            tokio::time::sleep(backoff).await;
            backoff *= 2;
        }
    }
    counters.dropped.fetch_add(1, Ordering::Relaxed);
    tracing::warn!(%url, subscription = %event.subscription, path = %event.path, "event dropped after {} attempts", policy.attempts);
}
