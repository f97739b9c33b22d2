//! A simulated machine speaking line-delimited JSON over TCP.
//!
//! Requests and responses are one JSON object per line:
//!
//! ```text
//! {"op":"get","var":"temp","t":15}       -> {"var":"temp","value":25.0,"t":15}
//! {"op":"get","var":"temp"}              -> value at the simulator's clock
//! {"op":"set","var":"cooling","value":1} -> {"ok":true,"var":"cooling","value":1}
//! anything wrong                         -> {"error":"UnknownVariable"} etc.
//! ```

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;
use tokio::task::JoinHandle;

use super::signal::{sim_signal, COOLING, SIGNALS};
use crate::model::{EndpointCommand, EndpointDescriptor, EndpointVariable, ValueType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SimConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Unused: the generators are closed-form.
    pub seed: u64,
    /// Simulated seconds per real second.
    pub time_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 0, seed: 0, time_scale: 1.0 }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("port {0} is in use")]
    PortInUse(u16),
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
struct ClockState {
    anchor: Instant,
    base: f64,
    frozen: bool,
}

/// Simulated time. Runs at `time_scale` unless frozen.
#[derive(Debug)]
pub struct SimClock {
    scale: f64,
    state: Mutex<ClockState>,
}

impl SimClock {
    fn new(scale: f64) -> Self {
        Self { scale, state: Mutex::new(ClockState { anchor: Instant::now(), base: 0.0, frozen: false }) }
    }

    pub fn now(&self) -> f64 {
        let s = self.state.lock().unwrap();
        if s.frozen {
            s.base
        } else {
            s.base + s.anchor.elapsed().as_secs_f64() * self.scale
        }
    }

    /// Stop the clock at `t`.
    pub fn freeze(&self, t: f64) {
        let mut s = self.state.lock().unwrap();
        *s = ClockState { anchor: Instant::now(), base: t, frozen: true };
    }

    /// Continue from the current reading.
    pub fn resume(&self) {
        let now = self.now();
        let mut s = self.state.lock().unwrap();
        *s = ClockState { anchor: Instant::now(), base: now, frozen: false };
    }

    /// Jump to `t` and keep running.
    pub fn set(&self, t: f64) {
        let mut s = self.state.lock().unwrap();
        *s = ClockState { anchor: Instant::now(), base: t, frozen: false };
    }
}

/// An accepted `set` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetRecord {
    pub var: String,
    pub value: f64,
    pub t: f64,
}

#[derive(Debug)]
struct SimState {
    clock: SimClock,
    cooling: AtomicU8,
    requests: AtomicU64,
    set_log: Mutex<Vec<SetRecord>>,
}

impl SimState {
    fn value(&self, var: &str, t: f64) -> Option<Value> {
        match var {
            COOLING => Some(json!(self.cooling.load(Ordering::SeqCst))),
            "jobs" => sim_signal(var, t).ok().map(|v| json!(v as i64)),
            _ => sim_signal(var, t).ok().map(|v| json!(v)),
        }
    }

    fn handle(&self, line: &str) -> Value {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let err = |e: &str| json!({ "error": e });
        let Ok(Value::Object(req)) = serde_json::from_str::<Value>(line) else {
            return err("BadRequest");
        };
        let Some(var) = req.get("var").and_then(Value::as_str) else {
            return err("BadRequest");
        };
        match req.get("op").and_then(Value::as_str) {
            Some("get") => {
                let t = match req.get("t") {
                    None | Some(Value::Null) => json!(self.clock.now()),
                    Some(t) if t.as_f64().is_some_and(f64::is_finite) => t.clone(),
                    Some(_) => return err("BadRequest"),
                };
                match self.value(var, t.as_f64().unwrap_or_default()) {
                    Some(value) => json!({ "var": var, "value": value, "t": t }),
                    None => err("UnknownVariable"),
                }
            }
            Some("set") => {
                if SIGNALS.contains(&var) {
                    return err("ReadOnlyVariable");
                }
                if var != COOLING {
                    return err("UnknownVariable");
                }
                let value = match req.get("value").and_then(Value::as_f64) {
                    Some(v) if v == 0.0 || v == 1.0 => v as u8,
                    _ => return err("BadValue"),
                };
                self.cooling.store(value, Ordering::SeqCst);
                self.set_log.lock().unwrap().push(SetRecord {
                    var: var.to_string(),
                    value: value as f64,
                    t: self.clock.now(),
                });
                json!({ "ok": true, "var": var, "value": value })
            }
            _ => err("UnsupportedOp"),
        }
    }
}

/// A running simulator. Dropping the handle shuts it down.
#[derive(Debug)]
pub struct SimHandle {
    addr: SocketAddr,
    state: Arc<SimState>,
    shutdown: watch::Sender<bool>,
    task: Option<JoinHandle<()>>,
}

impl SimHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn clock(&self) -> &SimClock {
        &self.state.clock
    }

    pub fn cooling(&self) -> u8 {
        self.state.cooling.load(Ordering::SeqCst)
    }

    pub fn set_log(&self) -> Vec<SetRecord> {
        self.state.set_log.lock().unwrap().clone()
    }

    pub fn requests_served(&self) -> u64 {
        self.state.requests.load(Ordering::Relaxed)
    }

    /// Descriptor for this simulator with every variable declared.
    pub fn endpoint(&self, parameterized: bool) -> EndpointDescriptor {
        sim_endpoint(&self.addr.ip().to_string(), self.port(), parameterized)
    }

    /// Stop accepting and close every connection.
    pub async fn stop(mut self) {
        let _ = self.shutdown.send(true);
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for SimHandle {
    fn drop(&mut self) {
        let _ = self.shutdown.send(true);
    }
}

/// The variables and commands the simulator exposes.
pub fn sim_endpoint(host: &str, port: u16, parameterized: bool) -> EndpointDescriptor {
    let var = |name: &str, value_type| EndpointVariable { name: name.into(), value_type };
    EndpointDescriptor {
        host: host.into(),
        port: port.into(),
        variables: vec![
            var("temp", ValueType::Double),
            var("rpm", ValueType::Double),
            var("jobs", ValueType::Int64),
            var(COOLING, ValueType::Int64),
        ],
        parameterized,
        commands: vec![EndpointCommand { name: format!("set_{COOLING}"), args: vec![ValueType::Int64] }],
    }
}

async fn serve_connection(stream: TcpStream, state: Arc<SimState>, mut shutdown: watch::Receiver<bool>) {
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    loop {
        let line = tokio::select! {
            line = lines.next_line() => line,
            _ = shutdown.changed() => return,
        };
        let Ok(Some(line)) = line else { return };
        if line.trim().is_empty() {
            continue;
        }
        let mut out = serde_json::to_vec(&state.handle(&line)).expect("response serializes");
        out.push(b'\n');
        if write.write_all(&out).await.is_err() {
            return;
        }
    }
}

/// Start a simulator on `cfg.host:cfg.port`.
pub async fn sim_run(cfg: &SimConfig) -> Result<SimHandle, SimError> {
    if !(cfg.time_scale > 0.0 && cfg.time_scale.is_finite()) {
        return Err(SimError::InvalidConfig("time_scale must be positive".into()));
    }
    let listener = match TcpListener::bind((cfg.host.as_str(), cfg.port)).await {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => return Err(SimError::PortInUse(cfg.port)),
        Err(e) => return Err(e.into()),
    };
    let addr = listener.local_addr()?;
    let state = Arc::new(SimState {
        clock: SimClock::new(cfg.time_scale),
        cooling: AtomicU8::new(0),
        requests: AtomicU64::new(0),
        set_log: Mutex::new(Vec::new()),
    });
    let (tx, mut rx) = watch::channel(false);
    let accept_state = state.clone();
    let task = tokio::spawn(async move {
        let mut conns = tokio::task::JoinSet::new();
        loop {
            tokio::select! {
                accepted = listener.accept() => {
                    if let Ok((stream, _)) = accepted {
                        let _ = stream.set_nodelay(true);
                        conns.spawn(serve_connection(stream, accept_state.clone(), rx.clone()));
                    }
                }
                _ = rx.changed() => break,
            }
        }
        conns.abort_all();
        while conns.join_next().await.is_some() {}
    });
    Ok(SimHandle { addr, state, shutdown: tx, task: Some(task) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> SimState {
        SimState {
            clock: SimClock::new(1.0),
            cooling: AtomicU8::new(0),
            requests: AtomicU64::new(0),
            set_log: Mutex::new(Vec::new()),
        }
    }

    #[test]
    fn protocol_examples() {
        let s = state();
        assert_eq!(
            serde_json::to_string(&s.handle(r#"{"op":"get","var":"temp","t":15}"#)).unwrap(),
            r#"{"t":15,"value":25.0,"var":"temp"}"#
        );
        assert_eq!(s.handle(r#"{"op":"get","var":"nope"}"#), json!({"error": "UnknownVariable"}));
        assert_eq!(s.handle(r#"{"op":"set","var":"cooling","value":1}"#)["ok"], json!(true));
        assert_eq!(s.handle(r#"{"op":"get","var":"cooling","t":0}"#)["value"], json!(1));
        assert_eq!(s.handle(r#"{"op":"set","var":"temp","value":1}"#), json!({"error": "ReadOnlyVariable"}));
        assert_eq!(s.handle(r#"{"op":"subscribe","var":"temp"}"#), json!({"error": "UnsupportedOp"}));
        assert_eq!(s.handle("not json"), json!({"error": "BadRequest"}));
    }

    #[test]
    fn frozen_clock_stands_still() {
        let c = SimClock::new(1000.0);
        c.freeze(15.0);
        assert_eq!(c.now(), 15.0);
        c.resume();
        assert!(c.now() >= 15.0);
    }
}
