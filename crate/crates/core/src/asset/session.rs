use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

use crate::engine::{Aggregate, Cmp};
use crate::model::EndpointDescriptor;

/// Grid points one query may touch.
pub const MAX_QUERY_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssetError {
    #[error("EndpointUnreachable: endpoint {0} unreachable")]
    Unreachable(String),
    #[error("disconnected from asset")]
    Disconnected,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("endpoint does not accept parameterized queries")]
    NotParameterized,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("asset rejected request: {0}")]
    Rejected(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub var: String,
    pub value: f64,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFilter {
    pub var: String,
    pub cmp: Cmp,
    pub literal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryAgg {
    #[default]
    None,
    Mean,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub vars: Vec<String>,
    pub from: f64,
    pub to: f64,
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<QueryFilter>,
    #[serde(default)]
    pub agg: QueryAgg,
}

impl QuerySpec {
    /// Sample times `from + k*step` for k = 0, 1, ... while not past `to`.
    pub fn grid(&self) -> Result<Vec<f64>, AssetError> {
        let invalid = |m: &str| AssetError::InvalidQuery(m.to_string());
        if !(self.from.is_finite() && self.to.is_finite() && self.step.is_finite()) {
            return Err(invalid("times must be finite"));
        }
        if self.from > self.to {
            return Err(invalid("from is after to"));
        }
        if self.step <= 0.0 {
            return Err(invalid("step must be positive"));
        }
        let mut points = Vec::new();
        let mut k = 0u64;
        loop {
            let t = self.from + k as f64 * self.step;
            if t > self.to {
                return Ok(points);
            }
            if points.len() == MAX_QUERY_POINTS {
                return Err(invalid("query touches too many points"));
            }
            points.push(t);
            k += 1;
        }
    }

    fn validate(&self, endpoint: &EndpointDescriptor) -> Result<Vec<f64>, AssetError> {
        if self.vars.is_empty() {
            return Err(AssetError::InvalidQuery("no variables requested".into()));
        }
        let referenced = self.vars.iter().chain(self.filter.as_ref().map(|f| &f.var));
        for var in referenced {
            if endpoint.variable(var).is_none() {
                return Err(AssetError::InvalidQuery(format!("variable `{var}` not on endpoint")));
            }
        }
        if self.filter.as_ref().is_some_and(|f| !f.literal.is_finite()) {
            return Err(AssetError::InvalidQuery("filter literal must be finite".into()));
        }
        self.grid()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "samples")]
pub enum QueryResult {
    /// Samples in time order, variables in request order at each time.
    Set(Vec<Sample>),
    /// One sample per requested variable, stamped with the last time that
    /// passed the filter. Empty when nothing passed.
    Aggregate(Vec<Sample>),
}

/// A connection to one asset endpoint. Requests on a session are
/// answered in order.
#[derive(Debug)]
pub struct Session {
    endpoint: EndpointDescriptor,
    lines: Lines<BufReader<OwnedReadHalf>>,
    write: OwnedWriteHalf,
}

impl Session {
    pub async fn connect(endpoint: &EndpointDescriptor) -> Result<Self, AssetError> {
        let addr = endpoint.address();
        let stream = TcpStream::connect(&addr).await.map_err(|_| AssetError::Unreachable(addr))?;
        let _ = stream.set_nodelay(true);
        let (read, write) = stream.into_split();
        Ok(Self { endpoint: endpoint.clone(), lines: BufReader::new(read).lines(), write })
    }

    pub fn endpoint(&self) -> &EndpointDescriptor {
        &self.endpoint
    }

    async fn send(&mut self, requests: &[Value]) -> Result<(), AssetError> {
        let mut buf = Vec::new();
        for r in requests {
            serde_json::to_writer(&mut buf, r).expect("request serializes");
            buf.push(b'\n');
        }
        self.write.write_all(&buf).await.map_err(|_| AssetError::Disconnected)
    }

    async fn receive(&mut self) -> Result<Value, AssetError> {
        let line = self.lines.next_line().await.map_err(|_| AssetError::Disconnected)?.ok_or(AssetError::Disconnected)?;
        let v: Value = serde_json::from_str(&line).map_err(|e| AssetError::Protocol(e.to_string()))?;
        if let Some(err) = v.get("error").and_then(Value::as_str) {
            return Err(AssetError::Rejected(err.to_string()));
        }
        Ok(v)
    }

    fn sample(var: &str, v: &Value) -> Result<Sample, AssetError> {
        let value = v.get("value").and_then(Value::as_f64);
        let ts = v.get("t").and_then(Value::as_f64);
        match (value, ts) {
            (Some(value), Some(ts)) => Ok(Sample { var: var.to_string(), value, ts }),
            _ => Err(AssetError::Protocol(format!("malformed sample: {v}"))),
        }
    }

    /// Latest value of one declared variable; one round trip.
    pub async fn fetch_simple(&mut self, var: &str) -> Result<Sample, AssetError> {
        if self.endpoint.variable(var).is_none() {
            return Err(AssetError::UnknownVariable(var.to_string()));
        }
        self.send(&[json!({"op": "get", "var": var})]).await?;
        match self.receive().await {
            Err(AssetError::Rejected(e)) if e == "UnknownVariable" => Err(AssetError::UnknownVariable(var.to_string())),
            other => Self::sample(var, &other?),
        }
    }

    /// Send a command; the asset acknowledges or rejects it.
    pub async fn set(&mut self, var: &str, value: f64) -> Result<(), AssetError> {
        self.send(&[json!({"op": "set", "var": var, "value": value})]).await?;
        self.receive().await.map(|_| ())
    }

    /// Evaluate a parameterized query: sample every variable at each grid
    /// time, keep times passing the filter, then aggregate per variable.
    pub async fn query(&mut self, q: &QuerySpec) -> Result<QueryResult, AssetError> {
        if !self.endpoint.parameterized {
            return Err(AssetError::NotParameterized);
        }
        let grid = q.validate(&self.endpoint)?;
        let mut fetch: Vec<&str> = q.vars.iter().map(String::as_str).collect();
        if let Some(f) = &q.filter {
            if !fetch.contains(&f.var.as_str()) {
                fetch.push(&f.var);
            }
        }
        let requests: Vec<Value> = grid
            .iter()
            .flat_map(|t| fetch.iter().map(move |var| json!({"op": "get", "var": var, "t": t})))
            .collect();
        self.send(&requests).await?;
        let mut rows = Vec::with_capacity(grid.len());
        for t in &grid {
            let mut row = Vec::with_capacity(fetch.len());
            for var in &fetch {
                let v = self.receive().await?;
                row.push(Self::sample(var, &v)?.value);
            }
            rows.push((*t, row));
        }
        let kept: Vec<&(f64, Vec<f64>)> = match &q.filter {
            None => rows.iter().collect(),
            Some(f) => {
                let idx = fetch.iter().position(|v| *v == f.var).expect("filter var fetched");
                rows.iter().filter(|(_, row)| f.cmp.holds(row[idx], f.literal)).collect()
            }
        };
        let agg = match q.agg {
            QueryAgg::None => {
                return Ok(QueryResult::Set(
                    kept.iter()
                        .flat_map(|(t, row)| {
                            q.vars.iter().enumerate().map(move |(i, var)| Sample { var: var.clone(), value: row[i], ts: *t })
                        })
                        .collect(),
                ))
            }
            QueryAgg::Mean => Aggregate::Mean,
            QueryAgg::Min => Aggregate::Min,
            QueryAgg::Max => Aggregate::Max,
        };
        let Some((last_t, _)) = kept.last() else {
            return Ok(QueryResult::Aggregate(Vec::new()));
        };
        Ok(QueryResult::Aggregate(
            q.vars
                .iter()
                .enumerate()
                .map(|(i, var)| {
                    let column: Vec<f64> = kept.iter().map(|(_, row)| row[i]).collect();
                    Sample { var: var.clone(), value: agg.apply(&column), ts: *last_t }
                })
                .collect(),
        ))
    }
}
