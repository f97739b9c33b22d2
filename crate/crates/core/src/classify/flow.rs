use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SyncConfig, SyncMode};

/// Where execution capability lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuntimeStrategy {
    Passive,
    ServerHosted,
    Standalone,
}

impl RuntimeStrategy {
    pub const ALL: [Self; 3] = [Self::Passive, Self::ServerHosted, Self::Standalone];

    pub fn as_str(self) -> &'static str {
        match self {
            RuntimeStrategy::Passive => "passive",
            RuntimeStrategy::ServerHosted => "server-hosted",
            RuntimeStrategy::Standalone => "standalone",
        }
    }
}

impl fmt::Display for RuntimeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuntimeStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passive" => Ok(Self::Passive),
            "server-hosted" | "server" => Ok(Self::ServerHosted),
            "standalone" => Ok(Self::Standalone),
            other => Err(format!("unknown runtime strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFlowClass {
    DigitalModel,
    DigitalShadow,
    DigitalTwin,
}

impl fmt::Display for DataFlowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFlowClass::DigitalModel => "digital model",
            DataFlowClass::DigitalShadow => "digital shadow",
            DataFlowClass::DigitalTwin => "digital twin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FlowError {
    /// Manual inbound with automatic outbound has no class.
    #[error("UnclassifiedFlow: manual inbound with automatic outbound")]
    UnclassifiedFlow,
}

pub fn classify_data_flow(sync: &SyncConfig, strategy: RuntimeStrategy) -> Result<DataFlowClass, FlowError> {
    if strategy == RuntimeStrategy::Passive {
        return Ok(DataFlowClass::DigitalModel);
    }
    match (sync.inbound, sync.outbound) {
        (SyncMode::Manual, SyncMode::Manual) => Ok(DataFlowClass::DigitalModel),
        (SyncMode::Automatic, SyncMode::Manual) => Ok(DataFlowClass::DigitalShadow),
        (SyncMode::Automatic, SyncMode::Automatic) => Ok(DataFlowClass::DigitalTwin),
        (SyncMode::Manual, SyncMode::Automatic) => Err(FlowError::UnclassifiedFlow),
    }
}
