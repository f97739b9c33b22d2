//! Package data model: shells, submodels, elements, endpoints and the
//! manifest that ties service artifacts to their checksums.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Name of the submodel through which service artifacts must be reachable.
pub const SOFTWARE_SERVICES: &str = "SoftwareServices";

/// Qualifier kind binding an operation to a remote delegate URL.
pub const QUALIFIER_DELEGATION: &str = "delegation";

/// Qualifier kind binding an operation to a packaged service artifact.
pub const QUALIFIER_ARTIFACT: &str = "artifact";

/// Globally unique, IRI-style identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Identifier(String);

impl Identifier {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Identifier {
    fn from(value: &str) -> Self {
        Self(value.to_string())
    }
}

impl From<String> for Identifier {
    fn from(value: String) -> Self {
        Self(value)
    }
}

/// Scalar value types a property may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Double,
    Int64,
    String,
    Bool,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Double => "double",
            ValueType::Int64 => "int64",
            ValueType::String => "string",
            ValueType::Bool => "bool",
        }
    }

    /// Coerce a JSON value into this type. Numeric strings are accepted for
    /// numeric types, so `"25.50"` becomes `Double(25.5)`.
    pub fn coerce(self, raw: &serde_json::Value) -> Option<PropertyValue> {
        use serde_json::Value as J;
        match (self, raw) {
            (ValueType::Double, J::Number(n)) => n.as_f64().filter(|v| v.is_finite()).map(PropertyValue::Double),
            (ValueType::Double, J::String(s)) => s
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(PropertyValue::Double),
            (ValueType::Int64, J::Number(n)) => n.as_i64().map(PropertyValue::Int64),
            (ValueType::Int64, J::String(s)) => s.trim().parse::<i64>().ok().map(PropertyValue::Int64),
            (ValueType::String, J::String(s)) => Some(PropertyValue::String(s.clone())),
            (ValueType::Bool, J::Bool(b)) => Some(PropertyValue::Bool(*b)),
            (ValueType::Bool, J::String(s)) => match s.as_str() {
                "true" => Some(PropertyValue::Bool(true)),
                "false" => Some(PropertyValue::Bool(false)),
                _ => None,
            },
            _ => None,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "double" => Ok(ValueType::Double),
            "int64" => Ok(ValueType::Int64),
            "string" => Ok(ValueType::String),
            "bool" => Ok(ValueType::Bool),
            other => Err(format!("unknown value type `{other}`")),
        }
    }
}

/// Type of an operation variable or service I/O field: a scalar, or a list
/// of scalars written as `double[]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarType {
    pub base: ValueType,
    pub list: bool,
}

impl VarType {
    pub const fn scalar(base: ValueType) -> Self {
        Self { base, list: false }
    }

    pub const fn list_of(base: ValueType) -> Self {
        Self { base, list: true }
    }

    /// Whether a JSON value conforms to this type. Integers are accepted
    /// where doubles are expected.
    pub fn accepts(&self, raw: &serde_json::Value) -> bool {
        let scalar = |v: &serde_json::Value| match self.base {
            ValueType::Double => v.as_f64().is_some_and(f64::is_finite),
            ValueType::Int64 => v.as_i64().is_some(),
            ValueType::String => v.is_string(),
            ValueType::Bool => v.is_boolean(),
        };
        if self.list {
            raw.as_array().is_some_and(|items| items.iter().all(scalar))
        } else {
            scalar(raw)
        }
    }
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.list {
            write!(f, "{}[]", self.base)
        } else {
            write!(f, "{}", self.base)
        }
    }
}

impl FromStr for VarType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_suffix("[]") {
            Some(base) => Ok(VarType::list_of(base.parse()?)),
            None => Ok(VarType::scalar(s.parse()?)),
        }
    }
}

impl Serialize for VarType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VarType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// A property value. The variant need not agree with the property's declared
/// type; validation reports the mismatch.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyValue {
    Double(f64),
    Int64(i64),
    String(String),
    Bool(bool),
}

impl PropertyValue {
    pub fn value_type(&self) -> ValueType {
        match self {
            PropertyValue::Double(_) => ValueType::Double,
            PropertyValue::Int64(_) => ValueType::Int64,
            PropertyValue::String(_) => ValueType::String,
            PropertyValue::Bool(_) => ValueType::Bool,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            PropertyValue::Double(v) => serde_json::Number::from_f64(*v)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            PropertyValue::Int64(v) => serde_json::Value::from(*v),
            PropertyValue::String(v) => serde_json::Value::from(v.clone()),
            PropertyValue::Bool(v) => serde_json::Value::from(*v),
        }
    }

    /// Best-effort reading of a JSON value without a declared type.
    pub fn from_json_natural(raw: &serde_json::Value) -> Option<Self> {
        use serde_json::Value as J;
        match raw {
            J::Bool(b) => Some(PropertyValue::Bool(*b)),
            J::String(s) => Some(PropertyValue::String(s.clone())),
            J::Number(n) => match n.as_i64() {
                Some(i) if !raw.to_string().contains(['.', 'e', 'E']) => Some(PropertyValue::Int64(i)),
                _ => n.as_f64().map(PropertyValue::Double),
            },
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PropertyValue::Double(v) => Some(*v),
            PropertyValue::Int64(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl fmt::Display for PropertyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub id_short: String,
    pub value_type: ValueType,
    pub value: PropertyValue,
}

/// Declared input or output variable of an operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperationVariable {
    pub id_short: String,
    pub value_type: VarType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qualifier {
    pub kind: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperationElement {
    pub id_short: String,
    #[serde(default)]
    pub input_vars: Vec<OperationVariable>,
    #[serde(default)]
    pub output_vars: Vec<OperationVariable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qualifiers: Vec<Qualifier>,
}

impl OperationElement {
    pub fn qualifier(&self, kind: &str) -> Option<&str> {
        self.qualifiers.iter().find(|q| q.kind == kind).map(|q| q.value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FileElement {
    pub id_short: String,
    pub content_type: String,
    pub artifact_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubmodelElement {
    Property(Property),
    Operation(OperationElement),
    File(FileElement),
}

impl SubmodelElement {
    pub fn id_short(&self) -> &str {
        match self {
            SubmodelElement::Property(p) => &p.id_short,
            SubmodelElement::Operation(o) => &o.id_short,
            SubmodelElement::File(f) => &f.id_short,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SubmodelElement::Property(_) => "Property",
            SubmodelElement::Operation(_) => "Operation",
            SubmodelElement::File(_) => "File",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submodel {
    pub id: Identifier,
    pub id_short: String,
    pub elements: Vec<SubmodelElement>,
}

impl Submodel {
    pub fn element(&self, id_short: &str) -> Option<&SubmodelElement> {
        self.elements.iter().find(|e| e.id_short() == id_short)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AasShell {
    pub id: Identifier,
    pub asset_id: Identifier,
    #[serde(default)]
    pub submodel_refs: Vec<Identifier>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EndpointVariable {
    pub name: String,
    pub value_type: ValueType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointCommand {
    pub name: String,
    #[serde(default)]
    pub args: Vec<ValueType>,
}

/// Network location of the physical asset and what it exposes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EndpointDescriptor {
    pub host: String,
    pub port: u32,
    #[serde(default)]
    pub variables: Vec<EndpointVariable>,
    #[serde(default)]
    pub parameterized: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub commands: Vec<EndpointCommand>,
}

impl EndpointDescriptor {
    pub fn variable(&self, name: &str) -> Option<&EndpointVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn address(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncMode {
    Manual,
    Automatic,
}

/// Maps an asset variable onto a property of a shell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncMapping {
    pub var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<Identifier>,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetCommand {
    pub var: String,
    pub value: f64,
}

/// Outbound rule: when `trigger` holds over the last `window` polls, send
/// `command` to the asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteBackRule {
    pub trigger: String,
    #[serde(default = "default_rule_window")]
    pub window: usize,
    pub command: AssetCommand,
}

fn default_rule_window() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncConfig {
    pub inbound: SyncMode,
    pub outbound: SyncMode,
    /// Seconds between polls; required when any direction is automatic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poll_interval: Option<f64>,
    #[serde(default)]
    pub endpoint: usize,
    #[serde(default)]
    pub mappings: Vec<SyncMapping>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub write_back_rules: Vec<WriteBackRule>,
}

impl SyncConfig {
    pub fn any_automatic(&self) -> bool {
        self.inbound == SyncMode::Automatic || self.outbound == SyncMode::Automatic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    PipelineScript,
    SourceBundle,
    Executable,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::PipelineScript => "pipeline_script",
            ArtifactKind::SourceBundle => "source_bundle",
            ArtifactKind::Executable => "executable",
        }
    }

    /// Whether an entrypoint path has the shape this kind's engine loads.
    pub fn matches_entrypoint(self, entrypoint: &str) -> bool {
        match self {
            ArtifactKind::PipelineScript => entrypoint.ends_with(".pipeline.json"),
            ArtifactKind::Executable => entrypoint.ends_with(".exe.bin"),
            ArtifactKind::SourceBundle => {
                let mut parts = entrypoint.rsplitn(2, '/');
                let file = parts.next().unwrap_or_default();
                parts.next().is_some_and(|dir| dir.len() > "artifacts".len())
                    && (file.ends_with(".rs") || file.ends_with(".c"))
            }
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IoSchema {
    #[serde(default)]
    pub input: BTreeMap<String, VarType>,
    #[serde(default)]
    pub output: BTreeMap<String, VarType>,
}

/// Limits applied to one service invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ResourceBudget {
    /// Seconds of CPU time.
    pub cpu_time: f64,
    /// Seconds of wall-clock time.
    pub wall_time: f64,
    /// Bytes of address space.
    pub memory: u64,
    pub network_allowed: bool,
}

impl Default for ResourceBudget {
    fn default() -> Self {
        Self {
            cpu_time: 2.0,
            wall_time: 5.0,
            memory: 256 * 1024 * 1024,
            network_allowed: false,
        }
    }
}

impl ResourceBudget {
    pub fn is_positive(&self) -> bool {
        self.cpu_time > 0.0 && self.wall_time > 0.0 && self.memory > 0 && self.cpu_time.is_finite() && self.wall_time.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceArtifact {
    pub kind: ArtifactKind,
    pub entrypoint: String,
    pub io_schema: IoSchema,
    #[serde(default)]
    pub dependencies: Vec<String>,
    #[serde(default)]
    pub budget: ResourceBudget,
}

impl ServiceArtifact {
    /// Archive paths belonging to this artifact. Source bundles own every
    /// file under their entrypoint's directory.
    pub fn bundle_prefix(&self) -> Option<&str> {
        match self.kind {
            ArtifactKind::SourceBundle => self.entrypoint.rsplit_once('/').map(|(dir, _)| dir),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PackageManifest {
    pub format_version: String,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_level: Option<u8>,
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<ServiceArtifact>,
    /// Rejects value writes when hosted.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub read_only: bool,
    /// Functionality only a standalone runtime provides.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub standalone_extensions: Vec<String>,
}

impl Default for PackageManifest {
    fn default() -> Self {
        Self {
            format_version: "1.0.0".to_string(),
            created_at: "2025-01-01T00:00:00Z".to_string(),
            declared_level: None,
            checksums: BTreeMap::new(),
            artifacts: Vec::new(),
            read_only: false,
            standalone_extensions: Vec::new(),
        }
    }
}

/// Archive file contents keyed by archive path (`artifacts/...`).
pub type FileMap = BTreeMap<String, Vec<u8>>;

/// A complete package: the descriptive model, endpoints, sync
/// configuration, service artifacts and their files.
///
/// Packages are values; edits produce new packages. File contents are shared
/// between copies.
#[derive(Debug, Clone, PartialEq)]
pub struct AasPackage {
    pub shells: Vec<AasShell>,
    pub submodels: Vec<Submodel>,
    pub endpoints: Vec<EndpointDescriptor>,
    pub sync_config: Option<SyncConfig>,
    pub manifest: PackageManifest,
    pub files: Arc<FileMap>,
}

impl Default for AasPackage {
    fn default() -> Self {
        Self {
            shells: Vec::new(),
            submodels: Vec::new(),
            endpoints: Vec::new(),
            sync_config: None,
            manifest: PackageManifest::default(),
            files: Arc::new(FileMap::new()),
        }
    }
}

impl AasPackage {
    pub fn artifacts(&self) -> &[ServiceArtifact] {
        &self.manifest.artifacts
    }

    pub fn shell(&self, id: &Identifier) -> Option<&AasShell> {
        self.shells.iter().find(|s| &s.id == id)
    }

    pub fn submodel(&self, id: &Identifier) -> Option<&Submodel> {
        self.submodels.iter().find(|s| &s.id == id)
    }

    pub fn artifact(&self, entrypoint: &str) -> Option<&ServiceArtifact> {
        self.manifest.artifacts.iter().find(|a| a.entrypoint == entrypoint)
    }

    /// Files owned by an artifact, keyed by archive path.
    pub fn artifact_files(&self, artifact: &ServiceArtifact) -> BTreeMap<&str, &[u8]> {
        match artifact.bundle_prefix() {
            Some(prefix) => {
                let dir = format!("{prefix}/");
                self.files
                    .iter()
                    .filter(|(path, _)| path.starts_with(&dir))
                    .map(|(p, b)| (p.as_str(), b.as_slice()))
                    .collect()
            }
            None => self
                .files
                .get_key_value(&artifact.entrypoint)
                .map(|(p, b)| (p.as_str(), b.as_slice()))
                .into_iter()
                .collect(),
        }
    }

    /// Recompute the manifest checksums from the current files.
    pub fn refresh_checksums(&mut self) {
        self.manifest.checksums = self
            .files
            .iter()
            .map(|(path, bytes)| (path.clone(), crate::model::archive::sha256_hex(bytes)))
            .collect();
    }

    /// Replace one file, sharing the rest.
    pub fn with_file(mut self, path: impl Into<String>, bytes: Vec<u8>) -> Self {
        Arc::make_mut(&mut self.files).insert(path.into(), bytes);
        self
    }
}
