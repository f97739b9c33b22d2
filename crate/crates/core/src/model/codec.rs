//! JSON encoding of `model.json` / `manifest.json` and the canonical writer.

use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use super::types::*;

/// A decoding failure at a JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeError {
    pub path: String,
    pub reason: String,
}

impl DecodeError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { path: path.into(), reason: reason.into() }
    }
}

/// Write a JSON value canonically: object keys sorted, no whitespace,
/// numbers in shortest round-trip form.
pub fn to_canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out.into_bytes()
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

fn element_to_json(element: &SubmodelElement) -> Value {
    match element {
        SubmodelElement::Property(p) => json!({
            "kind": "Property",
            "idShort": p.id_short,
            "valueType": p.value_type,
            "value": p.value.to_json(),
        }),
        SubmodelElement::Operation(op) => {
            let mut v = serde_json::to_value(op).expect("operation serializes");
            v["kind"] = json!("Operation");
            v
        }
        SubmodelElement::File(f) => {
            let mut v = serde_json::to_value(f).expect("file element serializes");
            v["kind"] = json!("File");
            v
        }
    }
}

fn submodel_to_json(sm: &Submodel) -> Value {
    json!({
        "id": sm.id,
        "idShort": sm.id_short,
        "elements": sm.elements.iter().map(element_to_json).collect::<Vec<_>>(),
    })
}

pub fn model_to_json(pkg: &AasPackage) -> Value {
    let mut model = Map::new();
    model.insert("shells".into(), serde_json::to_value(&pkg.shells).expect("shells serialize"));
    model.insert(
        "submodels".into(),
        Value::Array(pkg.submodels.iter().map(submodel_to_json).collect()),
    );
    model.insert("endpoints".into(), serde_json::to_value(&pkg.endpoints).expect("endpoints serialize"));
    if let Some(sync) = &pkg.sync_config {
        model.insert("syncConfig".into(), serde_json::to_value(sync).expect("sync config serializes"));
    }
    Value::Object(model)
}

pub fn manifest_to_json(manifest: &PackageManifest) -> Value {
    serde_json::to_value(manifest).expect("manifest serializes")
}

fn typed<T: DeserializeOwned>(value: &Value, path: &str) -> Result<T, DecodeError> {
    serde_json::from_value(value.clone()).map_err(|e| DecodeError::new(path, e.to_string()))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, DecodeError> {
    obj.get(key).ok_or_else(|| DecodeError::new(format!("{path}.{key}"), "missing field"))
}

fn string_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String, DecodeError> {
    field(obj, key, path)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| DecodeError::new(format!("{path}.{key}"), "expected string"))
}

fn element_from_json(value: &Value, path: &str) -> Result<SubmodelElement, DecodeError> {
    let obj = value.as_object().ok_or_else(|| DecodeError::new(path, "expected object"))?;
    let kind = string_field(obj, "kind", path)?;
    match kind.as_str() {
        "Property" => {
            let id_short = string_field(obj, "idShort", path)?;
            let value_type: ValueType = typed(field(obj, "valueType", path)?, &format!("{path}.valueType"))?;
            let raw = field(obj, "value", path)?;
            let value = value_type
                .coerce(raw)
                .or_else(|| PropertyValue::from_json_natural(raw))
                .ok_or_else(|| DecodeError::new(format!("{path}.value"), "expected scalar value"))?;
            Ok(SubmodelElement::Property(Property { id_short, value_type, value }))
        }
        "Operation" => {
            let mut stripped = obj.clone();
            stripped.remove("kind");
            typed(&Value::Object(stripped), path).map(SubmodelElement::Operation)
        }
        "File" => {
            let mut stripped = obj.clone();
            stripped.remove("kind");
            typed(&Value::Object(stripped), path).map(SubmodelElement::File)
        }
        other => Err(DecodeError::new(format!("{path}.kind"), format!("unknown element kind `{other}`"))),
    }
}

fn submodel_from_json(value: &Value, path: &str) -> Result<Submodel, DecodeError> {
    let obj = value.as_object().ok_or_else(|| DecodeError::new(path, "expected object"))?;
    let id = Identifier::new(string_field(obj, "id", path)?);
    let id_short = string_field(obj, "idShort", path)?;
    let elements = match obj.get("elements") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, e)| element_from_json(e, &format!("{path}.elements[{i}]")))
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(DecodeError::new(format!("{path}.elements"), "expected array")),
    };
    Ok(Submodel { id, id_short, elements })
}

/// The model half of a package (everything in `model.json`).
pub struct ModelParts {
    pub shells: Vec<AasShell>,
    pub submodels: Vec<Submodel>,
    pub endpoints: Vec<EndpointDescriptor>,
    pub sync_config: Option<SyncConfig>,
}

pub fn model_from_json(value: &Value) -> Result<ModelParts, DecodeError> {
    const ROOT: &str = "model.json";
    let obj = value.as_object().ok_or_else(|| DecodeError::new(ROOT, "expected object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "shells" | "submodels" | "endpoints" | "syncConfig") {
            return Err(DecodeError::new(format!("{ROOT}.{key}"), "unknown top-level key"));
        }
    }
    let shells = match obj.get("shells") {
        Some(v) => typed(v, "model.json.shells")?,
        None => Vec::new(),
    };
    let submodels = match obj.get("submodels") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, sm)| submodel_from_json(sm, &format!("{ROOT}.submodels[{i}]")))
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(DecodeError::new("model.json.submodels", "expected array")),
    };
    let endpoints = match obj.get("endpoints") {
        Some(v) => typed(v, "model.json.endpoints")?,
        None => Vec::new(),
    };
    let sync_config = match obj.get("syncConfig") {
        Some(Value::Null) | None => None,
        Some(v) => Some(typed(v, "model.json.syncConfig")?),
    };
    Ok(ModelParts { shells, submodels, endpoints, sync_config })
}

pub fn manifest_from_json(value: &Value) -> Result<PackageManifest, DecodeError> {
    typed(value, "manifest.json")
}
