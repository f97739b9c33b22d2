use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::VarType;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DocMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<String>,
    #[serde(default)]
    pub source: String,
}

/// A flat record of named values exchanged with a service.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ServiceDoc {
    pub values: BTreeMap<String, Value>,
    #[serde(default)]
    pub meta: DocMeta,
}

impl ServiceDoc {
    pub fn new(values: BTreeMap<String, Value>) -> Self {
        Self { values, meta: DocMeta::default() }
    }

    /// Build from a JSON object; anything else is rejected.
    pub fn from_object(value: Value) -> Option<Self> {
        match value {
            Value::Object(map) => Some(Self::new(map.into_iter().collect())),
            _ => None,
        }
    }

    pub fn with_meta(mut self, ts: Option<String>, source: impl Into<String>) -> Self {
        self.meta = DocMeta { ts, source: source.into() };
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    /// The values as a JSON object, without metadata.
    pub fn values_json(&self) -> Value {
        Value::Object(self.values.clone().into_iter().collect())
    }

    /// Check every declared field is present with the right type and no
    /// undeclared field is present.
    pub fn conforms(&self, schema: &BTreeMap<String, VarType>) -> Result<(), String> {
        for (name, ty) in schema {
            match self.values.get(name) {
                None => return Err(format!("missing field `{name}`")),
                Some(v) if !ty.accepts(v) => return Err(format!("field `{name}` is not {ty}")),
                Some(_) => {}
            }
        }
        if let Some(extra) = self.values.keys().find(|k| !schema.contains_key(*k)) {
            return Err(format!("undeclared field `{extra}`"));
        }
        Ok(())
    }

    /// Keep only the fields named in `schema`.
    pub fn project(mut self, schema: &BTreeMap<String, VarType>) -> Self {
        self.values.retain(|k, _| schema.contains_key(k));
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValueType;
    use serde_json::json;

    #[test]
    fn conformance_checks_types_and_extras() {
        let schema: BTreeMap<_, _> = [("samples".to_string(), VarType::list_of(ValueType::Double))].into();
        let ok = ServiceDoc::from_object(json!({"samples": [20, 25.5]})).unwrap();
        assert!(ok.conforms(&schema).is_ok());
        let bad = ServiceDoc::from_object(json!({"samples": ["x"]})).unwrap();
        assert!(bad.conforms(&schema).is_err());
        let extra = ServiceDoc::from_object(json!({"samples": [], "x": 1})).unwrap();
        assert!(extra.conforms(&schema).unwrap_err().contains("undeclared"));
        let missing = ServiceDoc::default();
        assert!(missing.conforms(&schema).unwrap_err().contains("missing"));
    }
}
