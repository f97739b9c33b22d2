//! The passive runtime strategy: a package file with no runtime behind it.
//! The model can be read; nothing can be executed, synchronized or served.

use serde_json::Value;
use thiserror::Error;

use crate::classify::{classify_level, HeavinessLevel};
use crate::model::{resolve_element, AasPackage, Identifier, PropertyValue, SubmodelElement};
use crate::packager::Feature;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PassiveError {
    #[error("NotExecutableInPassiveRuntime: {0} cannot run without a runtime environment")]
    NotExecutableInPassiveRuntime(String),
    #[error("StrategyForbidsSync: a package file cannot synchronize with its asset")]
    StrategyForbidsSync,
    #[error("FeatureUnavailable: {0} requires a runtime environment")]
    FeatureUnavailable(String),
    #[error("NotFound: {0}")]
    NotFound(String),
    #[error("NotAProperty: {0}")]
    NotAProperty(String),
}

/// File-only access to a package.
#[derive(Debug, Clone)]
pub struct PassiveContext {
    pkg: AasPackage,
}

impl PassiveContext {
    pub fn new(pkg: AasPackage) -> Self {
        Self { pkg }
    }

    pub fn package(&self) -> &AasPackage {
        &self.pkg
    }

    pub fn level(&self) -> HeavinessLevel {
        classify_level(&self.pkg)
    }

    /// Stored property value; the only thing a file can answer.
    pub fn get_value(&self, shell: &Identifier, path: &str) -> Result<PropertyValue, PassiveError> {
        match resolve_element(&self.pkg, shell, path) {
            Ok(SubmodelElement::Property(p)) => Ok(p.value.clone()),
            Ok(_) => Err(PassiveError::NotAProperty(path.to_string())),
            Err(e) => Err(PassiveError::NotFound(e.to_string())),
        }
    }

    pub fn invoke(&self, shell: &Identifier, path: &str, _args: &Value) -> Result<Value, PassiveError> {
        match resolve_element(&self.pkg, shell, path) {
            Ok(SubmodelElement::Operation(op)) => Err(PassiveError::NotExecutableInPassiveRuntime(op.id_short.clone())),
            Ok(_) => Err(PassiveError::NotExecutableInPassiveRuntime(path.to_string())),
            Err(e) => Err(PassiveError::NotFound(e.to_string())),
        }
    }

    pub fn start_sync(&self) -> Result<(), PassiveError> {
        Err(PassiveError::StrategyForbidsSync)
    }

    pub fn fetch(&self, var: &str) -> Result<f64, PassiveError> {
        Err(PassiveError::FeatureUnavailable(format!("asset access ({var})")))
    }

    pub fn subscribe(&self, _callback_url: &str) -> Result<(), PassiveError> {
        Err(PassiveError::FeatureUnavailable("eventing".into()))
    }

    pub fn subscriptions(&self) -> Result<usize, PassiveError> {
        Err(PassiveError::FeatureUnavailable("subscriptions".into()))
    }

    pub fn build_product(&self, entrypoint: &str) -> Result<std::path::PathBuf, PassiveError> {
        Err(PassiveError::FeatureUnavailable(format!("build cache for {entrypoint}")))
    }

    pub fn extension(&self, name: &str) -> Result<Value, PassiveError> {
        Err(PassiveError::FeatureUnavailable(format!("extension {name}")))
    }

    /// Try to use a feature; every runtime feature fails here.
    pub fn exercise(&self, feature: &Feature) -> Result<(), PassiveError> {
        let shell = self.pkg.shells.first().map(|s| s.id.clone()).unwrap_or_else(|| Identifier::new("urn:none"));
        match feature {
            Feature::Api => self.fetch("temp").map(|_| ()),
            Feature::Sync => self.start_sync(),
            Feature::ServiceExecution => {
                let op = self.pkg.submodels.iter().find_map(|sm| {
                    sm.elements.iter().find_map(|e| match e {
                        SubmodelElement::Operation(op) => Some(format!("{}.{}", sm.id_short, op.id_short)),
                        _ => None,
                    })
                });
                let path = op.unwrap_or_else(|| "Services.none".into());
                self.invoke(&shell, &path, &Value::Null).map(|_| ())
            }
            Feature::Eventing => self.subscribe("http://127.0.0.1:9/").map(|_| ()),
            Feature::BuildCache => self.build_product("any").map(|_| ()),
            Feature::Subscriptions(_) => self.subscriptions().map(|_| ()),
            Feature::Extension(name) => self.extension(name).map(|_| ()),
        }
    }
}
