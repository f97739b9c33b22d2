//! The package data model, its archive format and validation.

pub mod archive;
pub mod codec;
pub mod types;
pub mod validate;

pub use archive::{parse_package, serialize_package, sha256_hex, PackageError};
pub use types::*;
pub use validate::{validate, Rule, Violation};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("not found: {0}")]
    NotFound(String),
    /// Reserved: element id_shorts are unique per submodel.
    #[error("ambiguous path: {0}")]
    AmbiguousPath(String),
}

/// Find the element at `Submodel.element` under a shell.
pub fn resolve_element<'a>(
    pkg: &'a AasPackage,
    shell_id: &Identifier,
    id_short_path: &str,
) -> Result<&'a SubmodelElement, ResolveError> {
    let not_found = || ResolveError::NotFound(format!("{shell_id}/{id_short_path}"));
    let shell = pkg.shell(shell_id).ok_or_else(not_found)?;
    let (sm_short, element_short) = id_short_path.split_once('.').ok_or_else(not_found)?;
    if element_short.contains('.') {
        return Err(not_found());
    }
    let mut submodels = shell
        .submodel_refs
        .iter()
        .filter_map(|r| pkg.submodel(r))
        .filter(|sm| sm.id_short == sm_short);
    let submodel = submodels.next().ok_or_else(not_found)?;
    if submodels.next().is_some() {
        return Err(ResolveError::AmbiguousPath(id_short_path.to_string()));
    }
    submodel.element(element_short).ok_or_else(not_found)
}

impl AasPackage {
    /// A copy of this package with one property value replaced. The caller is
    /// responsible for type-checking `value`.
    pub fn with_property_value(
        &self,
        shell_id: &Identifier,
        id_short_path: &str,
        value: PropertyValue,
    ) -> Result<AasPackage, ResolveError> {
        let not_found = || ResolveError::NotFound(format!("{shell_id}/{id_short_path}"));
        let (sm_short, element_short) = id_short_path.split_once('.').ok_or_else(not_found)?;
        let shell = self.shell(shell_id).ok_or_else(not_found)?;
        let sm_id = shell
            .submodel_refs
            .iter()
            .find(|r| self.submodel(r).is_some_and(|sm| sm.id_short == sm_short))
            .ok_or_else(not_found)?
            .clone();
        let mut next = self.clone();
        let sm = next.submodels.iter_mut().find(|sm| sm.id == sm_id).ok_or_else(not_found)?;
        match sm.elements.iter_mut().find(|e| e.id_short() == element_short) {
            Some(SubmodelElement::Property(p)) => {
                p.value = value;
                Ok(next)
            }
            _ => Err(not_found()),
        }
    }

    /// Dotted paths of every property reachable from a shell.
    pub fn property_paths(&self, shell_id: &Identifier) -> Vec<String> {
        let Some(shell) = self.shell(shell_id) else { return Vec::new() };
        shell
            .submodel_refs
            .iter()
            .filter_map(|r| self.submodel(r))
            .flat_map(|sm| {
                sm.elements.iter().filter_map(move |e| match e {
                    SubmodelElement::Property(p) => Some(format!("{}.{}", sm.id_short, p.id_short)),
                    _ => None,
                })
            })
            .collect()
    }
}
