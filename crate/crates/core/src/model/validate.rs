//! Package validation. Every model invariant has exactly one rule id;
//! violations are returned as data.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use super::archive::sha256_hex;
use super::types::*;
use crate::classify::classify_level;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rule {
    IdEmpty,
    IdControlChars,
    IdDuplicate,
    SubmodelRefUnresolved,
    SubmodelRefDuplicate,
    IdShortFormat,
    IdShortUnique,
    PropertyValueType,
    ArtifactMissing,
    OperationNoOutput,
    OperationBindingUnresolved,
    QualifierKindEmpty,
    ArtifactUnreachable,
    ArtifactDuplicate,
    EntrypointMissing,
    ArtifactKindMismatch,
    IoSchemaNoOutput,
    BudgetNotPositive,
    ChecksumMissing,
    ChecksumUnknownFile,
    ChecksumMismatch,
    DeclaredLevelMismatch,
    FormatVersion,
    CreatedAt,
    EndpointHostEmpty,
    EndpointPortRange,
    SyncPollInterval,
    SyncEndpointMissing,
    SyncMappingUnresolved,
}

impl Rule {
    pub const ALL: [Rule; 29] = [
        Rule::IdEmpty,
        Rule::IdControlChars,
        Rule::IdDuplicate,
        Rule::SubmodelRefUnresolved,
        Rule::SubmodelRefDuplicate,
        Rule::IdShortFormat,
        Rule::IdShortUnique,
        Rule::PropertyValueType,
        Rule::ArtifactMissing,
        Rule::OperationNoOutput,
        Rule::OperationBindingUnresolved,
        Rule::QualifierKindEmpty,
        Rule::ArtifactUnreachable,
        Rule::ArtifactDuplicate,
        Rule::EntrypointMissing,
        Rule::ArtifactKindMismatch,
        Rule::IoSchemaNoOutput,
        Rule::BudgetNotPositive,
        Rule::ChecksumMissing,
        Rule::ChecksumUnknownFile,
        Rule::ChecksumMismatch,
        Rule::DeclaredLevelMismatch,
        Rule::FormatVersion,
        Rule::CreatedAt,
        Rule::EndpointHostEmpty,
        Rule::EndpointPortRange,
        Rule::SyncPollInterval,
        Rule::SyncEndpointMissing,
        Rule::SyncMappingUnresolved,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Rule::IdEmpty => "ID_EMPTY",
            Rule::IdControlChars => "ID_CONTROL_CHARS",
            Rule::IdDuplicate => "ID_DUPLICATE",
            Rule::SubmodelRefUnresolved => "SUBMODEL_REF_UNRESOLVED",
            Rule::SubmodelRefDuplicate => "SUBMODEL_REF_DUPLICATE",
            Rule::IdShortFormat => "ID_SHORT_FORMAT",
            Rule::IdShortUnique => "ID_SHORT_UNIQUE",
            Rule::PropertyValueType => "PROPERTY_VALUE_TYPE",
            Rule::ArtifactMissing => "ARTIFACT_MISSING",
            Rule::OperationNoOutput => "OPERATION_NO_OUTPUT",
            Rule::OperationBindingUnresolved => "OPERATION_BINDING_UNRESOLVED",
            Rule::QualifierKindEmpty => "QUALIFIER_KIND_EMPTY",
            Rule::ArtifactUnreachable => "ARTIFACT_UNREACHABLE",
            Rule::ArtifactDuplicate => "ARTIFACT_DUPLICATE",
            Rule::EntrypointMissing => "ENTRYPOINT_MISSING",
            Rule::ArtifactKindMismatch => "ARTIFACT_KIND_MISMATCH",
            Rule::IoSchemaNoOutput => "IO_SCHEMA_NO_OUTPUT",
            Rule::BudgetNotPositive => "BUDGET_NOT_POSITIVE",
            Rule::ChecksumMissing => "CHECKSUM_MISSING",
            Rule::ChecksumUnknownFile => "CHECKSUM_UNKNOWN_FILE",
            Rule::ChecksumMismatch => "CHECKSUM_MISMATCH",
            Rule::DeclaredLevelMismatch => "DECLARED_LEVEL_MISMATCH",
            Rule::FormatVersion => "FORMAT_VERSION",
            Rule::CreatedAt => "CREATED_AT",
            Rule::EndpointHostEmpty => "ENDPOINT_HOST_EMPTY",
            Rule::EndpointPortRange => "ENDPOINT_PORT_RANGE",
            Rule::SyncPollInterval => "SYNC_POLL_INTERVAL",
            Rule::SyncEndpointMissing => "SYNC_ENDPOINT_MISSING",
            Rule::SyncMappingUnresolved => "SYNC_MAPPING_UNRESOLVED",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub rule: Rule,
    pub message: String,
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, rule: Rule, message: impl Into<String>) {
        self.0.push(Violation { path: path.into(), rule, message: message.into() });
    }
}

pub fn is_valid_id_short(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_identifier(out: &mut Collector, path: &str, id: &Identifier) {
    if id.as_str().is_empty() {
        out.push(path, Rule::IdEmpty, "identifier is empty");
    } else if id.as_str().chars().any(char::is_control) {
        out.push(path, Rule::IdControlChars, "identifier contains control characters");
    }
}

/// Check every package invariant. Returns an empty list iff the package is
/// valid.
pub fn validate(pkg: &AasPackage) -> Vec<Violation> {
    let mut out = Collector(Vec::new());
    let m = &pkg.manifest;

    if semver::Version::parse(&m.format_version).is_err() {
        out.push("manifest.formatVersion", Rule::FormatVersion, format!("`{}` is not a semantic version", m.format_version));
    }
    if chrono::DateTime::parse_from_rfc3339(&m.created_at).is_err() {
        out.push("manifest.createdAt", Rule::CreatedAt, format!("`{}` is not an RFC 3339 timestamp", m.created_at));
    }

    // Identifiers and uniqueness across shells and submodels.
    let mut seen_ids: HashSet<&Identifier> = HashSet::new();
    for (i, shell) in pkg.shells.iter().enumerate() {
        let path = format!("shells[{i}]");
        check_identifier(&mut out, &format!("{path}.id"), &shell.id);
        check_identifier(&mut out, &format!("{path}.assetId"), &shell.asset_id);
        if !shell.id.as_str().is_empty() && !seen_ids.insert(&shell.id) {
            out.push(format!("{path}.id"), Rule::IdDuplicate, format!("identifier {} used twice", shell.id));
        }
    }
    for (i, sm) in pkg.submodels.iter().enumerate() {
        let path = format!("submodels[{i}]");
        check_identifier(&mut out, &format!("{path}.id"), &sm.id);
        if !sm.id.as_str().is_empty() && !seen_ids.insert(&sm.id) {
            out.push(format!("{path}.id"), Rule::IdDuplicate, format!("identifier {} used twice", sm.id));
        }
    }

    for (i, shell) in pkg.shells.iter().enumerate() {
        let mut refs = HashSet::new();
        for (j, r) in shell.submodel_refs.iter().enumerate() {
            let path = format!("shells[{i}].submodelRefs[{j}]");
            if !refs.insert(r) {
                out.push(path, Rule::SubmodelRefDuplicate, format!("{r} referenced twice"));
            } else if pkg.submodel(r).is_none() {
                out.push(path, Rule::SubmodelRefUnresolved, format!("{r} does not resolve"));
            }
        }
    }

    let artifact_paths: BTreeSet<&str> = m.artifacts.iter().map(|a| a.entrypoint.as_str()).collect();
    let mut reachable: BTreeSet<&str> = BTreeSet::new();

    for (i, sm) in pkg.submodels.iter().enumerate() {
        let sm_path = format!("submodels[{i}]");
        if !is_valid_id_short(&sm.id_short) {
            out.push(format!("{sm_path}.idShort"), Rule::IdShortFormat, format!("`{}` is not a valid idShort", sm.id_short));
        }
        let mut names = HashSet::new();
        for (j, el) in sm.elements.iter().enumerate() {
            let path = format!("{sm_path}.elements[{j}]");
            if !is_valid_id_short(el.id_short()) {
                out.push(format!("{path}.idShort"), Rule::IdShortFormat, format!("`{}` is not a valid idShort", el.id_short()));
            }
            if !names.insert(el.id_short()) {
                out.push(format!("{path}.idShort"), Rule::IdShortUnique, format!("`{}` repeated in {}", el.id_short(), sm.id_short));
            }
            match el {
                SubmodelElement::Property(p) => {
                    let finite = !matches!(p.value, PropertyValue::Double(v) if !v.is_finite());
                    if p.value.value_type() != p.value_type || !finite {
                        out.push(format!("{path}.value"), Rule::PropertyValueType, format!("{} does not parse as {}", p.value, p.value_type));
                    }
                }
                SubmodelElement::Operation(op) => {
                    if op.output_vars.is_empty() {
                        out.push(format!("{path}.outputVars"), Rule::OperationNoOutput, "operation declares no output");
                    }
                    for (k, q) in op.qualifiers.iter().enumerate() {
                        if q.kind.is_empty() {
                            out.push(format!("{path}.qualifiers[{k}].kind"), Rule::QualifierKindEmpty, "qualifier kind is empty");
                        } else if q.kind == QUALIFIER_ARTIFACT && !artifact_paths.contains(q.value.as_str()) {
                            out.push(format!("{path}.qualifiers[{k}].value"), Rule::OperationBindingUnresolved, format!("no artifact {}", q.value));
                        }
                    }
                }
                SubmodelElement::File(f) => {
                    // A missing artifact entrypoint is reported once, as ENTRYPOINT_MISSING.
                    if !pkg.files.contains_key(&f.artifact_path) && !artifact_paths.contains(f.artifact_path.as_str()) {
                        out.push(format!("{path}.artifactPath"), Rule::ArtifactMissing, format!("{} not in archive", f.artifact_path));
                    }
                    if sm.id_short == SOFTWARE_SERVICES {
                        reachable.insert(f.artifact_path.as_str());
                    }
                }
            }
        }
    }

    let mut seen_entrypoints = HashSet::new();
    for (i, a) in m.artifacts.iter().enumerate() {
        let path = format!("manifest.artifacts[{i}]");
        if !seen_entrypoints.insert(a.entrypoint.as_str()) {
            out.push(format!("{path}.entrypoint"), Rule::ArtifactDuplicate, format!("{} declared twice", a.entrypoint));
            continue;
        }
        if !pkg.files.contains_key(&a.entrypoint) {
            out.push(format!("{path}.entrypoint"), Rule::EntrypointMissing, format!("{} not in archive", a.entrypoint));
        }
        if !a.kind.matches_entrypoint(&a.entrypoint) {
            out.push(format!("{path}.entrypoint"), Rule::ArtifactKindMismatch, format!("{} cannot hold a {}", a.entrypoint, a.kind));
        }
        if !reachable.contains(a.entrypoint.as_str()) {
            out.push(format!("{path}.entrypoint"), Rule::ArtifactUnreachable, format!("no File element in {SOFTWARE_SERVICES} references {}", a.entrypoint));
        }
        if a.io_schema.output.is_empty() {
            out.push(format!("{path}.ioSchema.output"), Rule::IoSchemaNoOutput, "output schema is empty");
        }
        if !a.budget.is_positive() {
            out.push(format!("{path}.budget"), Rule::BudgetNotPositive, "all budget limits must be positive");
        }
    }

    for (file, bytes) in pkg.files.iter() {
        match m.checksums.get(file) {
            None => out.push(format!("manifest.checksums[{file}]"), Rule::ChecksumMissing, format!("{file} has no checksum")),
            Some(sum) if !sha256_hex(bytes).eq_ignore_ascii_case(sum) => {
                out.push(format!("manifest.checksums[{file}]"), Rule::ChecksumMismatch, format!("{file} does not match its checksum"))
            }
            Some(_) => {}
        }
    }
    for file in m.checksums.keys() {
        if !pkg.files.contains_key(file) && !artifact_paths.contains(file.as_str()) {
            out.push(format!("manifest.checksums[{file}]"), Rule::ChecksumUnknownFile, format!("{file} is not in the archive"));
        }
    }

    for (i, ep) in pkg.endpoints.iter().enumerate() {
        if ep.host.trim().is_empty() {
            out.push(format!("endpoints[{i}].host"), Rule::EndpointHostEmpty, "host is empty");
        }
        if !(1..=65535).contains(&ep.port) {
            out.push(format!("endpoints[{i}].port"), Rule::EndpointPortRange, format!("port {} outside [1, 65535]", ep.port));
        }
    }

    if let Some(sync) = &pkg.sync_config {
        if sync.any_automatic() && !sync.poll_interval.is_some_and(|p| p > 0.0 && p.is_finite()) {
            out.push("syncConfig.pollInterval", Rule::SyncPollInterval, "automatic sync needs a positive poll interval");
        }
        if sync.endpoint >= pkg.endpoints.len() {
            out.push("syncConfig.endpoint", Rule::SyncEndpointMissing, format!("no endpoint #{}", sync.endpoint));
        }
        for (i, mapping) in sync.mappings.iter().enumerate() {
            if resolve_mapping(pkg, mapping).is_none() {
                out.push(format!("syncConfig.mappings[{i}]"), Rule::SyncMappingUnresolved, format!("{} is not a property", mapping.path));
            }
        }
    }

    if let Some(declared) = m.declared_level {
        let actual = classify_level(pkg);
        if declared != actual.value() {
            out.push("manifest.declaredLevel", Rule::DeclaredLevelMismatch, format!("declared {declared}, classified {actual}"));
        }
    }

    out.0
}

/// The shell and property a sync mapping writes to, if it resolves.
pub fn resolve_mapping<'a>(pkg: &'a AasPackage, mapping: &SyncMapping) -> Option<(&'a Identifier, &'a Property)> {
    let shell = match &mapping.shell {
        Some(id) => pkg.shell(id)?,
        None => pkg.shells.first()?,
    };
    match super::resolve_element(pkg, &shell.id, &mapping.path).ok()? {
        SubmodelElement::Property(p) => Some((&shell.id, p)),
        _ => None,
    }
}

/// Count violations per rule; handy for reports.
pub fn summarize(violations: &[Violation]) -> BTreeMap<Rule, usize> {
    let mut counts = BTreeMap::new();
    for v in violations {
        *counts.entry(v.rule).or_insert(0) += 1;
    }
    counts
}
