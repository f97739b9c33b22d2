mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use shellforge_core::model::{
    parse_package, resolve_element, serialize_package, validate, AasPackage, AasShell, ArtifactKind, FileElement, Identifier,
    PackageError, Property, PropertyValue, Qualifier, Rule, Submodel, SubmodelElement, ValueType,
};

use common::{fixture, fixture_bytes};

#[test]
fn pump_fixture_contents() {
    let pkg = fixture(0);
    assert_eq!(pkg.shells.len(), 1);
    assert_eq!(pkg.submodels.len(), 2);
    assert!(pkg.artifacts().is_empty());
    assert!(validate(&pkg).is_empty());
    match resolve_element(&pkg, &Identifier::new("urn:pump1"), "Telemetry.temp").unwrap() {
        SubmodelElement::Property(p) => {
            assert_eq!(p.id_short, "temp");
            assert_eq!(p.value_type, ValueType::Double);
        }
        other => panic!("expected property, got {other:?}"),
    }
}

#[test]
fn fixtures_are_stored_canonically() {
    for level in 0..6 {
        let bytes = fixture_bytes(level);
        let once = serialize_package(&parse_package(&bytes).unwrap());
        assert_eq!(once, bytes, "level {level}");
        assert_eq!(serialize_package(&parse_package(&once).unwrap()), once);
    }
}

#[test]
fn flipped_artifact_byte_is_detected() {
    for level in 3..6 {
        let pkg = fixture(level);
        let (path, bytes) = pkg.files.iter().next().map(|(p, b)| (p.clone(), b.clone())).unwrap();
        let mut corrupt = bytes;
        corrupt[0] ^= 0x01;
        let tampered = pkg.with_file(path.clone(), corrupt);
        match parse_package(&serialize_package(&tampered)) {
            Err(PackageError::ChecksumMismatch(p)) => assert_eq!(p, path),
            other => panic!("level {level}: expected ChecksumMismatch, got {other:?}"),
        }
    }
}

#[test]
fn garbage_and_empty_input_are_malformed() {
    assert!(matches!(parse_package(b""), Err(PackageError::MalformedArchive(_))));
    assert!(matches!(parse_package(b"PK\x03\x04 nope"), Err(PackageError::MalformedArchive(_))));
}

fn services(pkg: &mut AasPackage) -> &mut Submodel {
    pkg.submodels.iter_mut().find(|s| s.id_short == "SoftwareServices").unwrap()
}

fn op(pkg: &mut AasPackage) -> &mut shellforge_core::model::OperationElement {
    services(pkg)
        .elements
        .iter_mut()
        .find_map(|e| match e {
            SubmodelElement::Operation(op) => Some(op),
            _ => None,
        })
        .unwrap()
}

type Injection = fn(&mut AasPackage);

/// One defect per rule, applied to a valid fixture of the given level.
fn injections() -> Vec<(Rule, usize, Injection)> {
    vec![
        (Rule::IdEmpty, 0, |p| p.shells[0].asset_id = Identifier::new("")),
        (Rule::IdControlChars, 0, |p| p.shells[0].asset_id = Identifier::new("urn:a\u{7}b")),
        (Rule::IdDuplicate, 0, |p| {
            p.submodels[0].id = Identifier::new("urn:pump1");
            p.shells[0].submodel_refs[0] = Identifier::new("urn:pump1");
        }),
        (Rule::SubmodelRefUnresolved, 0, |p| p.shells[0].submodel_refs.push(Identifier::new("urn:nowhere"))),
        (Rule::SubmodelRefDuplicate, 0, |p| {
            let r = p.shells[0].submodel_refs[0].clone();
            p.shells[0].submodel_refs.push(r);
        }),
        (Rule::IdShortFormat, 0, |p| p.submodels[0].id_short = "9 lives".into()),
        (Rule::IdShortUnique, 0, |p| {
            let e = p.submodels[0].elements[0].clone();
            p.submodels[0].elements.push(e);
        }),
        (Rule::PropertyValueType, 0, |p| {
            if let SubmodelElement::Property(prop) = &mut p.submodels[0].elements[0] {
                prop.value = PropertyValue::Double(1.0);
            }
        }),
        (Rule::ArtifactMissing, 0, |p| {
            p.submodels[0].elements.push(SubmodelElement::File(FileElement {
                id_short: "Manual".into(),
                content_type: "application/pdf".into(),
                artifact_path: "artifacts/manual.pdf".into(),
            }))
        }),
        (Rule::OperationNoOutput, 3, |p| op(p).output_vars.clear()),
        (Rule::OperationBindingUnresolved, 3, |p| op(p).qualifiers[0].value = "artifacts/other.pipeline.json".into()),
        (Rule::QualifierKindEmpty, 3, |p| op(p).qualifiers.push(Qualifier { kind: String::new(), value: "x".into() })),
        (Rule::ArtifactUnreachable, 3, |p| services(p).elements.retain(|e| !matches!(e, SubmodelElement::File(_)))),
        (Rule::ArtifactDuplicate, 3, |p| {
            let a = p.manifest.artifacts[0].clone();
            p.manifest.artifacts.push(a);
        }),
        (Rule::EntrypointMissing, 3, |p| {
            let path = p.manifest.artifacts[0].entrypoint.clone();
            std::sync::Arc::make_mut(&mut p.files).remove(&path);
            p.manifest.checksums.remove(&path);
        }),
        (Rule::ArtifactKindMismatch, 3, |p| p.manifest.artifacts[0].kind = ArtifactKind::Executable),
        (Rule::IoSchemaNoOutput, 3, |p| p.manifest.artifacts[0].io_schema.output.clear()),
        (Rule::BudgetNotPositive, 3, |p| p.manifest.artifacts[0].budget.cpu_time = 0.0),
        (Rule::ChecksumMissing, 3, |p| p.manifest.checksums.clear()),
        (Rule::ChecksumUnknownFile, 3, |p| {
            p.manifest.checksums.insert("artifacts/ghost.bin".into(), "00".into());
        }),
        (Rule::ChecksumMismatch, 3, |p| {
            let path = p.manifest.artifacts[0].entrypoint.clone();
            *p = std::mem::take(p).with_file(path, br#"{"steps":[{"op":"mean"}]}"#.to_vec());
        }),
        (Rule::DeclaredLevelMismatch, 0, |p| p.manifest.declared_level = Some(5)),
        (Rule::FormatVersion, 0, |p| p.manifest.format_version = "one".into()),
        (Rule::CreatedAt, 0, |p| p.manifest.created_at = "yesterday".into()),
        (Rule::EndpointHostEmpty, 1, |p| p.endpoints[0].host = " ".into()),
        (Rule::EndpointPortRange, 1, |p| p.endpoints[0].port = 70000),
        (Rule::SyncPollInterval, 1, |p| p.sync_config.as_mut().unwrap().poll_interval = None),
        (Rule::SyncEndpointMissing, 1, |p| p.sync_config.as_mut().unwrap().endpoint = 3),
        (Rule::SyncMappingUnresolved, 1, |p| p.sync_config.as_mut().unwrap().mappings[0].path = "Telemetry.nope".into()),
    ]
}

#[test]
fn every_rule_has_an_injection() {
    let covered: BTreeSet<Rule> = injections().iter().map(|(r, _, _)| *r).collect();
    let all: BTreeSet<Rule> = Rule::ALL.into_iter().collect();
    assert_eq!(covered, all);
}

#[test]
fn each_injected_defect_yields_exactly_its_rule() {
    for (rule, level, inject) in injections() {
        let mut pkg = fixture(level);
        inject(&mut pkg);
        let rules: BTreeSet<Rule> = validate(&pkg).into_iter().map(|v| v.rule).collect();
        assert_eq!(rules, BTreeSet::from([rule]), "injection for {rule}");
    }
}

fn arb_value() -> impl Strategy<Value = PropertyValue> {
    prop_oneof![
        (-1e12f64..1e12).prop_map(PropertyValue::Double),
        any::<i64>().prop_map(PropertyValue::Int64),
        "[ -~]{0,12}".prop_map(PropertyValue::String),
        any::<bool>().prop_map(PropertyValue::Bool),
    ]
}

fn arb_package() -> impl Strategy<Value = AasPackage> {
    let submodel = prop::collection::vec(arb_value(), 0..6);
    (prop::collection::vec(submodel, 1..4), 1usize..3, "[a-z]{1,8}").prop_map(|(submodels, shells, tag)| {
        let submodels: Vec<Submodel> = submodels
            .into_iter()
            .enumerate()
            .map(|(i, values)| Submodel {
                id: Identifier::new(format!("urn:{tag}:sm{i}")),
                id_short: format!("Sm{i}"),
                elements: values
                    .into_iter()
                    .enumerate()
                    .map(|(j, value)| {
                        SubmodelElement::Property(Property { id_short: format!("p{j}"), value_type: value.value_type(), value })
                    })
                    .collect(),
            })
            .collect();
        AasPackage {
            shells: (0..shells)
                .map(|i| AasShell {
                    id: Identifier::new(format!("urn:{tag}:shell{i}")),
                    asset_id: Identifier::new(format!("urn:{tag}:asset{i}")),
                    submodel_refs: submodels.iter().map(|s| s.id.clone()).collect(),
                })
                .collect(),
            submodels,
            ..AasPackage::default()
        }
    })
}

proptest! {
    #[test]
    fn serialization_round_trips(pkg in arb_package()) {
        prop_assert!(validate(&pkg).is_empty());
        let bytes = serialize_package(&pkg);
        let back = parse_package(&bytes).unwrap();
        prop_assert_eq!(&back, &pkg);
        prop_assert_eq!(serialize_package(&back), bytes);
    }
}
