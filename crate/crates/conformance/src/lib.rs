//! Level fixtures and test services.
//!
//! One package per heaviness level. Levels 3 to 5 carry the same service,
//! `SoftwareServices.AvgTemp`: the mean of the last four `samples`, returned as `avg`.

use std::path::{Path, PathBuf};

use shellforge_core::asset::sim_endpoint;
use shellforge_core::engine::PipelineSpec;
use shellforge_core::model::{
    serialize_package, AasPackage, AasShell, ArtifactKind, AssetCommand, FileElement, Identifier, IoSchema, OperationElement,
    OperationVariable, Property, PropertyValue, Qualifier, ResourceBudget, ServiceArtifact, Submodel, SubmodelElement,
    SyncConfig, SyncMapping, SyncMode, ValueType, VarType, WriteBackRule, QUALIFIER_ARTIFACT, SOFTWARE_SERVICES,
};

/// Samples the averaging service looks at.
pub const WINDOW: usize = 4;

/// Port written into the level 1 and 2 endpoints. The demo rewrites it.
pub const SIM_PORT: u16 = 47011;

pub const AVG_PIPELINE: &str = "window(4), mean, map(avg = samples), select(avg)";
pub const AVG_PIPELINE_PATH: &str = "artifacts/avg.pipeline.json";
pub const AVG_RS_PATH: &str = "artifacts/avg_rs/main.rs";
pub const AVG_C_PATH: &str = "artifacts/avg_c/avg.c";
pub const AVG_EXE_PATH: &str = "artifacts/avg.exe.bin";

pub const AVG_RS: &str = include_str!("bin/sf-avg.rs");

pub const AVG_C: &str = r#"#include <stdio.h>
#include <stdlib.h>
#include <string.h>

int main(void) {
    static char buf[1 << 20];
    size_t n = fread(buf, 1, sizeof buf - 1, stdin);
    buf[n] = 0;
    char *p = strstr(buf, "\"samples\"");
    if (!p || !(p = strchr(p, '['))) {
        fprintf(stderr, "samples array missing\n");
        return 2;
    }
    p++;
    double ring[4];
    long count = 0;
    for (;;) {
        while (*p == ' ' || *p == ',' || *p == '\n' || *p == '\t') p++;
        if (*p == ']' || *p == 0) break;
        char *end;
        double v = strtod(p, &end);
        if (end == p) {
            fprintf(stderr, "bad number\n");
            return 2;
        }
        ring[count % 4] = v;
        count++;
        p = end;
    }
    if (count < 4) {
        fprintf(stderr, "need at least 4 samples, got %ld\n", count);
        return 3;
    }
    double sum = 0.0;
    for (long i = count - 4; i < count; i++) sum += ring[i % 4];
    printf("{\"avg\": %.17g}\n", sum / 4.0);
    return 0;
}
"#;

pub const FIXTURE_NAMES: [&str; 6] = ["lvl0_pump", "lvl1_press", "lvl2_mill", "lvl3_avg", "lvl4_avg", "lvl5_avg"];

/// Shell id of the fixture for `level`.
pub fn shell_id(level: u8) -> Identifier {
    Identifier::new(match level {
        0 => "urn:pump1",
        1 => "urn:press1",
        2 => "urn:mill1",
        3 => "urn:oven3",
        4 => "urn:oven4",
        _ => "urn:oven5",
    })
}

fn prop(id_short: &str, value: PropertyValue) -> SubmodelElement {
    SubmodelElement::Property(Property { id_short: id_short.into(), value_type: value.value_type(), value })
}

fn avg_schema() -> IoSchema {
    IoSchema {
        input: [("samples".to_string(), VarType::list_of(ValueType::Double))].into(),
        output: [("avg".to_string(), VarType::scalar(ValueType::Double))].into(),
    }
}

pub fn avg_operation(id_short: &str, entrypoint: &str) -> SubmodelElement {
    SubmodelElement::Operation(OperationElement {
        id_short: id_short.into(),
        input_vars: vec![OperationVariable { id_short: "samples".into(), value_type: VarType::list_of(ValueType::Double) }],
        output_vars: vec![OperationVariable { id_short: "avg".into(), value_type: VarType::scalar(ValueType::Double) }],
        qualifiers: vec![Qualifier { kind: QUALIFIER_ARTIFACT.into(), value: entrypoint.into() }],
    })
}

pub fn artifact(kind: ArtifactKind, entrypoint: &str) -> ServiceArtifact {
    ServiceArtifact {
        kind,
        entrypoint: entrypoint.into(),
        io_schema: avg_schema(),
        dependencies: match kind {
            ArtifactKind::SourceBundle if entrypoint.ends_with(".c") => vec!["libc".into()],
            ArtifactKind::SourceBundle => vec!["std".into()],
            _ => vec![],
        },
        budget: ResourceBudget::default(),
    }
}

/// Shell with a nameplate and a telemetry submodel.
fn base(level: u8, serial: &str) -> AasPackage {
    let id = shell_id(level);
    let sm = |name: &str| Identifier::new(format!("{id}/sm/{name}"));
    AasPackage {
        shells: vec![AasShell {
            id: id.clone(),
            asset_id: Identifier::new(format!("{id}/asset")),
            submodel_refs: vec![sm("nameplate"), sm("telemetry")],
        }],
        submodels: vec![
            Submodel {
                id: sm("nameplate"),
                id_short: "Nameplate".into(),
                elements: vec![
                    prop("Manufacturer", PropertyValue::String("Example Machines".into())),
                    prop("SerialNumber", PropertyValue::String(serial.into())),
                ],
            },
            Submodel {
                id: sm("telemetry"),
                id_short: "Telemetry".into(),
                elements: vec![
                    prop("temp", PropertyValue::Double(20.0)),
                    prop("rpm", PropertyValue::Double(1000.0)),
                    prop("cooling", PropertyValue::Int64(0)),
                ],
            },
        ],
        ..AasPackage::default()
    }
}

fn code_file(op: &str, path: &str) -> SubmodelElement {
    let content_type = if path.ends_with(".json") { "application/json" } else { "application/octet-stream" };
    SubmodelElement::File(FileElement {
        id_short: format!("{op}Code"),
        content_type: content_type.into(),
        artifact_path: path.into(),
    })
}

/// Add a services submodel holding `ops` and a File element for each
/// artifact they run.
fn with_services(mut pkg: AasPackage, mut ops: Vec<SubmodelElement>) -> AasPackage {
    let files: Vec<SubmodelElement> = ops
        .iter()
        .filter_map(|e| match e {
            SubmodelElement::Operation(op) => op.qualifier(QUALIFIER_ARTIFACT).map(|path| code_file(&op.id_short, path)),
            _ => None,
        })
        .collect();
    ops.extend(files);
    let id = pkg.shells[0].id.clone();
    let sm_id = Identifier::new(format!("{id}/sm/services"));
    pkg.shells[0].submodel_refs.push(sm_id.clone());
    pkg.submodels.push(Submodel { id: sm_id, id_short: SOFTWARE_SERVICES.into(), elements: ops });
    pkg
}

/// One more averaging operation `op`, run by `artifact` whose entrypoint holds `bytes`.
pub fn add_service(pkg: AasPackage, op: &str, artifact: ServiceArtifact, bytes: Vec<u8>) -> AasPackage {
    let path = artifact.entrypoint.clone();
    let mut pkg = match pkg.submodels.iter().position(|s| s.id_short == SOFTWARE_SERVICES) {
        Some(i) => {
            let mut pkg = pkg;
            pkg.submodels[i].elements.push(avg_operation(op, &path));
            pkg.submodels[i].elements.push(code_file(op, &path));
            pkg
        }
        None => with_services(pkg, vec![avg_operation(op, &path)]),
    };
    pkg = pkg.with_file(path, bytes);
    pkg.manifest.artifacts.push(artifact);
    pkg.refresh_checksums();
    pkg
}

fn mapping(var: &str) -> SyncMapping {
    SyncMapping { var: var.into(), shell: None, path: format!("Telemetry.{var}") }
}

/// Level 0: descriptive model only.
pub fn lvl0() -> AasPackage {
    base(0, "P-0001")
}

/// Level 1: fixed queries, inbound sync (shadow).
pub fn lvl1() -> AasPackage {
    let mut pkg = base(1, "PR-0001");
    pkg.endpoints.push(sim_endpoint("127.0.0.1", SIM_PORT, false));
    pkg.sync_config = Some(SyncConfig {
        inbound: SyncMode::Automatic,
        outbound: SyncMode::Manual,
        poll_interval: Some(0.5),
        endpoint: 0,
        mappings: vec![mapping("temp"), mapping("rpm")],
        write_back_rules: vec![],
    });
    pkg
}

/// Level 2: parameterized queries, sync in both directions (twin). The
/// asset is cooled while the temperature stays above 24.
pub fn lvl2() -> AasPackage {
    let mut pkg = base(2, "M-0001");
    pkg.endpoints.push(sim_endpoint("127.0.0.1", SIM_PORT, true));
    pkg.sync_config = Some(SyncConfig {
        inbound: SyncMode::Automatic,
        outbound: SyncMode::Automatic,
        poll_interval: Some(0.5),
        endpoint: 0,
        mappings: vec![mapping("temp"), mapping("rpm"), mapping("cooling")],
        write_back_rules: vec![WriteBackRule {
            trigger: "temp > 24".into(),
            window: 1,
            command: AssetCommand { var: "cooling".into(), value: 1.0 },
        }],
    });
    pkg
}

/// Level 3: the averaging service as an interpreted pipeline.
pub fn lvl3() -> AasPackage {
    let spec: PipelineSpec = AVG_PIPELINE.parse().expect("valid pipeline");
    let mut pkg = with_services(base(3, "O-0003"), vec![avg_operation("AvgTemp", AVG_PIPELINE_PATH)])
        .with_file(AVG_PIPELINE_PATH, spec.to_json());
    pkg.manifest.artifacts.push(artifact(ArtifactKind::PipelineScript, AVG_PIPELINE_PATH));
    pkg.refresh_checksums();
    pkg
}

/// Level 4: the averaging service as Rust and C sources.
pub fn lvl4() -> AasPackage {
    let mut pkg = with_services(
        base(4, "O-0004"),
        vec![avg_operation("AvgTemp", AVG_RS_PATH), avg_operation("AvgTempC", AVG_C_PATH)],
    )
    .with_file(AVG_RS_PATH, AVG_RS.as_bytes().to_vec())
    .with_file(AVG_C_PATH, AVG_C.as_bytes().to_vec());
    pkg.manifest.artifacts.push(artifact(ArtifactKind::SourceBundle, AVG_RS_PATH));
    pkg.manifest.artifacts.push(artifact(ArtifactKind::SourceBundle, AVG_C_PATH));
    pkg.refresh_checksums();
    pkg
}

/// Level 5: the averaging service as a prebuilt executable.
pub fn lvl5(exe: &[u8]) -> AasPackage {
    let mut pkg = with_services(base(5, "O-0005"), vec![avg_operation("AvgTemp", AVG_EXE_PATH)])
        .with_file(AVG_EXE_PATH, exe.to_vec());
    pkg.manifest.artifacts.push(artifact(ArtifactKind::Executable, AVG_EXE_PATH));
    pkg.refresh_checksums();
    pkg
}

pub fn level_fixture(level: u8, exe: &[u8]) -> AasPackage {
    match level {
        0 => lvl0(),
        1 => lvl1(),
        2 => lvl2(),
        3 => lvl3(),
        4 => lvl4(),
        _ => lvl5(exe),
    }
}

/// A level 5 package whose single operation `SoftwareServices.Run` runs `exe`.
pub fn executable_package(shell: &str, exe: &[u8], budget: ResourceBudget) -> AasPackage {
    let mut pkg = base(5, "X-0001");
    pkg.shells[0].id = Identifier::new(shell);
    let mut pkg = with_services(pkg, vec![avg_operation("Run", AVG_EXE_PATH)]).with_file(AVG_EXE_PATH, exe.to_vec());
    let mut a = artifact(ArtifactKind::Executable, AVG_EXE_PATH);
    a.budget = budget;
    pkg.manifest.artifacts.push(a);
    pkg.refresh_checksums();
    pkg
}

/// Re-point every endpoint at `port`.
pub fn with_sim_port(mut pkg: AasPackage, port: u16) -> AasPackage {
    for e in &mut pkg.endpoints {
        e.port = port.into();
    }
    pkg
}

/// Repository directory holding the shipped fixtures.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/levels")
}

pub fn fixture_path(dir: &Path, level: u8) -> PathBuf {
    dir.join(format!("{}.aaspkg", FIXTURE_NAMES[level as usize]))
}

/// Write all six fixtures into `dir`.
pub fn write_fixtures(dir: &Path, exe: &[u8]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    (0..6u8)
        .map(|level| {
            let path = fixture_path(dir, level);
            std::fs::write(&path, serialize_package(&level_fixture(level, exe)))?;
            Ok(path)
        })
        .collect()
}

/// Mean of the last `WINDOW` values, computed from scratch.
pub fn window_mean(samples: &[f64]) -> f64 {
    samples[samples.len() - WINDOW..].iter().sum::<f64>() / WINDOW as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use shellforge_core::classify::classify_level;
    use shellforge_core::model::validate;

    #[test]
    fn fixtures_are_valid_and_levelled() {
        for level in 0..6u8 {
            let pkg = level_fixture(level, b"\x7fELF");
            assert_eq!(validate(&pkg), vec![], "level {level}");
            assert_eq!(classify_level(&pkg).value(), level);
        }
    }
}
