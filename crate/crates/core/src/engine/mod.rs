//! Service execution: interpreted pipelines (Lvl 3), translated source
//! bundles (Lvl 4) and executables (Lvl 5), behind one I/O contract.

pub mod build;
pub mod doc;
pub mod expr;
pub mod pipeline;
pub mod sandbox;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use build::{BuildCache, Translator};
pub use doc::{DocMeta, ServiceDoc};
pub use expr::{Cmp, Condition, Expr, ExprError};
pub use pipeline::{expand_records, run_pipeline, run_records, Aggregate, PipelineError, PipelineSpec, StepDef};
pub use sandbox::{capabilities, Limit, SandboxCapabilities};

use crate::model::{sha256_hex, AasPackage, ArtifactKind, ResourceBudget, ServiceArtifact};
use sandbox::RunOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("parse error in step {step}: {reason}")]
    Parse { step: usize, reason: String },
    #[error("build failed:\n{0}")]
    Build(String),
    #[error("unsupported artifact: {0}")]
    UnsupportedKind(String),
    #[error("checksum mismatch: {0}")]
    ChecksumMismatch(String),
    #[error("resource exceeded: {0}")]
    ResourceExceeded(Limit),
    #[error("service crashed ({})", crash_summary(*.code, *.signal))]
    ServiceCrashed { code: Option<i32>, signal: Option<i32>, stderr: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("sandbox violation: {0}")]
    SandboxViolation(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error("cannot launch service: {0}")]
    Launch(String),
}

fn crash_summary(code: Option<i32>, signal: Option<i32>) -> String {
    match (code, signal) {
        (Some(c), _) => format!("exit code {c}"),
        (None, Some(s)) => format!("signal {s}"),
        _ => "unknown status".into(),
    }
}

impl From<PipelineError> for EngineError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Parse { step, reason } => EngineError::Parse { step, reason },
            other => EngineError::Pipeline(other),
        }
    }
}

#[derive(Debug, Clone)]
enum Runner {
    Pipeline(Arc<PipelineSpec>),
    Process {
        program: PathBuf,
        // Keeps a materialized executable alive as long as any clone.
        _dir: Option<Arc<tempfile::TempDir>>,
    },
}

/// An artifact ready to invoke. Cheap to clone.
#[derive(Debug, Clone)]
pub struct LoadedService {
    artifact: ServiceArtifact,
    runner: Runner,
    built: bool,
}

impl LoadedService {
    pub fn artifact(&self) -> &ServiceArtifact {
        &self.artifact
    }

    pub fn kind(&self) -> ArtifactKind {
        self.artifact.kind
    }

    pub fn pipeline(&self) -> Option<&PipelineSpec> {
        match &self.runner {
            Runner::Pipeline(spec) => Some(spec),
            Runner::Process { .. } => None,
        }
    }

    pub fn program(&self) -> Option<&Path> {
        match &self.runner {
            Runner::Process { program, .. } => Some(program),
            Runner::Pipeline(_) => None,
        }
    }

    /// True when loading ran the translator rather than hitting the cache.
    pub fn freshly_built(&self) -> bool {
        self.built
    }
}

fn verify_checksums(artifact: &ServiceArtifact, pkg: &AasPackage) -> Result<(), EngineError> {
    let files = pkg.artifact_files(artifact);
    if !files.contains_key(artifact.entrypoint.as_str()) {
        return Err(EngineError::UnsupportedKind(format!("entrypoint {} missing", artifact.entrypoint)));
    }
    for (path, bytes) in files {
        match pkg.manifest.checksums.get(path) {
            Some(sum) if *sum == sha256_hex(bytes) => {}
            _ => return Err(EngineError::ChecksumMismatch(path.to_string())),
        }
    }
    Ok(())
}

/// Load with the process-wide build cache.
pub fn load_artifact(artifact: &ServiceArtifact, pkg: &AasPackage) -> Result<LoadedService, EngineError> {
    load_artifact_in(artifact, pkg, BuildCache::global())
}

pub fn load_artifact_in(
    artifact: &ServiceArtifact,
    pkg: &AasPackage,
    cache: &BuildCache,
) -> Result<LoadedService, EngineError> {
    if !artifact.kind.matches_entrypoint(&artifact.entrypoint) {
        return Err(EngineError::UnsupportedKind(format!(
            "{} cannot be loaded as {}",
            artifact.entrypoint, artifact.kind
        )));
    }
    verify_checksums(artifact, pkg)?;
    let entry_bytes = &pkg.files[&artifact.entrypoint];
    let (runner, built) = match artifact.kind {
        ArtifactKind::PipelineScript => (Runner::Pipeline(Arc::new(PipelineSpec::from_json(entry_bytes)?)), false),
        ArtifactKind::SourceBundle => {
            let translator = Translator::for_entrypoint(&artifact.entrypoint)
                .ok_or_else(|| EngineError::UnsupportedKind(format!("no translator for {}", artifact.entrypoint)))?;
            if let Some(dep) = artifact.dependencies.iter().find(|d| !translator.supports_dependency(d)) {
                return Err(EngineError::Build(format!(
                    "unsupported dependency `{dep}`: bundles for {} may only use the standard library",
                    translator.id()
                )));
            }
            let (entry, files) = bundle_files(artifact, pkg);
            let (program, built) =
                cache.get_or_build(translator, entry, &files).map_err(|f| EngineError::Build(f.log))?;
            (Runner::Process { program, _dir: None }, built)
        }
        ArtifactKind::Executable => {
            let dir = tempfile::Builder::new()
                .prefix("sf-exe-")
                .tempdir()
                .map_err(|e| EngineError::Launch(e.to_string()))?;
            let program = dir.path().join("service");
            write_executable(&program, entry_bytes).map_err(|e| EngineError::Launch(e.to_string()))?;
            (Runner::Process { program, _dir: Some(Arc::new(dir)) }, false)
        }
    };
    Ok(LoadedService { artifact: artifact.clone(), runner, built })
}

/// Entrypoint and files of a source bundle, relative to its directory.
fn bundle_files<'a>(artifact: &'a ServiceArtifact, pkg: &'a AasPackage) -> (&'a str, BTreeMap<String, &'a [u8]>) {
    let prefix = format!("{}/", artifact.bundle_prefix().unwrap_or_default());
    let files = pkg
        .artifact_files(artifact)
        .into_iter()
        .map(|(path, bytes)| (path.strip_prefix(&prefix).unwrap_or(path).to_string(), bytes))
        .collect();
    (artifact.entrypoint.strip_prefix(&prefix).unwrap_or(&artifact.entrypoint), files)
}

/// The cached build product of a source bundle, without building.
pub fn cached_product(artifact: &ServiceArtifact, pkg: &AasPackage, cache: &BuildCache) -> Option<PathBuf> {
    let translator = Translator::for_entrypoint(&artifact.entrypoint)?;
    let (_, files) = bundle_files(artifact, pkg);
    cache.lookup(&BuildCache::key(translator, &files))
}

fn write_executable(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = std::fs::OpenOptions::new().write(true).create_new(true).mode(0o755).open(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

/// Run one invocation. Inputs and outputs are checked against the
/// artifact's schema; output fields the schema does not declare are
/// dropped.
pub fn invoke(service: &LoadedService, input: &ServiceDoc, budget: &ResourceBudget) -> Result<ServiceDoc, EngineError> {
    let schema = &service.artifact.io_schema;
    input.conforms(&schema.input).map_err(EngineError::SchemaMismatch)?;
    let output = match &service.runner {
        Runner::Pipeline(spec) => {
            let records = expand_records(input).map_err(EngineError::SchemaMismatch)?;
            let values = run_records(spec, records)?;
            ServiceDoc::new(values).with_meta(input.meta.ts.clone(), "pipeline")
        }
        Runner::Process { program, .. } => {
            run_executable(program, input, budget)?.with_meta(input.meta.ts.clone(), service.artifact.kind.as_str())
        }
    };
    let output = output.project(&schema.output);
    output.conforms(&schema.output).map_err(|e| EngineError::SchemaMismatch(format!("output: {e}")))?;
    Ok(output)
}

/// Launch `program` under supervision: one JSON document in on stdin, one
/// JSON object out on stdout, exit code 0.
pub fn run_executable(program: &Path, input: &ServiceDoc, budget: &ResourceBudget) -> Result<ServiceDoc, EngineError> {
    let payload = serde_json::to_vec(&input.values_json()).expect("json values serialize");
    let outcome = sandbox::run_supervised(program, &payload, budget).map_err(|e| EngineError::Launch(e.to_string()))?;
    match outcome {
        RunOutcome::Exited { stdout, .. } => parse_output(&stdout),
        RunOutcome::Exceeded(limit) => Err(EngineError::ResourceExceeded(limit)),
        RunOutcome::Violation(what) => Err(EngineError::SandboxViolation(what.to_string())),
        RunOutcome::Failed { status, stderr } => {
            use std::os::unix::process::ExitStatusExt;
            let text = String::from_utf8_lossy(&stderr);
            let tail: String = text.chars().rev().take(2000).collect::<Vec<_>>().into_iter().rev().collect();
            Err(EngineError::ServiceCrashed { code: status.code(), signal: status.signal(), stderr: tail })
        }
    }
}

fn parse_output(stdout: &[u8]) -> Result<ServiceDoc, EngineError> {
    let text = std::str::from_utf8(stdout).map_err(|_| EngineError::Protocol("output is not UTF-8".into()))?;
    let mut docs = serde_json::Deserializer::from_str(text).into_iter::<serde_json::Value>();
    let first = match docs.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => return Err(EngineError::Protocol(format!("output is not JSON: {e}"))),
        None => return Err(EngineError::Protocol("no output document".into())),
    };
    if docs.next().is_some() {
        return Err(EngineError::Protocol("more than one output document".into()));
    }
    ServiceDoc::from_object(first).ok_or_else(|| EngineError::Protocol("output is not a JSON object".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IoSchema, ValueType, VarType};
    use serde_json::json;

    fn avg_artifact() -> ServiceArtifact {
        ServiceArtifact {
            kind: ArtifactKind::PipelineScript,
            entrypoint: "artifacts/avg.pipeline.json".into(),
            io_schema: IoSchema {
                input: [("samples".to_string(), VarType::list_of(ValueType::Double))].into(),
                output: [("avg".to_string(), VarType::scalar(ValueType::Double))].into(),
            },
            dependencies: vec![],
            budget: ResourceBudget::default(),
        }
    }

    fn package_with(artifact: &ServiceArtifact, bytes: &[u8]) -> AasPackage {
        let mut pkg = AasPackage::default().with_file(artifact.entrypoint.clone(), bytes.to_vec());
        pkg.manifest.artifacts.push(artifact.clone());
        pkg.refresh_checksums();
        pkg
    }

    #[test]
    fn pipeline_invocation_computes_mean() {
        let a = avg_artifact();
        let spec: PipelineSpec = "window(4), mean, map(avg = samples), select(avg)".parse().unwrap();
        let pkg = package_with(&a, &spec.to_json());
        let svc = load_artifact(&a, &pkg).unwrap();
        assert_eq!(svc.pipeline().unwrap().len(), 4);
        let input = ServiceDoc::from_object(json!({"samples": [20, 25, 20, 15]})).unwrap();
        let out = invoke(&svc, &input, &ResourceBudget::default()).unwrap();
        assert_eq!(out.values_json(), json!({"avg": 20.0}));
    }

    #[test]
    fn input_schema_is_enforced() {
        let a = avg_artifact();
        let pkg = package_with(&a, br#"{"steps":[{"op":"mean"}]}"#);
        let svc = load_artifact(&a, &pkg).unwrap();
        let input = ServiceDoc::from_object(json!({"samples": "nope"})).unwrap();
        assert!(matches!(invoke(&svc, &input, &ResourceBudget::default()), Err(EngineError::SchemaMismatch(_))));
    }

    #[test]
    fn tampered_artifact_is_rejected() {
        let a = avg_artifact();
        let pkg = package_with(&a, br#"{"steps":[{"op":"mean"}]}"#).with_file(a.entrypoint.clone(), b"{}".to_vec());
        assert!(matches!(load_artifact(&a, &pkg), Err(EngineError::ChecksumMismatch(_))));
    }

    #[test]
    fn bad_pipeline_fails_to_load() {
        let a = avg_artifact();
        let pkg = package_with(&a, br#"{"steps":[{"op":"window","n":0}]}"#);
        assert!(matches!(load_artifact(&a, &pkg), Err(EngineError::Parse { step: 0, .. })));
    }

    #[test]
    fn output_protocol() {
        assert!(parse_output(b"{\"avg\":1}\n").is_ok());
        assert!(matches!(parse_output(b"hello"), Err(EngineError::Protocol(_))));
        assert!(matches!(parse_output(b"[1]"), Err(EngineError::Protocol(_))));
        assert!(matches!(parse_output(b"{} {}"), Err(EngineError::Protocol(_))));
        assert!(matches!(parse_output(b""), Err(EngineError::Protocol(_))));
    }
}
